//! Scenario bundles: a directory holding `scenario.toml`, `plan.toml`,
//! `grounding.toml` and an optional `detections.jsonl`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use quadmanip_core::fusion::Detection;
use quadmanip_core::geometry::{Aabb, Pose, Vec3};
use quadmanip_core::grounding::{GroundingTarget, ScriptedGroundingOracle};
use quadmanip_core::planning::{ScriptedPlanner, ScriptedStep, SubtaskMonitor};
use quadmanip_core::sim::{GridSpec, Heightmap, Scenario, ScenarioError};
use quadmanip_core::world::ObjectState;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCENARIO_FILE: &str = "scenario.toml";
pub const PLAN_FILE: &str = "plan.toml";
pub const GROUNDING_FILE: &str = "grounding.toml";
pub const DETECTIONS_FILE: &str = "detections.jsonl";

fn default_horizon() -> f64 {
    120.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub instruction: String,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
    pub robot_start: Pose,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heightmap: Option<Heightmap>,
    #[serde(default)]
    pub static_obstacles: Vec<Aabb>,
    #[serde(default)]
    pub objects: Vec<ObjectState>,
    #[serde(default)]
    pub monitors: Vec<SubtaskMonitor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanEntry {
    pub instruction: String,
    pub steps: Vec<ScriptedStep>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    #[serde(default)]
    pub plans: Vec<PlanEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundingEntry {
    /// Index of the plan step this record answers.
    pub action: usize,
    pub contact: Vec3,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<Vec3>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundingFile {
    #[serde(default)]
    pub targets: Vec<GroundingEntry>,
}

/// 1-based line and column of a byte offset.
pub fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(offset, |i| offset - i - 1) + 1;
    (line, col)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_toml<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let (line, col) = e.span().map_or((1, 1), |s| line_col(text, s.start));
        Error::Parse(format!("{}:{line}:{col}: {}", path.display(), e.message().trim_end()))
    })
}

/// Splits `monitors[1].condition.object` into keys and indices.
enum Seg<'a> {
    Key(&'a str),
    Index(usize),
}

fn segments(path: &str) -> Vec<Seg<'_>> {
    let mut out = Vec::new();
    for part in path.split('.') {
        let (key, rest) = part.split_once('[').map_or((part, ""), |(k, r)| (k, r));
        if !key.is_empty() {
            out.push(Seg::Key(key));
        }
        for idx in rest.split('[') {
            if let Ok(i) = idx.trim_end_matches(']').parse() {
                out.push(Seg::Index(i));
            }
        }
    }
    out
}

/// Byte span of the deepest item along `path` that exists in the document.
pub fn locate(text: &str, path: &str) -> Option<usize> {
    let doc = toml_edit::Document::parse(text).ok()?;
    let mut item = doc.as_item();
    let mut best = None;
    for seg in segments(path) {
        let next = match seg {
            Seg::Key(k) => item.get(k),
            Seg::Index(i) => item.get(i),
        };
        match next {
            Some(n) => {
                item = n;
                if let Some(s) = n.span() {
                    best = Some(s.start);
                }
            }
            None => break,
        }
    }
    best
}

struct Sources {
    dir: PathBuf,
    scenario: String,
    plan: String,
    grounding: String,
    plan_index: usize,
    grounding_rows: BTreeMap<usize, usize>,
}

impl Sources {
    /// Rewrites a scenario-level path into a file location.
    fn describe(&self, e: &ScenarioError) -> String {
        let (file, text, path) = if let Some(rest) = e.path.strip_prefix("plan.") {
            (PLAN_FILE, &self.plan, format!("plans[{}].{rest}", self.plan_index))
        } else if let Some(rest) = e.path.strip_prefix("grounding[") {
            let action: usize = rest.trim_end_matches(']').parse().unwrap_or(0);
            let row = self.grounding_rows.get(&action).copied().unwrap_or(0);
            (GROUNDING_FILE, &self.grounding, format!("targets[{row}].action"))
        } else if let Some(rest) = e.path.strip_prefix("detections[") {
            let i: usize = rest.trim_end_matches(']').parse().unwrap_or(0);
            return format!("{}:{}: {}", self.dir.join(DETECTIONS_FILE).display(), i + 1, e.message);
        } else {
            (SCENARIO_FILE, &self.scenario, e.path.clone())
        };
        let (line, col) = locate(text, &path).map_or((1, 1), |o| line_col(text, o));
        format!("{}:{line}:{col}: {}: {}", self.dir.join(file).display(), e.path, e.message)
    }
}

fn load_detections(path: &Path) -> Result<Option<Vec<Detection>>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = read(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let d: Detection = serde_json::from_str(line)
            .map_err(|e| Error::Parse(format!("{}:{}:{}: {e}", path.display(), i + 1, e.column())))?;
        out.push(d);
    }
    Ok(Some(out))
}

pub fn is_bundle(dir: &Path) -> bool {
    dir.join(SCENARIO_FILE).is_file()
}

/// Reads and validates a bundle.
pub fn load_bundle(dir: &Path) -> Result<Scenario> {
    if !dir.is_dir() {
        return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "scenario bundle not found")));
    }
    let scenario_path = dir.join(SCENARIO_FILE);
    let plan_path = dir.join(PLAN_FILE);
    let grounding_path = dir.join(GROUNDING_FILE);
    let scenario_text = read(&scenario_path)?;
    let plan_text = read(&plan_path)?;
    let grounding_text = if grounding_path.exists() { read(&grounding_path)? } else { String::new() };

    let sf: ScenarioFile = parse_toml(&scenario_path, &scenario_text)?;
    let pf: PlanFile = parse_toml(&plan_path, &plan_text)?;
    let gf: GroundingFile = parse_toml(&grounding_path, &grounding_text)?;
    let detections = load_detections(&dir.join(DETECTIONS_FILE))?;

    let mut grounding_rows = BTreeMap::new();
    let mut targets = BTreeMap::new();
    for (row, g) in gf.targets.iter().enumerate() {
        if grounding_rows.insert(g.action, row).is_some() {
            let (line, col) = locate(&grounding_text, &format!("targets[{row}].action"))
                .map_or((1, 1), |o| line_col(&grounding_text, o));
            return Err(Error::Validation(format!(
                "{}:{line}:{col}: targets[{row}].action: duplicate record for action {}",
                grounding_path.display(),
                g.action
            )));
        }
        targets.insert(g.action, GroundingTarget { contact: g.contact, axis: g.axis, normal: g.normal });
    }
    let key = sf.instruction.trim().to_string();
    let plan_index = pf.plans.iter().position(|p| p.instruction.trim() == key).unwrap_or(0);
    let plans = pf.plans.into_iter().map(|p| (p.instruction.trim().to_string(), p.steps)).collect();

    let scenario = Scenario {
        name: sf.name,
        heightmap: sf.heightmap,
        static_obstacles: sf.static_obstacles,
        objects: sf.objects,
        robot_start: sf.robot_start,
        instruction: sf.instruction,
        planner: ScriptedPlanner { plans },
        grounding: ScriptedGroundingOracle::new(targets),
        detections,
        monitors: sf.monitors,
        horizon: sf.horizon,
        seed: sf.seed,
        grid: sf.grid,
    };
    let sources = Sources {
        dir: dir.to_path_buf(),
        scenario: scenario_text,
        plan: plan_text,
        grounding: grounding_text,
        plan_index,
        grounding_rows,
    };
    scenario.validate().map_err(|e| Error::Validation(sources.describe(&e)))?;
    Ok(scenario)
}

fn to_toml<T: Serialize>(v: &T) -> Result<String> {
    toml::to_string(v).map_err(|e| Error::Config(format!("cannot encode TOML: {e}")))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes a bundle that [`load_bundle`] reads back to an identical scenario.
pub fn save_bundle(dir: &Path, sc: &Scenario) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let sf = ScenarioFile {
        name: sc.name.clone(),
        instruction: sc.instruction.clone(),
        horizon: sc.horizon,
        seed: sc.seed,
        robot_start: sc.robot_start,
        grid: sc.grid,
        heightmap: sc.heightmap.clone(),
        static_obstacles: sc.static_obstacles.clone(),
        objects: sc.objects.clone(),
        monitors: sc.monitors.clone(),
    };
    let pf = PlanFile {
        plans: sc
            .planner
            .plans
            .iter()
            .map(|(k, v)| PlanEntry { instruction: k.clone(), steps: v.clone() })
            .collect(),
    };
    let gf = GroundingFile {
        targets: sc
            .grounding
            .targets
            .iter()
            .map(|(k, t)| GroundingEntry { action: *k, contact: t.contact, axis: t.axis, normal: t.normal })
            .collect(),
    };
    write(&dir.join(SCENARIO_FILE), &to_toml(&sf)?)?;
    write(&dir.join(PLAN_FILE), &to_toml(&pf)?)?;
    write(&dir.join(GROUNDING_FILE), &to_toml(&gf)?)?;
    let det_path = dir.join(DETECTIONS_FILE);
    match &sc.detections {
        Some(dets) => {
            let mut text = String::new();
            for d in dets {
                text.push_str(&serde_json::to_string(d).map_err(|e| Error::Config(e.to_string()))?);
                text.push('\n');
            }
            write(&det_path, &text)?;
        }
        None if det_path.exists() => fs::remove_file(&det_path).map_err(|e| Error::io(&det_path, e))?,
        None => {}
    }
    Ok(())
}

/// Expands each path into bundles: a bundle itself, or every bundle
/// directly inside a suite directory, in name order.
pub fn discover(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if is_bundle(p) {
            out.push(p.clone());
            continue;
        }
        let entries = fs::read_dir(p).map_err(|e| Error::io(p, e))?;
        let mut found: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|d| is_bundle(d))
            .collect();
        if found.is_empty() {
            return Err(Error::io(
                p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "no scenario bundle in directory"),
            ));
        }
        found.sort();
        out.extend(found);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use quadmanip_core::scenarios;

    #[test]
    fn line_col_counts_from_one() {
        let t = "a = 1\nbb = 2\n";
        assert_eq!(line_col(t, 0), (1, 1));
        assert_eq!(line_col(t, 6), (2, 1));
        assert_eq!(line_col(t, 11), (2, 6));
    }

    #[test]
    fn locate_walks_arrays_and_inline_tables() {
        let t = "name = \"x\"\n\n[[monitors]]\nname = \"a\"\ncondition = { type = \"attached\", object = 1 }\n\n[[monitors]]\nname = \"b\"\ncondition = { type = \"attached\", object = 9 }\n";
        let off = locate(t, "monitors[1].condition.object").unwrap();
        assert_eq!(line_col(t, off).0, 9);
        assert_eq!(&t[off..off + 1], "9");
        // missing leaf falls back to the deepest existing item
        let off = locate(t, "monitors[0].condition.nope").unwrap();
        assert_eq!(line_col(t, off).0, 5);
    }

    #[test]
    fn round_trip_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        for sc in scenarios::all() {
            let d = dir.path().join(&sc.name);
            save_bundle(&d, &sc).unwrap();
            assert_eq!(load_bundle(&d).unwrap(), sc);
        }
    }

    #[test]
    fn dangling_reference_names_file_line_and_field() {
        let dir = tempfile::tempdir().unwrap();
        let mut sc = scenarios::cart_delivery();
        sc.objects[0].supported_by = Some((77, Pose::IDENTITY));
        save_bundle(dir.path(), &sc).unwrap();
        let err = load_bundle(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert_eq!(err.exit_code(), 3);
        assert!(msg.contains("scenario.toml:"), "{msg}");
        assert!(msg.contains("objects[0].supported_by"), "{msg}");
        let text = fs::read_to_string(dir.path().join(SCENARIO_FILE)).unwrap();
        let line: usize = msg.split(':').nth(1).unwrap().parse().unwrap();
        assert!(text.lines().nth(line - 1).unwrap().contains("supported_by"), "{msg}");
    }

    #[test]
    fn plan_errors_point_into_plan_file() {
        let dir = tempfile::tempdir().unwrap();
        let sc = scenarios::minimal();
        save_bundle(dir.path(), &sc).unwrap();
        let p = dir.path().join(PLAN_FILE);
        let text = fs::read_to_string(&p).unwrap().replace("target = \"cup\"", "target = \"mug\"");
        fs::write(&p, text).unwrap();
        let msg = load_bundle(dir.path()).unwrap_err().to_string();
        assert!(msg.contains("plan.toml:") && msg.contains("no object labelled \"mug\""), "{msg}");
    }

    #[test]
    fn syntax_errors_carry_position() {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(dir.path(), &scenarios::minimal()).unwrap();
        let p = dir.path().join(SCENARIO_FILE);
        fs::write(&p, "name = \"x\"\ninstruction = \n").unwrap();
        let err = load_bundle(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        assert!(err.to_string().contains("scenario.toml:2:"), "{err}");
    }

    #[test]
    fn missing_bundle_is_io() {
        let err = load_bundle(Path::new("/nonexistent/bundle")).unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }
}
