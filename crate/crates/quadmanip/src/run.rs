//! Batch runner: every episode of every scenario, then one serialized write pass.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use quadmanip_core::planning::{SubtaskMonitor, SubtaskReport, TaskPlan};
use quadmanip_core::sampling::{sample_episode_randomization, EpisodeRandomization, Preset, SeededRng};
use quadmanip_core::sim::{aggregate, run_episode, ActionOutcome, EpisodeResult, MetricsReport, Scenario};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bundle::{self, load_bundle};
use crate::config::{hex, Config};
use crate::error::{Error, Result};
use crate::formats::{to_json, trace_csv};

pub const DEFAULT_OUT: &str = "quadmanip-run";

/// Keeps randomization draws off the simulator's stream.
const RANDOMIZATION_SALT: u64 = 0x5eed_0fd0_3a1f_c0de;

pub struct Episode {
    pub result: EpisodeResult,
    pub randomization: EpisodeRandomization,
}

#[derive(Debug, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub scenario: String,
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub inputs: Vec<InputRecord>,
    pub seed: Option<u64>,
    pub episodes: u32,
    pub dt: f64,
    pub preset: Preset,
    pub config_sha256: String,
    pub outputs: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct EpisodeLine {
    pub episode: u64,
    pub seed: u64,
    pub success: bool,
    pub actions_completed: usize,
    pub actions_total: usize,
}

#[derive(Debug, Serialize)]
pub struct ScenarioReport {
    pub episodes: u32,
    pub subtask_success_rate: f64,
    pub metrics: MetricsReport,
    pub runs: Vec<EpisodeLine>,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub episodes: u32,
    pub aggregate: MetricsReport,
    pub scenarios: BTreeMap<String, ScenarioReport>,
}

#[derive(Debug, Serialize)]
struct EpisodeFile<'a> {
    scenario: &'a str,
    episode: u64,
    seed: u64,
    plan: &'a Option<TaskPlan>,
    plan_error: &'a Option<String>,
    outcomes: &'a [ActionOutcome],
    monitors: &'a [SubtaskMonitor],
    subtasks: &'a SubtaskReport,
    metrics: &'a MetricsReport,
    randomization: &'a EpisodeRandomization,
}

pub struct Outcome {
    pub dir: PathBuf,
    pub report: Report,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn input_record(dir: &Path, scenario: &Scenario) -> Result<InputRecord> {
    let mut files = BTreeMap::new();
    for name in [bundle::SCENARIO_FILE, bundle::PLAN_FILE, bundle::GROUNDING_FILE, bundle::DETECTIONS_FILE] {
        let p = dir.join(name);
        if p.is_file() {
            files.insert(name.to_string(), sha256_file(&p)?);
        }
    }
    Ok(InputRecord { path: dir.display().to_string(), scenario: scenario.name.clone(), files })
}

/// Runs every episode. Results come back in (scenario, episode) order
/// whatever the worker count.
pub fn simulate(scenarios: &[Scenario], cfg: &Config) -> Result<Vec<Vec<Episode>>> {
    let sim = cfg.effective_sim();
    let jobs: Vec<(usize, u64)> =
        (0..scenarios.len()).flat_map(|s| (0..u64::from(cfg.run.episodes)).map(move |e| (s, e))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start workers: {e}")))?;
    let results: Vec<std::result::Result<Episode, String>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(s, ep)| {
                let sc = &scenarios[s];
                let seed = cfg.run.seed.unwrap_or(sc.seed);
                let result = run_episode(sc, &sim, seed, ep).map_err(|e| format!("{}: {e}", sc.name))?;
                let mut rng = SeededRng::for_episode(seed ^ RANDOMIZATION_SALT, ep);
                let randomization = sample_episode_randomization(&mut rng, &cfg.randomization, sc.horizon);
                Ok(Episode { result, randomization })
            })
            .collect()
    });
    let mut out: Vec<Vec<Episode>> = scenarios.iter().map(|_| Vec::new()).collect();
    for ((s, _), r) in jobs.iter().zip(results) {
        out[*s].push(r.map_err(Error::Validation)?);
    }
    Ok(out)
}

pub fn build_report(scenarios: &[Scenario], episodes: &[Vec<Episode>]) -> Report {
    let mut per = BTreeMap::new();
    let mut all = Vec::new();
    for (sc, eps) in scenarios.iter().zip(episodes) {
        let metrics: Vec<MetricsReport> = eps.iter().map(|e| e.result.metrics.clone()).collect();
        let ok = eps.iter().filter(|e| e.result.subtasks.overall).count();
        let runs = eps
            .iter()
            .map(|e| EpisodeLine {
                episode: e.result.episode,
                seed: e.result.seed,
                success: e.result.subtasks.overall,
                actions_completed: e.result.outcomes.iter().filter(|o| o.success).count(),
                actions_total: e.result.outcomes.len(),
            })
            .collect();
        let agg = aggregate(&metrics);
        all.push(agg.clone());
        let n = eps.len() as u32;
        let entry = ScenarioReport {
            episodes: n,
            subtask_success_rate: if n == 0 { 0.0 } else { ok as f64 / f64::from(n) },
            metrics: agg,
            runs,
        };
        // scenario names may repeat across suites; keep each one
        let mut key = sc.name.clone();
        let mut k = 2;
        while per.contains_key(&key) {
            key = format!("{}#{k}", sc.name);
            k += 1;
        }
        per.insert(key, entry);
    }
    let aggregate = aggregate(&all);
    Report { episodes: aggregate.episodes, aggregate, scenarios: per }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads bundles under `paths`, runs them and writes the run directory.
pub fn run(paths: &[PathBuf], cfg: &Config) -> Result<Outcome> {
    let dirs = bundle::discover(paths)?;
    let scenarios = dirs.iter().map(|d| load_bundle(d)).collect::<Result<Vec<_>>>()?;
    let inputs = dirs.iter().zip(&scenarios).map(|(d, s)| input_record(d, s)).collect::<Result<Vec<_>>>()?;
    let episodes = simulate(&scenarios, cfg)?;
    let report = build_report(&scenarios, &episodes);

    let out = cfg.run.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let ep_dir = out.join("episodes");
    fs::create_dir_all(&ep_dir).map_err(|e| Error::io(&ep_dir, e))?;
    let mut outputs = vec!["report.json".to_string()];
    for (i, eps) in episodes.iter().enumerate() {
        for e in eps {
            let r = &e.result;
            let stem = format!("{:02}_{}_{:03}", i, r.scenario, r.episode);
            write(&ep_dir.join(format!("{stem}.trace.csv")), &trace_csv(&r.trace))?;
            let file = EpisodeFile {
                scenario: &r.scenario,
                episode: r.episode,
                seed: r.seed,
                plan: &r.plan,
                plan_error: &r.plan_error,
                outcomes: &r.outcomes,
                monitors: &r.monitors,
                subtasks: &r.subtasks,
                metrics: &r.metrics,
                randomization: &e.randomization,
            };
            write(&ep_dir.join(format!("{stem}.json")), to_json(&file)?.as_bytes())?;
            outputs.push(format!("episodes/{stem}.trace.csv"));
            outputs.push(format!("episodes/{stem}.json"));
        }
    }
    write(&out.join("report.json"), to_json(&report)?.as_bytes())?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        inputs,
        seed: cfg.run.seed,
        episodes: cfg.run.episodes,
        dt: cfg.sim.dt,
        preset: cfg.run.preset,
        config_sha256: cfg.result_hash()?,
        outputs,
    };
    write(&out.join("manifest.json"), to_json(&manifest)?.as_bytes())?;
    Ok(Outcome { dir: out, report })
}
