//! On-disk formats: occupancy rasters, trace and reward CSVs, reward timelines.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use quadmanip_core::geometry::Pose;
use quadmanip_core::nav::{CellState, OccupancyGrid};
use quadmanip_core::rewards::{RewardTerms, TimelineRow, TimelineStep};
use quadmanip_core::sim::TraceRow;
use quadmanip_core::world::Gripper;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn cell_byte(c: CellState) -> u8 {
    match c {
        CellState::Free => 0,
        CellState::Unknown => 128,
        CellState::Occupied => 255,
    }
}

/// Binary PGM (P5). Row 0 of the image is the grid's highest y row.
pub fn grid_to_pgm(grid: &OccupancyGrid) -> Vec<u8> {
    let (w, h) = (grid.width(), grid.height());
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    let cells = grid.cells();
    for row in (0..h).rev() {
        out.extend(cells[row * w..(row + 1) * w].iter().map(|c| cell_byte(*c)));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub resolution: f64,
    /// World position of the lower-left corner of cell (0, 0).
    pub origin: [f64; 3],
    pub width: usize,
    pub height: usize,
    pub encoding: String,
}

pub fn grid_meta(grid: &OccupancyGrid) -> GridMeta {
    GridMeta {
        resolution: grid.resolution(),
        origin: grid.origin().to_array(),
        width: grid.width(),
        height: grid.height(),
        encoding: "free=0 unknown=128 occupied=255; first image row is max y".into(),
    }
}

pub fn sidecar_path(pgm: &Path) -> PathBuf {
    pgm.with_extension("json")
}

/// Writes `path` and its `.json` sidecar.
pub fn write_grid(path: &Path, grid: &OccupancyGrid) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, grid_to_pgm(grid)).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    fs::write(&side, to_json(&grid_meta(grid))?).map_err(|e| Error::io(&side, e))
}

pub fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Config(format!("cannot encode JSON: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn pose_cells(p: &Pose) -> [String; 7] {
    let q = p.orientation.to_array();
    [p.position.x, p.position.y, p.position.z, q[0], q[1], q[2], q[3]].map(|v| v.to_string())
}

fn term_header(prefix: &str) -> Vec<String> {
    RewardTerms::NAMES.iter().map(|n| format!("{prefix}{n}")).collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    }
}

pub fn trace_header() -> Vec<String> {
    let mut h: Vec<String> = ["tick", "t", "action", "phase"].map(String::from).to_vec();
    for p in ["base", "ee"] {
        h.extend(["x", "y", "z", "qw", "qx", "qy", "qz"].iter().map(|c| format!("{p}_{c}")));
        if p == "base" {
            h.extend(["cmd_vx", "cmd_vy", "cmd_wz", "vel_vx", "vel_vy", "vel_wz"].map(String::from));
        }
    }
    h.extend(["ee_cmd_x", "ee_cmd_y", "ee_cmd_z", "gripper", "attached"].map(String::from));
    h.extend(term_header("r_"));
    h.extend(["total_stage1", "total_stage2"].map(String::from));
    h
}

fn trace_record(r: &TraceRow) -> Vec<String> {
    let opt = |v: Option<String>| v.unwrap_or_default();
    let mut rec = vec![r.tick.to_string(), r.t.to_string(), opt(r.action.map(|a| a.to_string())), r.phase.clone()];
    rec.extend(pose_cells(&r.base));
    for v in [r.command.x, r.command.y, r.command.yaw_rate, r.velocity.x, r.velocity.y, r.velocity.yaw_rate] {
        rec.push(v.to_string());
    }
    rec.extend(pose_cells(&r.ee_world));
    match r.ee_command {
        Some(p) => rec.extend([p.position.x, p.position.y, p.position.z].map(|v| v.to_string())),
        None => rec.extend([String::new(), String::new(), String::new()]),
    }
    rec.push(match r.gripper {
        Gripper::Open => "open".into(),
        Gripper::Closed => "closed".into(),
    });
    rec.push(opt(r.attached.map(|a| a.to_string())));
    rec.extend(r.terms.as_array().map(|v| v.to_string()));
    rec.push(r.total_stage1.to_string());
    rec.push(r.total_stage2.to_string());
    rec
}

pub fn trace_csv(rows: &[TraceRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    // writing into a Vec cannot fail
    w.write_record(trace_header()).expect("in-memory csv");
    for r in rows {
        w.write_record(trace_record(r)).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

pub fn reward_header() -> Vec<String> {
    let mut h = vec!["tick".to_string(), "t".to_string()];
    h.extend(term_header("r_"));
    h.extend(["total_stage1", "total_stage2"].map(String::from));
    h
}

/// Reward trace as CSV. An empty timeline gives an empty file.
pub fn write_reward_csv<W: Write>(out: W, rows: &[TimelineRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Ok(());
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(reward_header()).map_err(|e| csv_err(path, e))?;
    for r in rows {
        let mut rec = vec![r.tick.to_string(), r.t.to_string()];
        rec.extend(r.terms.as_array().map(|v| v.to_string()));
        rec.push(r.total_stage1.to_string());
        rec.push(r.total_stage2.to_string());
        w.write_record(rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One [`TimelineStep`] per non-blank line.
pub fn parse_timeline(text: &str, path: &Path) -> Result<Vec<TimelineStep>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let s: TimelineStep = serde_json::from_str(line)
            .map_err(|e| Error::Parse(format!("{}:{}:{}: {e}", path.display(), i + 1, e.column())))?;
        out.push(s);
    }
    Ok(out)
}

pub fn timeline_jsonl(steps: &[TimelineStep]) -> Result<String> {
    let mut s = String::new();
    for st in steps {
        s.push_str(&serde_json::to_string(st).map_err(|e| Error::Config(e.to_string()))?);
        s.push('\n');
    }
    Ok(s)
}
