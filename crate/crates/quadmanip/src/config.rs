//! Run configuration. Values resolve as defaults, then the `--config` file,
//! then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use quadmanip_core::rewards::PdGains;
use quadmanip_core::sampling::{CommandRanges, Preset, RandomizationConfig};
use quadmanip_core::sim::SimConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bundle::{line_col, locate};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSettings {
    /// Master seed; each scenario's own seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub episodes: u32,
    pub jobs: usize,
    pub preset: Preset,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings { seed: None, episodes: 1, jobs: 1, preset: Preset::Eval, out: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommandPresets {
    pub train: CommandRanges,
    pub eval: CommandRanges,
    pub roboduet: CommandRanges,
}

impl Default for CommandPresets {
    fn default() -> Self {
        CommandPresets { train: CommandRanges::train(), eval: CommandRanges::eval(), roboduet: CommandRanges::roboduet() }
    }
}

impl CommandPresets {
    pub fn get(&self, p: Preset) -> &CommandRanges {
        match p {
            Preset::Train => &self.train,
            Preset::Eval => &self.eval,
            Preset::Roboduet => &self.roboduet,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub run: RunSettings,
    pub sim: SimConfig,
    pub gains: PdGains,
    pub commands: CommandPresets,
    pub randomization: RandomizationConfig,
}

/// Command-line values that override the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub episodes: Option<u32>,
    pub dt: Option<f64>,
    pub jobs: Option<usize>,
    pub preset: Option<Preset>,
    pub out: Option<PathBuf>,
}

/// Keys present in `user` but absent from `known`, as dotted paths.
fn unknown_keys(user: &toml::Table, known: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in user {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (v, known.get(k)) {
            (_, None) => out.push(path),
            (toml::Value::Table(u), Some(toml::Value::Table(kn))) => unknown_keys(u, kn, &path, out),
            _ => {}
        }
    }
}

impl Config {
    pub fn parse(text: &str, origin: &Path) -> Result<Config> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let (line, col) = e.span().map_or((1, 1), |s| line_col(text, s.start));
            Error::Parse(format!("{}:{line}:{col}: {}", origin.display(), e.message().trim_end()))
        })?;
        let user: toml::Table = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let known: toml::Table = toml::Table::try_from(&cfg).map_err(|e| Error::Config(e.to_string()))?;
        let mut unknown = Vec::new();
        unknown_keys(&user, &known, "", &mut unknown);
        if let Some(path) = unknown.first() {
            let (line, col) = locate(text, path).map_or((1, 1), |o| line_col(text, o));
            return Err(Error::Config(format!("{}:{line}:{col}: unknown key `{path}`", origin.display())));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse(&text, path)
    }

    /// Defaults, overlaid by `file` when given, overlaid by `flags`.
    pub fn resolve(file: Option<&Path>, flags: &Overrides) -> Result<Config> {
        let mut cfg = match file {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        cfg.apply(flags);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if o.seed.is_some() {
            self.run.seed = o.seed;
        }
        if let Some(e) = o.episodes {
            self.run.episodes = e;
        }
        if let Some(dt) = o.dt {
            self.sim.dt = dt;
        }
        if let Some(j) = o.jobs {
            self.run.jobs = j;
        }
        if let Some(p) = o.preset {
            self.run.preset = p;
        }
        if o.out.is_some() {
            self.run.out = o.out.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.episodes == 0 {
            return Err(Error::Config("run.episodes must be at least 1".into()));
        }
        if self.run.jobs == 0 {
            return Err(Error::Config("run.jobs must be at least 1".into()));
        }
        self.sim.validate().map_err(|e| Error::Config(format!("sim: {e}")))?;
        self.gains.validate().map_err(|e| Error::Config(format!("gains: {e}")))?;
        for (name, r) in [("train", &self.commands.train), ("eval", &self.commands.eval), ("roboduet", &self.commands.roboduet)] {
            r.validate().map_err(|e| Error::Config(format!("commands.{name}: {e}")))?;
        }
        self.randomization.validate().map_err(|e| Error::Config(format!("randomization: {e}")))?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot encode TOML: {e}")))
    }

    /// Simulator settings with the preset's command limits applied to the controller.
    pub fn effective_sim(&self) -> SimConfig {
        let mut sim = self.sim.clone();
        let r = self.commands.get(self.run.preset);
        let lin = r.x.lo.abs().max(r.x.hi.abs());
        let yaw = r.yaw_rate.lo.abs().max(r.yaw_rate.hi.abs());
        sim.controller.max_speed = sim.controller.max_speed.min(lin);
        sim.controller.max_yaw_rate = sim.controller.max_yaw_rate.min(yaw);
        sim
    }

    /// SHA-256 of everything that can change results; `jobs` and `out` are excluded.
    pub fn result_hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.run.jobs = 1;
        c.run.out = None;
        Ok(hex(&Sha256::digest(c.to_toml()?.as_bytes())))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        let text = c.to_toml().unwrap();
        assert_eq!(Config::parse(&text, Path::new("x.toml")).unwrap(), c);
    }

    #[test]
    fn empty_file_is_default() {
        assert_eq!(Config::parse("", Path::new("x.toml")).unwrap(), Config::default());
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let text = "[run]\nseed = 5\nepisodes = 3\njobs = 2\n\n[sim]\ndt = 0.01\n";
        let mut c = Config::parse(text, Path::new("x.toml")).unwrap();
        assert_eq!((c.run.seed, c.run.episodes, c.run.jobs, c.sim.dt), (Some(5), 3, 2, 0.01));
        assert_eq!(c.run.preset, Preset::Eval);
        c.apply(&Overrides { episodes: Some(9), dt: Some(0.05), ..Overrides::default() });
        assert_eq!((c.run.seed, c.run.episodes, c.run.jobs, c.sim.dt), (Some(5), 9, 2, 0.05));
    }

    #[test]
    fn unknown_key_is_located() {
        let text = "[run]\nseed = 5\n\n[sim.tracking]\nsigma = 0.1\n";
        let err = Config::parse(text, Path::new("c.toml")).unwrap_err().to_string();
        assert!(err.contains("c.toml:5:") && err.contains("sim.tracking.sigma"), "{err}");
    }

    #[test]
    fn type_errors_are_located() {
        let err = Config::parse("[run]\nepisodes = \"many\"\n", Path::new("c.toml")).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().starts_with("c.toml:2:"), "{err}");
    }

    #[test]
    fn zero_episodes_rejected() {
        let err = Config::resolve(None, &Overrides { episodes: Some(0), ..Overrides::default() }).unwrap_err();
        assert!(err.to_string().contains("episodes"));
    }

    #[test]
    fn hash_ignores_jobs_and_out() {
        let a = Config::default();
        let mut b = a.clone();
        b.run.jobs = 8;
        b.run.out = Some("elsewhere".into());
        assert_eq!(a.result_hash().unwrap(), b.result_hash().unwrap());
        b.run.seed = Some(1);
        assert_ne!(a.result_hash().unwrap(), b.result_hash().unwrap());
    }

    #[test]
    fn preset_limits_controller() {
        let mut c = Config::default();
        c.sim.controller.max_yaw_rate = 3.0;
        c.run.preset = Preset::Roboduet;
        assert_eq!(c.effective_sim().controller.max_yaw_rate, 0.6);
        c.run.preset = Preset::Eval;
        assert_eq!(c.effective_sim().controller.max_yaw_rate, 1.5);
    }
}
