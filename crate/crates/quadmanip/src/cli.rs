//! Command-line front end.
//!
//! Exit codes: 0 ok, 2 usage, 3 config or validation, 4 I/O.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use quadmanip_core::rewards::evaluate_timeline;
use quadmanip_core::sampling::Preset;
use quadmanip_core::sim::initial_grid;

use crate::bundle::load_bundle;
use crate::config::{Config, Overrides};
use crate::error::{Error, Result};
use crate::formats::{parse_timeline, write_grid, write_reward_csv};
use crate::run;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PresetArg {
    Train,
    Eval,
    Roboduet,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Train => Preset::Train,
            PresetArg::Eval => Preset::Eval,
            PresetArg::Roboduet => Preset::Roboduet,
        }
    }
}

#[derive(Debug, Args)]
struct Common {
    /// Master seed (default: each scenario's own seed)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Episodes per scenario
    #[arg(long, global = true)]
    episodes: Option<u32>,
    /// Control period in seconds
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Parallel episode workers
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Command-range preset
    #[arg(long, value_enum, global = true)]
    preset: Option<PresetArg>,
    /// Output directory or file
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML configuration file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Debug, Parser)]
#[command(name = "quadmanip", version, about = "Run mobile-manipulation scenarios and evaluate rewards")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run scenario bundles or suite directories and write a run directory
    Run {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Evaluate every reward term on a recorded timeline (JSON lines)
    Rewards { timeline: PathBuf },
    /// Check scenario bundles
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Write the occupancy grid seen from the start pose as PGM plus JSON sidecar
    ExportGrid { bundle: PathBuf },
    /// Print the resolved configuration as TOML
    Config,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            episodes: self.episodes,
            dt: self.dt,
            jobs: self.jobs,
            preset: self.preset.map(Preset::from),
            out: self.out.clone(),
        }
    }
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    let cfg = Config::resolve(cli.common.config.as_deref(), &cli.common.overrides())?;
    let out_err = |e: io::Error| Error::io(std::path::Path::new("<stdout>"), e);
    match cli.command {
        Command::Run { paths } => {
            let o = run::run(&paths, &cfg)?;
            let a = &o.report.aggregate;
            writeln!(
                stdout,
                "{} episodes, success rate {:.3}, written to {}",
                o.report.episodes,
                a.overall_success_rate,
                o.dir.display()
            )
            .map_err(out_err)?;
        }
        Command::Rewards { timeline } => {
            let text = fs::read_to_string(&timeline).map_err(|e| Error::io(&timeline, e))?;
            let steps = parse_timeline(&text, &timeline)?;
            let rows = evaluate_timeline(&steps, cfg.sim.dt, &cfg.sim.rewards);
            match &cfg.run.out {
                Some(p) => {
                    let f = fs::File::create(p).map_err(|e| Error::io(p, e))?;
                    write_reward_csv(io::BufWriter::new(f), &rows, p)?;
                }
                None => write_reward_csv(&mut *stdout, &rows, std::path::Path::new("<stdout>"))?,
            }
        }
        Command::Validate { paths } => {
            for p in crate::bundle::discover(&paths)? {
                let sc = load_bundle(&p)?;
                writeln!(stdout, "ok {} ({})", p.display(), sc.name).map_err(out_err)?;
            }
        }
        Command::ExportGrid { bundle } => {
            let sc = load_bundle(&bundle)?;
            let out = cfg.run.out.clone().ok_or_else(|| Error::Config("export-grid needs --out".into()))?;
            let grid = initial_grid(&sc, &cfg.effective_sim()).map_err(Error::Validation)?;
            write_grid(&out, &grid)?;
            writeln!(stdout, "{}x{} grid written to {}", grid.width(), grid.height(), out.display()).map_err(out_err)?;
        }
        Command::Config => {
            stdout.write_all(cfg.to_toml()?.as_bytes()).map_err(out_err)?;
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { stderr.write_all(text.as_bytes()) } else { stdout.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
