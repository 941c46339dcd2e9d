//! `sonde` command line: design, simulate, ingest, analyze.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::balloon::{self, BalloonError};
use crate::config::SimulationConfig;
use crate::pipeline::{self, PipelineError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sonde", version, about = "Radiosonde cluster simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output location for this stage.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Attainable altitude over the payload × radius grid, as CSV.
    Design {
        #[command(flatten)]
        common: Common,
    },
    /// Fly the cluster and write truth and per-station reception logs.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Dedupe, calibrate and resample reception logs.
    Ingest {
        #[command(flatten)]
        common: Common,
        /// Simulation directory holding reception_*.jsonl.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Skip pre-launch calibration.
        #[arg(long)]
        no_calibrate: bool,
    },
    /// Run analyses on an ingest directory.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Ingest directory holding manifest.json.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Simulation directory, for truth and stereo tracks.
        #[arg(long)]
        sim: Option<PathBuf>,
        /// Comma-separated analyses; all when omitted.
        #[arg(long, value_delimiter = ',')]
        analysis: Option<Vec<String>>,
    },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn load_config(c: &Common) -> Result<SimulationConfig, Failure> {
    let mut cfg = match &c.config {
        Some(p) => SimulationConfig::load(p).map_err(|e| Failure::Validation(e.to_string()))?,
        None => SimulationConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    cfg.sync_seeds();
    cfg.validate().map_err(|e| Failure::Validation(e.to_string()))?;
    Ok(cfg)
}

fn sim_dir(cfg: &SimulationConfig) -> PathBuf {
    cfg.out.join("sim")
}

fn ingest_dir(cfg: &SimulationConfig) -> PathBuf {
    cfg.out.join("ingest")
}

fn design(cfg: &SimulationConfig, out: Option<&Path>, stdout: &mut dyn Write) -> Result<(), Failure> {
    let payloads: Vec<f64> = cfg.design.payloads_g.iter().map(|g| g * 1e-3).collect();
    let grid = balloon::altitude_curve(&cfg.balloon, &payloads, &cfg.design.radii_m).map_err(|e| match e {
        BalloonError::EmptyAxis(_) | BalloonError::Invalid(_) => Failure::Validation(e.to_string()),
        BalloonError::CannotFloat(_) => Failure::Runtime(e.to_string()),
    })?;
    let csv = grid.to_csv(&cfg.balloon);
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
            }
            std::fs::write(path, &csv).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
        }
        None => stdout.write_all(csv.as_bytes()).map_err(|e| Failure::Runtime(e.to_string()))?,
    }
    if grid.feasible_count() == 0 {
        return Err(Failure::Validation("no balloon in the grid can float in the troposphere".into()));
    }
    Ok(())
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), Failure> {
    match cli.command {
        Command::Design { common } => {
            let cfg = load_config(&common)?;
            design(&cfg, common.out.as_deref(), stdout)
        }
        Command::Simulate { common } => {
            let cfg = load_config(&common)?;
            let dir = common.out.unwrap_or_else(|| sim_dir(&cfg));
            let out = pipeline::simulate(&cfg)?;
            pipeline::write_simulation(&dir, &cfg, &out)?;
            for s in &out.summary.stations {
                let _ = writeln!(
                    stdout,
                    "station {}: sent {} received {} lost_range {} lost_collision {}",
                    s.station_id, s.sent, s.received, s.lost_range, s.lost_collision
                );
            }
            Ok(())
        }
        Command::Ingest { common, input, no_calibrate } => {
            let mut cfg = load_config(&common)?;
            if no_calibrate {
                cfg.ingest.calibrate = false;
            }
            let input = input.unwrap_or_else(|| sim_dir(&cfg));
            let dir = common.out.unwrap_or_else(|| ingest_dir(&cfg));
            let m = pipeline::run_ingest(&input, &dir, &cfg)?;
            let _ = writeln!(
                stdout,
                "ingested {} sondes, {} channels, {} uncalibrated, {} rejected packets",
                m.sondes.len(),
                m.channels.len(),
                m.uncalibrated.len(),
                m.rejected_packets
            );
            Ok(())
        }
        Command::Analyze { common, input, sim, analysis } => {
            let cfg = load_config(&common)?;
            let input = input.unwrap_or_else(|| ingest_dir(&cfg));
            let sim = sim.or_else(|| Some(sim_dir(&cfg)).filter(|d| d.is_dir()));
            let dir = common.out.unwrap_or_else(|| cfg.out.join("analysis"));
            let names: Vec<String> = match analysis {
                Some(v) => v.into_iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
                None => pipeline::ANALYSES.iter().map(|s| s.to_string()).collect(),
            };
            let summary = pipeline::analyze(&input, sim.as_deref(), &dir, &cfg, &names)?;
            for (name, value) in &summary {
                let _ = writeln!(stdout, "{name}: {value}");
            }
            Ok(())
        }
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(stderr, "{e}") } else { write!(stdout, "{e}") };
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(Failure::Validation(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            EXIT_VALIDATION
        }
        Err(Failure::Runtime(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            EXIT_RUNTIME
        }
    }
}
