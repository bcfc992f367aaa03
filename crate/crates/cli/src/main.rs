use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use irs_mec::harness::{preset, run_experiment, solve_point, write_results, write_rows, ExperimentConfig, Format, RunOptions};
use irs_mec::scenario::Scenario;
use irs_mec::solver::{grid_oracle, Quantization, Scheme};

#[derive(Parser)]
#[command(name = "irs-mec", version, about = "Latency minimization for IRS-aided mobile edge computing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one generated instance and print the solution as JSON.
    Solve {
        /// Experiment config (JSON); defaults to the built-in cell.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Start from a named preset instead of a config file.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// Index into the sweep values.
        #[arg(long, default_value_t = 0)]
        point: usize,
        #[arg(long, default_value = "with-irs")]
        scheme: Scheme,
        /// Phase quantization bits (0 = continuous).
        #[arg(long, default_value_t = 0)]
        bits: u8,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        multistart: Option<usize>,
    },
    /// Run an experiment config and write the result rows.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: Format,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        multistart: Option<usize>,
        #[arg(long)]
        realizations: Option<usize>,
        /// Record per-row wall time (makes output non-reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Print a named preset config as JSON, or run it with `--out`.
    Preset {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: Format,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        multistart: Option<usize>,
        #[arg(long)]
        realizations: Option<usize>,
        #[arg(long)]
        timing: bool,
    },
    /// Compare the solver against exhaustive phase search on a small instance.
    Oracle {
        #[arg(long, default_value_t = 1)]
        devices: usize,
        #[arg(long, default_value_t = 2)]
        elements: usize,
        /// Grid spacing in degrees.
        #[arg(long, default_value_t = 2.0)]
        resolution: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        multistart: usize,
    },
}

fn load(config: Option<PathBuf>, preset_name: Option<String>) -> irs_mec::Result<ExperimentConfig> {
    match (config, preset_name) {
        (Some(p), _) => ExperimentConfig::from_path(&p),
        (None, Some(n)) => preset(&n),
        (None, None) => Ok(ExperimentConfig::default()),
    }
}

#[allow(clippy::too_many_arguments)]
fn run(
    mut cfg: ExperimentConfig,
    out: Option<PathBuf>,
    format: Format,
    workers: Option<usize>,
    seed: Option<u64>,
    multistart: Option<usize>,
    realizations: Option<usize>,
    timing: bool,
) -> irs_mec::Result<()> {
    if let Some(s) = seed {
        cfg.base_seed = s;
    }
    if let Some(m) = multistart {
        cfg.multistart = m;
    }
    if let Some(r) = realizations {
        cfg.realizations = r;
    }
    let rows = run_experiment(&cfg, RunOptions { workers, timing })?;
    info!("{} rows", rows.len());
    match out {
        Some(path) => write_results(&rows, &path, format),
        None => write_rows(&rows, std::io::stdout().lock(), format).map_err(|source| irs_mec::Error::Io {
            path: "<stdout>".into(),
            source,
        }),
    }
}

fn execute(cli: Cli) -> irs_mec::Result<()> {
    match cli.command {
        Command::Solve {
            config,
            preset: preset_name,
            point,
            scheme,
            bits,
            seed,
            multistart,
        } => {
            let mut cfg = load(config, preset_name)?;
            if let Some(m) = multistart {
                cfg.multistart = m;
            }
            cfg.validate()?;
            let points = cfg.points()?;
            let p = points.get(point).ok_or_else(|| irs_mec::Error::Config {
                field: "point".into(),
                reason: format!("index {point} but only {} sweep values", points.len()),
            })?;
            let sc = Scenario::generate(&p.spec, seed)?;
            let quant = if bits == 0 { p.quantization } else { Quantization::Bits(bits) };
            let sol = solve_point(scheme, quant, &sc, &cfg.solver_options(seed))?;
            println!("{}", serde_json::to_string_pretty(&sol).expect("solution serializes"));
            Ok(())
        }
        Command::Run {
            config,
            out,
            format,
            workers,
            seed,
            multistart,
            realizations,
            timing,
        } => run(
            ExperimentConfig::from_path(&config)?,
            out,
            format,
            workers,
            seed,
            multistart,
            realizations,
            timing,
        ),
        Command::Preset {
            name,
            out,
            format,
            workers,
            seed,
            multistart,
            realizations,
            timing,
        } => {
            let cfg = preset(&name)?;
            if out.is_none() && seed.is_none() && multistart.is_none() && realizations.is_none() {
                let mut stdout = std::io::stdout().lock();
                writeln!(stdout, "{}", cfg.to_json()).map_err(|source| irs_mec::Error::Io {
                    path: "<stdout>".into(),
                    source,
                })?;
                return Ok(());
            }
            run(cfg, out, format, workers, seed, multistart, realizations, timing)
        }
        Command::Oracle {
            devices,
            elements,
            resolution,
            seed,
            multistart,
        } => {
            let mut cfg = if devices == 1 { preset("default")? } else { preset("default-two")? };
            cfg.system.devices = devices;
            cfg.system.irs_elements = elements;
            cfg.multistart = multistart;
            let spec = cfg.points()?.remove(0).spec;
            let sc = Scenario::generate(&spec, seed)?;
            let sol = solve_point(Scheme::WithIrs, Quantization::Continuous, &sc, &cfg.solver_options(seed))?;
            let oracle = grid_oracle(&sc.channels, &sc.tasks, &sc.config, resolution, &cfg.solver)?;
            let report = serde_json::json!({
                "solver_objective_ms": sol.objective() * 1e3,
                "oracle_objective_ms": oracle * 1e3,
                "relative_gap": sol.objective() / oracle - 1.0,
            });
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
