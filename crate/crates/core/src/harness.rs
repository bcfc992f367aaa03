//! Monte-Carlo experiments: JSON configuration, figure presets, parallel
//! sweeps and CSV/JSONL result files.
//!
//! Each (sweep value, realization) pair gets its own scenario seed, shared by
//! all schemes so that scheme comparisons use common channel and task draws.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::scenario::{Geometry, PathLossModel, Placement, Scenario, ScenarioSpec, SystemConfig, TaskRanges};
use crate::solver::{quantize_phases, solve_scheme, Quantization, Scheme, Solution, SolverOptions};

/// Radio block of the configuration, with powers in mW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemBlock {
    pub bandwidth_hz: f64,
    pub tx_power_mw: f64,
    pub noise_power_mw: f64,
    /// Inter-cell interference relative to the noise, dB; absent means none.
    pub ici_db: Option<f64>,
    pub antennas: usize,
    pub irs_elements: usize,
    pub devices: usize,
    /// Device weights; absent means `1/K` each.
    pub weights: Option<Vec<f64>>,
}

impl Default for SystemBlock {
    fn default() -> Self {
        Self {
            bandwidth_hz: 1e6,
            tx_power_mw: 1.0,
            noise_power_mw: 3.98e-12,
            ici_db: None,
            antennas: 5,
            irs_elements: 40,
            devices: 1,
            weights: None,
        }
    }
}

impl SystemBlock {
    pub fn to_system(&self) -> SystemConfig {
        let noise = self.noise_power_mw * 1e-3;
        SystemConfig {
            bandwidth_hz: self.bandwidth_hz,
            tx_power_w: self.tx_power_mw * 1e-3,
            noise_power_w: noise,
            ici_power_w: self.ici_db.map_or(0.0, |db| noise * 10f64.powf(db / 10.0)),
            antennas: self.antennas,
            irs_elements: self.irs_elements,
            devices: self.devices,
            weights: self
                .weights
                .clone()
                .unwrap_or_else(|| vec![1.0 / self.devices.max(1) as f64; self.devices]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "N")]
    N,
    #[serde(rename = "f_e_total")]
    FeTotal,
    #[serde(rename = "d")]
    D,
    #[serde(rename = "d1")]
    D1,
    #[serde(rename = "alpha_irs")]
    AlphaIrs,
    #[serde(rename = "K")]
    K,
    #[serde(rename = "ici_db")]
    IciDb,
    #[serde(rename = "quantization_bits")]
    QuantizationBits,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::N => "N",
            SweepParam::FeTotal => "f_e_total",
            SweepParam::D => "d",
            SweepParam::D1 => "d1",
            SweepParam::AlphaIrs => "alpha_irs",
            SweepParam::K => "K",
            SweepParam::IciDb => "ici_db",
            SweepParam::QuantizationBits => "quantization_bits",
        }
    }

    fn integral(self) -> bool {
        matches!(self, SweepParam::N | SweepParam::K | SweepParam::QuantizationBits)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

fn default_scenario() -> String {
    "custom".into()
}

fn default_schemes() -> Vec<Scheme> {
    Scheme::ALL.to_vec()
}

/// One Monte-Carlo experiment. Every field has a default, so `{}` describes
/// the default single-device cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_scenario")]
    pub scenario: String,
    pub geometry: Geometry,
    pub path_loss: PathLossModel,
    pub system: SystemBlock,
    pub tasks: TaskRanges,
    pub edge_total_cps: f64,
    /// Absent: a single point, reported with sweep parameter `none`.
    pub sweep: Option<Sweep>,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    pub realizations: usize,
    pub base_seed: u64,
    /// Reuse the same realization seeds at every sweep value, so that
    /// differences between sweep points are not masked by channel draws.
    pub paired_realizations: bool,
    pub multistart: usize,
    pub solver: SolverOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: default_scenario(),
            geometry: Geometry::default(),
            path_loss: PathLossModel::default(),
            system: SystemBlock::default(),
            tasks: TaskRanges::default(),
            edge_total_cps: 50e9,
            sweep: None,
            schemes: default_schemes(),
            realizations: 100,
            base_seed: 0,
            paired_realizations: false,
            multistart: 1,
            solver: SolverOptions::default(),
        }
    }
}

/// A fully resolved sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub spec: ScenarioSpec,
    pub quantization: Quantization,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Parse {
            what: "experiment config".into(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn sweep_param_name(&self) -> &'static str {
        self.sweep.as_ref().map_or("none", |s| s.param.as_str())
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::config("realizations", "must be >= 1"));
        }
        if self.schemes.is_empty() {
            return Err(Error::config("schemes", "must not be empty"));
        }
        let mut sorted = self.schemes.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.schemes.len() {
            return Err(Error::config("schemes", "contains duplicates"));
        }
        if self.multistart == 0 {
            return Err(Error::config("multistart", "must be >= 1"));
        }
        if !(self.edge_total_cps > 0.0) || !self.edge_total_cps.is_finite() {
            return Err(Error::config("edge_total_cps", "must be positive"));
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return Err(Error::config("sweep.values", "must not be empty"));
            }
            if sw.values.windows(2).any(|p| !(p[0] < p[1])) {
                return Err(Error::config("sweep.values", "must be strictly increasing"));
            }
            if sw.param.integral() && sw.values.iter().any(|v| v.fract() != 0.0 || *v < 0.0) {
                return Err(Error::config(
                    "sweep.values",
                    format!("`{}` takes non-negative integers", sw.param.as_str()),
                ));
            }
            if sw.param == SweepParam::QuantizationBits && sw.values.iter().any(|&v| v > 16.0) {
                return Err(Error::config("sweep.values", "at most 16 quantization bits"));
            }
        }
        let mut s = self.solver.clone();
        s.multistart = self.multistart;
        s.validate()?;
        for p in self.points()? {
            p.spec.geometry.validate()?;
            p.spec.path_loss.validate()?;
            p.spec.system.validate()?;
            p.spec.task_ranges.validate()?;
        }
        Ok(())
    }

    fn base_spec(&self) -> ScenarioSpec {
        ScenarioSpec {
            geometry: self.geometry.clone(),
            path_loss: self.path_loss,
            system: self.system.to_system(),
            task_ranges: self.tasks,
            edge_total_cps: self.edge_total_cps,
        }
    }

    /// Resolves every sweep value into a scenario specification.
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let Some(sw) = &self.sweep else {
            return Ok(vec![SweepPoint {
                value: 0.0,
                spec: self.base_spec(),
                quantization: Quantization::Continuous,
            }]);
        };
        sw.values
            .iter()
            .map(|&v| {
                let mut cfg = self.clone();
                let mut quantization = Quantization::Continuous;
                match sw.param {
                    SweepParam::N => cfg.system.irs_elements = v as usize,
                    SweepParam::FeTotal => cfg.edge_total_cps = v,
                    SweepParam::D => match &mut cfg.geometry.placement {
                        Placement::Explicit { offsets } => offsets.iter_mut().for_each(|o| o[0] = v),
                        Placement::Disc { center, .. } => center[0] = v,
                    },
                    SweepParam::D1 => match &mut cfg.geometry.placement {
                        Placement::Explicit { offsets } => offsets[0][0] = v,
                        Placement::Disc { .. } => {
                            return Err(Error::config("sweep.param", "`d1` needs explicit device offsets"))
                        }
                    },
                    SweepParam::AlphaIrs => {
                        cfg.path_loss.alpha_ui = v;
                        cfg.path_loss.alpha_ia = v;
                    }
                    SweepParam::K => {
                        if cfg.system.weights.is_some() {
                            return Err(Error::config("system.weights", "cannot be fixed while sweeping K"));
                        }
                        cfg.system.devices = v as usize;
                    }
                    SweepParam::IciDb => cfg.system.ici_db = Some(v),
                    SweepParam::QuantizationBits => quantization = Quantization::from_bits(v as u8),
                }
                Ok(SweepPoint {
                    value: v,
                    spec: cfg.base_spec(),
                    quantization,
                })
            })
            .collect()
    }

    /// Scenario seed of one (sweep index, realization) pair; with paired
    /// realizations the sweep index is ignored.
    pub fn seed(&self, sweep_index: usize, realization: usize) -> u64 {
        let idx = if self.paired_realizations { 0 } else { sweep_index };
        derive_seed(self.base_seed, &[idx as u64, realization as u64])
    }

    /// Solver options for one scenario seed.
    pub fn solver_options(&self, seed: u64) -> SolverOptions {
        SolverOptions {
            multistart: self.multistart,
            seed,
            ..self.solver.clone()
        }
    }
}

/// One solved (sweep value, scheme, realization) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub sweep_param: String,
    pub sweep_value: f64,
    pub scheme: Scheme,
    pub quant: Quantization,
    pub realization: usize,
    pub seed: u64,
    pub device_avg_latency_ms: f64,
    pub per_device_latency_ms: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub walltime_ms: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; `None` uses all cores.
    pub workers: Option<usize>,
    /// Record wall time per row; off keeps output byte-stable.
    pub timing: bool,
}

/// Solves one scheme on one scenario, applying the point's quantization.
pub fn solve_point(
    scheme: Scheme,
    quantization: Quantization,
    scenario: &Scenario,
    opts: &SolverOptions,
) -> Result<Solution> {
    let sol = solve_scheme(scheme, &scenario.channels, &scenario.tasks, &scenario.config, opts)?;
    match quantization {
        Quantization::Continuous => Ok(sol),
        Quantization::Bits(b) => quantize_phases(&sol, b, &scenario.channels, &scenario.tasks, &scenario.config, opts),
    }
}

struct Job<'a> {
    sweep_index: usize,
    point: &'a SweepPoint,
    scheme: Scheme,
    realization: usize,
}

fn run_job(cfg: &ExperimentConfig, job: &Job<'_>, timing: bool) -> ResultRow {
    let seed = cfg.seed(job.sweep_index, job.realization);
    let start = Instant::now();
    let outcome = Scenario::generate(&job.point.spec, seed)
        .and_then(|sc| solve_point(job.scheme, job.point.quantization, &sc, &cfg.solver_options(seed)));
    let walltime_ms = if timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
    let (avg, per, iterations, converged) = match outcome {
        Ok(sol) => (
            sol.device_average_ms(),
            sol.latency.total.iter().map(|t| t * 1e3).collect(),
            sol.iterations,
            sol.converged,
        ),
        Err(e) => {
            warn!(
                "{} = {}, {}, realization {}: {e}",
                cfg.sweep_param_name(),
                job.point.value,
                job.scheme,
                job.realization
            );
            (f64::NAN, vec![f64::NAN; job.point.spec.system.devices], 0, false)
        }
    };
    ResultRow {
        scenario: cfg.scenario.clone(),
        sweep_param: cfg.sweep_param_name().into(),
        sweep_value: job.point.value,
        scheme: job.scheme,
        quant: job.point.quantization,
        realization: job.realization,
        seed,
        device_avg_latency_ms: avg,
        per_device_latency_ms: per,
        iterations,
        converged,
        walltime_ms,
    }
}

/// Runs every (sweep value, scheme, realization) cell. Rows come back sorted
/// by sweep value, scheme and realization whatever the worker count. A
/// failed solve yields a row with `converged = false` and NaN latencies.
pub fn run_experiment(cfg: &ExperimentConfig, run: RunOptions) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let points = cfg.points()?;
    let mut jobs = Vec::with_capacity(points.len() * cfg.schemes.len() * cfg.realizations);
    for (sweep_index, point) in points.iter().enumerate() {
        let mut schemes = cfg.schemes.clone();
        schemes.sort();
        for scheme in schemes {
            for realization in 0..cfg.realizations {
                jobs.push(Job {
                    sweep_index,
                    point,
                    scheme,
                    realization,
                });
            }
        }
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = run.workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    let rows = pool.install(|| jobs.par_iter().map(|j| run_job(cfg, j, run.timing)).collect::<Vec<_>>());
    // Job order already is (sweep index, scheme, realization); sweep values
    // are strictly increasing, so this is the required sort.
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            _ => Err(Error::Parse {
                what: "format".into(),
                reason: format!("`{s}` is neither csv nor jsonl"),
            }),
        }
    }
}

pub const CSV_HEADER: [&str; 12] = [
    "scenario",
    "sweep_param",
    "sweep_value",
    "scheme",
    "quant",
    "realization",
    "seed",
    "device_avg_latency_ms",
    "per_device_latency_ms",
    "iterations",
    "converged",
    "walltime_ms",
];

fn ms(v: f64) -> String {
    format!("{v:.3}")
}

fn round3(v: f64) -> f64 {
    ms(v).parse().unwrap_or(v)
}

fn csv_record(r: &ResultRow) -> [String; 12] {
    [
        r.scenario.clone(),
        r.sweep_param.clone(),
        r.sweep_value.to_string(),
        r.scheme.to_string(),
        r.quant.to_string(),
        r.realization.to_string(),
        r.seed.to_string(),
        ms(r.device_avg_latency_ms),
        r.per_device_latency_ms.iter().map(|&v| ms(v)).collect::<Vec<_>>().join(";"),
        r.iterations.to_string(),
        r.converged.to_string(),
        ms(r.walltime_ms),
    ]
}

/// The row as written: latencies and wall time rounded to 3 decimals.
pub fn rounded(r: &ResultRow) -> ResultRow {
    ResultRow {
        device_avg_latency_ms: round3(r.device_avg_latency_ms),
        per_device_latency_ms: r.per_device_latency_ms.iter().map(|&v| round3(v)).collect(),
        walltime_ms: round3(r.walltime_ms),
        ..r.clone()
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_rows<W: Write>(rows: &[ResultRow], out: W, format: Format) -> std::io::Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(CSV_HEADER)?;
            for r in rows {
                w.write_record(csv_record(r))?;
            }
            w.flush()
        }
        Format::Jsonl => {
            let mut w = BufWriter::new(out);
            for r in rows {
                serde_json::to_writer(&mut w, &rounded(r))?;
                w.write_all(b"\n")?;
            }
            w.flush()
        }
    }
}

/// Writes rows to `path` (latencies in ms with 3 decimals).
pub fn write_results(rows: &[ResultRow], path: &Path, format: Format) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    write_rows(rows, file, format).map_err(io_err(path))
}

fn parse_field<T: std::str::FromStr>(field: &str, name: &str) -> Result<T> {
    field.parse().map_err(|_| Error::Parse {
        what: "results CSV".into(),
        reason: format!("bad {name} `{field}`"),
    })
}

/// Reads a results CSV back into rows.
pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<ResultRow>> {
    let parse_err = |e: csv::Error| Error::Parse {
        what: "results CSV".into(),
        reason: e.to_string(),
    };
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(parse_err)?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse {
            what: "results CSV".into(),
            reason: "unexpected header".into(),
        });
    }
    rd.records()
        .map(|rec| {
            let rec = rec.map_err(parse_err)?;
            let per = if rec[8].is_empty() {
                Vec::new()
            } else {
                rec[8]
                    .split(';')
                    .map(|v| parse_field(v, "per-device latency"))
                    .collect::<Result<_>>()?
            };
            Ok(ResultRow {
                scenario: rec[0].to_string(),
                sweep_param: rec[1].to_string(),
                sweep_value: parse_field(&rec[2], "sweep value")?,
                scheme: rec[3].parse()?,
                quant: Quantization::try_from(rec[4].to_string())?,
                realization: parse_field(&rec[5], "realization")?,
                seed: parse_field(&rec[6], "seed")?,
                device_avg_latency_ms: parse_field(&rec[7], "latency")?,
                per_device_latency_ms: per,
                iterations: parse_field(&rec[9], "iterations")?,
                converged: parse_field(&rec[10], "converged")?,
                walltime_ms: parse_field(&rec[11], "walltime")?,
            })
        })
        .collect()
}

/// Mean device-average latency (ms) of the rows matching a sweep value,
/// scheme and quantization.
pub fn mean_latency(rows: &[ResultRow], sweep_value: f64, scheme: Scheme, quant: Quantization) -> f64 {
    let v: Vec<f64> = rows
        .iter()
        .filter(|r| r.sweep_value == sweep_value && r.scheme == scheme && r.quant == quant)
        .map(|r| r.device_avg_latency_ms)
        .collect();
    v.iter().sum::<f64>() / v.len() as f64
}

pub const PRESETS: [&str; 16] = [
    "fig4",
    "fig4-two",
    "fig5",
    "fig6",
    "fig6-two",
    "fig7",
    "fig8",
    "fig9",
    "fig10",
    "fig11",
    "fig11-distance",
    "fig11-alpha",
    "fig12",
    "fig13",
    "default",
    "default-two",
];

fn range(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

fn explicit(offsets: &[[f64; 2]]) -> Geometry {
    Geometry {
        placement: Placement::Explicit {
            offsets: offsets.to_vec(),
        },
        ..Geometry::default()
    }
}

fn cluster(d: f64, d_perp: f64, r: f64) -> Geometry {
    Geometry {
        placement: Placement::Disc {
            center: [d, d_perp],
            radius: r,
        },
        ..Geometry::default()
    }
}

/// Named experiment configurations for the figure sweeps.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let single = explicit(&[[280.0, 10.0]]);
    let pair = explicit(&[[260.0, 10.0], [280.0, 10.0]]);
    let base = |devices: usize, n: usize, geometry: Geometry| ExperimentConfig {
        scenario: name.to_string(),
        geometry,
        system: SystemBlock {
            devices,
            irs_elements: n,
            ..SystemBlock::default()
        },
        ..ExperimentConfig::default()
    };
    let sweep = |param, values| Some(Sweep { param, values });
    let fixed_tasks = TaskRanges::fixed(300.0, 750.0, 0.5e9);
    let cfg = match name {
        "fig4" | "fig4-two" => {
            let (k, g) = if name == "fig4" {
                (1, single)
            } else {
                (2, explicit(&[[280.0, 10.0], [280.0, 10.0]]))
            };
            ExperimentConfig {
                tasks: fixed_tasks,
                sweep: sweep(SweepParam::N, vec![10.0, 20.0, 40.0]),
                schemes: vec![Scheme::WithIrs],
                ..base(k, 40, g)
            }
        }
        "fig5" => ExperimentConfig {
            schemes: vec![Scheme::WithIrs],
            multistart: 20,
            ..base(2, 40, explicit(&[[280.0, 10.0], [280.0, 10.0]]))
        },
        "fig6" | "fig6-two" => {
            let (k, g) = if name == "fig6" {
                (1, single)
            } else {
                (2, explicit(&[[280.0, 10.0], [280.0, 10.0]]))
            };
            ExperimentConfig {
                sweep: sweep(SweepParam::QuantizationBits, vec![0.0, 1.0, 2.0]),
                schemes: vec![Scheme::WithIrs],
                realizations: 200,
                ..base(k, 40, g)
            }
        }
        "fig7" => ExperimentConfig {
            sweep: sweep(SweepParam::N, range(10.0, 100.0, 10.0)),
            realizations: 300,
            ..base(1, 40, single)
        },
        "fig8" => ExperimentConfig {
            sweep: sweep(SweepParam::FeTotal, range(10e9, 60e9, 10e9)),
            realizations: 200,
            ..base(1, 40, single)
        },
        "fig9" => ExperimentConfig {
            sweep: sweep(SweepParam::D, range(160.0, 300.0, 20.0)),
            ..base(1, 40, single)
        },
        "fig10" => ExperimentConfig {
            sweep: sweep(SweepParam::N, range(10.0, 60.0, 10.0)),
            realizations: 200,
            ..base(2, 40, pair)
        },
        "fig11" => ExperimentConfig {
            sweep: sweep(SweepParam::FeTotal, range(10e9, 60e9, 10e9)),
            realizations: 200,
            ..base(2, 40, pair)
        },
        "fig11-distance" => ExperimentConfig {
            sweep: sweep(SweepParam::D1, range(160.0, 300.0, 20.0)),
            ..base(2, 40, pair)
        },
        "fig11-alpha" => ExperimentConfig {
            sweep: sweep(SweepParam::AlphaIrs, range(2.0, 3.0, 0.2)),
            ..base(2, 40, explicit(&[[220.0, 10.0], [280.0, 10.0]]))
        },
        "fig12" => ExperimentConfig {
            sweep: sweep(SweepParam::K, range(1.0, 5.0, 1.0)),
            realizations: 300,
            ..base(1, 40, cluster(280.0, 10.0, 10.0))
        },
        "fig13" => ExperimentConfig {
            sweep: sweep(SweepParam::IciDb, range(0.0, 20.0, 5.0)),
            realizations: 200,
            ..base(3, 40, cluster(280.0, 10.0, 10.0))
        },
        "default" => base(1, 40, single),
        "default-two" => base(2, 40, pair),
        _ => {
            return Err(Error::Parse {
                what: "preset".into(),
                reason: format!("unknown preset `{name}`; valid presets: {}", PRESETS.join(", ")),
            })
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(preset_name: &str, realizations: usize) -> ExperimentConfig {
        ExperimentConfig {
            realizations,
            ..preset(preset_name).unwrap()
        }
    }

    #[test]
    fn empty_config_is_the_default_cell() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let sys = cfg.system.to_system();
        assert_eq!(sys, SystemConfig::standard(1, 40));
        assert_eq!(cfg.geometry.placement, Placement::Explicit { offsets: vec![[280.0, 10.0]] });
    }

    #[test]
    fn config_errors_name_the_field() {
        let err = ExperimentConfig::from_json(r#"{"realizations": 0}"#).unwrap_err().to_string();
        assert!(err.contains("realizations"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"sweep": {"param": "N", "values": [20, 10]}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("sweep.values"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"schemes": []}"#).unwrap_err().to_string();
        assert!(err.contains("schemes"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"system": {"antenas": 4}}"#).unwrap_err().to_string();
        assert!(err.contains("antenas"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"sweep": {"param": "Q", "values": [1]}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("param") || err.contains("variant"), "{err}");
    }

    #[test]
    fn ici_is_relative_to_noise() {
        let sys = SystemBlock {
            ici_db: Some(10.0),
            ..SystemBlock::default()
        }
        .to_system();
        assert!((sys.ici_power_w / sys.noise_power_w - 10.0).abs() < 1e-12);
        assert!((sys.noise_power_w - 3.98e-15).abs() < 1e-27);
        assert_eq!(sys.tx_power_w, 1e-3);
    }

    #[test]
    fn presets_match_their_settings() {
        let f7 = preset("fig7").unwrap();
        assert_eq!(f7.geometry.placement, Placement::Explicit { offsets: vec![[280.0, 10.0]] });
        assert_eq!(f7.edge_total_cps, 50e9);
        assert_eq!(f7.sweep.as_ref().unwrap().param, SweepParam::N);
        let f12 = preset("fig12").unwrap();
        assert_eq!(f12.geometry.placement, Placement::Disc { center: [280.0, 10.0], radius: 10.0 });
        assert_eq!(f12.system.irs_elements, 40);
        assert_eq!(f12.sweep.as_ref().unwrap().param, SweepParam::K);
        let f13 = preset("fig13").unwrap();
        assert_eq!(f13.system.devices, 3);
        assert_eq!(f13.sweep.as_ref().unwrap().param, SweepParam::IciDb);
        for name in PRESETS {
            let p = preset(name).unwrap();
            assert_eq!(ExperimentConfig::from_json(&p.to_json()).unwrap(), p);
        }
        let err = preset("fig99").unwrap_err().to_string();
        assert!(err.contains("fig4") && err.contains("fig13"), "{err}");
    }

    #[test]
    fn sweep_points_apply_the_parameter() {
        let pts = preset("fig11-alpha").unwrap().points().unwrap();
        assert_eq!(pts[1].spec.path_loss.alpha_ui, 2.2);
        assert_eq!(pts[1].spec.path_loss.alpha_ia, 2.2);
        let pts = preset("fig12").unwrap().points().unwrap();
        assert_eq!(pts[2].spec.system.devices, 3);
        assert_eq!(pts[2].spec.system.weights, vec![1.0 / 3.0; 3]);
        let pts = preset("fig11-distance").unwrap().points().unwrap();
        assert_eq!(
            pts[0].spec.geometry.placement,
            Placement::Explicit { offsets: vec![[160.0, 10.0], [280.0, 10.0]] }
        );
        let pts = preset("fig6").unwrap().points().unwrap();
        assert_eq!(pts[2].quantization, Quantization::Bits(2));
    }

    #[test]
    fn single_cell_gives_one_row() {
        let cfg = ExperimentConfig {
            schemes: vec![Scheme::WithoutIrs],
            realizations: 1,
            ..ExperimentConfig::default()
        };
        let rows = run_experiment(&cfg, RunOptions::default()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].sweep_param, "none");
        assert!(rows[0].device_avg_latency_ms > 0.0);
        assert_eq!(rows[0].walltime_ms, 0.0);
    }

    #[test]
    fn rows_are_sorted_and_thread_count_independent() {
        let cfg = tiny("fig10", 3);
        let a = run_experiment(&cfg, RunOptions { workers: Some(1), timing: false }).unwrap();
        let b = run_experiment(&cfg, RunOptions { workers: Some(4), timing: false }).unwrap();
        assert_eq!(a, b);
        let key = |r: &ResultRow| (r.sweep_value, r.scheme, r.realization);
        assert!(a.windows(2).all(|p| key(&p[0]) < key(&p[1])));
        let (mut x, mut y) = (Vec::new(), Vec::new());
        write_rows(&a, &mut x, Format::Csv).unwrap();
        write_rows(&b, &mut y, Format::Csv).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn rows_reproduce_from_their_seed() {
        let cfg = tiny("fig12", 2);
        let rows = run_experiment(&cfg, RunOptions::default()).unwrap();
        let points = cfg.points().unwrap();
        for r in rows.iter().step_by(3).take(10) {
            let idx = points.iter().position(|p| p.value == r.sweep_value).unwrap();
            let sc = Scenario::generate(&points[idx].spec, r.seed).unwrap();
            let sol = solve_point(r.scheme, r.quant, &sc, &cfg.solver_options(r.seed)).unwrap();
            assert_eq!(sol.device_average_ms(), r.device_avg_latency_ms);
        }
    }

    #[test]
    fn csv_header_and_round_trip() {
        let mut out = Vec::new();
        write_rows(&[], &mut out, Format::Csv).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "scenario,sweep_param,sweep_value,scheme,quant,realization,seed,device_avg_latency_ms,\
             per_device_latency_ms,iterations,converged,walltime_ms\n"
        );
        let cfg = ExperimentConfig {
            realizations: 1,
            schemes: vec![Scheme::WithIrs],
            ..preset("fig6-two").unwrap()
        };
        let rows = run_experiment(&cfg, RunOptions::default()).unwrap();
        let mut out = Vec::new();
        write_rows(&rows[..1], &mut out, Format::Csv).unwrap();
        let text = String::from_utf8(out.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back = read_csv(out.as_slice()).unwrap();
        assert_eq!(back, vec![rounded(&rows[0])]);
        let mut out = Vec::new();
        write_rows(&rows, &mut out, Format::Jsonl).unwrap();
        let parsed: Vec<ResultRow> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(parsed, rows.iter().map(rounded).collect::<Vec<_>>());
    }

    #[test]
    fn write_results_reports_the_path() {
        let err = write_results(&[], Path::new("/nonexistent/dir/out.csv"), Format::Csv)
            .unwrap_err()
            .to_string();
        assert!(err.contains("/nonexistent/dir/out.csv"), "{err}");
    }
}
