//! Top-level solvers: the joint multi-device loop, the single-device
//! alternating solver, the random-phase and no-IRS baselines, post-hoc phase
//! quantization and exhaustive small-instance search.

use std::f64::consts::TAU;
use std::fmt;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::comms_opt::{mmse_mud_composite, outer_sum_of_ratios, rates_composite, CommsOptions, MudMatrix};
use crate::compute_alloc::{
    integerize_offload, joint_compute_opt, optimal_offload_relaxed, p1e_objective, Allocation, ComputeOptions,
    LatencyReport,
};
use crate::error::{Error, Result};
use crate::numerics::{dotc, norm_sqr, principal_arg, wrap_angle, ComplexMatrix, C64};
use crate::rng::{self, Stream};
use crate::scenario::{composite_channel, ChannelSet, PhaseVector, SystemConfig, TaskSet};

/// Relative slack when comparing successive objective values.
const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "with-irs")]
    WithIrs,
    #[serde(rename = "randphase")]
    RandPhase,
    #[serde(rename = "without-irs")]
    WithoutIrs,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::WithIrs, Scheme::RandPhase, Scheme::WithoutIrs];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::WithIrs => "with-irs",
            Scheme::RandPhase => "randphase",
            Scheme::WithoutIrs => "without-irs",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Parse {
                what: "scheme".into(),
                reason: format!("`{s}` is not one of with-irs, randphase, without-irs"),
            })
    }
}

/// Phase resolution of a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Quantization {
    Continuous,
    Bits(u8),
}

impl Quantization {
    /// `0` means continuous.
    pub fn from_bits(bits: u8) -> Self {
        if bits == 0 {
            Quantization::Continuous
        } else {
            Quantization::Bits(bits)
        }
    }

    pub fn bits(self) -> u8 {
        match self {
            Quantization::Continuous => 0,
            Quantization::Bits(b) => b,
        }
    }
}

impl fmt::Display for Quantization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Quantization::Continuous => f.write_str("continuous"),
            Quantization::Bits(b) => write!(f, "{b}-bit"),
        }
    }
}

impl From<Quantization> for String {
    fn from(q: Quantization) -> Self {
        q.to_string()
    }
}

impl TryFrom<String> for Quantization {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        if s == "continuous" {
            return Ok(Quantization::Continuous);
        }
        s.strip_suffix("-bit")
            .and_then(|b| b.parse::<u8>().ok())
            .filter(|&b| b > 0)
            .map(Quantization::Bits)
            .ok_or_else(|| Error::Parse {
                what: "quantization".into(),
                reason: format!("`{s}` is neither `continuous` nor `<b>-bit`"),
            })
    }
}

/// Iteration caps and tolerances of every loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Relative objective tolerance of the outer loops.
    pub eps: f64,
    pub t1_max: usize,
    pub t2_max: usize,
    pub t3_max: usize,
    pub t_mm_max: usize,
    pub t4_max: usize,
    pub t5_max: usize,
    pub inner_eps: f64,
    pub mm_eps: f64,
    pub newton_eps: f64,
    pub zeta: f64,
    pub eps3: f64,
    pub bisection_eps: f64,
    pub bisection_max: usize,
    /// Number of random initial phase vectors; the best result is kept.
    pub multistart: usize,
    /// Seed of the initial phases.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        let c = CommsOptions::default();
        Self {
            eps: 1e-3,
            t1_max: 30,
            t2_max: c.t2_max,
            t3_max: c.t3_max,
            t_mm_max: c.t_mm_max,
            t4_max: 30,
            t5_max: 100,
            inner_eps: c.inner_eps,
            mm_eps: c.mm_eps,
            newton_eps: c.newton_eps,
            zeta: c.zeta,
            eps3: c.eps3,
            bisection_eps: 1e-6,
            bisection_max: 200,
            multistart: 1,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn compute(&self) -> ComputeOptions {
        ComputeOptions {
            eps: self.eps,
            max_iter: self.t1_max,
            bisection_eps: self.bisection_eps,
            bisection_max: self.bisection_max,
        }
    }

    pub fn comms(&self) -> CommsOptions {
        CommsOptions {
            inner_eps: self.inner_eps,
            mm_eps: self.mm_eps,
            t2_max: self.t2_max,
            t3_max: self.t3_max,
            t_mm_max: self.t_mm_max,
            newton_eps: self.newton_eps,
            zeta: self.zeta,
            eps3: self.eps3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::config("solver.eps", "must be positive"));
        }
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(Error::config("solver.zeta", "must lie in (0, 1)"));
        }
        if !(self.eps3 > 0.0 && self.eps3 < 1.0) {
            return Err(Error::config("solver.eps3", "must lie in (0, 1)"));
        }
        if self.multistart == 0 {
            return Err(Error::config("solver.multistart", "must be >= 1"));
        }
        if self.t4_max == 0 || self.t5_max == 0 || self.t1_max == 0 {
            return Err(Error::config("solver", "iteration caps must be >= 1"));
        }
        Ok(())
    }

    /// Initial phases of multistart run `start`.
    pub fn initial_phases(&self, n: usize, start: usize) -> PhaseVector {
        let mut r = rng::stream(self.seed, Stream::PhaseInit(start as u32));
        PhaseVector::random(n, &mut r)
    }
}

/// A solved instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub scheme: Scheme,
    pub quantization: Quantization,
    /// IRS phases; absent when the reflected path is not used.
    pub theta: Option<PhaseVector>,
    pub w: MudMatrix,
    pub rates: Vec<f64>,
    /// Integer offloads and edge CPU shares.
    pub allocation: Allocation,
    pub latency: LatencyReport,
    /// Weighted latency after every outer iteration, seconds.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl Solution {
    pub fn objective(&self) -> f64 {
        self.latency.objective
    }

    pub fn device_average_ms(&self) -> f64 {
        1e3 * self.latency.device_average()
    }

    /// Phase range, integer offloads within `[0, L]`, non-negative shares
    /// and the capacity budget.
    pub fn check_feasible(&self, tasks: &TaskSet) -> Result<()> {
        if let Some(theta) = &self.theta {
            if theta.angles().iter().any(|t| !(0.0..TAU).contains(t)) {
                return Err(Error::Domain("phase outside [0, 2π)".into()));
            }
        }
        if self.allocation.ell.iter().any(|l| l.fract() != 0.0) {
            return Err(Error::Domain("offload is not an integer".into()));
        }
        self.allocation.check_feasible(tasks)
    }
}

/// Rate of every device, with an all-zero filter meaning zero rate.
fn rates_or_zero(w: &MudMatrix, h: &ComplexMatrix, cfg: &SystemConfig) -> Result<Vec<f64>> {
    if (0..w.cols()).all(|k| norm_sqr(&w.column(k)) > 0.0) {
        return rates_composite(w, h, cfg);
    }
    (0..h.cols())
        .map(|k| {
            let wk = w.column(k);
            if norm_sqr(&wk) == 0.0 {
                return Ok(0.0);
            }
            let g = crate::comms_opt::sinr_composite(&wk, h, k, cfg.tx_power_w, cfg.effective_noise())?;
            Ok(crate::comms_opt::rate(g, cfg.bandwidth_hz))
        })
        .collect()
}

fn composite_or_direct(theta: Option<&PhaseVector>, ch: &ChannelSet) -> Result<ComplexMatrix> {
    match theta {
        Some(t) => composite_channel(ch, t),
        None => Ok(ch.direct.clone()),
    }
}

/// Recomputes rates and latencies of a candidate point from scratch.
/// Without phases only the direct channel is used.
pub fn evaluate_solution(
    theta: Option<&PhaseVector>,
    w: &MudMatrix,
    alloc: &Allocation,
    ch: &ChannelSet,
    tasks: &TaskSet,
    cfg: &SystemConfig,
) -> Result<(Vec<f64>, LatencyReport)> {
    ch.check_against(cfg)?;
    if tasks.len() != cfg.devices {
        return Err(Error::Dimension("task count differs from device count".into()));
    }
    let h = composite_or_direct(theta, ch)?;
    let rates = rates_or_zero(w, &h, cfg)?;
    let report = LatencyReport::evaluate(tasks, &rates, &cfg.weights, alloc);
    Ok((rates, report))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    scheme: Scheme,
    theta: Option<PhaseVector>,
    w: MudMatrix,
    relaxed: &Allocation,
    relaxed_rates: &[f64],
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
    ch: &ChannelSet,
    tasks: &TaskSet,
    cfg: &SystemConfig,
) -> Result<Solution> {
    let allocation = relaxed.integerized(tasks, relaxed_rates);
    let (rates, latency) = evaluate_solution(theta.as_ref(), &w, &allocation, ch, tasks, cfg)?;
    Ok(Solution {
        scheme,
        quantization: Quantization::Continuous,
        theta,
        w,
        rates,
        allocation,
        latency,
        objective_trace: trace,
        iterations,
        converged,
    })
}

fn check_instance(ch: &ChannelSet, tasks: &TaskSet, cfg: &SystemConfig) -> Result<()> {
    cfg.validate()?;
    ch.check_against(cfg)?;
    tasks.validate()?;
    if tasks.len() != cfg.devices {
        return Err(Error::Dimension(format!(
            "{} tasks for {} devices",
            tasks.len(),
            cfg.devices
        )));
    }
    Ok(())
}

/// Keeps the multistart run with the lowest weighted latency (first wins ties).
fn best_of(runs: impl Iterator<Item = Result<Solution>>) -> Result<Solution> {
    let mut best: Option<Solution> = None;
    for run in runs {
        let s = run?;
        if best.as_ref().map_or(true, |b| s.objective() < b.objective()) {
            best = Some(s);
        }
    }
    best.ok_or_else(|| Error::Internal("no solver run".into()))
}

/// Joint optimization of offloads, edge shares, detection and phases.
///
/// Each iteration re-optimizes the computing side at the current rates, then
/// the detection and phases for the resulting offloads. The recorded
/// objective is the computing-optimal weighted latency at the current rates;
/// a communications update that would raise it is rejected. Single-device
/// instances go to [`solve_single_device`].
pub fn solve_multi_device(
    ch: &ChannelSet,
    tasks: &TaskSet,
    cfg: &SystemConfig,
    opts: &SolverOptions,
) -> Result<Solution> {
    check_instance(ch, tasks, cfg)?;
    opts.validate()?;
    if cfg.devices == 1 {
        return solve_single_device(ch, tasks, cfg, opts);
    }
    best_of((0..opts.multistart).map(|s| multi_device_run(ch, tasks, cfg, opts, opts.initial_phases(ch.elements(), s))))
}

fn multi_device_run(
    ch: &ChannelSet,
    tasks: &TaskSet,
    cfg: &SystemConfig,
    opts: &SolverOptions,
    theta0: PhaseVector,
) -> Result<Solution> {
    let (pt, noise) = (cfg.tx_power_w, cfg.effective_noise());
    let copts = opts.compute();
    let mopts = opts.comms();
    let mut theta = theta0;
    let h = composite_channel(ch, &theta)?;
    let mut w = mmse_mud_composite(&h, pt, noise)?;
    let mut rates = rates_composite(&w, &h, cfg)?;
    let mut comp = joint_compute_opt(tasks, &rates, &cfg.weights, &copts)?;
    let mut trace = vec![comp.objective()];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.t4_max {
        iterations += 1;
        let comms = outer_sum_of_ratios(&comp.allocation.ell, &cfg.weights, &theta, ch, cfg, &mopts)?;
        let next = joint_compute_opt(tasks, &comms.rates, &cfg.weights, &copts)?;
        let prev = *trace.last().expect("trace is never empty");
        let obj = next.objective();
        if obj > prev * (1.0 + MONOTONE_SLACK) {
            debug!("rejecting communications update: {prev:e} -> {obj:e}");
            converged = true;
            break;
        }
        theta = comms.theta;
        w = comms.w;
        rates = comms.rates;
        comp = next;
        trace.push(obj);
        if (prev - obj).abs() <= opts.eps * obj.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    finish(
        Scheme::WithIrs,
        Some(theta),
        w,
        &comp.allocation,
        &rates,
        trace,
        iterations,
        converged,
        ch,
        tasks,
        cfg,
    )
}

/// MRC filter `√p_t·h/σ_eff` as a one-column matrix.
fn mrc(h: &ComplexMatrix, cfg: &SystemConfig) -> MudMatrix {
    let s = (cfg.tx_power_w / cfg.effective_noise()).sqrt();
    h.scale(C64::new(s, 0.0))
}

/// Phases co-phasing every reflected term with the direct term under `w`.
fn aligned_phases(w: &[C64], ch: &ChannelSet) -> PhaseVector {
    let reference = principal_arg(dotc(w, &ch.direct.column(0)));
    let a = ch.irs_ap.adjoint_mul_vec(w);
    let angles = (0..ch.elements())
        .map(|n| wrap_angle(reference - principal_arg(a[n].conj() * ch.device_irs[(n, 0)])))
        .collect();
    PhaseVector::new(angles)
}

fn snr_single(h: &ComplexMatrix, cfg: &SystemConfig) -> f64 {
    cfg.tx_power_w * norm_sqr(h.as_slice()) / cfg.effective_noise()
}

/// Single-device solver: alternates MRC and phase alignment until the SNR
/// settles, then offloads the equalizing volume with the whole edge CPU.
pub fn solve_single_device(
    ch: &ChannelSet,
    tasks: &TaskSet,
    cfg: &SystemConfig,
    opts: &SolverOptions,
) -> Result<Solution> {
    check_instance(ch, tasks, cfg)?;
    opts.validate()?;
    if cfg.devices != 1 {
        return Err(Error::Dimension(format!(
            "single-device solver given {} devices",
            cfg.devices
        )));
    }
    best_of((0..opts.multistart).map(|s| single_device_run(ch, tasks, cfg, opts, opts.initial_phases(ch.elements(), s))))
}

fn single_device_run(
    ch: &ChannelSet,
    tasks: &TaskSet,
    cfg: &SystemConfig,
    opts: &SolverOptions,
    theta0: PhaseVector,
) -> Result<Solution> {
    let f_total = [tasks.edge_total_cps];
    let relaxed_latency = |snr: f64| {
        let r = crate::comms_opt::rate(snr, cfg.bandwidth_hz);
        p1e_objective(tasks, &[r], &cfg.weights, &f_total)
    };
    let mut theta = theta0;
    let mut h = composite_channel(ch, &theta)?;
    let mut w = mrc(&h, cfg);
    let mut snr = snr_single(&h, cfg);
    let mut trace = vec![relaxed_latency(snr)];
    let mut converged = false;
    let mut iterations = 0;
    if ch.elements() > 0 && snr > 0.0 {
        while iterations < opts.t5_max {
            iterations += 1;
            let next_theta = aligned_phases(w.as_slice(), ch);
            let next_h = composite_channel(ch, &next_theta)?;
            let next_snr = snr_single(&next_h, cfg);
            if next_snr < snr {
                converged = true;
                break;
            }
            let change = (next_snr - snr).abs() / next_snr;
            theta = next_theta;
            h = next_h;
            w = mrc(&h, cfg);
            snr = next_snr;
            trace.push(relaxed_latency(snr));
            if change <= opts.eps {
                converged = true;
                break;
            }
        }
    } else {
        converged = true;
    }
    let rate = crate::comms_opt::rate(snr, cfg.bandwidth_hz);
    let task = &tasks.tasks[0];
    let ell_hat = optimal_offload_relaxed(task, rate, tasks.edge_total_cps);
    let relaxed = Allocation {
        ell: vec![ell_hat],
        f_e: vec![tasks.edge_total_cps],
    };
    finish(
        Scheme::WithIrs,
        Some(theta),
        w,
        &relaxed,
        &[rate],
        trace,
        iterations,
        converged,
        ch,
        tasks,
        cfg,
    )
}

/// Optimizes detection, offloads and edge shares for frozen phases
/// (`None`: direct channel only). With the phases fixed, MMSE detection (MRC
/// for one device) maximizes every SINR at once, so one pass suffices.
pub fn solve_fixed_phase(
    theta: Option<PhaseVector>,
    scheme: Scheme,
    ch: &ChannelSet,
    tasks: &TaskSet,
    cfg: &SystemConfig,
    opts: &SolverOptions,
) -> Result<Solution> {
    check_instance(ch, tasks, cfg)?;
    opts.validate()?;
    let h = composite_or_direct(theta.as_ref(), ch)?;
    let w = if cfg.devices == 1 {
        mrc(&h, cfg)
    } else {
        mmse_mud_composite(&h, cfg.tx_power_w, cfg.effective_noise())?
    };
    let rates = rates_or_zero(&w, &h, cfg)?;
    let comp = joint_compute_opt(tasks, &rates, &cfg.weights, &opts.compute())?;
    let trace = vec![comp.objective()];
    finish(scheme, theta, w, &comp.allocation, &rates, trace, 1, true, ch, tasks, cfg)
}

/// Baseline with uniformly random phases drawn from `seed`.
pub fn solve_randphase(
    ch: &ChannelSet,
    tasks: &TaskSet,
    cfg: &SystemConfig,
    seed: u64,
    opts: &SolverOptions,
) -> Result<Solution> {
    let mut r = rng::stream(seed, Stream::RandomPhase);
    let theta = PhaseVector::random(ch.elements(), &mut r);
    solve_fixed_phase(Some(theta), Scheme::RandPhase, ch, tasks, cfg, opts)
}

/// Baseline with the reflected path removed.
pub fn solve_without_irs(
    ch: &ChannelSet,
    tasks: &TaskSet,
    cfg: &SystemConfig,
    opts: &SolverOptions,
) -> Result<Solution> {
    solve_fixed_phase(None, Scheme::WithoutIrs, ch, tasks, cfg, opts)
}

/// Runs one scheme; random phases come from `opts.seed`.
pub fn solve_scheme(
    scheme: Scheme,
    ch: &ChannelSet,
    tasks: &TaskSet,
    cfg: &SystemConfig,
    opts: &SolverOptions,
) -> Result<Solution> {
    match scheme {
        Scheme::WithIrs => solve_multi_device(ch, tasks, cfg, opts),
        Scheme::RandPhase => solve_randphase(ch, tasks, cfg, opts.seed, opts),
        Scheme::WithoutIrs => solve_without_irs(ch, tasks, cfg, opts),
    }
}

/// Nearest angle of the `bits`-bit codebook `{2πi/2^bits}` by circular
/// distance; exact ties go to the smaller codebook angle.
pub fn quantize_angle(theta: f64, bits: u8) -> f64 {
    let levels = 1u32 << bits;
    let theta = wrap_angle(theta);
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..levels {
        let c = TAU * i as f64 / levels as f64;
        let d = (theta - c).abs();
        let d = d.min(TAU - d);
        if d < best.0 {
            best = (d, c);
        }
    }
    best.1
}

/// Rounds the phases of `sol` to a `bits`-bit codebook and re-optimizes
/// detection, offloads and edge shares with the phases frozen.
pub fn quantize_phases(
    sol: &Solution,
    bits: u8,
    ch: &ChannelSet,
    tasks: &TaskSet,
    cfg: &SystemConfig,
    opts: &SolverOptions,
) -> Result<Solution> {
    if !(1..=16).contains(&bits) {
        return Err(Error::Domain(format!("{bits}-bit quantization not supported")));
    }
    let theta = match &sol.theta {
        Some(t) => t,
        None => {
            let mut s = sol.clone();
            s.quantization = Quantization::Bits(bits);
            return Ok(s);
        }
    };
    let q = PhaseVector::new(theta.angles().iter().map(|&t| quantize_angle(t, bits)).collect());
    let mut out = solve_fixed_phase(Some(q), sol.scheme, ch, tasks, cfg, opts)?;
    out.quantization = Quantization::Bits(bits);
    Ok(out)
}

/// Exhaustive search over a phase grid with `resolution_deg` spacing; at each
/// point MMSE detection and the computing-side optimum with integer
/// offloads. Limited to `N ≤ 3`, `K ≤ 2`.
pub fn grid_oracle(
    ch: &ChannelSet,
    tasks: &TaskSet,
    cfg: &SystemConfig,
    resolution_deg: f64,
    opts: &SolverOptions,
) -> Result<f64> {
    check_instance(ch, tasks, cfg)?;
    let (n, k) = (ch.elements(), ch.devices());
    if n > 3 || k > 2 {
        return Err(Error::TooLarge(format!("N = {n}, K = {k}; the grid search allows N <= 3, K <= 2")));
    }
    if !(resolution_deg > 0.0 && resolution_deg <= 360.0) {
        return Err(Error::Domain(format!("grid resolution {resolution_deg} degrees")));
    }
    let steps = (360.0 / resolution_deg).round().max(1.0) as usize;
    let copts = opts.compute();
    let total = steps.pow(n as u32);
    let mut best = f64::INFINITY;
    let mut angles = vec![0.0; n];
    for idx in 0..total {
        let mut rem = idx;
        for a in angles.iter_mut() {
            *a = TAU * (rem % steps) as f64 / steps as f64;
            rem /= steps;
        }
        let theta = PhaseVector::new(angles.clone());
        let h = composite_channel(ch, &theta)?;
        let w = mmse_mud_composite(&h, cfg.tx_power_w, cfg.effective_noise())?;
        let rates = rates_composite(&w, &h, cfg)?;
        let comp = joint_compute_opt(tasks, &rates, &cfg.weights, &copts)?;
        let alloc = comp.allocation.integerized(tasks, &rates);
        let obj = LatencyReport::evaluate(tasks, &rates, &cfg.weights, &alloc).objective;
        best = best.min(obj);
    }
    Ok(best)
}

/// Integer offload of a single device at a given rate with the whole edge CPU.
pub fn single_device_offload(tasks: &TaskSet, rate: f64) -> u64 {
    let t = &tasks.tasks[0];
    integerize_offload(optimal_offload_relaxed(t, rate, tasks.edge_total_cps), t, rate, tasks.edge_total_cps)
}
