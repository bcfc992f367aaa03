//! Computing side: latency model, optimal offload split, KKT/bisection edge
//! CPU allocation and their alternating loop.
//!
//! For a fixed rate `R`, the offload volume that equalizes local and edge
//! latency is optimal, and substituting it gives a per-device latency
//! `L·c·(c·R + f)/(f·f_l + c·R·(f + f_l))` that is convex and decreasing in
//! the edge share `f`. Minimizing the weighted sum under `Σ f ≤ f_total`
//! has the closed-form stationarity solution [`resource_allocation_at_mu`]
//! for each multiplier `μ`; the multiplier itself is found by bisection.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{Task, TaskSet};

/// Relative slack allowed on `Σ f_e ≤ f_e_total`.
pub const CAPACITY_SLACK: f64 = 1e-6;

/// `(L − ℓ)·c / f_l`.
#[inline]
pub fn local_latency(ell: f64, task: &Task) -> f64 {
    (task.load() - ell).max(0.0) * task.cycles_per_bit / task.local_cps
}

/// `ℓ/R + ℓ·c/f_e`; zero when nothing is offloaded, infinite when something
/// is offloaded over a dead link or to a zero CPU share.
#[inline]
pub fn edge_latency(ell: f64, rate: f64, f_e: f64, cycles_per_bit: f64) -> f64 {
    if ell <= 0.0 {
        return 0.0;
    }
    if rate <= 0.0 || f_e <= 0.0 {
        return f64::INFINITY;
    }
    ell / rate + ell * cycles_per_bit / f_e
}

/// Device latency `max(D_l, D_e)`.
#[inline]
pub fn device_latency(ell: f64, task: &Task, rate: f64, f_e: f64) -> f64 {
    local_latency(ell, task).max(edge_latency(ell, rate, f_e, task.cycles_per_bit))
}

/// Real-valued offload volume equalizing local and edge latency.
pub fn optimal_offload_relaxed(task: &Task, rate: f64, f_e: f64) -> f64 {
    let (l, c, fl) = (task.load(), task.cycles_per_bit, task.local_cps);
    let rate = rate.max(0.0);
    let f_e = f_e.max(0.0);
    let den = f_e * fl + c * rate * (f_e + fl);
    if den <= 0.0 || l <= 0.0 {
        return 0.0;
    }
    (l * c * rate * f_e / den).clamp(0.0, l)
}

/// Picks the better of `⌊ℓ̂⌋` and `⌈ℓ̂⌉` (ties go to the floor).
pub fn integerize_offload(ell_hat: f64, task: &Task, rate: f64, f_e: f64) -> u64 {
    let l = task.bits;
    let ell_hat = ell_hat.clamp(0.0, l as f64);
    let lo = (ell_hat.floor() as u64).min(l);
    let hi = (ell_hat.ceil() as u64).min(l);
    if lo == hi {
        return lo;
    }
    let d_lo = device_latency(lo as f64, task, rate, f_e);
    let d_hi = device_latency(hi as f64, task, rate, f_e);
    if d_hi < d_lo {
        hi
    } else {
        lo
    }
}

/// Offload volumes and edge CPU shares for all devices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// Offloaded bits; integer-valued once finalized.
    pub ell: Vec<f64>,
    /// Edge CPU share per device, cycles/s.
    pub f_e: Vec<f64>,
}

impl Allocation {
    /// Checks `0 ≤ ℓ_k ≤ L_k`, `f_e ≥ 0` and the capacity constraint.
    pub fn check_feasible(&self, tasks: &TaskSet) -> Result<()> {
        if self.ell.len() != tasks.len() || self.f_e.len() != tasks.len() {
            return Err(Error::Dimension("allocation length differs from task count".into()));
        }
        for (k, t) in tasks.tasks.iter().enumerate() {
            let ell = self.ell[k];
            if !(ell >= 0.0 && ell <= t.load()) {
                return Err(Error::Domain(format!("device {k}: offload {ell} outside [0, {}]", t.bits)));
            }
            if !(self.f_e[k] >= 0.0) || !self.f_e[k].is_finite() {
                return Err(Error::Domain(format!("device {k}: edge share {} invalid", self.f_e[k])));
            }
        }
        let total: f64 = self.f_e.iter().sum();
        if total > tasks.edge_total_cps * (1.0 + CAPACITY_SLACK) {
            return Err(Error::Domain(format!(
                "edge shares sum to {total}, capacity {}",
                tasks.edge_total_cps
            )));
        }
        Ok(())
    }

    /// Rounds every offload to the better integer neighbour.
    pub fn integerized(&self, tasks: &TaskSet, rates: &[f64]) -> Self {
        let ell = tasks
            .tasks
            .iter()
            .enumerate()
            .map(|(k, t)| integerize_offload(self.ell[k], t, rates[k], self.f_e[k]) as f64)
            .collect();
        Self {
            ell,
            f_e: self.f_e.clone(),
        }
    }
}

/// Per-device latencies in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub local: Vec<f64>,
    pub edge: Vec<f64>,
    pub total: Vec<f64>,
    /// `Σ ϖ_k D_k`.
    pub objective: f64,
}

impl LatencyReport {
    pub fn evaluate(tasks: &TaskSet, rates: &[f64], weights: &[f64], alloc: &Allocation) -> Self {
        let k = tasks.len();
        let mut local = Vec::with_capacity(k);
        let mut edge = Vec::with_capacity(k);
        let mut total = Vec::with_capacity(k);
        let mut objective = 0.0;
        for (i, t) in tasks.tasks.iter().enumerate() {
            let dl = local_latency(alloc.ell[i], t);
            let de = edge_latency(alloc.ell[i], rates[i], alloc.f_e[i], t.cycles_per_bit);
            let d = dl.max(de);
            objective += weights[i] * d;
            local.push(dl);
            edge.push(de);
            total.push(d);
        }
        Self {
            local,
            edge,
            total,
            objective,
        }
    }

    /// Plain mean of the device latencies.
    pub fn device_average(&self) -> f64 {
        self.total.iter().sum::<f64>() / self.total.len() as f64
    }
}

/// A device takes part in the edge allocation only with a positive load and
/// a usable link.
#[inline]
fn is_active(task: &Task, rate: f64) -> bool {
    task.bits > 0 && rate > 0.0
}

/// Largest multiplier at which device `k` still receives a positive share:
/// `ϖ_k·L_k·c_k / f_l,k²`.
#[inline]
fn mu_cutoff(task: &Task, weight: f64) -> f64 {
    weight * task.load() * task.cycles_per_bit / (task.local_cps * task.local_cps)
}

/// Upper end of the multiplier bracket: the largest per-device cutoff among
/// active devices. Every share is zero at this point.
pub fn mu_upper_bound(tasks: &TaskSet, rates: &[f64], weights: &[f64]) -> f64 {
    tasks
        .tasks
        .iter()
        .enumerate()
        .filter(|(k, t)| is_active(t, rates[*k]))
        .map(|(k, t)| mu_cutoff(t, weights[k]))
        .fold(0.0, f64::max)
}

fn check_lengths(tasks: &TaskSet, rates: &[f64], weights: &[f64]) -> Result<()> {
    if rates.len() != tasks.len() || weights.len() != tasks.len() {
        return Err(Error::Dimension(format!(
            "{} tasks, {} rates, {} weights",
            tasks.len(),
            rates.len(),
            weights.len()
        )));
    }
    Ok(())
}

fn shares_at_mu(mu: f64, tasks: &TaskSet, rates: &[f64], weights: &[f64]) -> Vec<f64> {
    tasks
        .tasks
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let r = rates[k];
            if !is_active(t, r) {
                return 0.0;
            }
            let (c, fl) = (t.cycles_per_bit, t.local_cps);
            let root = (weights[k] * t.load() * c * c * c * r * r / mu).sqrt();
            ((root - c * r * fl) / (fl + c * r)).max(0.0)
        })
        .collect()
}

/// Stationarity solution for a given multiplier, negative shares clamped to
/// zero. `mu` must lie in `(0, mu_upper_bound]`.
pub fn resource_allocation_at_mu(mu: f64, tasks: &TaskSet, rates: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    check_lengths(tasks, rates, weights)?;
    let hi = mu_upper_bound(tasks, rates, weights);
    if !(mu > 0.0) || mu > hi * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("multiplier {mu} outside (0, {hi}]")));
    }
    Ok(shares_at_mu(mu, tasks, rates, weights))
}

/// Result of the multiplier search.
#[derive(Debug, Clone, PartialEq)]
pub struct MuSolution {
    pub mu: f64,
    pub f_e: Vec<f64>,
    pub halvings: usize,
}

/// Bisection on `μ` until `Σ f_e(μ)` meets the capacity within
/// `eps·f_e_total` from below. The returned shares never exceed the capacity.
pub fn solve_mu_bisection(
    tasks: &TaskSet,
    rates: &[f64],
    weights: &[f64],
    eps: f64,
    max_halvings: usize,
) -> Result<MuSolution> {
    check_lengths(tasks, rates, weights)?;
    let total = tasks.edge_total_cps;
    if !(total > 0.0) {
        return Err(Error::Domain("edge capacity must be positive".into()));
    }
    let active: Vec<usize> = (0..tasks.len()).filter(|&k| is_active(&tasks.tasks[k], rates[k])).collect();
    match active.len() {
        0 => {
            return Ok(MuSolution {
                mu: 0.0,
                f_e: vec![0.0; tasks.len()],
                halvings: 0,
            })
        }
        1 => {
            // A lone device takes the whole capacity; recover its multiplier.
            let k = active[0];
            let t = &tasks.tasks[k];
            let (c, fl, r) = (t.cycles_per_bit, t.local_cps, rates[k]);
            let den = total * (fl + c * r) + c * r * fl;
            let mut f_e = vec![0.0; tasks.len()];
            f_e[k] = total;
            return Ok(MuSolution {
                mu: weights[k] * t.load() * c * c * c * r * r / (den * den),
                f_e,
                halvings: 0,
            });
        }
        _ => {}
    }
    let mut hi = mu_upper_bound(tasks, rates, weights);
    let mut lo = 0.0;
    let mut best = shares_at_mu(hi, tasks, rates, weights);
    let best_sum: f64 = best.iter().sum();
    if best_sum > total * (1.0 + CAPACITY_SLACK) {
        return Err(Error::Internal(format!(
            "shares at the bracket end sum to {best_sum} > {total}"
        )));
    }
    let mut halvings = 0;
    while halvings < max_halvings {
        halvings += 1;
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = shares_at_mu(mid, tasks, rates, weights);
        let s: f64 = f.iter().sum();
        if s > total {
            lo = mid;
        } else {
            hi = mid;
            best = f;
            if total - s <= eps * total {
                break;
            }
        }
    }
    let residual = total - best.iter().sum::<f64>();
    if residual > eps * total {
        warn!("multiplier search stopped with relative residual {:e}", residual / total);
    }
    Ok(MuSolution {
        mu: hi,
        f_e: best,
        halvings,
    })
}

/// Weighted latency with every offload at its equalizing value:
/// `Σ ϖ_k·L_k·c_k·(c_k·R_k + f_k) / (f_k·f_l,k + c_k·R_k·(f_k + f_l,k))`.
pub fn p1e_objective(tasks: &TaskSet, rates: &[f64], weights: &[f64], f_e: &[f64]) -> f64 {
    tasks
        .tasks
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let (l, c, fl) = (t.load(), t.cycles_per_bit, t.local_cps);
            let (r, f) = (rates[k].max(0.0), f_e[k].max(0.0));
            let den = f * fl + c * r * (f + fl);
            let d = if den > 0.0 { l * c * (c * r + f) / den } else { l * c / fl };
            weights[k] * d
        })
        .sum()
}

/// Outcome of the alternating computing-side loop.
#[derive(Debug, Clone, PartialEq)]
pub struct ComputeResult {
    /// Relaxed (real-valued) offloads and edge shares.
    pub allocation: Allocation,
    pub mu: f64,
    /// Weighted latency after every pass.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl ComputeResult {
    pub fn objective(&self) -> f64 {
        *self.trace.last().expect("trace is never empty")
    }
}

/// Tolerances for [`joint_compute_opt`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComputeOptions {
    pub eps: f64,
    pub max_iter: usize,
    pub bisection_eps: f64,
    pub bisection_max: usize,
}

impl Default for ComputeOptions {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            max_iter: 30,
            bisection_eps: 1e-6,
            bisection_max: 200,
        }
    }
}

/// Alternates the edge-share bisection and the equalizing offload until the
/// relative objective change drops to `eps`. Returns the best pass.
pub fn joint_compute_opt(
    tasks: &TaskSet,
    rates: &[f64],
    weights: &[f64],
    opts: &ComputeOptions,
) -> Result<ComputeResult> {
    check_lengths(tasks, rates, weights)?;
    let k = tasks.len();
    let mut ell = vec![0.0; k];
    let mut trace = Vec::new();
    let mut best: Option<(f64, Allocation, f64)> = None;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter.max(1) {
        iterations += 1;
        let mu = solve_mu_bisection(tasks, rates, weights, opts.bisection_eps, opts.bisection_max)?;
        for (i, t) in tasks.tasks.iter().enumerate() {
            ell[i] = optimal_offload_relaxed(t, rates[i], mu.f_e[i]);
        }
        let alloc = Allocation {
            ell: ell.clone(),
            f_e: mu.f_e,
        };
        let obj = LatencyReport::evaluate(tasks, rates, weights, &alloc).objective;
        let prev = trace.last().copied();
        trace.push(obj);
        if best.as_ref().map_or(true, |(b, _, _)| obj < *b) {
            best = Some((obj, alloc, mu.mu));
        }
        if let Some(p) = prev {
            if (p - obj).abs() <= opts.eps * obj.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
    }
    debug!("compute allocation: {iterations} passes, objective {:?}", trace.last());
    let (_, allocation, mu) = best.expect("at least one pass");
    Ok(ComputeResult {
        allocation,
        mu,
        trace,
        iterations,
        converged,
    })
}
