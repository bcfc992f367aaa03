//! Communications side: SINR and rate, MMSE detection, the weighted-MSE
//! phase quadratic with its MM solver, and the sum-of-ratios outer loop.
//!
//! Notation: `H` is the M×K composite channel, `W` the M×K detection matrix,
//! `p_t` the transmit power and `σ²_eff` the noise plus inter-cell
//! interference.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    dotc, dotu, hermitian_solve, max_eigenvalue, norm, norm_sqr, ComplexMatrix, C64, EIG_MAX_ITER,
    EIG_TOL, ZERO,
};
use crate::scenario::{composite_channel, ChannelSet, PhaseVector, SystemConfig};

/// Rates are floored here so that `λ = 1/R` and `β = ϖℓ/R` stay finite.
pub const RATE_FLOOR: f64 = 1e-3;

/// Newton step exponents beyond this are accepted with a warning.
pub const NEWTON_MAX_EXPONENT: u32 = 60;

/// Detection matrix, column `k` is the filter `w_k` of device `k`.
pub type MudMatrix = ComplexMatrix;

/// `p_t |w_kᴴh_k|² / (p_t Σ_{j≠k} |w_kᴴh_j|² + σ²_eff ‖w_k‖²)` on a composite channel.
pub fn sinr_composite(w_k: &[C64], h: &ComplexMatrix, k: usize, tx_power: f64, noise: f64) -> Result<f64> {
    if w_k.len() != h.rows() || k >= h.cols() {
        return Err(Error::Dimension(format!(
            "filter of length {} against {}x{} channel, device {k}",
            w_k.len(),
            h.rows(),
            h.cols()
        )));
    }
    let wn = norm_sqr(w_k);
    if wn == 0.0 {
        return Err(Error::Domain(format!("zero detection filter for device {k}")));
    }
    let mut signal = 0.0;
    let mut interference = 0.0;
    for j in 0..h.cols() {
        let g = dotc(w_k, &h.column(j)).norm_sqr();
        if j == k {
            signal = g;
        } else {
            interference += g;
        }
    }
    Ok(tx_power * signal / (tx_power * interference + noise * wn))
}

/// SINR of device `k` for phases `theta`.
pub fn sinr(w_k: &[C64], theta: &PhaseVector, ch: &ChannelSet, cfg: &SystemConfig, k: usize) -> Result<f64> {
    let h = composite_channel(ch, theta)?;
    sinr_composite(w_k, &h, k, cfg.tx_power_w, cfg.effective_noise())
}

/// `B·log₂(1 + γ)`.
#[inline]
pub fn rate(gamma: f64, bandwidth: f64) -> f64 {
    bandwidth * gamma.max(0.0).ln_1p() / std::f64::consts::LN_2
}

/// Rates of every device under detection matrix `w`.
pub fn rates_composite(w: &MudMatrix, h: &ComplexMatrix, cfg: &SystemConfig) -> Result<Vec<f64>> {
    (0..h.cols())
        .map(|k| {
            let g = sinr_composite(&w.column(k), h, k, cfg.tx_power_w, cfg.effective_noise())?;
            Ok(rate(g, cfg.bandwidth_hz))
        })
        .collect()
}

/// MMSE filters `w_k = √p_t J⁻¹ h_k`, `J = p_t Σ_j h_j h_jᴴ + σ²_eff I`.
pub fn mmse_mud_composite(h: &ComplexMatrix, tx_power: f64, noise: f64) -> Result<MudMatrix> {
    let m = h.rows();
    let mut j = ComplexMatrix::identity(m).scale(C64::new(noise, 0.0));
    let columns: Vec<Vec<C64>> = (0..h.cols()).map(|k| h.column(k)).collect();
    for hk in &columns {
        j.add_outer(C64::new(tx_power, 0.0), hk, hk);
    }
    let sp = tx_power.sqrt();
    let mut w = ComplexMatrix::zeros(m, h.cols());
    for (k, hk) in columns.iter().enumerate() {
        let rhs: Vec<C64> = hk.iter().map(|z| z * sp).collect();
        w.set_column(k, &hermitian_solve(&j, &rhs)?);
    }
    Ok(w)
}

pub fn mmse_mud(theta: &PhaseVector, ch: &ChannelSet, cfg: &SystemConfig) -> Result<MudMatrix> {
    let h = composite_channel(ch, theta)?;
    mmse_mud_composite(&h, cfg.tx_power_w, cfg.effective_noise())
}

/// Mean-square error of every device for an arbitrary detection matrix.
pub fn mse_composite(w: &MudMatrix, h: &ComplexMatrix, tx_power: f64, noise: f64) -> Result<Vec<f64>> {
    if w.rows() != h.rows() || w.cols() != h.cols() {
        return Err(Error::Dimension("detection matrix and channel differ in shape".into()));
    }
    let sp = tx_power.sqrt();
    Ok((0..h.cols())
        .map(|k| {
            let wk = w.column(k);
            let mut e = noise * norm_sqr(&wk);
            for j in 0..h.cols() {
                let g = dotc(&wk, &h.column(j));
                e += if j == k {
                    (g * sp - 1.0).norm_sqr()
                } else {
                    tx_power * g.norm_sqr()
                };
            }
            e
        })
        .collect())
}

pub fn mse(w: &MudMatrix, theta: &PhaseVector, ch: &ChannelSet, cfg: &SystemConfig) -> Result<Vec<f64>> {
    let h = composite_channel(ch, theta)?;
    mse_composite(w, &h, cfg.tx_power_w, cfg.effective_noise())
}

/// `−B·log₂(e)` for an MMSE value `e ∈ (0, 1]`.
pub fn mmse_rate(e_mmse: f64, bandwidth: f64) -> Result<f64> {
    if !(e_mmse > 0.0 && e_mmse <= 1.0) {
        return Err(Error::Domain(format!("MMSE {e_mmse} outside (0, 1]")));
    }
    Ok(-bandwidth * e_mmse.log2())
}

/// Sum-of-ratios auxiliaries and the MSE weights derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonState {
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
    pub upsilon: Vec<f64>,
}

impl NewtonState {
    /// The fixed-point values `λ = 1/R`, `β = ϖℓ/R`.
    pub fn from_rates(rates: &[f64], weighted_loads: &[f64]) -> Self {
        let lambda: Vec<f64> = rates.iter().map(|&r| 1.0 / r.max(RATE_FLOOR)).collect();
        let beta = rates
            .iter()
            .zip(weighted_loads)
            .map(|(&r, &q)| q / r.max(RATE_FLOOR))
            .collect();
        Self {
            upsilon: vec![0.0; lambda.len()],
            lambda,
            beta,
        }
    }

    /// Weighted-rate coefficients `λ_k β_k`.
    pub fn rate_weights(&self) -> Vec<f64> {
        self.lambda.iter().zip(&self.beta).map(|(l, b)| l * b).collect()
    }

    /// Largest `|λ_k R_k − 1|` and `|β_k R_k − ϖ_kℓ_k| / max(1, ϖ_kℓ_k)` over
    /// devices with a positive load.
    pub fn residuals(&self, rates: &[f64], weighted_loads: &[f64]) -> (f64, f64) {
        let mut chi = 0.0f64;
        let mut kappa = 0.0f64;
        for k in 0..rates.len() {
            if weighted_loads[k] <= 0.0 {
                continue;
            }
            let r = rates[k].max(RATE_FLOOR);
            chi = chi.max((self.lambda[k] * r - 1.0).abs());
            kappa = kappa.max((self.beta[k] * r - weighted_loads[k]).abs() / weighted_loads[k].max(1.0));
        }
        (chi, kappa)
    }
}

/// `Υ_k = λ_k β_k / e_k`.
pub fn auxiliary_weights(state: &NewtonState, e: &[f64]) -> Result<Vec<f64>> {
    if e.len() != state.lambda.len() {
        return Err(Error::Dimension("one MSE per device".into()));
    }
    e.iter()
        .enumerate()
        .map(|(k, &ek)| {
            if !(ek > 0.0) {
                return Err(Error::Domain(format!("device {k} has MSE {ek}; weight undefined")));
            }
            Ok(state.lambda[k] * state.beta[k] / ek)
        })
        .collect()
}

/// `f(φ) = φᴴΨφ + 2Re(vᵀφ)`, plus the θ-independent part of the weighted
/// MSE sum it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseQuadratic {
    pub psi: ComplexMatrix,
    pub v: Vec<C64>,
    /// Makes `f + const_term` equal the full θ-dependent objective.
    pub const_term: f64,
}

impl PhaseQuadratic {
    /// `f(φ)` without the constant.
    pub fn value(&self, phi: &[C64]) -> f64 {
        let psi_phi = self.psi.mul_vec(phi);
        dotc(phi, &psi_phi).re + 2.0 * dotu(&self.v, phi).re
    }

    pub fn objective(&self, phi: &[C64]) -> f64 {
        self.value(phi) + self.const_term
    }
}

/// Builds the phase quadratic for fixed weights `Υ` and filters `W`.
///
/// With `a_k = Gᴴw_k`, `b_kj = w_kᴴh_{d,j}` and `q_kj = conj(a_k) ⊙ h_{r,j}`
/// the weighted MSE terms that depend on θ are
/// `Σ_k Υ_k [p_t Σ_j |b_kj + q_kjᵀφ|² − 2√p_t Re(b_kk + q_kkᵀφ)]`.
/// The quadratic part is `Ψ = A ⊙ Bᵀ` with `A = Σ_k Υ_k p_t a_k a_kᴴ` and
/// `B = Σ_j h_{r,j} h_{r,j}ᴴ`; the linear part is the diagonal of `C − D`.
pub fn build_phase_quadratic(
    upsilon: &[f64],
    w: &MudMatrix,
    ch: &ChannelSet,
    cfg: &SystemConfig,
) -> Result<PhaseQuadratic> {
    let (m, n, k) = (ch.antennas(), ch.elements(), ch.devices());
    if upsilon.len() != k || w.rows() != m || w.cols() != k {
        return Err(Error::Dimension(format!(
            "{} weights and {}x{} filters for M={m}, K={k}",
            upsilon.len(),
            w.rows(),
            w.cols()
        )));
    }
    let pt = cfg.tx_power_w;
    let sp = pt.sqrt();
    let mut a_mat = ComplexMatrix::zeros(n, n);
    let mut b_mat = ComplexMatrix::zeros(n, n);
    let mut v = vec![ZERO; n];
    let mut const_term = 0.0;
    let hr: Vec<Vec<C64>> = (0..k).map(|j| ch.device_irs.column(j)).collect();
    let hd: Vec<Vec<C64>> = (0..k).map(|j| ch.direct.column(j)).collect();
    for hrj in &hr {
        b_mat.add_outer(C64::new(1.0, 0.0), hrj, hrj);
    }
    for kk in 0..k {
        let y = upsilon[kk];
        if y == 0.0 {
            continue;
        }
        let wk = w.column(kk);
        let a = ch.irs_ap.adjoint_mul_vec(&wk);
        a_mat.add_outer(C64::new(y * pt, 0.0), &a, &a);
        for j in 0..k {
            let b = dotc(&wk, &hd[j]);
            let coeff = b.conj() * (y * pt);
            for (e, ve) in v.iter_mut().enumerate() {
                let q = a[e].conj() * hr[j][e];
                *ve += coeff * q;
                if j == kk {
                    *ve -= q * (y * sp);
                }
            }
            const_term += y * pt * b.norm_sqr();
            if j == kk {
                const_term -= 2.0 * y * sp * b.re;
            }
        }
    }
    let psi = ComplexMatrix::from_fn(n, n, |r, c| a_mat[(r, c)] * b_mat[(c, r)]);
    Ok(PhaseQuadratic { psi, v, const_term })
}

/// An upper estimate of the dominant eigenvalue of the PSD matrix `Ψ`:
/// the power-iteration Rayleigh quotient `ρ` plus the residual `‖Ψx − ρx‖`.
pub fn dominant_eigenvalue_bound(psi: &ComplexMatrix) -> Result<f64> {
    if psi.rows() == 0 {
        return Ok(0.0);
    }
    let est = max_eigenvalue(psi, EIG_TOL, EIG_MAX_ITER)?;
    if !est.converged {
        warn!("power iteration stopped after {} steps", est.iterations);
    }
    let px = psi.mul_vec(&est.vector);
    let residual = norm(&px.iter().zip(&est.vector).map(|(p, x)| p - x * est.value).collect::<Vec<_>>());
    Ok(est.value + residual)
}

/// One MM step `φ ← exp(j·arg((λ̂I − Ψ)φ − v*))`; entries whose argument
/// vanishes keep their previous phase.
pub fn mm_phase_step(phi: &[C64], pq: &PhaseQuadratic, lambda_max: f64) -> Vec<C64> {
    let psi_phi = pq.psi.mul_vec(phi);
    phi.iter()
        .zip(&psi_phi)
        .zip(&pq.v)
        .map(|((&p, &s), &v)| {
            let z = p * lambda_max - s - v.conj();
            if z.norm() == 0.0 {
                p
            } else {
                z / z.norm()
            }
        })
        .collect()
}

/// Outcome of [`mm_phase_optimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct MmResult {
    pub theta: PhaseVector,
    /// `f(φ) + const` before the first step and after every step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Repeats [`mm_phase_step`] until `|Δf| ≤ eps·scale` or `max_iter` steps.
/// `scale` is the magnitude the change is measured against; pass
/// `None` to use `|f|`.
pub fn mm_phase_optimize(
    theta_init: &PhaseVector,
    pq: &PhaseQuadratic,
    eps: f64,
    max_iter: usize,
    scale: Option<f64>,
) -> Result<MmResult> {
    let n = pq.psi.rows();
    if theta_init.len() != n {
        return Err(Error::Dimension(format!("{} phases for an {n}-element quadratic", theta_init.len())));
    }
    let mut phi = theta_init.phasors();
    let mut f = pq.objective(&phi);
    let mut trace = vec![f];
    if n == 0 || (pq.psi.norm() == 0.0 && pq.v.iter().all(|z| *z == ZERO)) {
        return Ok(MmResult {
            theta: theta_init.clone(),
            trace,
            iterations: 0,
            converged: true,
        });
    }
    let lambda_max = dominant_eigenvalue_bound(&pq.psi)?;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let next = mm_phase_step(&phi, pq, lambda_max);
        let f_next = pq.objective(&next);
        trace.push(f_next);
        let reference = scale.unwrap_or(f_next.abs()).max(f64::MIN_POSITIVE);
        let done = (f - f_next).abs() <= eps * reference;
        phi = next;
        f = f_next;
        if done {
            converged = true;
            break;
        }
    }
    Ok(MmResult {
        theta: PhaseVector::from_phasors(&phi),
        trace,
        iterations,
        converged,
    })
}

/// Tolerances of the communications-side loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommsOptions {
    /// Relative tolerance of the weighted sum-rate loop.
    pub inner_eps: f64,
    /// Relative tolerance of the MM iteration, measured against the
    /// weighted MSE sum.
    pub mm_eps: f64,
    pub t2_max: usize,
    pub t3_max: usize,
    pub t_mm_max: usize,
    /// Tolerance on the Newton fixed-point residuals.
    pub newton_eps: f64,
    pub zeta: f64,
    pub eps3: f64,
}

impl Default for CommsOptions {
    fn default() -> Self {
        Self {
            inner_eps: 1e-5,
            mm_eps: 1e-6,
            t2_max: 50,
            t3_max: 100,
            t_mm_max: 500,
            newton_eps: 1e-3,
            zeta: 0.5,
            eps3: 0.01,
        }
    }
}

/// Rates with the numerical floor applied.
fn floored(rates: Vec<f64>) -> Vec<f64> {
    rates.into_iter().map(|r| r.max(RATE_FLOOR)).collect()
}

/// Outcome of [`inner_bcd`].
#[derive(Debug, Clone, PartialEq)]
pub struct InnerResult {
    pub w: MudMatrix,
    pub theta: PhaseVector,
    pub rates: Vec<f64>,
    pub upsilon: Vec<f64>,
    /// Weighted sum rate `Σ λ_kβ_k R_k` (normalized weights) per iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Weighted sum-rate maximization for fixed `λ, β`: alternates MMSE
/// filters, MSE weights and MM phases. The returned filters are the MMSE
/// filters of the returned phases.
pub fn inner_bcd(
    state: &NewtonState,
    theta_init: &PhaseVector,
    ch: &ChannelSet,
    cfg: &SystemConfig,
    opts: &CommsOptions,
) -> Result<InnerResult> {
    let k = ch.devices();
    let (pt, noise) = (cfg.tx_power_w, cfg.effective_noise());
    // Only the ratios of the weights matter; normalizing keeps Ψ well scaled.
    let raw = state.rate_weights();
    let top = raw.iter().cloned().fold(0.0, f64::max);
    let a: Vec<f64> = if top > 0.0 {
        raw.iter().map(|x| x / top).collect()
    } else {
        vec![0.0; k]
    };
    let mut theta = theta_init.clone();
    let mut h = composite_channel(ch, &theta)?;
    let mut w = mmse_mud_composite(&h, pt, noise)?;
    let mut rates = rates_composite(&w, &h, cfg)?;
    let weighted = |r: &[f64]| r.iter().zip(&a).map(|(r, a)| r * a).sum::<f64>();
    let mut trace = vec![weighted(&rates)];
    let mut upsilon = vec![0.0; k];
    let mut converged = false;
    let mut iterations = 0;
    if top == 0.0 || ch.elements() == 0 {
        return Ok(InnerResult {
            w,
            theta,
            rates,
            upsilon,
            trace,
            iterations,
            converged: true,
        });
    }
    while iterations < opts.t3_max {
        iterations += 1;
        let e = mse_composite(&w, &h, pt, noise)?;
        let scaled = NewtonState {
            lambda: a.clone(),
            beta: vec![1.0; k],
            upsilon: vec![],
        };
        upsilon = auxiliary_weights(&scaled, &e)?;
        let pq = build_phase_quadratic(&upsilon, &w, ch, cfg)?;
        let wmse: f64 = upsilon
            .iter()
            .zip(&e)
            .map(|(u, e)| u * e)
            .sum::<f64>();
        let mm = mm_phase_optimize(&theta, &pq, opts.mm_eps, opts.t_mm_max, Some(wmse))?;
        let next_theta = mm.theta;
        let next_h = composite_channel(ch, &next_theta)?;
        let next_w = mmse_mud_composite(&next_h, pt, noise)?;
        let next_rates = rates_composite(&next_w, &next_h, cfg)?;
        let obj = weighted(&next_rates);
        let prev = *trace.last().expect("trace is never empty");
        if obj < prev {
            // Guard against round-off: keep the better point and stop.
            debug!("inner loop objective dipped by {:e}", (prev - obj) / prev.abs().max(f64::MIN_POSITIVE));
            converged = true;
            break;
        }
        theta = next_theta;
        h = next_h;
        w = next_w;
        rates = next_rates;
        trace.push(obj);
        if (obj - prev).abs() <= opts.inner_eps * obj.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    Ok(InnerResult {
        w,
        theta,
        rates,
        upsilon,
        trace,
        iterations,
        converged,
    })
}

/// Modified Newton step on `(λ, β)`: `λ ← λ − ζⁱχ/R`, `β ← β − ζⁱκ/R` with
/// the smallest `i ≥ 1` that shrinks the squared residual by `(1 − ε₃ζⁱ)²`.
/// Returns the new state and the exponent used.
pub fn newton_update(
    state: &NewtonState,
    rates: &[f64],
    weighted_loads: &[f64],
    zeta: f64,
    eps3: f64,
) -> Result<(NewtonState, u32)> {
    let k = rates.len();
    if state.lambda.len() != k || state.beta.len() != k || weighted_loads.len() != k {
        return Err(Error::Dimension("Newton state, rates and loads differ in length".into()));
    }
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(Error::Domain(format!("step base {zeta} outside (0, 1)")));
    }
    let active: Vec<bool> = weighted_loads.iter().map(|&q| q > 0.0).collect();
    let r: Vec<f64> = rates.iter().map(|&x| x.max(RATE_FLOOR)).collect();
    let chi: Vec<f64> = (0..k).map(|i| state.lambda[i] * r[i] - 1.0).collect();
    let kappa: Vec<f64> = (0..k).map(|i| state.beta[i] * r[i] - weighted_loads[i]).collect();
    let base: f64 = (0..k)
        .filter(|&i| active[i])
        .map(|i| chi[i] * chi[i] + kappa[i] * kappa[i])
        .sum();
    let step = |s: f64| {
        let mut next = state.clone();
        let mut res = 0.0;
        for i in (0..k).filter(|&i| active[i]) {
            next.lambda[i] = state.lambda[i] - s * chi[i] / r[i];
            next.beta[i] = state.beta[i] - s * kappa[i] / r[i];
            let c = next.lambda[i] * r[i] - 1.0;
            let q = next.beta[i] * r[i] - weighted_loads[i];
            res += c * c + q * q;
        }
        (next, res)
    };
    if base == 0.0 {
        return Ok((state.clone(), 1));
    }
    let mut i = 1;
    loop {
        let s = zeta.powi(i as i32);
        let (next, res) = step(s);
        let bound = (1.0 - eps3 * s).powi(2) * base;
        if res <= bound {
            return Ok((next, i));
        }
        if i >= NEWTON_MAX_EXPONENT {
            warn!("Newton step exponent reached {i}; residual stagnates");
            return Ok((next, i));
        }
        i += 1;
    }
}

/// Outcome of [`outer_sum_of_ratios`].
#[derive(Debug, Clone, PartialEq)]
pub struct OuterResult {
    pub w: MudMatrix,
    pub theta: PhaseVector,
    pub state: NewtonState,
    pub rates: Vec<f64>,
    /// `Σ ϖ_kℓ_k / R_k` of the returned point.
    pub ratio_sum: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest fixed-point residuals `(|λR − 1|, |βR − ϖℓ|/max(1, ϖℓ))` at exit.
    pub residuals: (f64, f64),
}

fn ratio_sum(rates: &[f64], weighted_loads: &[f64]) -> f64 {
    rates
        .iter()
        .zip(weighted_loads)
        .filter(|(_, &q)| q > 0.0)
        .map(|(&r, &q)| q / r.max(RATE_FLOOR))
        .sum()
}

/// Minimizes `Σ_k ϖ_kℓ_k / R_k` over filters and phases by the parametric
/// subtractive form: inner weighted sum-rate maximization alternated with
/// Newton updates of `(λ, β)`. Returns the best iterate seen.
pub fn outer_sum_of_ratios(
    ell: &[f64],
    weights: &[f64],
    theta_init: &PhaseVector,
    ch: &ChannelSet,
    cfg: &SystemConfig,
    opts: &CommsOptions,
) -> Result<OuterResult> {
    let k = ch.devices();
    if ell.len() != k || weights.len() != k {
        return Err(Error::Dimension("one offload and one weight per device".into()));
    }
    let loads: Vec<f64> = ell.iter().zip(weights).map(|(l, w)| (l * w).max(0.0)).collect();
    let h0 = composite_channel(ch, theta_init)?;
    let w0 = mmse_mud_composite(&h0, cfg.tx_power_w, cfg.effective_noise())?;
    let r0 = floored(rates_composite(&w0, &h0, cfg)?);
    let mut state = NewtonState::from_rates(&r0, &loads);
    // Idle devices: β = 0 removes them from the weighted sum rate.
    for i in 0..k {
        if loads[i] <= 0.0 {
            state.beta[i] = 0.0;
        }
    }
    let mut best = OuterResult {
        ratio_sum: ratio_sum(&r0, &loads),
        w: w0,
        theta: theta_init.clone(),
        state: state.clone(),
        residuals: state.residuals(&r0, &loads),
        rates: r0,
        iterations: 0,
        converged: false,
    };
    if loads.iter().all(|&q| q <= 0.0) {
        best.converged = true;
        return Ok(best);
    }
    let mut theta = theta_init.clone();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.t2_max {
        iterations += 1;
        let inner = inner_bcd(&state, &theta, ch, cfg, opts)?;
        let rates = floored(inner.rates);
        let (mut next, _) = newton_update(&state, &rates, &loads, opts.zeta, opts.eps3)?;
        let value = ratio_sum(&rates, &loads);
        let residuals = next.residuals(&rates, &loads);
        next.upsilon = inner.upsilon;
        theta = inner.theta;
        if value < best.ratio_sum {
            best = OuterResult {
                w: inner.w,
                theta: theta.clone(),
                state: next.clone(),
                rates,
                ratio_sum: value,
                iterations,
                converged: false,
                residuals,
            };
        }
        state = next;
        if residuals.0 <= opts.newton_eps && residuals.1 <= opts.newton_eps {
            converged = true;
            break;
        }
    }
    best.iterations = iterations;
    best.converged = converged;
    debug!(
        "sum of ratios: {iterations} iterations, value {:e}, converged {converged}",
        best.ratio_sum
    );
    Ok(best)
}
