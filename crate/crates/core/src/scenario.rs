//! Cell geometry, path loss, Rayleigh channels and computing tasks.
//!
//! Frame: the AP sits at `ap_position`, the IRS at `irs_position` (by default
//! the origin and `(R, 0)`). A device offset `(d, d_perp)` is measured `d`
//! along the AP→IRS axis and `d_perp` perpendicular to it. Everything is in
//! SI units; the JSON config carries powers in milliwatts and they
//! are converted on ingestion.

use std::f64::consts::TAU;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{principal_arg, wrap_angle, ComplexMatrix, C64};
use crate::rng::{self, Stream};

pub type Position = [f64; 2];

/// How devices are placed relative to the AP–IRS axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Placement {
    /// One `(d, d_perp)` offset per device. With fewer offsets than devices
    /// the list is reused cyclically.
    Explicit { offsets: Vec<[f64; 2]> },
    /// Devices uniform over a disc centred at offset `center`.
    Disc { center: [f64; 2], radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Geometry {
    pub cell_radius: f64,
    pub ap_position: Position,
    pub irs_position: Position,
    pub placement: Placement,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            cell_radius: 300.0,
            ap_position: [0.0, 0.0],
            irs_position: [300.0, 0.0],
            placement: Placement::Explicit {
                offsets: vec![[280.0, 10.0]],
            },
        }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.cell_radius > 0.0) {
            return Err(Error::config("geometry.cell_radius", "must be positive"));
        }
        if dist(self.ap_position, self.irs_position) <= 0.0 {
            return Err(Error::config("geometry.irs_position", "must differ from the AP position"));
        }
        match &self.placement {
            Placement::Explicit { offsets } => {
                if offsets.is_empty() {
                    return Err(Error::config("geometry.placement.offsets", "must not be empty"));
                }
                if offsets.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::config("geometry.placement.offsets", "must be finite"));
                }
            }
            Placement::Disc { center, radius } => {
                if !(*radius >= 0.0) || !radius.is_finite() {
                    return Err(Error::config("geometry.placement.radius", "must be finite and >= 0"));
                }
                if center.iter().any(|v| !v.is_finite()) {
                    return Err(Error::config("geometry.placement.center", "must be finite"));
                }
            }
        }
        Ok(())
    }

    /// Converts an axis offset into a position.
    pub fn offset_position(&self, offset: [f64; 2]) -> Position {
        let [ax, ay] = self.ap_position;
        let len = dist(self.ap_position, self.irs_position);
        let ux = (self.irs_position[0] - ax) / len;
        let uy = (self.irs_position[1] - ay) / len;
        [
            ax + offset[0] * ux - offset[1] * uy,
            ay + offset[0] * uy + offset[1] * ux,
        ]
    }
}

pub fn dist(a: Position, b: Position) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Places `k` devices. Explicit offsets are exact; disc placement draws
/// area-uniform points (radius `r·√u`).
pub fn place_devices(geometry: &Geometry, k: usize, seed: u64) -> Vec<Position> {
    match &geometry.placement {
        Placement::Explicit { offsets } => (0..k)
            .map(|i| geometry.offset_position(offsets[i % offsets.len()]))
            .collect(),
        Placement::Disc { center, radius } => {
            let mut rng = rng::stream(seed, Stream::Placement);
            (0..k)
                .map(|_| {
                    let rho = radius * rng::uniform(&mut rng, 0.0, 1.0).sqrt();
                    let phi = TAU * rng::uniform(&mut rng, 0.0, 1.0);
                    geometry.offset_position([center[0] + rho * phi.cos(), center[1] + rho * phi.sin()])
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathLossModel {
    pub pl0_db: f64,
    pub d0: f64,
    pub alpha_ua: f64,
    pub alpha_ui: f64,
    pub alpha_ia: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self {
            pl0_db: 30.0,
            d0: 1.0,
            alpha_ua: 3.5,
            alpha_ui: 2.2,
            alpha_ia: 2.2,
        }
    }
}

impl PathLossModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.d0 > 0.0) {
            return Err(Error::config("path_loss.d0", "must be positive"));
        }
        for (name, a) in [
            ("path_loss.alpha_ua", self.alpha_ua),
            ("path_loss.alpha_ui", self.alpha_ui),
            ("path_loss.alpha_ia", self.alpha_ia),
        ] {
            if !(a >= 1.0) {
                return Err(Error::config(name, "path-loss exponent must be >= 1"));
            }
        }
        if !self.pl0_db.is_finite() {
            return Err(Error::config("path_loss.pl0_db", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathGain {
    pub gain: f64,
    /// The distance was below `d0` and was clamped to it.
    pub clamped: bool,
}

/// Linear power gain `10^(-(PL0 + 10·α·log10(d/d0))/10)`.
pub fn path_loss_gain(d: f64, alpha: f64, model: &PathLossModel) -> PathGain {
    let clamped = d < model.d0;
    if clamped {
        warn!("link distance {d} m below reference distance {} m, clamped", model.d0);
    }
    let d = d.max(model.d0);
    let loss_db = model.pl0_db + 10.0 * alpha * (d / model.d0).log10();
    PathGain {
        gain: 10f64.powf(-loss_db / 10.0),
        clamped,
    }
}

/// Radio parameters of one cell, SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub bandwidth_hz: f64,
    pub tx_power_w: f64,
    pub noise_power_w: f64,
    /// Known inter-cell interference power, added to the noise.
    pub ici_power_w: f64,
    pub antennas: usize,
    pub irs_elements: usize,
    pub devices: usize,
    pub weights: Vec<f64>,
}

impl SystemConfig {
    /// Default cell (1 MHz, 1 mW, 3.98e-12 mW, M = 5) with equal weights 1/K.
    pub fn standard(devices: usize, irs_elements: usize) -> Self {
        Self {
            bandwidth_hz: 1e6,
            tx_power_w: 1e-3,
            noise_power_w: 3.98e-15,
            ici_power_w: 0.0,
            antennas: 5,
            irs_elements,
            devices,
            weights: vec![1.0 / devices as f64; devices],
        }
    }

    /// `σ² + ICI`.
    #[inline]
    pub fn effective_noise(&self) -> f64 {
        self.noise_power_w + self.ici_power_w
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("system.bandwidth", self.bandwidth_hz),
            ("system.tx_power", self.tx_power_w),
            ("system.noise_power", self.noise_power_w),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(name, "must be positive and finite"));
            }
        }
        if !(self.ici_power_w >= 0.0) || !self.ici_power_w.is_finite() {
            return Err(Error::config("system.ici_power", "must be finite and >= 0"));
        }
        if self.antennas == 0 {
            return Err(Error::config("system.antennas", "must be >= 1"));
        }
        if self.devices == 0 {
            return Err(Error::config("system.devices", "must be >= 1"));
        }
        if self.weights.len() != self.devices {
            return Err(Error::config(
                "system.weights",
                format!("{} weights for {} devices", self.weights.len(), self.devices),
            ));
        }
        if self.weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::config("system.weights", "all weights must be positive"));
        }
        Ok(())
    }
}

/// Direct (M×K), device→IRS (N×K) and IRS→AP (M×N) channel blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    pub direct: ComplexMatrix,
    pub device_irs: ComplexMatrix,
    pub irs_ap: ComplexMatrix,
}

impl ChannelSet {
    pub fn new(direct: ComplexMatrix, device_irs: ComplexMatrix, irs_ap: ComplexMatrix) -> Result<Self> {
        let set = Self {
            direct,
            device_irs,
            irs_ap,
        };
        set.check()?;
        Ok(set)
    }

    fn check(&self) -> Result<()> {
        let (m, k, n) = (self.antennas(), self.devices(), self.elements());
        if self.device_irs.cols() != k || self.irs_ap.rows() != m || self.irs_ap.cols() != n {
            return Err(Error::Dimension(format!(
                "inconsistent channel blocks: direct {}x{}, device_irs {}x{}, irs_ap {}x{}",
                m,
                k,
                self.device_irs.rows(),
                self.device_irs.cols(),
                self.irs_ap.rows(),
                self.irs_ap.cols()
            )));
        }
        if !(self.direct.is_finite() && self.device_irs.is_finite() && self.irs_ap.is_finite()) {
            return Err(Error::Domain("channel entries must be finite".into()));
        }
        Ok(())
    }

    pub fn check_against(&self, config: &SystemConfig) -> Result<()> {
        if self.antennas() != config.antennas
            || self.devices() != config.devices
            || self.elements() != config.irs_elements
        {
            return Err(Error::Dimension(format!(
                "channels are M={} N={} K={}, config says M={} N={} K={}",
                self.antennas(),
                self.elements(),
                self.devices(),
                config.antennas,
                config.irs_elements,
                config.devices
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn antennas(&self) -> usize {
        self.direct.rows()
    }

    #[inline]
    pub fn devices(&self) -> usize {
        self.direct.cols()
    }

    #[inline]
    pub fn elements(&self) -> usize {
        self.device_irs.rows()
    }

    /// Same channels with the IRS→AP block zeroed, i.e. no reflected path.
    pub fn without_reflection(&self) -> Self {
        Self {
            direct: self.direct.clone(),
            device_irs: self.device_irs.clone(),
            irs_ap: ComplexMatrix::zeros(self.irs_ap.rows(), self.irs_ap.cols()),
        }
    }

    /// Restricts the channel set to a subset of devices.
    pub fn select_devices(&self, idx: &[usize]) -> Self {
        let pick = |m: &ComplexMatrix| ComplexMatrix::from_fn(m.rows(), idx.len(), |i, j| m[(i, idx[j])]);
        Self {
            direct: pick(&self.direct),
            device_irs: pick(&self.device_irs),
            irs_ap: self.irs_ap.clone(),
        }
    }
}

/// IRS phase shifts, every angle in `[0, 2π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseVector(Vec<f64>);

impl PhaseVector {
    pub fn new(angles: Vec<f64>) -> Self {
        Self(angles.into_iter().map(wrap_angle).collect())
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn random<R: rand::Rng>(n: usize, rng: &mut R) -> Self {
        Self((0..n).map(|_| wrap_angle(TAU * rng.gen::<f64>())).collect())
    }

    /// Angles of unit-modulus (or any non-zero) phasors.
    pub fn from_phasors(phi: &[C64]) -> Self {
        Self(phi.iter().map(|&z| principal_arg(z)).collect())
    }

    pub fn angles(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `e^{jθ_n}`.
    pub fn phasors(&self) -> Vec<C64> {
        self.0.iter().map(|&t| C64::from_polar(1.0, t)).collect()
    }
}

/// Effective channels `h_k = h_{d,k} + G·diag(e^{jθ})·h_{r,k}` as an M×K matrix.
pub fn composite_channel(ch: &ChannelSet, theta: &PhaseVector) -> Result<ComplexMatrix> {
    if theta.len() != ch.elements() {
        return Err(Error::Dimension(format!(
            "{} phases for {} IRS elements",
            theta.len(),
            ch.elements()
        )));
    }
    let phi = theta.phasors();
    Ok(composite_from_phasors(ch, &phi))
}

pub(crate) fn composite_from_phasors(ch: &ChannelSet, phi: &[C64]) -> ComplexMatrix {
    let (m, k, n) = (ch.antennas(), ch.devices(), ch.elements());
    let mut h = ch.direct.clone();
    if n == 0 {
        return h;
    }
    let mut reflected = vec![C64::new(0.0, 0.0); n];
    for dev in 0..k {
        for (e, r) in reflected.iter_mut().enumerate() {
            *r = phi[e] * ch.device_irs[(e, dev)];
        }
        for ant in 0..m {
            h[(ant, dev)] += crate::numerics::dotu(ch.irs_ap.row(ant), &reflected);
        }
    }
    h
}

/// Per-link large-scale power gains.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGains {
    /// Device→AP, one per device.
    pub direct: Vec<f64>,
    /// Device→IRS, one per device.
    pub device_irs: Vec<f64>,
    /// IRS→AP.
    pub irs_ap: f64,
}

pub fn link_gains(positions: &[Position], geometry: &Geometry, model: &PathLossModel) -> LinkGains {
    let direct = positions
        .iter()
        .map(|&p| path_loss_gain(dist(p, geometry.ap_position), model.alpha_ua, model).gain)
        .collect();
    let device_irs = positions
        .iter()
        .map(|&p| path_loss_gain(dist(p, geometry.irs_position), model.alpha_ui, model).gain)
        .collect();
    let irs_ap = path_loss_gain(dist(geometry.irs_position, geometry.ap_position), model.alpha_ia, model).gain;
    LinkGains {
        direct,
        device_irs,
        irs_ap,
    }
}

/// Draws Rayleigh channels: every entry is `√gain · z`, `z ~ CN(0, 1)`.
pub fn draw_channels(
    positions: &[Position],
    config: &SystemConfig,
    model: &PathLossModel,
    geometry: &Geometry,
    seed: u64,
) -> Result<ChannelSet> {
    if positions.len() != config.devices {
        return Err(Error::Dimension(format!(
            "{} positions for {} devices",
            positions.len(),
            config.devices
        )));
    }
    draw_channels_with_gains(&link_gains(positions, geometry, model), config, seed)
}

/// [`draw_channels`] with explicit large-scale gains.
pub fn draw_channels_with_gains(gains: &LinkGains, config: &SystemConfig, seed: u64) -> Result<ChannelSet> {
    let (m, n, k) = (config.antennas, config.irs_elements, config.devices);
    if gains.direct.len() != k || gains.device_irs.len() != k {
        return Err(Error::Dimension("one direct and one device-IRS gain per device".into()));
    }
    let block = |rows: usize, cols: usize, tag: Stream, gain: &dyn Fn(usize, usize) -> f64| {
        let mut rng = rng::stream(seed, tag);
        let mut mat = ComplexMatrix::zeros(rows, cols);
        // Column-major draw order: one device (or element) at a time.
        for j in 0..cols {
            for i in 0..rows {
                mat[(i, j)] = rng::complex_normal(&mut rng) * gain(i, j).sqrt();
            }
        }
        mat
    };
    let direct = block(m, k, Stream::Direct, &|_, j| gains.direct[j]);
    let device_irs = block(n, k, Stream::DeviceIrs, &|_, j| gains.device_irs[j]);
    let irs_ap = block(m, n, Stream::IrsAp, &|_, _| gains.irs_ap);
    ChannelSet::new(direct, device_irs, irs_ap)
}

/// One device's computing task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task {
    /// Total bits `L`.
    pub bits: u64,
    /// CPU cycles per bit `c`.
    pub cycles_per_bit: f64,
    /// Local CPU speed `f_l`, cycles/s.
    pub local_cps: f64,
}

impl Task {
    #[inline]
    pub fn load(&self) -> f64 {
        self.bits as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSet {
    pub tasks: Vec<Task>,
    /// Shared edge CPU capability `f_e_total`, cycles/s.
    pub edge_total_cps: f64,
}

impl TaskSet {
    pub fn validate(&self) -> Result<()> {
        if !(self.edge_total_cps > 0.0) || !self.edge_total_cps.is_finite() {
            return Err(Error::config("tasks.edge_total_cps", "must be positive and finite"));
        }
        for (k, t) in self.tasks.iter().enumerate() {
            if !(t.cycles_per_bit > 0.0) || !(t.local_cps > 0.0) {
                return Err(Error::config(
                    format!("tasks[{k}]"),
                    "cycles per bit and local CPU speed must be positive",
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

/// Uniform ranges the task parameters are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskRanges {
    /// Task size in kilobits (1 Kb = 1000 bits).
    pub bits_kb: [f64; 2],
    pub cycles_per_bit: [f64; 2],
    pub local_cps: [f64; 2],
}

impl Default for TaskRanges {
    fn default() -> Self {
        Self {
            bits_kb: [250.0, 350.0],
            cycles_per_bit: [700.0, 800.0],
            local_cps: [4e8, 6e8],
        }
    }
}

impl TaskRanges {
    pub fn fixed(bits_kb: f64, cycles_per_bit: f64, local_cps: f64) -> Self {
        Self {
            bits_kb: [bits_kb; 2],
            cycles_per_bit: [cycles_per_bit; 2],
            local_cps: [local_cps; 2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi], min) in [
            ("tasks.bits_kb", self.bits_kb, 0.0),
            ("tasks.cycles_per_bit", self.cycles_per_bit, f64::MIN_POSITIVE),
            ("tasks.local_cps", self.local_cps, f64::MIN_POSITIVE),
        ] {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::config(name, format!("range [{lo}, {hi}] needs lo <= hi")));
            }
            if lo < min {
                return Err(Error::config(name, "range must be positive"));
            }
        }
        Ok(())
    }
}

pub fn draw_tasks(k: usize, ranges: &TaskRanges, edge_total_cps: f64, seed: u64) -> TaskSet {
    let mut rng = rng::stream(seed, Stream::Tasks);
    let tasks = (0..k)
        .map(|_| {
            let kb = rng::uniform(&mut rng, ranges.bits_kb[0], ranges.bits_kb[1]);
            let c = rng::uniform(&mut rng, ranges.cycles_per_bit[0], ranges.cycles_per_bit[1]);
            let f = rng::uniform(&mut rng, ranges.local_cps[0], ranges.local_cps[1]);
            Task {
                bits: (kb * 1000.0).round() as u64,
                cycles_per_bit: c,
                local_cps: f,
            }
        })
        .collect();
    TaskSet {
        tasks,
        edge_total_cps,
    }
}

/// Everything needed to generate one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub geometry: Geometry,
    pub path_loss: PathLossModel,
    pub system: SystemConfig,
    pub task_ranges: TaskRanges,
    pub edge_total_cps: f64,
}

/// One generated realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: SystemConfig,
    pub positions: Vec<Position>,
    pub channels: ChannelSet,
    pub tasks: TaskSet,
}

impl Scenario {
    pub fn generate(spec: &ScenarioSpec, seed: u64) -> Result<Self> {
        spec.geometry.validate()?;
        spec.path_loss.validate()?;
        spec.system.validate()?;
        spec.task_ranges.validate()?;
        let k = spec.system.devices;
        let positions = place_devices(&spec.geometry, k, seed);
        let channels = draw_channels(&positions, &spec.system, &spec.path_loss, &spec.geometry, seed)?;
        let tasks = draw_tasks(k, &spec.task_ranges, spec.edge_total_cps, seed);
        tasks.validate()?;
        Ok(Self {
            config: spec.system.clone(),
            positions,
            channels,
            tasks,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::testutil::random_matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn explicit_offsets_are_exact() {
        let g = Geometry::default();
        let p = place_devices(&g, 1, 0);
        assert_eq!(p, vec![[280.0, 10.0]]);
        assert!((dist(p[0], g.irs_position) - 500f64.sqrt()).abs() < 1e-12);
        assert!((dist(p[0], g.ap_position) - 78_500f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn offsets_follow_a_rotated_axis() {
        let g = Geometry {
            irs_position: [0.0, 300.0],
            ..Geometry::default()
        };
        let p = g.offset_position([280.0, 10.0]);
        assert!((p[0] + 10.0).abs() < 1e-12 && (p[1] - 280.0).abs() < 1e-12);
    }

    #[test]
    fn zero_radius_disc_collapses_to_centre() {
        let g = Geometry {
            placement: Placement::Disc {
                center: [280.0, 10.0],
                radius: 0.0,
            },
            ..Geometry::default()
        };
        for p in place_devices(&g, 5, 99) {
            assert!((p[0] - 280.0).abs() < 1e-12 && (p[1] - 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn disc_mean_radius_is_two_thirds() {
        let g = Geometry {
            placement: Placement::Disc {
                center: [0.0, 0.0],
                radius: 10.0,
            },
            ..Geometry::default()
        };
        let pts = place_devices(&g, 100_000, 3);
        let mean = pts.iter().map(|p| p[0].hypot(p[1])).sum::<f64>() / pts.len() as f64;
        assert!((mean - 20.0 / 3.0).abs() <= 0.01 * 20.0 / 3.0, "mean radius {mean}");
    }

    #[test]
    fn path_loss_reference_values() {
        let m = PathLossModel::default();
        assert!((path_loss_gain(1.0, 3.5, &m).gain - 1e-3).abs() < 1e-18);
        assert!((path_loss_gain(10.0, 2.0, &m).gain - 1e-5).abs() < 1e-18);
        // 30 + 35·log10(300) dB by hand.
        let expected = 10f64.powf(-(30.0 + 35.0 * 300f64.log10()) / 10.0);
        let got = path_loss_gain(300.0, 3.5, &m).gain;
        assert!((got - expected).abs() <= 1e-12 * expected);
        assert!(got > 0.0 && got <= 1.0);
    }

    #[test]
    fn path_loss_clamps_short_links() {
        let m = PathLossModel::default();
        let g = path_loss_gain(0.2, 2.2, &m);
        assert!(g.clamped);
        assert_eq!(g.gain, path_loss_gain(1.0, 2.2, &m).gain);
        assert!(!path_loss_gain(1.0, 2.2, &m).clamped);
    }

    fn unit_gains(k: usize) -> LinkGains {
        LinkGains {
            direct: vec![1.0; k],
            device_irs: vec![1.0; k],
            irs_ap: 1.0,
        }
    }

    #[test]
    fn channels_are_deterministic_per_seed() {
        let cfg = SystemConfig::standard(2, 8);
        let a = draw_channels_with_gains(&unit_gains(2), &cfg, 17).unwrap();
        let b = draw_channels_with_gains(&unit_gains(2), &cfg, 17).unwrap();
        let c = draw_channels_with_gains(&unit_gains(2), &cfg, 18).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn unit_gain_entries_have_unit_variance() {
        let cfg = SystemConfig::standard(1, 1);
        let n = 10_000;
        let samples: Vec<C64> = (0..n)
            .map(|s| draw_channels_with_gains(&unit_gains(1), &cfg, s).unwrap().direct[(0, 0)])
            .collect();
        let mean: C64 = samples.iter().sum::<C64>() / n as f64;
        let var = samples.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / (n - 1) as f64;
        assert!((0.97..=1.03).contains(&var), "variance {var}");
    }

    #[test]
    fn zero_gain_yields_zero_block() {
        let cfg = SystemConfig::standard(2, 4);
        let gains = LinkGains {
            irs_ap: 0.0,
            ..unit_gains(2)
        };
        let ch = draw_channels_with_gains(&gains, &cfg, 1).unwrap();
        assert_eq!(ch.irs_ap, ComplexMatrix::zeros(5, 4));
    }

    #[test]
    fn column_power_scales_with_gain() {
        let cfg = SystemConfig::standard(2, 1);
        let gains = LinkGains {
            direct: vec![1.0, 4.0],
            ..unit_gains(2)
        };
        let (mut p0, mut p1) = (0.0, 0.0);
        for s in 0..1000 {
            let ch = draw_channels_with_gains(&gains, &cfg, s).unwrap();
            p0 += crate::numerics::norm_sqr(&ch.direct.column(0));
            p1 += crate::numerics::norm_sqr(&ch.direct.column(1));
        }
        let ratio = p1 / p0;
        assert!((ratio - 4.0).abs() <= 0.05 * 4.0, "ratio {ratio}");
    }

    #[test]
    fn tasks_respect_ranges_and_means() {
        let r = TaskRanges::default();
        let ts = draw_tasks(10_000, &r, 5e10, 4);
        for t in &ts.tasks {
            assert!((250_000..=350_000).contains(&t.bits));
            assert!((700.0..=800.0).contains(&t.cycles_per_bit));
            assert!((4e8..=6e8).contains(&t.local_cps));
        }
        let mean_c = ts.tasks.iter().map(|t| t.cycles_per_bit).sum::<f64>() / 10_000.0;
        assert!((mean_c - 750.0).abs() <= 7.5);
        let fixed = draw_tasks(3, &TaskRanges::fixed(300.0, 750.0, 5e8), 5e10, 4);
        assert!(fixed.tasks.iter().all(|t| *t == fixed.tasks[0]));
        assert_eq!(fixed.tasks[0].bits, 300_000);
        assert!(draw_tasks(2, &r, 5e10, 9) == draw_tasks(2, &r, 5e10, 9));
    }

    #[test]
    fn invalid_ranges_are_rejected() {
        let mut r = TaskRanges::default();
        r.cycles_per_bit = [800.0, 700.0];
        assert!(matches!(r.validate(), Err(Error::Config { .. })));
    }

    fn toy_channels(rng: &mut ChaCha8Rng, m: usize, n: usize, k: usize) -> ChannelSet {
        ChannelSet::new(random_matrix(rng, m, k), random_matrix(rng, n, k), random_matrix(rng, m, n)).unwrap()
    }

    #[test]
    fn composite_without_reflection_is_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ch = toy_channels(&mut rng, 3, 4, 2);
        ch.device_irs = ComplexMatrix::zeros(4, 2);
        let h = composite_channel(&ch, &PhaseVector::random(4, &mut rng)).unwrap();
        assert_eq!(h, ch.direct);
    }

    #[test]
    fn composite_scalar_sum() {
        let one = ComplexMatrix::from_row_major(1, 1, vec![C64::new(1.0, 0.0)]).unwrap();
        let ch = ChannelSet::new(one.clone(), one.clone(), one).unwrap();
        let h = composite_channel(&ch, &PhaseVector::zeros(1)).unwrap();
        assert_eq!(h[(0, 0)], C64::new(2.0, 0.0));
    }

    #[test]
    fn composite_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ch = toy_channels(&mut rng, 3, 5, 2);
        let theta = PhaseVector::random(5, &mut rng);
        let h = composite_channel(&ch, &theta).unwrap();
        for k in 0..2 {
            for m in 0..3 {
                let mut z = ch.direct[(m, k)];
                for n in 0..5 {
                    z += ch.irs_ap[(m, n)] * C64::from_polar(1.0, theta.angles()[n]) * ch.device_irs[(n, k)];
                }
                assert!((z - h[(m, k)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn composite_is_linear_in_each_phasor() {
        // h(φ) with φ_n replaced by φ_n + δ equals h(φ) + δ·G[:,n]·h_r[n,k].
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ch = toy_channels(&mut rng, 2, 3, 2);
        let phi = PhaseVector::random(3, &mut rng).phasors();
        let base = composite_from_phasors(&ch, &phi);
        let delta = C64::new(1e-3, -2e-3);
        for n in 0..3 {
            let mut bumped = phi.clone();
            bumped[n] += delta;
            let h = composite_from_phasors(&ch, &bumped);
            for k in 0..2 {
                for m in 0..2 {
                    let predicted = base[(m, k)] + delta * ch.irs_ap[(m, n)] * ch.device_irs[(n, k)];
                    assert!((h[(m, k)] - predicted).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn empty_irs_is_supported() {
        let cfg = SystemConfig::standard(2, 0);
        let ch = draw_channels_with_gains(&unit_gains(2), &cfg, 3).unwrap();
        assert_eq!(ch.elements(), 0);
        assert_eq!(composite_channel(&ch, &PhaseVector::zeros(0)).unwrap(), ch.direct);
    }

    #[test]
    fn scenario_generation_is_deterministic() {
        let spec = ScenarioSpec {
            geometry: Geometry::default(),
            path_loss: PathLossModel::default(),
            system: SystemConfig::standard(1, 10),
            task_ranges: TaskRanges::default(),
            edge_total_cps: 5e10,
        };
        assert_eq!(Scenario::generate(&spec, 5).unwrap(), Scenario::generate(&spec, 5).unwrap());
    }
}
