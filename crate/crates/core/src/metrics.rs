//! Scoring a device configuration as a sampler: KL divergence of its
//! histogram from the target bins, energy per coinflip, and the weighted
//! Config_Score.
//!
//! Devices plug in through [`CoinModel`]. [`MtjDevice`] runs the macrospin
//! model; [`SurrogateDevice`] is an analytic stand-in used for fast
//! optimizer runs and tests.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{
    build_scurve, default_sweep, invert_scurve, validate_device, DeviceKind, Protocol, SCurve, Sweep, ValidationConfig, ValidityReport,
};
use crate::llg::{DeviceParams, SimConfig, E_CHARGE, GAMMA0, HBAR, MU0};
use crate::rng::{self, SimRng};
use crate::target::{bin_probs, Cdf};
use crate::tree::{sample_many_blocks, CoinError, CoinSource, DeviceCoin, SampleRun};

/// Objectives of a valid configuration; both minimized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectivePair {
    /// Mean energy per coinflip, J.
    pub energy: f64,
    /// KL divergence of the sampled histogram from the target, nats.
    pub kl: f64,
}

/// Objectives assigned to configurations that cannot act as a coin.
pub const INVALID_OBJECTIVE: ObjectivePair = ObjectivePair { energy: 1e6, kl: 1e6 };

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("histogram has {counts} bins but the target has {target}")]
    BinMismatch { counts: usize, target: usize },
}

/// Σ P·ln(P/Q) with P the normalized counts; empty bins contribute nothing.
pub fn kl_divergence(counts: &[u64], q: &[f64]) -> Result<f64, MetricsError> {
    if counts.len() != q.len() {
        return Err(MetricsError::BinMismatch { counts: counts.len(), target: q.len() });
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(MetricsError::EmptyHistogram);
    }
    let n = total as f64;
    let kl = counts
        .iter()
        .zip(q)
        .filter(|(&c, _)| c > 0)
        .map(|(&c, &qi)| {
            let p = c as f64 / n;
            p * (p / qi).ln()
        })
        .sum::<f64>();
    // rounding can leave a tiny negative residue when P = Q
    Ok(kl.max(0.0))
}

/// w1·(energy in pJ) + w2·KL.
pub fn config_score(avg_energy: f64, kl: f64, w1: f64, w2: f64) -> f64 {
    w1 * avg_energy * 1e12 + w2 * kl
}

/// Sample budget and weights used to score one configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub n_samples: usize,
    /// Sampler depth; the histogram has 2^k bins.
    pub k: u32,
    pub w1: f64,
    pub w2: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { n_samples: 2_500, k: 8, w1: 0.2, w2: 1.0 }
    }
}

/// A device that can be characterized and then used as a tunable coin.
pub trait CoinModel: Sync {
    type Coin: CoinSource;
    type Calibration: Sync;

    /// Check that the device works as a coin and build whatever it needs to
    /// turn a requested weight into a drive. `Err` carries the reason.
    fn calibrate(&self, seed: u64) -> Result<Self::Calibration, String>;

    /// Independent coin number `stream` of a calibrated device.
    fn coin(&self, cal: &Self::Calibration, seed: u64, stream: u64) -> Self::Coin;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub objectives: ObjectivePair,
    pub valid: bool,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip)]
    pub run: Option<SampleRun>,
}

impl Evaluation {
    pub fn invalid(reason: String, cfg: &EvalConfig) -> Self {
        Self {
            objectives: INVALID_OBJECTIVE,
            valid: false,
            score: config_score(INVALID_OBJECTIVE.energy, INVALID_OBJECTIVE.kl, cfg.w1, cfg.w2),
            reason: Some(reason),
            run: None,
        }
    }
}

/// Characterize the device, draw `n_samples` k-bit samples through it and
/// score the histogram. Never fails: anything that goes wrong makes the
/// configuration invalid.
pub fn evaluate_config<M, C>(model: &M, target: &C, cfg: &EvalConfig, seed: u64) -> Evaluation
where
    M: CoinModel,
    C: Cdf + Sync + ?Sized,
{
    let cal = match model.calibrate(rng::child_seed(seed, 0)) {
        Ok(c) => c,
        Err(reason) => return Evaluation::invalid(reason, cfg),
    };
    let coin_seed = rng::child_seed(seed, 1);
    let run = match sample_many_blocks(target, cfg.k, cfg.n_samples, |b| model.coin(&cal, coin_seed, b)) {
        Ok(r) => r,
        Err(e) => return Evaluation::invalid(e.to_string(), cfg),
    };
    let kl = match kl_divergence(&run.counts, &bin_probs(target, cfg.k)) {
        Ok(kl) => kl,
        Err(e) => return Evaluation::invalid(e.to_string(), cfg),
    };
    let energy = run.energy_per_flip();
    Evaluation {
        objectives: ObjectivePair { energy, kl },
        valid: true,
        score: config_score(energy, kl, cfg.w1, cfg.w2),
        reason: None,
        run: Some(run),
    }
}

/// Full macrospin device.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MtjDevice {
    pub params: DeviceParams,
    pub protocol: Protocol,
    pub sim: SimConfig,
    pub validation: ValidationConfig,
    /// Points and flips per point of the calibration curve measured across
    /// the transition window found during validation.
    pub calibration_points: usize,
    pub calibration_flips: usize,
}

impl MtjDevice {
    pub fn new(params: DeviceParams, protocol: Protocol) -> Self {
        let kind = protocol.kind();
        Self {
            params,
            protocol,
            sim: SimConfig::default(),
            validation: ValidationConfig::for_kind(kind),
            calibration_points: 21,
            calibration_flips: 200,
        }
    }
}

/// Flip budget spent characterizing an [`MtjDevice`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsBudget {
    pub validation_points: usize,
    pub validation_flips: usize,
    pub calibration_points: usize,
    pub calibration_flips: usize,
}

impl Default for PhysicsBudget {
    fn default() -> Self {
        Self { validation_points: 11, validation_flips: 200, calibration_points: 21, calibration_flips: 200 }
    }
}

impl MtjDevice {
    pub fn with_budget(mut self, b: &PhysicsBudget) -> Self {
        self.validation.sweep = default_sweep(self.protocol.kind(), b.validation_points);
        self.validation.n_per_point = b.validation_flips;
        self.calibration_points = b.calibration_points;
        self.calibration_flips = b.calibration_flips;
        self
    }
}

#[derive(Clone, Debug)]
pub struct MtjCalibration {
    pub protocol: Protocol,
    pub report: ValidityReport,
    pub curve: SCurve,
}

/// Sweep window around the transition of a validated curve: from the last
/// point at or below 5% to the first point at or above 95%.
pub fn transition_window(curve: &SCurve) -> (f64, f64) {
    let y = curve.smoothed();
    let j = curve.currents();
    let lo = y.iter().rposition(|&v| v <= 0.05).unwrap_or(0);
    let hi = y.iter().position(|&v| v >= 0.95).unwrap_or(y.len() - 1);
    if lo < hi {
        (j[lo], j[hi])
    } else {
        (j[0], j[j.len() - 1])
    }
}

impl MtjDevice {
    pub fn characterize(&self, seed: u64) -> Result<MtjCalibration, String> {
        let report = validate_device(&self.params, &self.protocol, &self.validation, &self.sim, seed);
        if !report.valid {
            return Err(format!("device failed validation: {:?}", report.reason));
        }
        let coarse = report.curve.clone().expect("valid report carries its curve");
        let protocol = match self.protocol {
            Protocol::Stt(s) => {
                let j50 = invert_scurve(&coarse, 0.5).map_err(|e| e.to_string())?;
                Protocol::Stt(s.with_reset_from_switching(j50))
            }
            sot => sot,
        };
        let (j_lo, j_hi) = transition_window(&coarse);
        let sweep = Sweep::new(j_lo, j_hi, self.calibration_points);
        let curve = build_scurve(&self.params, &protocol, &sweep, self.calibration_flips, &self.sim, rng::child_seed(seed, 1))
            .map_err(|e| e.to_string())?;
        Ok(MtjCalibration { protocol, report, curve })
    }
}

impl CoinModel for MtjDevice {
    type Coin = DeviceCoin;
    type Calibration = MtjCalibration;

    fn calibrate(&self, seed: u64) -> Result<MtjCalibration, String> {
        self.characterize(seed)
    }

    fn coin(&self, cal: &MtjCalibration, seed: u64, stream: u64) -> DeviceCoin {
        DeviceCoin::new(self.params.clone(), cal.protocol, self.sim, &cal.curve, seed, stream)
    }
}

/// Analytic stand-in for an MTJ coin.
///
/// The calibrated weight is reached only partially: the realized
/// probability is `0.5 + (p − 0.5)·f` with `f = 1 − exp(−(t_pulse +
/// t_relax)/τ)` and τ the damping time `(1 + α²)/(α·γ0·H_k)`. Energy per
/// flip is the Joule heating of the drive needed for the requested weight,
/// using a logistic S-curve of width `J_c0/Δ`. Valid when K_eff > 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateDevice {
    pub params: DeviceParams,
    pub protocol: Protocol,
    /// Perfect coin with zero energy, regardless of the parameters.
    pub ideal: bool,
}

impl SurrogateDevice {
    pub fn new(params: DeviceParams, protocol: Protocol) -> Self {
        Self { params, protocol, ideal: false }
    }

    pub fn ideal() -> Self {
        Self { params: DeviceParams::default(), protocol: Protocol::default_for(DeviceKind::Sot), ideal: true }
    }

    /// Anisotropy field of the effective uniaxial energy, A/m.
    fn h_k(&self) -> f64 {
        2.0 * self.params.k_eff() / (MU0 * self.params.m_s)
    }

    /// Zero-temperature STT critical current density, A/m².
    pub fn critical_current(&self) -> f64 {
        let p = &self.params;
        2.0 * E_CHARGE * p.alpha * MU0 * p.m_s * self.h_k() * p.t_f / (HBAR * p.p_spin)
    }

    pub fn damping_time(&self) -> f64 {
        let a = self.params.alpha;
        (1.0 + a * a) / (a * GAMMA0 * self.h_k())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SurrogateCalibration {
    fidelity: f64,
    center: f64,
    width: f64,
}

pub struct SurrogateCoin {
    rng: SimRng,
    params: DeviceParams,
    protocol: Protocol,
    cal: SurrogateCalibration,
    ideal: bool,
    energy: f64,
    flips: u64,
}

impl SurrogateCoin {
    fn flip_energy(&self, p_one: f64) -> f64 {
        let p = &self.params;
        let logit = (p_one / (1.0 - p_one)).ln();
        let j = self.cal.center + self.cal.width * logit;
        let i_stack = j * p.area();
        match self.protocol {
            Protocol::Sot(s) => {
                let i_hm = s.j_sot * p.hm_width * p.hm_thickness;
                (i_hm * i_hm * p.r_hm() + i_stack * i_stack * p.mtj_resistance(0.0)) * s.t_pulse
            }
            Protocol::Stt(s) => {
                let i_reset = 3.0 * self.cal.center * p.area();
                i_stack * i_stack * p.mtj_resistance(0.0) * s.t_pulse + i_reset * i_reset * p.r_p * s.t_reset
            }
        }
    }
}

impl CoinSource for SurrogateCoin {
    fn flip(&mut self, p_one: f64) -> Result<bool, CoinError> {
        self.flips += 1;
        if self.ideal {
            return Ok(self.rng.random::<f64>() < p_one);
        }
        if p_one <= 0.0 || p_one >= 1.0 {
            return Ok(p_one >= 1.0);
        }
        self.energy += self.flip_energy(p_one);
        let realized = 0.5 + (p_one - 0.5) * self.cal.fidelity;
        Ok(self.rng.random::<f64>() < realized)
    }
    fn energy(&self) -> f64 {
        self.energy
    }
    fn flips(&self) -> u64 {
        self.flips
    }
}

impl CoinModel for SurrogateDevice {
    type Coin = SurrogateCoin;
    type Calibration = SurrogateCalibration;

    fn calibrate(&self, _seed: u64) -> Result<SurrogateCalibration, String> {
        if self.ideal {
            return Ok(SurrogateCalibration { fidelity: 1.0, center: 0.0, width: 0.0 });
        }
        self.params.validate().map_err(|e| e.to_string())?;
        self.protocol.validate(&SimConfig::default()).map_err(|e| e.to_string())?;
        if !(self.params.k_eff() > 0.0) {
            return Err(format!("no perpendicular anisotropy (K_eff = {:.3e} J/m^3)", self.params.k_eff()));
        }
        let (t_pulse, t_relax) = match self.protocol {
            Protocol::Sot(s) => (s.t_pulse, s.t_relax),
            Protocol::Stt(s) => (s.t_pulse, s.t_relax),
        };
        let jc0 = self.critical_current();
        let delta = self.params.thermal_stability();
        let center = match self.protocol.kind() {
            DeviceKind::Sot => 0.0,
            DeviceKind::Stt => jc0,
        };
        Ok(SurrogateCalibration { fidelity: 1.0 - (-(t_pulse + t_relax) / self.damping_time()).exp(), center, width: jc0 / delta.max(1.0) })
    }

    fn coin(&self, cal: &SurrogateCalibration, seed: u64, stream: u64) -> SurrogateCoin {
        SurrogateCoin {
            rng: rng::stream(seed, stream),
            params: self.params.clone(),
            protocol: self.protocol,
            cal: *cal,
            ideal: self.ideal,
            energy: 0.0,
            flips: 0,
        }
    }
}
