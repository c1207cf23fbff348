//! SOT and STT coinflip protocols built on the macrospin integrator.
//!
//! A flip is a short sequence of drive segments ending in a read-out of the
//! free-layer z-sign. The SOT protocol rotates the layer in-plane with a
//! heavy-metal current while a stack current biases it, then lets it relax.
//! The STT protocol resets the layer to −z, applies a switching pulse and
//! relaxes. Energy is the Joule heating of every segment that carries
//! current.

mod analysis;
mod energy;
mod export;
mod scurve;
mod validate;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llg::{self, DeviceParams, DriveSegment, MagState, SimConfig, SimError, Trajectory, TrajectorySample};

pub use analysis::{keff, scurve_variation, temperature_sensitivity, SensitivityConfig};
pub use energy::{channel_current, energy_of_trace, stack_current, EnergyRecord};
pub use export::{simulate_bitstream, write_trajectory_csv, BitstreamRun, TRAJECTORY_CSV_HEADER};
pub(crate) use scurve::invert_monotone;
pub use scurve::{build_scurve, invert_scurve, isotonic_fit, SCurve, SCurvePoint, Sweep};
pub use validate::{classify, default_sweep, validate_device, ValidationConfig, ValidityReason, ValidityReport};

/// The m_z a successful STT reset must reach.
pub const RESET_MZ_MAX: f64 = -0.9;

/// Stack current used for the STT reset before the device's own 50%
/// switching current is known, A/m².
pub const BOOTSTRAP_J_RESET: f64 = -1.5e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeviceError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("STT reset failed: m_z = {mz:.3} after the reset pulse (reset current too weak)")]
    ResetFailed { mz: f64 },
    #[error("probability {p:.4} is outside the attainable range [{low:.4}, {high:.4}]")]
    OutOfRange { p: f64, low: f64, high: f64 },
    #[error("an S-curve needs at least two points to be inverted, got {0}")]
    DegenerateCurve(usize),
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    Sot,
    Stt,
}

impl std::fmt::Display for DeviceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DeviceKind::Sot => "sot",
            DeviceKind::Stt => "stt",
        })
    }
}

impl std::str::FromStr for DeviceKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sot" => Ok(DeviceKind::Sot),
            "stt" => Ok(DeviceKind::Stt),
            other => Err(format!("unknown device kind '{other}' (expected sot or stt)")),
        }
    }
}

/// Pulse-then-relax SOT flip. `j_stt_bias` is the knob that weights the coin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSot {
    pub j_sot: f64,
    pub t_pulse: f64,
    pub t_relax: f64,
    pub j_stt_bias: f64,
}

impl Default for ProtocolSot {
    fn default() -> Self {
        Self { j_sot: -4e11, t_pulse: 10e-9, t_relax: 15e-9, j_stt_bias: 0.0 }
    }
}

/// Reset-pulse-relax STT flip. `j_stt` is the switching/bias knob.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolStt {
    pub j_stt: f64,
    pub t_pulse: f64,
    pub t_relax: f64,
    pub t_reset: f64,
    pub j_reset: f64,
}

impl Default for ProtocolStt {
    fn default() -> Self {
        Self { j_stt: 0.0, t_pulse: 1e-9, t_relax: 10e-9, t_reset: 10e-9, j_reset: BOOTSTRAP_J_RESET }
    }
}

impl ProtocolStt {
    /// Reset at three times the magnitude of the 50% switching current,
    /// toward −z.
    pub fn with_reset_from_switching(self, j50: f64) -> Self {
        Self { j_reset: -3.0 * j50.abs(), ..self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Protocol {
    Sot(ProtocolSot),
    Stt(ProtocolStt),
}

impl Protocol {
    pub fn kind(&self) -> DeviceKind {
        match self {
            Protocol::Sot(_) => DeviceKind::Sot,
            Protocol::Stt(_) => DeviceKind::Stt,
        }
    }

    pub fn default_for(kind: DeviceKind) -> Self {
        match kind {
            DeviceKind::Sot => Protocol::Sot(ProtocolSot::default()),
            DeviceKind::Stt => Protocol::Stt(ProtocolStt::default()),
        }
    }

    /// Current density of the probability knob.
    pub fn bias(&self) -> f64 {
        match self {
            Protocol::Sot(s) => s.j_stt_bias,
            Protocol::Stt(s) => s.j_stt,
        }
    }

    pub fn with_bias(&self, j: f64) -> Self {
        match *self {
            Protocol::Sot(s) => Protocol::Sot(ProtocolSot { j_stt_bias: j, ..s }),
            Protocol::Stt(s) => Protocol::Stt(ProtocolStt { j_stt: j, ..s }),
        }
    }

    /// State the free layer starts from at power-up.
    pub fn initial_state(&self) -> MagState {
        match self {
            Protocol::Sot(_) => MagState::up(),
            Protocol::Stt(_) => MagState::down(),
        }
    }

    /// Duration of one flip, s.
    pub fn flip_duration(&self) -> f64 {
        match self {
            Protocol::Sot(s) => s.t_pulse + s.t_relax,
            Protocol::Stt(s) => s.t_reset + s.t_pulse + s.t_relax,
        }
    }

    pub fn validate(&self, cfg: &SimConfig) -> Result<(), DeviceError> {
        let durations: &[(&str, f64)] = match self {
            Protocol::Sot(s) => &[("t_pulse", s.t_pulse), ("t_relax", s.t_relax)],
            Protocol::Stt(s) => &[("t_pulse", s.t_pulse), ("t_relax", s.t_relax), ("t_reset", s.t_reset)],
        };
        for (name, d) in durations {
            if !(d.is_finite() && *d >= cfg.dt) {
                return Err(DeviceError::InvalidProtocol(format!("{name} = {d:e} s must be at least one time step ({:e} s)", cfg.dt)));
            }
        }
        Ok(())
    }

    /// Segments of one flip, in order.
    pub fn segments(&self) -> Vec<DriveSegment> {
        match self {
            Protocol::Sot(s) => vec![DriveSegment::new(s.j_sot, s.j_stt_bias, s.t_pulse), DriveSegment::idle(s.t_relax)],
            Protocol::Stt(s) => vec![
                DriveSegment::new(0.0, s.j_reset, s.t_reset),
                DriveSegment::new(0.0, s.j_stt, s.t_pulse),
                DriveSegment::idle(s.t_relax),
            ],
        }
    }

    /// Run one flip from `state` (updated in place).
    pub fn flip<R: Rng + ?Sized>(
        &self,
        state: &mut MagState,
        p: &DeviceParams,
        cfg: &SimConfig,
        rng: &mut R,
    ) -> Result<FlipOutcome, DeviceError> {
        self.flip_recorded(state, p, cfg, rng, None)
    }

    /// As [`Protocol::flip`], appending the trajectory to `rec`.
    pub fn flip_recorded<R: Rng + ?Sized>(
        &self,
        state: &mut MagState,
        p: &DeviceParams,
        cfg: &SimConfig,
        rng: &mut R,
        rec: Option<&mut Recorder>,
    ) -> Result<FlipOutcome, DeviceError> {
        match self {
            Protocol::Sot(s) => sot_cycle(state, p, s, cfg, rng, rec),
            Protocol::Stt(s) => stt_cycle(state, p, s, cfg, rng, rec),
        }
    }
}

/// Result of one coinflip.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipOutcome {
    pub bit: bool,
    pub energy: EnergyRecord,
    /// Time average of |m_z| over the pulse segment. Values above 0.5 on an
    /// SOT device mean the pulse did not hold the layer in-plane.
    pub pulse_mean_abs_mz: f64,
}

struct SegmentResult {
    energy: EnergyRecord,
    mean_abs_mz: f64,
}

/// Collects a continuous trajectory across consecutive flips.
#[derive(Clone, Debug, Default)]
pub struct Recorder {
    pub trace: Trajectory,
    /// Absolute time at the start of the next segment, s.
    pub t: f64,
}

fn drive<R: Rng + ?Sized>(
    state: &mut MagState,
    p: &DeviceParams,
    seg: &DriveSegment,
    cfg: &SimConfig,
    rng: &mut R,
    mut rec: Option<&mut Recorder>,
) -> Result<SegmentResult, DeviceError> {
    let mut r_int = energy::ResistanceIntegral::default();
    let mut abs_mz_sum = 0.0;
    let mut samples = 0usize;
    let carries_stack_current = seg.j_stt != 0.0;
    let n = cfg.steps_for(seg.duration);
    let t0 = rec.as_ref().map_or(0.0, |r| r.t);
    *state = llg::run_segment_observed(state, p, seg, cfg, rng, t0, |t, m| {
        if carries_stack_current {
            r_int.push(p, t, m.z);
        }
        if let Some(r) = rec.as_deref_mut() {
            // the first sample duplicates the previous segment's last one
            if (samples > 0 || r.trace.is_empty()) && (samples.is_multiple_of(cfg.record_stride) || samples == n) {
                r.trace.push(TrajectorySample { t, m, j_sot: seg.j_sot, j_stt: seg.j_stt });
            }
        }
        abs_mz_sum += m.z.abs();
        samples += 1;
    })?;
    let elapsed = n as f64 * cfg.dt;
    if let Some(r) = rec {
        r.t = t0 + elapsed;
    }
    let r_value = if carries_stack_current { r_int.value } else { 0.0 };
    Ok(SegmentResult { energy: energy::segment_energy(p, seg, r_value, elapsed), mean_abs_mz: abs_mz_sum / samples as f64 })
}

/// SOT flip: pulse with the heavy-metal current and the stack bias on, then
/// relax with all currents off. The bit is the sign of m_z after relaxing.
pub fn flip_sot<R: Rng + ?Sized>(
    state: &mut MagState,
    p: &DeviceParams,
    proto: &ProtocolSot,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<FlipOutcome, DeviceError> {
    sot_cycle(state, p, proto, cfg, rng, None)
}

fn sot_cycle<R: Rng + ?Sized>(
    state: &mut MagState,
    p: &DeviceParams,
    proto: &ProtocolSot,
    cfg: &SimConfig,
    rng: &mut R,
    mut rec: Option<&mut Recorder>,
) -> Result<FlipOutcome, DeviceError> {
    let pulse_seg = DriveSegment::new(proto.j_sot, proto.j_stt_bias, proto.t_pulse);
    let pulse = drive(state, p, &pulse_seg, cfg, rng, rec.as_deref_mut())?;
    let relax = drive(state, p, &DriveSegment::idle(proto.t_relax), cfg, rng, rec)?;
    let mut energy = pulse.energy;
    energy.add(&relax.energy);
    Ok(FlipOutcome { bit: state.bit(), energy, pulse_mean_abs_mz: pulse.mean_abs_mz })
}

/// STT flip: reset toward −z, switching pulse, relax. Fails with
/// [`DeviceError::ResetFailed`] when the reset leaves m_z above −0.9.
pub fn flip_stt<R: Rng + ?Sized>(
    state: &mut MagState,
    p: &DeviceParams,
    proto: &ProtocolStt,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<FlipOutcome, DeviceError> {
    stt_cycle(state, p, proto, cfg, rng, None)
}

fn stt_cycle<R: Rng + ?Sized>(
    state: &mut MagState,
    p: &DeviceParams,
    proto: &ProtocolStt,
    cfg: &SimConfig,
    rng: &mut R,
    mut rec: Option<&mut Recorder>,
) -> Result<FlipOutcome, DeviceError> {
    let reset_seg = DriveSegment::new(0.0, proto.j_reset, proto.t_reset);
    let mut energy = drive(state, p, &reset_seg, cfg, rng, rec.as_deref_mut())?.energy;
    if state.mz() > RESET_MZ_MAX {
        return Err(DeviceError::ResetFailed { mz: state.mz() });
    }
    let pulse_seg = DriveSegment::new(0.0, proto.j_stt, proto.t_pulse);
    let pulse = drive(state, p, &pulse_seg, cfg, rng, rec.as_deref_mut())?;
    let relax = drive(state, p, &DriveSegment::idle(proto.t_relax), cfg, rng, rec)?;
    energy.add(&pulse.energy);
    energy.add(&relax.energy);
    Ok(FlipOutcome { bit: state.bit(), energy, pulse_mean_abs_mz: pulse.mean_abs_mz })
}

/// Aggregate of a chain of flips on one device.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FlipTally {
    pub flips: usize,
    pub ones: usize,
    pub energy: f64,
    pub pulse_abs_mz_sum: f64,
}

impl FlipTally {
    pub fn p_one(&self) -> f64 {
        if self.flips == 0 {
            0.0
        } else {
            self.ones as f64 / self.flips as f64
        }
    }
}

/// `n` consecutive flips on a fresh device drawing from stream `(seed, stream)`.
pub fn run_flips(p: &DeviceParams, proto: &Protocol, cfg: &SimConfig, seed: u64, stream: u64, n: usize) -> Result<FlipTally, DeviceError> {
    let mut rng = crate::rng::stream(seed, stream);
    let mut state = proto.initial_state();
    let mut tally = FlipTally::default();
    for _ in 0..n {
        let out = proto.flip(&mut state, p, cfg, &mut rng)?;
        tally.flips += 1;
        tally.ones += out.bit as usize;
        tally.energy += out.energy.e_total;
        tally.pulse_abs_mz_sum += out.pulse_mean_abs_mz;
    }
    Ok(tally)
}
