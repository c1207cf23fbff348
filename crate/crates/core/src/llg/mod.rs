//! Stochastic macrospin Landau–Lifshitz–Gilbert dynamics.
//!
//! The free layer is a single moment `m` (|m| = 1) evolving under
//!
//! ```text
//! dm/dt = −γ'·m×H − γ'·α·m×(m×H) + a_stt·(p̂ − (m·p̂)m) + a_sot·(σ̂ − (m·σ̂)m)
//! ```
//!
//! with γ' = γ0/(1+α²), fixed-layer polarization p̂ = +z and spin-Hall
//! polarization σ̂ = +y. The torque amplitudes are a = γ0·ħ·ε·J/(2·e·μ0·M_s·t_f)
//! (ε = P_spin or η), signed so that a positive stack current pulls the free
//! layer toward +z. The effective field H holds uniaxial anisotropy, demag,
//! an applied field and a Brown thermal field, the latter held constant over
//! a step and integrated with the stochastic Heun (Stratonovich) scheme.

mod params;
mod vec3;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use params::{DeviceParams, DriveSegment, MagState, SimConfig, E_CHARGE, GAMMA0, GAMMA_E, HBAR, K_B, MAX_DT, MU0};
pub use vec3::Vec3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("magnetization became non-finite at t = {t:e} s (dt too large or pathological parameters)")]
    NonFiniteState { t: f64 },
    #[error("invalid device parameters: {0}")]
    InvalidParams(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

/// Deterministic part of the effective field plus `h_thermal` and `h_ext`, A/m.
pub fn effective_field(m: &MagState, p: &DeviceParams, h_thermal: Vec3, h_ext: Vec3) -> Vec3 {
    FieldCoeffs::new(p).field(m.vec(), h_thermal + h_ext)
}

/// Magnetic energy of the free layer (anisotropy + demag + Zeeman), J.
pub fn magnetic_energy(m: &MagState, p: &DeviceParams, h_ext: Vec3) -> f64 {
    let v = m.vec();
    let n = Vec3::new(p.demag[0], p.demag[1], p.demag[2]);
    let density = -p.k_u() * v.z * v.z + 0.5 * MU0 * p.m_s * p.m_s * v.hadamard(v).dot(n) - MU0 * p.m_s * v.dot(h_ext);
    density * p.volume()
}

/// Standard deviation of each Cartesian component of the thermal field
/// for step `dt`: sqrt(2·α·k_B·T / (γ_e·μ0²·M_s·V·dt)), A/m.
pub fn thermal_field_sd(p: &DeviceParams, dt: f64) -> f64 {
    (2.0 * p.alpha * K_B * p.temperature / (GAMMA_E * MU0 * MU0 * p.m_s * p.volume() * dt)).sqrt()
}

/// One thermal-field draw for a step of length `dt`.
pub fn draw_thermal_field<R: Rng + ?Sized>(p: &DeviceParams, dt: f64, rng: &mut R) -> Vec3 {
    gaussian3(rng) * thermal_field_sd(p, dt)
}

#[inline]
fn gaussian3<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Per-parameter-set constants of the right-hand side, hoisted out of the
/// step loop.
#[derive(Clone, Copy, Debug)]
struct FieldCoeffs {
    h_anis: f64,
    demag: Vec3,
    gamma_p: f64,
    alpha: f64,
    stt_per_j: f64,
    sot_per_j: f64,
}

impl FieldCoeffs {
    fn new(p: &DeviceParams) -> Self {
        Self {
            h_anis: 2.0 * p.k_u() / (MU0 * p.m_s),
            demag: Vec3::new(p.demag[0], p.demag[1], p.demag[2]) * p.m_s,
            gamma_p: GAMMA0 / (1.0 + p.alpha * p.alpha),
            alpha: p.alpha,
            stt_per_j: GAMMA0 * p.torque_field_per_j(p.p_spin),
            sot_per_j: GAMMA0 * p.torque_field_per_j(p.eta),
        }
    }

    #[inline]
    fn field(&self, m: Vec3, h_extra: Vec3) -> Vec3 {
        Vec3::new(-self.demag.x * m.x + h_extra.x, -self.demag.y * m.y + h_extra.y, (self.h_anis - self.demag.z) * m.z + h_extra.z)
    }

    #[inline]
    fn rhs(&self, m: Vec3, h_extra: Vec3, a_stt: f64, a_sot: f64) -> Vec3 {
        let h = self.field(m, h_extra);
        let mxh = m.cross(h);
        let mxmxh = m.cross(mxh);
        let mut d = (mxh + mxmxh * self.alpha) * (-self.gamma_p);
        if a_stt != 0.0 {
            d += (Vec3::Z - m * m.z) * a_stt;
        }
        if a_sot != 0.0 {
            d += (Vec3::Y - m * m.y) * a_sot;
        }
        d
    }
}

/// Integrator bound to one parameter set and drive segment.
struct Stepper {
    coeffs: FieldCoeffs,
    a_stt: f64,
    a_sot: f64,
    h_ext: Vec3,
    noise_sd: f64,
    dt: f64,
}

impl Stepper {
    fn new(p: &DeviceParams, seg: &DriveSegment, dt: f64) -> Self {
        let coeffs = FieldCoeffs::new(p);
        Self {
            a_stt: coeffs.stt_per_j * seg.j_stt,
            a_sot: coeffs.sot_per_j * seg.j_sot,
            coeffs,
            h_ext: seg.h_ext,
            noise_sd: if p.temperature > 0.0 { thermal_field_sd(p, dt) } else { 0.0 },
            dt,
        }
    }

    /// Heun predictor–corrector with the thermal field frozen over the step.
    #[inline]
    fn advance<R: Rng + ?Sized>(&self, m: Vec3, rng: &mut R, renormalize: bool) -> Vec3 {
        let h_extra = if self.noise_sd > 0.0 { self.h_ext + gaussian3(rng) * self.noise_sd } else { self.h_ext };
        let k1 = self.coeffs.rhs(m, h_extra, self.a_stt, self.a_sot);
        let pred = m + k1 * self.dt;
        let k2 = self.coeffs.rhs(pred, h_extra, self.a_stt, self.a_sot);
        let next = m + (k1 + k2) * (0.5 * self.dt);
        if renormalize {
            next * (1.0 / next.norm())
        } else {
            next
        }
    }
}

/// Advance `m` by one step of `cfg.dt`.
pub fn llg_step<R: Rng + ?Sized>(
    m: &MagState,
    p: &DeviceParams,
    seg: &DriveSegment,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<MagState, SimError> {
    let next = Stepper::new(p, seg, cfg.dt).advance(m.vec(), rng, true);
    if !next.is_finite() {
        return Err(SimError::NonFiniteState { t: cfg.dt });
    }
    Ok(MagState::from_unit_unchecked(next))
}

/// One recorded point of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    /// Time, s.
    pub t: f64,
    pub m: Vec3,
    pub j_sot: f64,
    pub j_stt: f64,
}

pub type Trajectory = Vec<TrajectorySample>;

/// Integrate a whole segment, calling `observe(t, m)` at the start point and
/// after every step. Time starts at `t0`. Returns the final state.
pub fn run_segment_observed<R, F>(
    m0: &MagState,
    p: &DeviceParams,
    seg: &DriveSegment,
    cfg: &SimConfig,
    rng: &mut R,
    t0: f64,
    mut observe: F,
) -> Result<MagState, SimError>
where
    R: Rng + ?Sized,
    F: FnMut(f64, Vec3),
{
    let stepper = Stepper::new(p, seg, cfg.dt);
    let n = cfg.steps_for(seg.duration);
    let mut m = m0.vec();
    observe(t0, m);
    for i in 1..=n {
        let renorm = i % cfg.renorm_every == 0 || i == n;
        m = stepper.advance(m, rng, renorm);
        let t = t0 + i as f64 * cfg.dt;
        if !m.is_finite() {
            return Err(SimError::NonFiniteState { t });
        }
        observe(t, m);
    }
    Ok(MagState::from_unit_unchecked(m))
}

/// Integrate `seg` from `m0`, optionally recording every
/// `cfg.record_stride`-th step (plus both end points).
pub fn run_segment<R: Rng + ?Sized>(
    m0: &MagState,
    p: &DeviceParams,
    seg: &DriveSegment,
    cfg: &SimConfig,
    rng: &mut R,
    record: bool,
) -> Result<(MagState, Option<Trajectory>), SimError> {
    run_segment_at(m0, p, seg, cfg, rng, 0.0, record)
}

pub(crate) fn run_segment_at<R: Rng + ?Sized>(
    m0: &MagState,
    p: &DeviceParams,
    seg: &DriveSegment,
    cfg: &SimConfig,
    rng: &mut R,
    t0: f64,
    record: bool,
) -> Result<(MagState, Option<Trajectory>), SimError> {
    if !record {
        return run_segment_observed(m0, p, seg, cfg, rng, t0, |_, _| {}).map(|m| (m, None));
    }
    let n = cfg.steps_for(seg.duration);
    let stride = cfg.record_stride;
    let mut trace = Vec::with_capacity(n / stride + 2);
    let mut k = 0usize;
    let end = t0 + n as f64 * cfg.dt;
    let m = run_segment_observed(m0, p, seg, cfg, rng, t0, |t, m| {
        if k.is_multiple_of(stride) || k == n {
            trace.push(TrajectorySample { t, m, j_sot: seg.j_sot, j_stt: seg.j_stt });
        }
        k += 1;
    })?;
    debug_assert!(trace.last().is_some_and(|s| (s.t - end).abs() < 1e-18 + 1e-12 * end));
    Ok((m, Some(trace)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn cold(p: DeviceParams) -> DeviceParams {
        DeviceParams { temperature: 0.0, ..p }
    }

    #[test]
    fn anisotropy_field_closed_form() {
        let p = DeviceParams { demag: [0.0, 0.0, 0.0], ..cold(Default::default()) };
        let h = effective_field(&MagState::up(), &p, Vec3::ZERO, Vec3::ZERO);
        let expected = 2.0 * (1e-3 / 1.1e-9) / (MU0 * 1.2e6);
        assert!((h.z - expected).abs() < 1e-6 * expected);
        assert!((h.z - 1.206e6).abs() < 0.001e6);
        let hx = effective_field(&MagState::new(Vec3::X), &p, Vec3::ZERO, Vec3::ZERO);
        assert_eq!(hx, Vec3::ZERO);
    }

    #[test]
    fn full_perpendicular_demag() {
        let p = DeviceParams { k_i: 1e-30, ..cold(Default::default()) };
        let h = effective_field(&MagState::up(), &p, Vec3::ZERO, Vec3::ZERO);
        assert!((h.z + p.m_s).abs() < 1e-6 * p.m_s);
    }

    #[test]
    fn up_is_a_fixed_point_at_zero_temperature() {
        let p = cold(Default::default());
        let cfg = SimConfig::default();
        let mut r = rng::stream(1, 0);
        let (m, _) = run_segment(&MagState::up(), &p, &DriveSegment::idle(1e-9), &cfg, &mut r, false).unwrap();
        assert_eq!(m.vec(), Vec3::Z);
    }

    #[test]
    fn tilted_state_relaxes_toward_easy_axis() {
        let p = cold(Default::default());
        let cfg = SimConfig::default();
        let mut r = rng::stream(1, 0);
        let mut prev = f64::NEG_INFINITY;
        let mut increasing = true;
        run_segment_observed(&MagState::from_angles(10f64.to_radians(), 0.0), &p, &DriveSegment::idle(20e-9), &cfg, &mut r, 0.0, |_, m| {
            increasing &= m.z >= prev - 1e-15;
            prev = m.z;
        })
        .unwrap();
        assert!(increasing);
        assert!(prev > 10f64.to_radians().cos());
    }

    #[test]
    fn identical_seeds_give_identical_trajectories() {
        let p = DeviceParams::default();
        let cfg = SimConfig::default();
        let seg = DriveSegment::new(-4e11, 0.0, 2e-9);
        let run = || {
            let mut r = rng::stream(42, 9);
            run_segment(&MagState::up(), &p, &seg, &cfg, &mut r, true).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn records_both_end_points() {
        let p = DeviceParams::default();
        let cfg = SimConfig { record_stride: 7, ..Default::default() };
        let mut r = rng::stream(3, 0);
        let (_, tr) = run_segment(&MagState::up(), &p, &DriveSegment::idle(0.1e-9), &cfg, &mut r, true).unwrap();
        let tr = tr.unwrap();
        assert_eq!(tr[0].t, 0.0);
        assert!((tr.last().unwrap().t - 0.1e-9).abs() < 1e-20);
    }

    #[test]
    fn non_finite_state_is_reported() {
        let p = DeviceParams::default();
        let cfg = SimConfig::default();
        let seg = DriveSegment { h_ext: Vec3::new(f64::NAN, 0.0, 0.0), ..DriveSegment::idle(1e-11) };
        let mut r = rng::stream(3, 0);
        assert!(matches!(run_segment(&MagState::up(), &p, &seg, &cfg, &mut r, false), Err(SimError::NonFiniteState { .. })));
    }

    #[test]
    fn positive_stack_current_pulls_toward_plus_z() {
        let p = cold(Default::default());
        let cfg = SimConfig::default();
        let mut r = rng::stream(0, 0);
        let start = MagState::from_angles(170f64.to_radians(), 0.3);
        let (m, _) = run_segment(&start, &p, &DriveSegment::new(0.0, 5e11, 5e-9), &cfg, &mut r, false).unwrap();
        assert!(m.mz() > 0.9, "mz = {}", m.mz());
    }
}
