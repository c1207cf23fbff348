use serde::{Deserialize, Serialize};

use super::{SimError, Vec3};

/// Vacuum permeability, T·m/A.
pub const MU0: f64 = 1.256_637_062_12e-6;
/// Electron gyromagnetic ratio, rad/(s·T).
pub const GAMMA_E: f64 = 1.760_859_630_23e11;
/// Gyromagnetic ratio for fields expressed in A/m, m/(A·s).
pub const GAMMA0: f64 = MU0 * GAMMA_E;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const E_CHARGE: f64 = 1.602_176_634e-19;
pub const K_B: f64 = 1.380_649e-23;

/// Hard upper bound on the integration step.
pub const MAX_DT: f64 = 10e-12;

/// Free-layer magnetization direction. Always unit length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagState(Vec3);

impl MagState {
    /// Normalizes `v`. Panics on the zero vector.
    pub fn new(v: Vec3) -> Self {
        let n = v.norm();
        assert!(n > 0.0 && n.is_finite(), "magnetization must be a finite non-zero vector");
        MagState(v * (1.0 / n))
    }

    pub fn up() -> Self {
        MagState(Vec3::Z)
    }

    pub fn down() -> Self {
        MagState(-Vec3::Z)
    }

    /// Polar angle `theta` from +z, azimuth `phi` from +x.
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        MagState(Vec3::new(st * cp, st * sp, ct))
    }

    pub(crate) fn from_unit_unchecked(v: Vec3) -> Self {
        MagState(v)
    }

    #[inline]
    pub fn vec(&self) -> Vec3 {
        self.0
    }

    #[inline]
    pub fn mz(&self) -> f64 {
        self.0.z
    }

    /// Bit read out by the tunnel junction: 1 for the +z (parallel) state.
    pub fn bit(&self) -> bool {
        self.0.z > 0.0
    }
}

/// Material, geometry and environment of one junction.
///
/// The first five fields are the searchable material/device knobs; the
/// remaining geometry is set to a typical
/// 50 nm pillar on a 3 nm heavy-metal strip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceParams {
    /// Gilbert damping.
    pub alpha: f64,
    /// Interfacial anisotropy energy, J/m².
    pub k_i: f64,
    /// Saturation magnetization, A/m.
    pub m_s: f64,
    /// Parallel-state resistance, Ω.
    pub r_p: f64,
    /// Spin Hall angle of the heavy metal.
    pub eta: f64,
    /// Free-layer thickness, m.
    pub t_f: f64,
    /// Pillar diameter, m.
    pub d_mtj: f64,
    pub hm_thickness: f64,
    pub hm_width: f64,
    /// Length of the heavy-metal channel carrying the SOT current, m.
    pub hm_length: f64,
    /// Heavy-metal resistivity, Ω·m.
    pub rho_hm: f64,
    /// Tunnel magnetoresistance ratio, R_AP = R_p·(1 + tmr).
    pub tmr: f64,
    /// Spin polarization of the STT current.
    pub p_spin: f64,
    /// Temperature, K.
    pub temperature: f64,
    /// Demagnetizing factors (N_x, N_y, N_z), summing to one.
    pub demag: [f64; 3],
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            alpha: 0.03,
            k_i: 1.0e-3,
            m_s: 1.2e6,
            r_p: 5_000.0,
            eta: 0.3,
            t_f: 1.1e-9,
            d_mtj: 50e-9,
            hm_thickness: 3e-9,
            hm_width: 100e-9,
            hm_length: 100e-9,
            rho_hm: 2e-7,
            tmr: 1.0,
            p_spin: 0.6,
            temperature: 300.0,
            demag: [0.0, 0.0, 1.0],
        }
    }
}

impl DeviceParams {
    /// Free-layer volume, m³.
    pub fn volume(&self) -> f64 {
        self.area() * self.t_f
    }

    /// Pillar cross-section, m².
    pub fn area(&self) -> f64 {
        std::f64::consts::PI * (0.5 * self.d_mtj).powi(2)
    }

    /// Uniaxial anisotropy energy density K_u = K_i / t_f, J/m³.
    pub fn k_u(&self) -> f64 {
        self.k_i / self.t_f
    }

    /// Effective perpendicular anisotropy K_u − μ0·M_s²/2, J/m³.
    pub fn k_eff(&self) -> f64 {
        self.k_u() - 0.5 * MU0 * self.m_s * self.m_s
    }

    /// Thermal stability factor K_eff·V / k_B·T.
    pub fn thermal_stability(&self) -> f64 {
        self.k_eff() * self.volume() / (K_B * self.temperature)
    }

    /// Heavy-metal channel resistance, Ω.
    pub fn r_hm(&self) -> f64 {
        self.rho_hm * self.hm_length / (self.hm_width * self.hm_thickness)
    }

    pub fn r_ap(&self) -> f64 {
        self.r_p * (1.0 + self.tmr)
    }

    /// Junction resistance for free-layer z-component `mz`, interpolating
    /// the conductance between R_p (mz = +1) and R_AP (mz = −1).
    pub fn mtj_resistance(&self, mz: f64) -> f64 {
        self.r_p * (1.0 + self.tmr) / (1.0 + 0.5 * self.tmr * (1.0 + mz))
    }

    /// Spin-torque field per unit current density for a polarization
    /// efficiency `efficiency` (P_spin for STT, η for SOT), (A/m)/(A/m²).
    pub(crate) fn torque_field_per_j(&self, efficiency: f64) -> f64 {
        HBAR * efficiency / (2.0 * E_CHARGE * MU0 * self.m_s * self.t_f)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("alpha", self.alpha),
            ("k_i", self.k_i),
            ("m_s", self.m_s),
            ("r_p", self.r_p),
            ("eta", self.eta),
            ("t_f", self.t_f),
            ("d_mtj", self.d_mtj),
            ("hm_thickness", self.hm_thickness),
            ("hm_width", self.hm_width),
            ("hm_length", self.hm_length),
            ("rho_hm", self.rho_hm),
            ("p_spin", self.p_spin),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::InvalidParams(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.alpha >= 1.0 {
            return Err(SimError::InvalidParams(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.p_spin > 1.0 {
            return Err(SimError::InvalidParams(format!("p_spin must lie in (0, 1], got {}", self.p_spin)));
        }
        if !(self.tmr >= 0.0 && self.tmr.is_finite()) {
            return Err(SimError::InvalidParams(format!("tmr must be non-negative, got {}", self.tmr)));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(SimError::InvalidParams(format!("temperature must be non-negative, got {}", self.temperature)));
        }
        let n_sum: f64 = self.demag.iter().sum();
        if self.demag.iter().any(|n| *n < 0.0) || (n_sum - 1.0).abs() > 1e-9 {
            return Err(SimError::InvalidParams(format!("demag factors must be non-negative and sum to 1, got {:?}", self.demag)));
        }
        Ok(())
    }
}

/// Constant drive applied for `duration` seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveSegment {
    /// Charge current density in the heavy metal, A/m².
    pub j_sot: f64,
    /// Current density through the stack, A/m². Positive favors +z.
    pub j_stt: f64,
    pub duration: f64,
    /// Applied field, A/m.
    pub h_ext: Vec3,
}

impl DriveSegment {
    pub fn new(j_sot: f64, j_stt: f64, duration: f64) -> Self {
        Self { j_sot, j_stt, duration, h_ext: Vec3::ZERO }
    }

    pub fn idle(duration: f64) -> Self {
        Self::new(0.0, 0.0, duration)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Integration step, s.
    pub dt: f64,
    pub seed: u64,
    /// Renormalize the magnetization every this many steps.
    pub renorm_every: usize,
    /// Keep every n-th step when recording a trajectory.
    pub record_stride: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt: 1e-12, seed: 0, renorm_every: 1, record_stride: 10 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(SimError::InvalidConfig(format!("dt must lie in (0, {MAX_DT:e}] s, got {:e}", self.dt)));
        }
        if self.renorm_every == 0 || self.record_stride == 0 {
            return Err(SimError::InvalidConfig("renorm_every and record_stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of steps that cover `duration`: ⌈duration/dt⌉, treating
    /// ratios within rounding noise of an integer as exact.
    pub fn steps_for(&self, duration: f64) -> usize {
        let r = duration / self.dt;
        let nearest = r.round();
        if (r - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest as usize
        } else {
            r.ceil() as usize
        }
    }
}
