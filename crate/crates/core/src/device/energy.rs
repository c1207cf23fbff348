use serde::{Deserialize, Serialize};

use crate::llg::{DeviceParams, DriveSegment, TrajectorySample};

/// Joule heating of one flip (or any run of drive segments), J.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    /// Heating in the tunnel junction stack.
    pub e_mtj: f64,
    /// Heating in the heavy-metal channel (SOT only).
    pub e_hm: f64,
    pub e_total: f64,
}

impl EnergyRecord {
    pub fn new(e_mtj: f64, e_hm: f64) -> Self {
        Self { e_mtj, e_hm, e_total: e_mtj + e_hm }
    }

    pub fn add(&mut self, other: &EnergyRecord) {
        self.e_mtj += other.e_mtj;
        self.e_hm += other.e_hm;
        self.e_total = self.e_mtj + self.e_hm;
    }
}

/// Stack current for current density `j`, A.
pub fn stack_current(p: &DeviceParams, j: f64) -> f64 {
    j * p.area()
}

/// Heavy-metal channel current for current density `j`, A.
pub fn channel_current(p: &DeviceParams, j: f64) -> f64 {
    j * p.hm_width * p.hm_thickness
}

/// Trapezoidal accumulator of ∫R(m_z)dt fed one sample at a time.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct ResistanceIntegral {
    last: Option<(f64, f64)>,
    pub(crate) value: f64,
    pub(crate) elapsed: f64,
}

impl ResistanceIntegral {
    #[inline]
    pub(crate) fn push(&mut self, p: &DeviceParams, t: f64, mz: f64) {
        let r = p.mtj_resistance(mz);
        if let Some((t_prev, r_prev)) = self.last {
            self.value += 0.5 * (r + r_prev) * (t - t_prev);
            self.elapsed += t - t_prev;
        }
        self.last = Some((t, r));
    }
}

/// Energy for a segment whose junction resistance integral and elapsed
/// time were accumulated while integrating it.
pub(crate) fn segment_energy(p: &DeviceParams, seg: &DriveSegment, r_integral: f64, elapsed: f64) -> EnergyRecord {
    let i_stt = stack_current(p, seg.j_stt);
    let i_sot = channel_current(p, seg.j_sot);
    EnergyRecord::new(i_stt * i_stt * r_integral, i_sot * i_sot * p.r_hm() * elapsed)
}

/// Joule energy of a recorded trace driven by `seg`: ∫I_stt²·R(m_z)dt by the
/// trapezoidal rule over the recorded samples, plus I_sot²·R_hm over the
/// trace's time span.
pub fn energy_of_trace(trace: &[TrajectorySample], p: &DeviceParams, seg: &DriveSegment) -> EnergyRecord {
    let mut acc = ResistanceIntegral::default();
    for s in trace {
        acc.push(p, s.t, s.m.z);
    }
    segment_energy(p, seg, acc.value, acc.elapsed)
}
