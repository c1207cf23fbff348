use std::io::{self, Write};

use super::{DeviceError, EnergyRecord, Protocol, Recorder};
use crate::llg::{DeviceParams, SimConfig, Trajectory};

pub const TRAJECTORY_CSV_HEADER: &str = "t_s,m_x,m_y,m_z,j_sot_A_per_m2,j_stt_A_per_m2";

/// A recorded bitstream: `n` consecutive flips on one device.
#[derive(Clone, Debug, Default)]
pub struct BitstreamRun {
    pub bits: Vec<bool>,
    pub energies: Vec<EnergyRecord>,
    pub trajectory: Trajectory,
}

impl BitstreamRun {
    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn p_one(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.ones() as f64 / self.bits.len() as f64
        }
    }
}

/// Run `n` flips from the protocol's initial state on stream `(seed, 0)`,
/// optionally recording the trajectory every `cfg.record_stride` steps.
pub fn simulate_bitstream(
    p: &DeviceParams,
    proto: &Protocol,
    cfg: &SimConfig,
    seed: u64,
    n: usize,
    record: bool,
) -> Result<BitstreamRun, DeviceError> {
    p.validate()?;
    cfg.validate()?;
    proto.validate(cfg)?;
    let mut rng = crate::rng::stream(seed, 0);
    let mut state = proto.initial_state();
    let mut rec = Recorder::default();
    let mut run = BitstreamRun::default();
    for _ in 0..n {
        let out = proto.flip_recorded(&mut state, p, cfg, &mut rng, record.then_some(&mut rec))?;
        run.bits.push(out.bit);
        run.energies.push(out.energy);
    }
    run.trajectory = rec.trace;
    Ok(run)
}

pub fn write_trajectory_csv<W: Write>(mut w: W, trajectory: &Trajectory) -> io::Result<()> {
    writeln!(w, "{TRAJECTORY_CSV_HEADER}")?;
    for s in trajectory {
        writeln!(w, "{:e},{},{},{},{:e},{:e}", s.t, s.m.x, s.m.y, s.m.z, s.j_sot, s.j_stt)?;
    }
    Ok(())
}
