use serde::{Deserialize, Serialize};

use super::{run_flips, DeviceError, Protocol};
use crate::llg::{DeviceParams, SimConfig};
use crate::par;

/// Evenly spaced bias currents `j_min..=j_max`, A/m².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub j_min: f64,
    pub j_max: f64,
    pub n_points: usize,
}

impl Sweep {
    pub fn new(j_min: f64, j_max: f64, n_points: usize) -> Self {
        Self { j_min, j_max, n_points }
    }

    pub fn currents(&self) -> Vec<f64> {
        match self.n_points {
            0 => Vec::new(),
            1 => vec![self.j_min],
            n => {
                let step = (self.j_max - self.j_min) / (n - 1) as f64;
                (0..n).map(|i| if i + 1 == n { self.j_max } else { self.j_min + step * i as f64 }).collect()
            }
        }
    }

    pub fn spacing(&self) -> f64 {
        if self.n_points < 2 {
            0.0
        } else {
            (self.j_max - self.j_min) / (self.n_points - 1) as f64
        }
    }

    fn check(&self) -> Result<(), DeviceError> {
        if !(self.j_min < self.j_max) || self.n_points == 0 {
            return Err(DeviceError::InvalidProtocol(format!(
                "sweep needs j_min < j_max and at least one point, got [{:e}, {:e}] x {}",
                self.j_min, self.j_max, self.n_points
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SCurvePoint {
    /// Bias current density, A/m².
    pub j: f64,
    pub p_one: f64,
    pub n_samples: usize,
    /// Mean energy per flip at this bias, J.
    pub mean_energy: f64,
    /// Mean over flips of the pulse-averaged |m_z|.
    pub pulse_mean_abs_mz: f64,
}

/// Measured probability-of-one versus bias current.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SCurve {
    pub points: Vec<SCurvePoint>,
    pub params: DeviceParams,
}

impl SCurve {
    /// Curve from (J, p) pairs with a nominal sample count, e.g. for analytic
    /// test curves.
    pub fn from_pairs(pairs: &[(f64, f64)], n_samples: usize, params: DeviceParams) -> Self {
        let points =
            pairs.iter().map(|&(j, p_one)| SCurvePoint { j, p_one, n_samples, mean_energy: 0.0, pulse_mean_abs_mz: 0.0 }).collect();
        Self { points, params }
    }

    pub fn currents(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.j).collect()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.p_one).collect()
    }

    /// Monotone (isotonic) version of the measured probabilities.
    pub fn smoothed(&self) -> Vec<f64> {
        let weights: Vec<f64> = self.points.iter().map(|p| p.n_samples.max(1) as f64).collect();
        isotonic_fit(&self.probabilities(), &weights)
    }

    /// Attainable probability span of the smoothed curve.
    pub fn span(&self) -> (f64, f64) {
        let s = self.smoothed();
        match (s.first(), s.last()) {
            (Some(&lo), Some(&hi)) => (lo, hi),
            _ => (f64::NAN, f64::NAN),
        }
    }
}

/// Weighted pool-adjacent-violators fit: the non-decreasing sequence closest
/// to `y` in weighted least squares.
pub fn isotonic_fit(y: &[f64], w: &[f64]) -> Vec<f64> {
    assert_eq!(y.len(), w.len());
    // blocks of (mean, weight, count)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(y.len());
    for (&yi, &wi) in y.iter().zip(w) {
        blocks.push((yi, wi, 1));
        while blocks.len() > 1 {
            let (m2, w2, c2) = blocks[blocks.len() - 1];
            let (m1, w1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            let wt = w1 + w2;
            blocks.push(((m1 * w1 + m2 * w2) / wt, wt, c1 + c2));
        }
    }
    blocks.into_iter().flat_map(|(m, _, c)| std::iter::repeat_n(m, c)).collect()
}

/// Measure p(1) at each bias of `sweep` with `n_per_point` flips. Point `i`
/// runs on its own fresh device and random stream `(seed, i)`.
pub fn build_scurve(
    p: &DeviceParams,
    proto: &Protocol,
    sweep: &Sweep,
    n_per_point: usize,
    cfg: &SimConfig,
    seed: u64,
) -> Result<SCurve, DeviceError> {
    sweep.check()?;
    p.validate()?;
    cfg.validate()?;
    proto.validate(cfg)?;
    if n_per_point == 0 {
        return Err(DeviceError::InvalidProtocol("an S-curve point needs at least one flip".into()));
    }
    let currents = sweep.currents();
    let tallies = par::map_indexed(currents.len(), |i| run_flips(p, &proto.with_bias(currents[i]), cfg, seed, i as u64, n_per_point));
    let mut points = Vec::with_capacity(currents.len());
    for (j, tally) in currents.iter().zip(tallies) {
        let t = tally?;
        points.push(SCurvePoint {
            j: *j,
            p_one: t.p_one(),
            n_samples: t.flips,
            mean_energy: t.energy / t.flips as f64,
            pulse_mean_abs_mz: t.pulse_abs_mz_sum / t.flips as f64,
        });
    }
    Ok(SCurve { points, params: p.clone() })
}

/// Bias current that realizes `p_target`, by piecewise-linear interpolation
/// of the isotonic fit. A target that lands on a flat run of the fit maps to
/// the run's midpoint.
pub fn invert_scurve(sc: &SCurve, p_target: f64) -> Result<f64, DeviceError> {
    let n = sc.points.len();
    if n < 2 {
        return Err(DeviceError::DegenerateCurve(n));
    }
    invert_monotone(&sc.currents(), &sc.smoothed(), p_target)
}

/// Inversion on an already smoothed (non-decreasing) curve.
pub(crate) fn invert_monotone(j: &[f64], y: &[f64], p_target: f64) -> Result<f64, DeviceError> {
    let n = y.len();
    if n < 2 {
        return Err(DeviceError::DegenerateCurve(n));
    }
    let (low, high) = (y[0], y[n - 1]);
    if !(p_target >= low && p_target <= high) {
        return Err(DeviceError::OutOfRange { p: p_target, low, high });
    }
    let i = y.iter().position(|&v| v >= p_target).expect("target within span");
    if y[i] == p_target {
        let end = i + y[i..].iter().take_while(|&&v| v == p_target).count() - 1;
        return Ok(0.5 * (j[i] + j[end]));
    }
    // y[i - 1] < p_target < y[i]
    let f = (p_target - y[i - 1]) / (y[i] - y[i - 1]);
    Ok(j[i - 1] + f * (j[i] - j[i - 1]))
}
