//! Browser demo. Each export runs one computation and returns its result as
//! a JSON string for the page script to draw.

use mtj_codesign::device::{build_scurve, default_sweep, simulate_bitstream, DeviceKind};
use mtj_codesign::metrics::{kl_divergence, MetricsError};
use mtj_codesign::target::{bin_edge, bin_probs, Cdf, DistributionSpec, TargetError};
use mtj_codesign::tree::{sample_many_blocks, TreeError};
use mtj_codesign::{DeviceError, DeviceParams, IdealCoin, Protocol, SimConfig};
use serde::Serialize;
use thiserror::Error;
use wasm_bindgen::prelude::*;

/// Flips above this make the page unresponsive.
pub const MAX_FLIPS: usize = 200;

#[derive(Debug, Error)]
pub enum DemoError {
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Input(String),
}

#[derive(Debug, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub empirical: Vec<f64>,
    pub target: Vec<f64>,
    pub kl: f64,
    pub flips: u64,
}

#[derive(Debug, Serialize)]
pub struct Bitstream {
    pub t_ns: Vec<f64>,
    pub mz: Vec<f64>,
    pub bits: Vec<u8>,
    pub energy_pj: Vec<f64>,
    pub p_one: f64,
}

#[derive(Debug, Serialize)]
pub struct Curve {
    pub j: Vec<f64>,
    pub p_one: Vec<f64>,
    pub smoothed: Vec<f64>,
}

/// Draw `n` samples of a truncated gamma through a `bits`-deep tree of
/// ideal coins.
pub fn histogram(shape: f64, rate: f64, a: f64, b: f64, bits: u32, n: usize, seed: u64) -> Result<Histogram, DemoError> {
    let target = DistributionSpec::Gamma { shape, rate, a, b }.build()?;
    let run = sample_many_blocks(&target, bits, n, |block| IdealCoin::new(seed, block))?;
    let q = bin_probs(&target, bits);
    let (lo, hi) = target.support();
    let total = run.total().max(1) as f64;
    Ok(Histogram {
        edges: (0..=q.len()).map(|i| bin_edge(lo, hi, bits, i)).collect(),
        empirical: run.counts.iter().map(|&c| c as f64 / total).collect(),
        kl: if n > 0 { kl_divergence(&run.counts, &q)? } else { 0.0 },
        counts: run.counts,
        target: q,
        flips: run.flips,
    })
}

/// Run `flips` pulse-and-relax cycles of the default SOT device at bias
/// current density `j_bias`.
pub fn bitstream(j_bias: f64, flips: usize, seed: u64) -> Result<Bitstream, DemoError> {
    if flips > MAX_FLIPS {
        return Err(DemoError::Input(format!("at most {MAX_FLIPS} flips")));
    }
    let proto = Protocol::default_for(DeviceKind::Sot).with_bias(j_bias);
    let cfg = SimConfig { record_stride: 250, ..SimConfig::default() };
    let run = simulate_bitstream(&DeviceParams::default(), &proto, &cfg, seed, flips, true)?;
    Ok(Bitstream {
        t_ns: run.trajectory.iter().map(|s| s.t * 1e9).collect(),
        mz: run.trajectory.iter().map(|s| s.m.z).collect(),
        bits: run.bits.iter().map(|&b| b as u8).collect(),
        energy_pj: run.energies.iter().map(|e| e.e_total * 1e12).collect(),
        p_one: run.p_one(),
    })
}

/// Probability of one versus bias over the default SOT window.
pub fn scurve(points: usize, per_point: usize, seed: u64) -> Result<Curve, DemoError> {
    if points < 2 || points * per_point > 20 * MAX_FLIPS {
        return Err(DemoError::Input(format!("need at least 2 points and at most {} flips in total", 20 * MAX_FLIPS)));
    }
    let proto = Protocol::default_for(DeviceKind::Sot);
    let sweep = default_sweep(DeviceKind::Sot, points);
    let curve = build_scurve(&DeviceParams::default(), &proto, &sweep, per_point, &SimConfig::default(), seed)?;
    Ok(Curve { j: curve.currents(), p_one: curve.probabilities(), smoothed: curve.smoothed() })
}

fn to_js<T: Serialize>(r: Result<T, DemoError>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = sampleHistogram)]
pub fn sample_histogram(shape: f64, rate: f64, a: f64, b: f64, bits: u32, n: u32, seed: u32) -> Result<String, JsError> {
    to_js(histogram(shape, rate, a, b, bits, n as usize, seed as u64))
}

#[wasm_bindgen(js_name = simulateBits)]
pub fn simulate_bits(j_bias: f64, flips: u32, seed: u32) -> Result<String, JsError> {
    to_js(bitstream(j_bias, flips as usize, seed as u64))
}

#[wasm_bindgen(js_name = sCurve)]
pub fn s_curve(points: u32, per_point: u32, seed: u32) -> Result<String, JsError> {
    to_js(scurve(points as usize, per_point as usize, seed as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_matches_target() {
        let h = histogram(50.0, 311.44, 0.10, 0.24, 6, 50_000, 1).unwrap();
        assert_eq!(h.edges.len(), 65);
        assert_eq!(h.counts.iter().sum::<u64>(), 50_000);
        assert_eq!(h.flips, 300_000);
        assert!(h.kl < 0.01);
        assert!((h.target.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bad_targets_are_errors() {
        assert!(matches!(histogram(50.0, -1.0, 0.1, 0.24, 6, 10, 1), Err(DemoError::Target(_))));
        assert!(matches!(histogram(50.0, 311.44, 0.1, 0.24, 0, 10, 1), Err(DemoError::Tree(_))));
    }

    #[test]
    fn bitstream_records_each_flip() {
        let b = bitstream(0.0, 4, 2).unwrap();
        assert_eq!(b.bits.len(), 4);
        assert_eq!(b.energy_pj.len(), 4);
        assert_eq!(b.t_ns.len(), b.mz.len());
        assert!((b.t_ns.last().unwrap() - 100.0).abs() < 1e-6);
        assert!(bitstream(0.0, MAX_FLIPS + 1, 2).is_err());
    }

    #[test]
    fn scurve_rises() {
        let c = scurve(3, 40, 1).unwrap();
        assert_eq!(c.j.len(), 3);
        assert!(c.p_one[0] < 0.2 && c.p_one[2] > 0.8, "{:?}", c.p_one);
        assert!(scurve(1, 40, 1).is_err());
    }
}
