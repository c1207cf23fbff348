use serde::{Deserialize, Serialize};

use super::{build_scurve, DeviceKind, Protocol, SCurve, Sweep};
use crate::llg::{DeviceParams, SimConfig};

/// Why a device was accepted or rejected as a tunable coin.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidityReason {
    Valid,
    /// The sweep does not bias the coin from ≤ p_low_max to ≥ p_high_min.
    Span,
    /// Too many statistically significant decreases along the sweep.
    Monotonicity,
    /// The simulation itself failed (reset failure, non-finite state, …).
    SimulationFailure(String),
    /// Rejected because the SOT pulse did not hold the layer in-plane
    /// (only with `reject_stochastic_regime`).
    StochasticRegime,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub valid: bool,
    pub monotonicity_violations: usize,
    /// Measured p(1) at the low end of the sweep.
    pub p_low: f64,
    /// Measured p(1) at the high end of the sweep.
    pub p_high: f64,
    pub reason: ValidityReason,
    /// SOT device that behaves as a stochastic switch during the pulse
    /// instead of rotating in-plane. Informational unless rejected.
    pub stochastic_regime: bool,
    #[serde(skip)]
    pub curve: Option<SCurve>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationConfig {
    pub sweep: Sweep,
    pub n_per_point: usize,
    pub p_low_max: f64,
    pub p_high_min: f64,
    /// Allowed number of decreases larger than `sigma` binomial deviations.
    pub max_violations: usize,
    pub sigma: f64,
    /// Pulse-averaged |m_z| above which an SOT device is flagged.
    pub stochastic_mz_threshold: f64,
    pub reject_stochastic_regime: bool,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self::for_kind(DeviceKind::Sot)
    }
}

impl ValidationConfig {
    /// Coarse 11 × 200 sweep over the bias range a device is allowed to use.
    pub fn for_kind(kind: DeviceKind) -> Self {
        Self {
            sweep: default_sweep(kind, 11),
            n_per_point: 200,
            p_low_max: 0.10,
            p_high_min: 0.90,
            max_violations: 1,
            sigma: 3.0,
            stochastic_mz_threshold: 0.5,
            reject_stochastic_regime: false,
        }
    }
}

/// Bias window searched for each device kind, A/m². SOT devices are biased
/// symmetrically around zero; STT devices are switched by positive current.
pub fn default_sweep(kind: DeviceKind, n_points: usize) -> Sweep {
    match kind {
        DeviceKind::Sot => Sweep::new(-3e11, 3e11, n_points),
        DeviceKind::Stt => Sweep::new(0.0, 6e11, n_points),
    }
}

/// Count significant decreases between neighbouring points.
fn monotonicity_violations(curve: &SCurve, sigma: f64) -> usize {
    curve
        .points
        .windows(2)
        .filter(|w| {
            let (a, b) = (&w[0], &w[1]);
            let var = a.p_one * (1.0 - a.p_one) / a.n_samples as f64 + b.p_one * (1.0 - b.p_one) / b.n_samples as f64;
            a.p_one - b.p_one > sigma * var.sqrt()
        })
        .count()
}

/// Apply the acceptance rules to already-measured quantities. Span failures
/// take precedence over monotonicity.
pub fn classify(cfg: &ValidationConfig, p_low: f64, p_high: f64, violations: usize, stochastic_regime: bool) -> ValidityReport {
    let reason = if !(p_low <= cfg.p_low_max && p_high >= cfg.p_high_min) {
        ValidityReason::Span
    } else if violations > cfg.max_violations {
        ValidityReason::Monotonicity
    } else if stochastic_regime && cfg.reject_stochastic_regime {
        ValidityReason::StochasticRegime
    } else {
        ValidityReason::Valid
    };
    ValidityReport {
        valid: reason == ValidityReason::Valid,
        monotonicity_violations: violations,
        p_low,
        p_high,
        reason,
        stochastic_regime,
        curve: None,
    }
}

/// Sample a coarse S-curve and decide whether the device works as a coin.
/// Never fails: simulation errors become an invalid report.
pub fn validate_device(p: &DeviceParams, proto: &Protocol, vcfg: &ValidationConfig, cfg: &SimConfig, seed: u64) -> ValidityReport {
    let curve = match build_scurve(p, proto, &vcfg.sweep, vcfg.n_per_point, cfg, seed) {
        Ok(c) => c,
        Err(e) => {
            return ValidityReport {
                valid: false,
                monotonicity_violations: 0,
                p_low: f64::NAN,
                p_high: f64::NAN,
                reason: ValidityReason::SimulationFailure(e.to_string()),
                stochastic_regime: false,
                curve: None,
            }
        }
    };
    let p_low = curve.points.first().map_or(f64::NAN, |p| p.p_one);
    let p_high = curve.points.last().map_or(f64::NAN, |p| p.p_one);
    let stochastic = proto.kind() == DeviceKind::Sot && {
        let total: f64 = curve.points.iter().map(|p| p.pulse_mean_abs_mz * p.n_samples as f64).sum();
        let n: usize = curve.points.iter().map(|p| p.n_samples).sum();
        total / n as f64 > vcfg.stochastic_mz_threshold
    };
    let mut report = classify(vcfg, p_low, p_high, monotonicity_violations(&curve, vcfg.sigma), stochastic);
    report.curve = Some(curve);
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_end_above_threshold_is_invalid() {
        let cfg = ValidationConfig::default();
        let r = classify(&cfg, 0.4, 0.99, 0, false);
        assert!(!r.valid);
        assert_eq!(r.reason, ValidityReason::Span);
        let r = classify(&cfg, 0.4, 0.99, 5, false);
        assert_eq!(r.reason, ValidityReason::Span);
    }

    #[test]
    fn classification_rules() {
        let cfg = ValidationConfig::default();
        assert!(classify(&cfg, 0.05, 0.95, 1, false).valid);
        assert_eq!(classify(&cfg, 0.05, 0.95, 2, false).reason, ValidityReason::Monotonicity);
        assert!(classify(&cfg, 0.05, 0.95, 0, true).valid);
        let strict = ValidationConfig { reject_stochastic_regime: true, ..cfg };
        assert_eq!(classify(&strict, 0.05, 0.95, 0, true).reason, ValidityReason::StochasticRegime);
    }

    #[test]
    fn violations_use_binomial_tolerance() {
        let sc = SCurve::from_pairs(&[(0.0, 0.2), (1.0, 0.18), (2.0, 0.6), (3.0, 0.3)], 200, DeviceParams::default());
        assert_eq!(monotonicity_violations(&sc, 3.0), 1);
    }
}
