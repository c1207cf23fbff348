use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{build_scurve, invert_scurve, run_flips, DeviceError, Protocol, ProtocolStt, SCurve, Sweep};
use crate::llg::{DeviceParams, SimConfig, MU0};
use crate::{par, rng};

/// Effective perpendicular anisotropy K_i/t_f − μ0·M_s²/2, J/m³. Zero on the
/// PMA/in-plane border.
pub fn keff(p: &DeviceParams) -> f64 {
    p.k_i / p.t_f - 0.5 * MU0 * p.m_s * p.m_s
}

/// Rebuild the S-curve of `n_devices` copies of `p` whose α, K_i, M_s, R_p
/// and η are each scaled by an independent factor uniform in
/// [1 − spread, 1 + spread].
#[allow(clippy::too_many_arguments)]
pub fn scurve_variation(
    p: &DeviceParams,
    spread: f64,
    n_devices: usize,
    proto: &Protocol,
    sweep: &Sweep,
    n_per_point: usize,
    cfg: &SimConfig,
    seed: u64,
) -> Result<Vec<SCurve>, DeviceError> {
    let perturb_seed = rng::child_seed(seed, 0);
    par::map_indexed(n_devices, |i| {
        let mut r = rng::stream(perturb_seed, i as u64);
        let mut scale = |v: f64| v * (1.0 + spread * r.random_range(-1.0..=1.0));
        let varied = DeviceParams {
            alpha: scale(p.alpha).min(0.999),
            k_i: scale(p.k_i),
            m_s: scale(p.m_s),
            r_p: scale(p.r_p),
            eta: scale(p.eta),
            ..p.clone()
        };
        build_scurve(&varied, proto, sweep, n_per_point, cfg, rng::child_seed(seed, 1 + i as u64))
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityConfig {
    /// Coarse sweep used to bracket the 50% point.
    pub sweep: Sweep,
    pub n_per_point: usize,
    /// Points of the refined sweep around the crossing.
    pub refine_points: usize,
    /// Flips used to re-measure p(1) at the shifted temperature.
    pub n_remeasure: usize,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self { sweep: super::validate::default_sweep(super::DeviceKind::Stt, 13), n_per_point: 400, refine_points: 9, n_remeasure: 4000 }
    }
}

/// Change of p(1) away from 50% when an STT device calibrated to its 50%
/// bias at temperature T is operated at T + `d_t`.
///
/// The 50% current comes from inverting a coarse S-curve, refined by a
/// second sweep over the two grid cells around the crossing.
pub fn temperature_sensitivity(
    p: &DeviceParams,
    proto: &ProtocolStt,
    d_t: f64,
    scfg: &SensitivityConfig,
    cfg: &SimConfig,
    seed: u64,
) -> Result<f64, DeviceError> {
    let proto = Protocol::Stt(*proto);
    let coarse = build_scurve(p, &proto, &scfg.sweep, scfg.n_per_point, cfg, rng::child_seed(seed, 0))?;
    let j_coarse = invert_scurve(&coarse, 0.5)?;
    let h = scfg.sweep.spacing();
    let fine_sweep = Sweep::new(j_coarse - h, j_coarse + h, scfg.refine_points.max(2));
    let fine = build_scurve(p, &proto, &fine_sweep, scfg.n_per_point, cfg, rng::child_seed(seed, 1))?;
    let j50 = invert_scurve(&fine, 0.5).unwrap_or(j_coarse);

    let hot = DeviceParams { temperature: p.temperature + d_t, ..p.clone() };
    let tally = run_flips(&hot, &proto.with_bias(j50), cfg, rng::child_seed(seed, 2), 0, scfg.n_remeasure)?;
    Ok(tally.p_one() - 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keff_limits_and_border() {
        let p = DeviceParams::default();
        let expected = 1e-3 / 1.1e-9 - 0.5 * MU0 * 1.2e6 * 1.2e6;
        assert!((keff(&p) - expected).abs() < 1e-9);
        assert!((keff(&p) - 4.3e3).abs() < 50.0);

        let tiny = DeviceParams { m_s: 1e-3, ..p.clone() };
        assert!((keff(&tiny) - p.k_u()).abs() < 1e-6 * p.k_u());

        let m_s = 8e5;
        let k_u = 0.5 * MU0 * m_s * m_s;
        let border = DeviceParams { m_s, k_i: k_u * p.t_f, ..p };
        assert!(keff(&border).abs() < 1e-9 * k_u);
    }
}
