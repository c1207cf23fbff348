use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::device::{DeviceKind, Protocol};
use crate::llg::DeviceParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gene {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

impl Gene {
    fn new(name: &str, min: f64, max: f64) -> Self {
        Self { name: name.to_string(), min, max }
    }

    pub fn decode(&self, g: f64) -> f64 {
        self.min + g.clamp(0.0, 1.0) * (self.max - self.min)
    }

    pub fn encode(&self, v: f64) -> f64 {
        ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

/// A decoded genome: device parameters and the protocol that drives them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub params: DeviceParams,
    pub protocol: Protocol,
}

/// Ordered optimization ranges. Fields without a gene keep their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub kind: DeviceKind,
    pub genes: Vec<Gene>,
}

impl ParamSpace {
    /// Searchable ranges for each device family, with t_relax over
    /// the same range as t_pulse. `j_sot` is a magnitude; the pulse keeps
    /// the sign of the default protocol.
    pub fn searchable(kind: DeviceKind) -> Self {
        let mut genes = vec![
            Gene::new("alpha", 0.01, 0.1),
            Gene::new("k_i", 0.2e-3, 1e-3),
            Gene::new("m_s", 0.3e6, 2e6),
            Gene::new("r_p", 500.0, 50_000.0),
        ];
        if kind == DeviceKind::Sot {
            genes.push(Gene::new("eta", 0.1, 2.0));
            genes.push(Gene::new("j_sot", 0.01e12, 5e12));
        }
        genes.push(Gene::new("t_pulse", 0.5e-9, 75e-9));
        genes.push(Gene::new("t_relax", 0.5e-9, 75e-9));
        Self { kind, genes }
    }

    pub fn dims(&self) -> usize {
        self.genes.len()
    }

    pub fn gene(&self, name: &str) -> Option<&Gene> {
        self.genes.iter().find(|g| g.name == name)
    }

    pub fn decode(&self, genome: &[f64]) -> Candidate {
        self.decode_from(&Candidate { params: DeviceParams::default(), protocol: Protocol::default_for(self.kind) }, genome)
    }

    /// Decode on top of `base`: fields without a gene keep the base values.
    pub fn decode_from(&self, base: &Candidate, genome: &[f64]) -> Candidate {
        let Candidate { mut params, mut protocol } = base.clone();
        for (gene, &g) in self.genes.iter().zip(genome) {
            set_field(&mut params, &mut protocol, &gene.name, gene.decode(g));
        }
        Candidate { params, protocol }
    }

    pub fn encode(&self, c: &Candidate) -> Vec<f64> {
        self.genes.iter().map(|g| g.encode(get_field(&c.params, &c.protocol, &g.name))).collect()
    }

    pub fn decode_named(&self, genome: &[f64]) -> BTreeMap<String, f64> {
        self.genes.iter().zip(genome).map(|(gene, &g)| (gene.name.clone(), gene.decode(g))).collect()
    }

    /// Value of gene `name` in `c`, in physical units.
    pub fn value(&self, c: &Candidate, name: &str) -> Option<f64> {
        self.gene(name).map(|g| get_field(&c.params, &c.protocol, &g.name))
    }

    /// Names of fields of `c` that fall outside their gene range.
    pub fn out_of_range(&self, c: &Candidate) -> Vec<String> {
        self.genes.iter().filter(|g| !g.contains(get_field(&c.params, &c.protocol, &g.name))).map(|g| g.name.clone()).collect()
    }
}

fn set_field(p: &mut DeviceParams, proto: &mut Protocol, name: &str, v: f64) {
    match (name, proto) {
        ("alpha", _) => p.alpha = v,
        ("k_i", _) => p.k_i = v,
        ("m_s", _) => p.m_s = v,
        ("r_p", _) => p.r_p = v,
        ("eta", _) => p.eta = v,
        ("j_sot", Protocol::Sot(s)) => s.j_sot = v * s.j_sot.signum(),
        ("t_pulse", Protocol::Sot(s)) => s.t_pulse = v,
        ("t_relax", Protocol::Sot(s)) => s.t_relax = v,
        ("t_pulse", Protocol::Stt(s)) => s.t_pulse = v,
        ("t_relax", Protocol::Stt(s)) => s.t_relax = v,
        (other, _) => unreachable!("no field named {other}"),
    }
}

fn get_field(p: &DeviceParams, proto: &Protocol, name: &str) -> f64 {
    match (name, proto) {
        ("alpha", _) => p.alpha,
        ("k_i", _) => p.k_i,
        ("m_s", _) => p.m_s,
        ("r_p", _) => p.r_p,
        ("eta", _) => p.eta,
        ("j_sot", Protocol::Sot(s)) => s.j_sot.abs(),
        ("t_pulse", Protocol::Sot(s)) => s.t_pulse,
        ("t_relax", Protocol::Sot(s)) => s.t_relax,
        ("t_pulse", Protocol::Stt(s)) => s.t_pulse,
        ("t_relax", Protocol::Stt(s)) => s.t_relax,
        (other, _) => unreachable!("no field named {other}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_bounds_and_rp_midpoint() {
        let s = ParamSpace::searchable(DeviceKind::Sot);
        let mut g = vec![0.5; s.dims()];
        g[0] = 0.0;
        assert_eq!(s.decode(&g).params.alpha, 0.01);
        g[0] = 1.0;
        assert_eq!(s.decode(&g).params.alpha, 0.1);
        assert_eq!(s.decode(&g).params.r_p, 25_250.0);
    }

    #[test]
    fn gene_lists() {
        let names = |k| ParamSpace::searchable(k).genes.iter().map(|g| g.name.clone()).collect::<Vec<_>>();
        assert_eq!(names(DeviceKind::Sot), ["alpha", "k_i", "m_s", "r_p", "eta", "j_sot", "t_pulse", "t_relax"]);
        assert_eq!(names(DeviceKind::Stt), ["alpha", "k_i", "m_s", "r_p", "t_pulse", "t_relax"]);
    }

    #[test]
    fn sot_current_keeps_its_sign() {
        let s = ParamSpace::searchable(DeviceKind::Sot);
        let c = s.decode(&[1.0; 8]);
        match c.protocol {
            Protocol::Sot(p) => assert_eq!(p.j_sot, -5e12),
            _ => unreachable!(),
        }
    }

    #[test]
    fn decode_from_keeps_base_fields() {
        let s = ParamSpace::searchable(DeviceKind::Sot);
        let base = Candidate {
            params: DeviceParams { temperature: 350.0, ..DeviceParams::default() },
            protocol: Protocol::default_for(DeviceKind::Sot),
        };
        let c = s.decode_from(&base, &[0.0; 8]);
        assert_eq!(c.params.temperature, 350.0);
        assert_eq!(c.params.alpha, 0.01);
        assert_eq!(s.value(&c, "alpha"), Some(0.01));
        assert_eq!(s.value(&c, "nope"), None);
    }

    #[test]
    fn out_of_range_is_reported() {
        let s = ParamSpace::searchable(DeviceKind::Stt);
        let mut c = s.decode(&[0.5; 6]);
        assert!(s.out_of_range(&c).is_empty());
        c.params.alpha = 0.5;
        assert_eq!(s.out_of_range(&c), vec!["alpha".to_string()]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn decode_encode_round_trip(g in prop::collection::vec(0.0f64..=1.0, 8)) {
                let s = ParamSpace::searchable(DeviceKind::Sot);
                let back = s.encode(&s.decode(&g));
                for (a, b) in g.iter().zip(&back) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }

            #[test]
            fn decoded_values_respect_ranges(g in prop::collection::vec(-0.5f64..1.5, 6)) {
                let s = ParamSpace::searchable(DeviceKind::Stt);
                prop_assert!(s.out_of_range(&s.decode(&g)).is_empty());
            }
        }
    }
}
