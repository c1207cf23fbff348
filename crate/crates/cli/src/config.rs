//! Run configuration: TOML file merged over defaults, then `key=value`
//! overrides merged over the file. Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use mtj_codesign::device::ProtocolSot;
use mtj_codesign::metrics::{EvalConfig, PhysicsBudget};
use mtj_codesign::optimizer::{Backend, Candidate, ParamSpace};
use mtj_codesign::target::{DistributionSpec, ParticleSetup, Target};
use mtj_codesign::{DeviceKind, DeviceParams, Protocol, ProtocolStt, SimConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use mtj_codesign::device::SensitivityConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("override '{0}' is not of the form key=value")]
    BadOverride(String),
    #[error("{name} = {value:e} is outside the searchable range [{min:e}, {max:e}]")]
    OutOfRange { name: String, value: f64, min: f64, max: f64 },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoinKind {
    Ideal,
    Surrogate,
    Device,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Nsga2,
    Cem,
}

/// Integration settings; the seed comes from the top-level `seed`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub dt: f64,
    pub renorm_every: usize,
    pub record_stride: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        Self { dt: 1e-12, renorm_every: 1, record_stride: 100 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub n_flips: usize,
    pub record_trajectory: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { n_flips: 50, record_trajectory: true }
    }
}

/// Bias sweep; missing bounds fall back to the device kind's window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScurveSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j_max: Option<f64>,
    pub n_points: usize,
    pub n_per_point: usize,
}

impl Default for ScurveSection {
    fn default() -> Self {
        Self { j_min: None, j_max: None, n_points: 11, n_per_point: 200 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSection {
    pub coin: CoinKind,
    pub n_samples: usize,
}

impl Default for SampleSection {
    fn default() -> Self {
        Self { coin: CoinKind::Ideal, n_samples: 100_000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CemSection {
    pub batch: usize,
    pub elites: usize,
    pub iterations: usize,
    pub init_sigma: f64,
    pub min_sigma: f64,
}

impl Default for CemSection {
    fn default() -> Self {
        Self { batch: 60, elites: 6, iterations: 100, init_sigma: 0.3, min_sigma: 1e-3 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeSection {
    pub algorithm: Algorithm,
    pub backend: Backend,
    pub pop_size: usize,
    pub generations: usize,
    pub mutation_sigma: f64,
    /// Per-gene mutation probability; absent means 1/d.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mutation_prob: Option<f64>,
    pub crossover_prob: f64,
    pub top_k: usize,
    /// Samples used to re-score the top configurations after the search.
    pub final_samples: usize,
    pub cem: CemSection,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Nsga2,
            backend: Backend::Surrogate,
            pop_size: 50,
            generations: 50,
            mutation_sigma: 0.1,
            mutation_prob: None,
            crossover_prob: 0.8,
            top_k: 5,
            final_samples: 100_000,
            cem: CemSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeSection {
    /// Grid points per axis of the K_i × M_s anisotropy map.
    pub keff_points: usize,
    /// Relative half-width of the uniform parameter spread.
    pub spread: f64,
    pub n_devices: usize,
    pub n_points: usize,
    pub n_per_point: usize,
    /// Temperature offsets, K.
    pub delta_t: Vec<f64>,
    pub sensitivity: SensitivityConfig,
    pub exploration_bins: usize,
}

impl Default for AnalyzeSection {
    fn default() -> Self {
        Self {
            keff_points: 41,
            spread: 0.1,
            n_devices: 5,
            n_points: 11,
            n_per_point: 200,
            delta_t: vec![-20.0, -10.0, 10.0, 20.0],
            sensitivity: SensitivityConfig::default(),
            exploration_bins: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub device: DeviceKind,
    /// Master seed; every random stream of a run derives from it.
    pub seed: u64,
    /// Directory that receives timestamped run directories.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_root: Option<PathBuf>,
    pub params: DeviceParams,
    pub sot: ProtocolSot,
    pub stt: ProtocolStt,
    pub sim: SimSection,
    pub physics: PhysicsBudget,
    pub target: DistributionSpec,
    pub eval: EvalConfig,
    pub simulate: SimulateSection,
    pub scurve: ScurveSection,
    pub sample: SampleSection,
    pub optimize: OptimizeSection,
    pub analyze: AnalyzeSection,
    pub particle: ParticleSetup,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            device: DeviceKind::Sot,
            seed: 1,
            output_root: None,
            params: DeviceParams::default(),
            sot: ProtocolSot::default(),
            stt: ProtocolStt::default(),
            sim: SimSection::default(),
            physics: PhysicsBudget::default(),
            target: DistributionSpec::default(),
            eval: EvalConfig::default(),
            simulate: SimulateSection::default(),
            scurve: ScurveSection::default(),
            sample: SampleSection::default(),
            optimize: OptimizeSection::default(),
            analyze: AnalyzeSection::default(),
            particle: ParticleSetup::default(),
        }
    }
}

impl RunConfig {
    /// Defaults, then `file`, then `overrides` (`dotted.key=value`, value
    /// in TOML syntax or a bare string). Validated before returning.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table = Table::try_from(RunConfig::default()).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
            let layer: Table = toml::from_str(&text).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
            merge(&mut table, layer);
        }
        for o in overrides {
            merge(&mut table, override_table(o)?);
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn protocol(&self) -> Protocol {
        match self.device {
            DeviceKind::Sot => Protocol::Sot(self.sot),
            DeviceKind::Stt => Protocol::Stt(self.stt),
        }
    }

    pub fn candidate(&self) -> Candidate {
        Candidate { params: self.params.clone(), protocol: self.protocol() }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig { dt: self.sim.dt, seed: self.seed, renorm_every: self.sim.renorm_every, record_stride: self.sim.record_stride }
    }

    pub fn target(&self) -> Result<Target, ConfigError> {
        self.target.build().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Range and consistency checks, run before any simulation.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let space = ParamSpace::searchable(self.device);
        let c = self.candidate();
        if let Some(name) = space.out_of_range(&c).into_iter().next() {
            let g = space.gene(&name).expect("reported gene exists");
            let value = space.value(&c, &name).expect("reported gene exists");
            return Err(ConfigError::OutOfRange { name, value, min: g.min, max: g.max });
        }
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        self.params.validate().or_else(|e| invalid(e.to_string()))?;
        self.sim_config().validate().or_else(|e| invalid(e.to_string()))?;
        c.protocol.validate(&self.sim_config()).or_else(|e| invalid(e.to_string()))?;
        self.target()?;
        if self.seed > i64::MAX as u64 || self.particle.seed > i64::MAX as u64 {
            return invalid(format!("seeds must be below 2^63 to round-trip through TOML, got {}", self.seed.max(self.particle.seed)));
        }
        if self.eval.k == 0 || self.eval.k > mtj_codesign::tree::MAX_BITS {
            return invalid(format!("eval.k must lie in 1..={}, got {}", mtj_codesign::tree::MAX_BITS, self.eval.k));
        }
        if self.eval.n_samples == 0 || self.sample.n_samples == 0 || self.optimize.final_samples == 0 {
            return invalid("sample counts must be positive".into());
        }
        if self.scurve.n_per_point == 0 || self.scurve.n_points == 0 {
            return invalid("scurve.n_points and scurve.n_per_point must be positive".into());
        }
        Ok(())
    }
}

/// Recursive table merge. A table whose `family` tag changes is replaced
/// wholesale, so switching distribution families drops the old fields.
fn merge(base: &mut Table, layer: Table) {
    for (k, v) in layer {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(l)) if same_family(b, &l) => merge(b, l),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn same_family(a: &Table, b: &Table) -> bool {
    match (a.get("family"), b.get("family")) {
        (Some(x), Some(y)) => x == y,
        _ => true,
    }
}

fn override_table(o: &str) -> Result<Table, ConfigError> {
    let (key, raw) = o.split_once('=').ok_or_else(|| ConfigError::BadOverride(o.into()))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(ConfigError::BadOverride(o.into()));
    }
    let value = toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.trim().to_string()));
    let mut out = Table::new();
    let mut cur = &mut out;
    let parts: Vec<&str> = key.split('.').collect();
    for p in &parts[..parts.len() - 1] {
        cur = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new())).as_table_mut().expect("fresh table");
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(out)
}
