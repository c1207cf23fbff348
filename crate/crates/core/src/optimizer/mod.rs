//! Device-parameter search.
//!
//! Genomes live in the unit cube and decode linearly into device
//! parameters. Two drivers share the same evaluator: NSGA-II over
//! (energy, KL), and a step/reward environment driven by a cross-entropy
//! agent.

mod archive;
mod env;
mod nsga2;
mod space;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::DeviceKind;
use crate::device::Protocol;
use crate::llg::DeviceParams;
use crate::llg::SimConfig;
use crate::metrics::{evaluate_config, EvalConfig, Evaluation, MtjDevice, PhysicsBudget, SurrogateDevice};
use crate::target::Target;

pub use archive::{exploration_hist, hypervolume_2d, pareto_front, top_k};
pub use env::{cem_agent, cem_update, CemConfig, CemResult, CodesignEnv, EnvState, Observation, StepOutcome};
pub use nsga2::{crowding_distance, dominates, fast_nondominated_sort, nsga2_run, Individual, Nsga2Config, Nsga2Result};
pub use space::{Candidate, Gene, ParamSpace};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizerError {
    #[error("evaluation {index} failed: {message}")]
    EvaluatorFailure { index: usize, message: String, archive: Vec<ArchiveRecord> },
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error("archive is empty")]
    EmptyArchive,
}

/// Scores a genome. `Err` aborts the search; an unusable configuration is
/// an `Ok` evaluation marked invalid.
pub trait Evaluator: Sync {
    fn dims(&self) -> usize;
    fn evaluate(&self, genome: &[f64], seed: u64) -> Result<Evaluation, String>;
    /// Human-readable decoded parameters stored with each archive record.
    fn describe(&self, _genome: &[f64]) -> BTreeMap<String, f64> {
        BTreeMap::new()
    }
}

/// One line of the run archive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub index: usize,
    /// Generation (NSGA-II) or iteration (CEM).
    pub generation: usize,
    pub tag: String,
    pub seed: u64,
    pub genome: Vec<f64>,
    pub params: BTreeMap<String, f64>,
    pub energy: f64,
    pub kl: f64,
    pub score: f64,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl ArchiveRecord {
    pub fn new(
        index: usize,
        generation: usize,
        tag: &str,
        seed: u64,
        genome: Vec<f64>,
        params: BTreeMap<String, f64>,
        e: &Evaluation,
    ) -> Self {
        Self {
            index,
            generation,
            tag: tag.to_string(),
            seed,
            genome,
            params,
            energy: e.objectives.energy,
            kl: e.objectives.kl,
            score: e.score,
            valid: e.valid,
            reason: e.reason.clone(),
        }
    }

    pub fn objectives(&self) -> [f64; 2] {
        [self.energy, self.kl]
    }
}

/// Which device model scores a decoded candidate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Surrogate,
    Physics,
}

/// Decodes a genome on top of `base` and runs [`evaluate_config`] on the
/// resulting device.
#[derive(Clone, Debug)]
pub struct ConfigEvaluator {
    pub space: ParamSpace,
    pub base: Candidate,
    pub backend: Backend,
    pub target: Target,
    pub eval: EvalConfig,
    pub sim: SimConfig,
    pub budget: PhysicsBudget,
}

impl ConfigEvaluator {
    pub fn new(kind: DeviceKind, backend: Backend, target: Target, eval: EvalConfig) -> Self {
        Self {
            space: ParamSpace::searchable(kind),
            base: Candidate { params: DeviceParams::default(), protocol: Protocol::default_for(kind) },
            backend,
            target,
            eval,
            sim: SimConfig::default(),
            budget: PhysicsBudget::default(),
        }
    }
}

impl Evaluator for ConfigEvaluator {
    fn dims(&self) -> usize {
        self.space.dims()
    }

    fn evaluate(&self, genome: &[f64], seed: u64) -> Result<Evaluation, String> {
        let c = self.space.decode_from(&self.base, genome);
        Ok(match self.backend {
            Backend::Surrogate => evaluate_config(&SurrogateDevice::new(c.params, c.protocol), &self.target, &self.eval, seed),
            Backend::Physics => {
                let mut dev = MtjDevice::new(c.params, c.protocol).with_budget(&self.budget);
                dev.sim = SimConfig { seed, ..self.sim };
                evaluate_config(&dev, &self.target, &self.eval, seed)
            }
        })
    }

    fn describe(&self, genome: &[f64]) -> BTreeMap<String, f64> {
        self.space.decode_named(genome)
    }
}
