use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ArchiveRecord, Evaluator, OptimizerError};
use crate::metrics::Evaluation;
use crate::par;
use crate::rng::{self, SimRng};

/// Environment state: the last action, its score and the best score seen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub genome: Vec<f64>,
    pub score: f64,
    pub best: f64,
    pub steps: usize,
}

/// What the agent sees after each step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub params: Vec<f64>,
    pub score: f64,
    pub best: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    /// −1 invalid, +1 strict improvement of the best score, else 0.
    pub reward: i32,
    pub evaluation: Evaluation,
}

/// Step/reward wrapper around an evaluator. Every step is one evaluation
/// and is appended to the archive.
pub struct CodesignEnv<'a, E: Evaluator + ?Sized> {
    ev: &'a E,
    seed: u64,
    state: EnvState,
    pub archive: Vec<ArchiveRecord>,
    /// Label stored as the generation number of archive records.
    pub iteration: usize,
}

impl<'a, E: Evaluator + ?Sized> CodesignEnv<'a, E> {
    pub fn new(ev: &'a E, seed: u64) -> Self {
        let mut env =
            Self { ev, seed, state: EnvState { genome: Vec::new(), score: 0.0, best: 0.0, steps: 0 }, archive: Vec::new(), iteration: 0 };
        env.reset();
        env
    }

    /// Start a new episode. The best score starts at +∞ so the first valid
    /// action is always an improvement.
    pub fn reset(&mut self) -> Observation {
        self.state = EnvState { genome: vec![0.5; self.ev.dims()], score: f64::INFINITY, best: f64::INFINITY, steps: 0 };
        self.observe()
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn dims(&self) -> usize {
        self.ev.dims()
    }

    fn observe(&self) -> Observation {
        Observation { params: self.state.genome.clone(), score: self.state.score, best: self.state.best }
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome, OptimizerError> {
        Ok(self.step_batch(&[action.to_vec()])?.pop().expect("one outcome per action"))
    }

    /// Evaluate several actions (in parallel when enabled), then apply them
    /// to the state in order.
    pub fn step_batch(&mut self, actions: &[Vec<f64>]) -> Result<Vec<StepOutcome>, OptimizerError> {
        let start = self.archive.len();
        let clamped: Vec<Vec<f64>> = actions.iter().map(|a| a.iter().map(|g| g.clamp(0.0, 1.0)).collect()).collect();
        let seeds: Vec<u64> = (0..clamped.len()).map(|i| rng::child_seed(self.seed, (start + i) as u64)).collect();
        let ev = self.ev;
        let results = par::map_indexed(clamped.len(), |i| ev.evaluate(&clamped[i], seeds[i]));
        let mut out = Vec::with_capacity(clamped.len());
        for (i, (genome, res)) in clamped.into_iter().zip(results).enumerate() {
            let e = res.map_err(|message| OptimizerError::EvaluatorFailure { index: start + i, message, archive: self.archive.clone() })?;
            let reward = if !e.valid {
                -1
            } else if e.score < self.state.best {
                self.state.best = e.score;
                1
            } else {
                0
            };
            self.archive.push(ArchiveRecord::new(
                start + i,
                self.iteration,
                "cem",
                seeds[i],
                genome.clone(),
                self.ev.describe(&genome),
                &e,
            ));
            self.state.genome = genome;
            self.state.score = e.score;
            self.state.steps += 1;
            out.push(StepOutcome { observation: self.observe(), reward, evaluation: e });
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CemConfig {
    pub batch: usize,
    pub elites: usize,
    pub iterations: usize,
    pub init_sigma: f64,
    pub min_sigma: f64,
    pub seed: u64,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self { batch: 60, elites: 6, iterations: 100, init_sigma: 0.3, min_sigma: 1e-3, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CemResult {
    pub best_genome: Vec<f64>,
    pub best_score: f64,
    /// Sampling mean after each iteration.
    pub means: Vec<Vec<f64>>,
    pub rewards: Vec<i32>,
    pub archive: Vec<ArchiveRecord>,
}

/// Mean and standard deviation of the `n_elite` lowest-scoring samples.
pub fn cem_update(batch: &[Vec<f64>], scores: &[f64], n_elite: usize) -> (Vec<f64>, Vec<f64>) {
    let mut order: Vec<usize> = (0..batch.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let elite: Vec<&Vec<f64>> = order.iter().take(n_elite.max(1)).map(|&i| &batch[i]).collect();
    let d = batch[0].len();
    let n = elite.len() as f64;
    let mean: Vec<f64> = (0..d).map(|k| elite.iter().map(|g| g[k]).sum::<f64>() / n).collect();
    let sd: Vec<f64> = (0..d).map(|k| (elite.iter().map(|g| (g[k] - mean[k]).powi(2)).sum::<f64>() / n).sqrt()).collect();
    (mean, sd)
}

/// Cross-entropy agent: sample a batch of actions from a diagonal Gaussian,
/// step the environment with them, refit the Gaussian to the elites.
/// `observer` sees each iteration's new archive records.
pub fn cem_agent<E, O>(env: &mut CodesignEnv<'_, E>, cfg: &CemConfig, mut observer: O) -> Result<CemResult, OptimizerError>
where
    E: Evaluator + ?Sized,
    O: FnMut(usize, &[ArchiveRecord]),
{
    if cfg.batch == 0 || cfg.elites == 0 || cfg.elites > cfg.batch {
        return Err(OptimizerError::InvalidConfig(format!("need 0 < elites <= batch (batch {}, elites {})", cfg.batch, cfg.elites)));
    }
    let d = env.dims();
    let mut rng: SimRng = rng::stream(cfg.seed, u64::MAX);
    let mut mean = vec![0.5; d];
    let mut sigma = vec![cfg.init_sigma; d];
    let mut means = Vec::with_capacity(cfg.iterations);
    let mut rewards = Vec::with_capacity(cfg.iterations * cfg.batch);
    let (mut best_genome, mut best_score) = (mean.clone(), f64::INFINITY);
    for it in 0..cfg.iterations {
        env.iteration = it;
        let batch: Vec<Vec<f64>> = (0..cfg.batch)
            .map(|_| {
                (0..d)
                    .map(|k| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        (mean[k] + sigma[k] * z).clamp(0.0, 1.0)
                    })
                    .collect()
            })
            .collect();
        let start = env.archive.len();
        let outcomes = env.step_batch(&batch)?;
        observer(it, &env.archive[start..]);
        let scores: Vec<f64> = outcomes.iter().map(|o| if o.evaluation.valid { o.evaluation.score } else { f64::INFINITY }).collect();
        for (g, (o, &s)) in batch.iter().zip(outcomes.iter().zip(&scores)) {
            rewards.push(o.reward);
            if s < best_score {
                best_score = s;
                best_genome = g.clone();
            }
        }
        let (m, sd) = cem_update(&batch, &scores, cfg.elites);
        mean = m;
        sigma = sd.into_iter().map(|s| s.max(cfg.min_sigma)).collect();
        means.push(mean.clone());
    }
    Ok(CemResult { best_genome, best_score, means, rewards, archive: env.archive.clone() })
}
