use std::cmp::Ordering;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ArchiveRecord, Evaluator, OptimizerError};
use crate::metrics::Evaluation;
use crate::par;
use crate::rng::{self, SimRng};

/// Index of the random stream that drives selection and variation; each
/// evaluation uses its own stream below this one.
const OPERATOR_STREAM: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Nsga2Config {
    pub pop_size: usize,
    pub generations: usize,
    /// Standard deviation of Gaussian mutation in genome units.
    pub mutation_sigma: f64,
    /// Per-gene mutation probability; `None` means 1/d.
    pub mutation_prob: Option<f64>,
    pub crossover_prob: f64,
    pub seed: u64,
}

impl Default for Nsga2Config {
    fn default() -> Self {
        Self { pop_size: 50, generations: 50, mutation_sigma: 0.1, mutation_prob: None, crossover_prob: 0.8, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genome: Vec<f64>,
    pub objectives: [f64; 2],
    pub valid: bool,
    pub score: f64,
    pub rank: usize,
    pub crowding: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Nsga2Result {
    pub population: Vec<Individual>,
    pub archive: Vec<ArchiveRecord>,
    /// Lowest Config_Score in the population after each generation.
    pub best_scores: Vec<f64>,
}

/// `a` is no worse in every objective and better in at least one.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Deb's fast non-dominated sort. Fronts hold indices in ascending order.
pub fn fast_nondominated_sort<P: AsRef<[f64]>>(points: &[P]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut counts = vec![0usize; n];
    let mut fronts: Vec<Vec<usize>> = vec![Vec::new()];
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (points[i].as_ref(), points[j].as_ref());
            if dominates(a, b) {
                dominated_by[i].push(j);
                counts[j] += 1;
            } else if dominates(b, a) {
                dominated_by[j].push(i);
                counts[i] += 1;
            }
        }
    }
    fronts[0] = (0..n).filter(|&i| counts[i] == 0).collect();
    let mut k = 0;
    while !fronts[k].is_empty() {
        let mut next = Vec::new();
        for &i in &fronts[k] {
            for &j in &dominated_by[i] {
                counts[j] -= 1;
                if counts[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(next);
        k += 1;
    }
    fronts.pop();
    fronts
}

/// Crowding distance of each member of `front` (same order). Boundary
/// points get infinity; an objective with zero range adds nothing.
pub fn crowding_distance<P: AsRef<[f64]>>(points: &[P], front: &[usize]) -> Vec<f64> {
    let m = front.len();
    let mut dist = vec![0.0; m];
    if m <= 2 {
        return vec![f64::INFINITY; m];
    }
    let n_obj = points[front[0]].as_ref().len();
    for o in 0..n_obj {
        let val = |i: usize| points[front[i]].as_ref()[o];
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| val(a).partial_cmp(&val(b)).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        let (lo, hi) = (val(order[0]), val(order[m - 1]));
        dist[order[0]] = f64::INFINITY;
        dist[order[m - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in 1..m - 1 {
            dist[order[w]] += (val(order[w + 1]) - val(order[w - 1])) / range;
        }
    }
    dist
}

fn assign_rank_and_crowding(pop: &mut [Individual]) {
    let objs: Vec<[f64; 2]> = pop.iter().map(|i| i.objectives).collect();
    for (r, front) in fast_nondominated_sort(&objs).iter().enumerate() {
        let cd = crowding_distance(&objs, front);
        for (&i, d) in front.iter().zip(cd) {
            pop[i].rank = r;
            pop[i].crowding = d;
        }
    }
}

/// Crowded-comparison: lower rank first, then larger crowding.
fn crowded_better(a: &Individual, b: &Individual) -> bool {
    a.rank < b.rank || (a.rank == b.rank && a.crowding > b.crowding)
}

fn tournament<'a>(pop: &'a [Individual], rng: &mut SimRng) -> &'a Individual {
    let a = &pop[rng.random_range(0..pop.len())];
    let b = &pop[rng.random_range(0..pop.len())];
    if crowded_better(b, a) {
        b
    } else {
        a
    }
}

fn mutate(genome: &mut [f64], sigma: f64, prob: f64, rng: &mut SimRng) {
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    for g in genome.iter_mut() {
        if rng.random::<f64>() < prob {
            *g = (*g + normal.sample(rng)).clamp(0.0, 1.0);
        }
    }
}

struct Run<'a, E: Evaluator + ?Sized, O> {
    ev: &'a E,
    seed: u64,
    archive: Vec<ArchiveRecord>,
    observer: O,
}

impl<E: Evaluator + ?Sized, O: FnMut(usize, &[ArchiveRecord])> Run<'_, E, O> {
    /// Evaluate a batch (possibly in parallel) and append it to the archive
    /// in batch order.
    fn evaluate(&mut self, genomes: Vec<Vec<f64>>, generation: usize) -> Result<Vec<Individual>, OptimizerError> {
        let start = self.archive.len();
        let seeds: Vec<u64> = (0..genomes.len()).map(|i| rng::child_seed(self.seed, (start + i) as u64)).collect();
        let ev = self.ev;
        let results: Vec<Result<Evaluation, String>> = par::map_indexed(genomes.len(), |i| ev.evaluate(&genomes[i], seeds[i]));
        let mut out = Vec::with_capacity(genomes.len());
        for (i, (genome, res)) in genomes.into_iter().zip(results).enumerate() {
            let e = match res {
                Ok(e) => e,
                Err(message) => {
                    (self.observer)(generation, &self.archive[start..]);
                    return Err(OptimizerError::EvaluatorFailure { index: start + i, message, archive: std::mem::take(&mut self.archive) });
                }
            };
            let params = self.ev.describe(&genome);
            self.archive.push(ArchiveRecord::new(start + i, generation, "nsga2", seeds[i], genome.clone(), params, &e));
            out.push(Individual {
                genome,
                objectives: [e.objectives.energy, e.objectives.kl],
                valid: e.valid,
                score: e.score,
                rank: 0,
                crowding: 0.0,
            });
        }
        (self.observer)(generation, &self.archive[start..]);
        Ok(out)
    }
}

/// Elitist NSGA-II. `observer` sees each generation's new archive records
/// as soon as they are evaluated.
pub fn nsga2_run<E, O>(cfg: &Nsga2Config, ev: &E, observer: O) -> Result<Nsga2Result, OptimizerError>
where
    E: Evaluator + ?Sized,
    O: FnMut(usize, &[ArchiveRecord]),
{
    let d = ev.dims();
    if cfg.pop_size < 2 || d == 0 {
        return Err(OptimizerError::InvalidConfig(format!(
            "need a population of at least 2 and at least one gene (pop {}, genes {d})",
            cfg.pop_size
        )));
    }
    if !(cfg.mutation_sigma >= 0.0) || !(0.0..=1.0).contains(&cfg.crossover_prob) {
        return Err(OptimizerError::InvalidConfig("mutation sigma must be >= 0 and crossover probability in [0, 1]".into()));
    }
    let pm = cfg.mutation_prob.unwrap_or(1.0 / d as f64);
    let mut rng = rng::stream(cfg.seed, OPERATOR_STREAM);
    let mut run = Run { ev, seed: cfg.seed, archive: Vec::new(), observer };

    let initial: Vec<Vec<f64>> = (0..cfg.pop_size).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
    let mut pop = run.evaluate(initial, 0)?;
    assign_rank_and_crowding(&mut pop);
    let best_of = |pop: &[Individual]| pop.iter().map(|i| i.score).fold(f64::INFINITY, f64::min);
    let mut best_scores = vec![best_of(&pop)];

    for gen in 1..=cfg.generations {
        let mut children = Vec::with_capacity(cfg.pop_size);
        while children.len() < cfg.pop_size {
            let p1 = tournament(&pop, &mut rng).genome.clone();
            let p2 = tournament(&pop, &mut rng).genome.clone();
            let (mut c1, mut c2) = (p1, p2);
            if rng.random::<f64>() < cfg.crossover_prob {
                for k in 0..d {
                    if rng.random::<bool>() {
                        std::mem::swap(&mut c1[k], &mut c2[k]);
                    }
                }
            }
            mutate(&mut c1, cfg.mutation_sigma, pm, &mut rng);
            mutate(&mut c2, cfg.mutation_sigma, pm, &mut rng);
            children.push(c1);
            if children.len() < cfg.pop_size {
                children.push(c2);
            }
        }
        let offspring = run.evaluate(children, gen)?;
        let mut merged: Vec<Individual> = pop.into_iter().chain(offspring).collect();
        assign_rank_and_crowding(&mut merged);
        let objs: Vec<[f64; 2]> = merged.iter().map(|i| i.objectives).collect();
        // the lowest-score individual is never cut from a truncated front
        let best = (0..merged.len())
            .min_by(|&a, &b| merged[a].score.partial_cmp(&merged[b].score).unwrap_or(Ordering::Equal).then(a.cmp(&b)))
            .expect("non-empty population");
        let mut next: Vec<usize> = Vec::with_capacity(cfg.pop_size);
        for front in fast_nondominated_sort(&objs) {
            if next.len() + front.len() <= cfg.pop_size {
                next.extend(front);
            } else {
                let mut rest = front;
                rest.sort_by(|&a, &b| {
                    (b == best)
                        .cmp(&(a == best))
                        .then(merged[b].crowding.partial_cmp(&merged[a].crowding).unwrap_or(Ordering::Equal))
                        .then(a.cmp(&b))
                });
                next.extend(rest.into_iter().take(cfg.pop_size - next.len()));
            }
            if next.len() == cfg.pop_size {
                break;
            }
        }
        next.sort_unstable();
        let mut slots: Vec<Option<Individual>> = merged.into_iter().map(Some).collect();
        pop = next.into_iter().map(|i| slots[i].take().expect("each index chosen once")).collect();
        assign_rank_and_crowding(&mut pop);
        best_scores.push(best_of(&pop));
    }
    Ok(Nsga2Result { population: pop, archive: run.archive, best_scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ObjectivePair;
    use crate::optimizer::{hypervolume_2d, pareto_front};

    /// Minimize (g1, (1 − g1)² + g2) on the unit square.
    struct Analytic;
    impl Evaluator for Analytic {
        fn dims(&self) -> usize {
            2
        }
        fn evaluate(&self, g: &[f64], _seed: u64) -> Result<Evaluation, String> {
            let (e, kl) = (g[0], (1.0 - g[0]).powi(2) + g[1]);
            Ok(Evaluation { objectives: ObjectivePair { energy: e, kl }, valid: true, score: e + kl, reason: None, run: None })
        }
    }

    fn brute_force_fronts(points: &[[f64; 2]]) -> Vec<Vec<usize>> {
        let mut remaining: Vec<usize> = (0..points.len()).collect();
        let mut fronts = Vec::new();
        while !remaining.is_empty() {
            let front: Vec<usize> =
                remaining.iter().copied().filter(|&i| !remaining.iter().any(|&j| dominates(&points[j], &points[i]))).collect();
            remaining.retain(|i| !front.contains(i));
            fronts.push(front);
        }
        fronts
    }

    #[test]
    fn small_fronts() {
        assert_eq!(fast_nondominated_sort(&[[1.0, 2.0], [2.0, 1.0], [3.0, 3.0]]), vec![vec![0, 1], vec![2]]);
        assert_eq!(fast_nondominated_sort(&[[1.0, 1.0]; 4]), vec![vec![0, 1, 2, 3]]);
        assert_eq!(fast_nondominated_sort(&[[3.0, 3.0], [1.0, 1.0], [2.0, 2.0]]), vec![vec![1], vec![2], vec![0]]);
        assert!(fast_nondominated_sort::<[f64; 2]>(&[]).is_empty());
    }

    #[test]
    fn crowding_examples() {
        let pts = [[0.0, 2.0], [1.0, 1.0], [2.0, 0.0]];
        let cd = crowding_distance(&pts, &[0, 1, 2]);
        assert_eq!(cd[1], 2.0);
        assert!(cd[0].is_infinite() && cd[2].is_infinite());
        assert!(crowding_distance(&pts, &[0, 2]).iter().all(|d| d.is_infinite()));
        let flat = [[0.0, 1.0], [1.0, 1.0], [3.0, 1.0]];
        assert_eq!(crowding_distance(&flat, &[0, 1, 2])[1], 1.0);
    }

    #[test]
    fn zero_generations_returns_initial_population() {
        let cfg = Nsga2Config { pop_size: 10, generations: 0, seed: 4, ..Nsga2Config::default() };
        let r = nsga2_run(&cfg, &Analytic, |_, _| {}).unwrap();
        assert_eq!(r.population.len(), 10);
        assert_eq!(r.archive.len(), 10);
    }

    #[test]
    fn budget_and_determinism() {
        let cfg = Nsga2Config { pop_size: 12, generations: 7, seed: 9, ..Nsga2Config::default() };
        let mut seen = 0;
        let a = nsga2_run(&cfg, &Analytic, |_, recs| seen += recs.len()).unwrap();
        let b = nsga2_run(&cfg, &Analytic, |_, _| {}).unwrap();
        assert_eq!(a.archive.len(), 12 * 8);
        assert_eq!(seen, 12 * 8);
        assert_eq!(a.archive, b.archive);
        assert_eq!(a.population, b.population);
    }

    #[test]
    fn elitism_keeps_best_score() {
        let cfg = Nsga2Config { pop_size: 16, generations: 20, seed: 1, ..Nsga2Config::default() };
        let r = nsga2_run(&cfg, &Analytic, |_, _| {}).unwrap();
        assert_eq!(r.best_scores.len(), 21);
        assert!(r.best_scores.windows(2).all(|w| w[1] <= w[0]), "{:?}", r.best_scores);
        // the final population still holds a point on the archive's front
        let front = pareto_front(&r.archive).unwrap();
        assert!(r.population.iter().any(|i| front.iter().any(|f| f.objectives() == i.objectives)));
    }

    #[test]
    fn failure_keeps_archive() {
        struct Flaky;
        impl Evaluator for Flaky {
            fn dims(&self) -> usize {
                1
            }
            fn evaluate(&self, g: &[f64], _seed: u64) -> Result<Evaluation, String> {
                if g[0] > 0.9 {
                    Err("boom".into())
                } else {
                    Analytic.evaluate(&[g[0], 0.0], 0)
                }
            }
        }
        let cfg = Nsga2Config { pop_size: 40, generations: 5, seed: 2, ..Nsga2Config::default() };
        match nsga2_run(&cfg, &Flaky, |_, _| {}) {
            Err(OptimizerError::EvaluatorFailure { index, archive, .. }) => assert_eq!(archive.len(), index),
            other => panic!("expected a failure, got {:?}", other.map(|r| r.archive.len())),
        }
    }

    #[test]
    fn beats_random_search() {
        let reference = [1.1, 2.1];
        let mut wins = 0;
        for seed in 0..20u64 {
            let cfg = Nsga2Config { pop_size: 50, generations: 50, seed, ..Nsga2Config::default() };
            let r = nsga2_run(&cfg, &Analytic, |_, _| {}).unwrap();
            let ga: Vec<[f64; 2]> = r.population.iter().map(|i| i.objectives).collect();
            let mut rng = rng::stream(seed, 77);
            let random: Vec<[f64; 2]> = (0..1000)
                .map(|_| {
                    let g = [rng.random::<f64>(), rng.random::<f64>()];
                    [g[0], (1.0 - g[0]).powi(2) + g[1]]
                })
                .collect();
            if hypervolume_2d(&ga, reference) > hypervolume_2d(&random, reference) {
                wins += 1;
            }
        }
        assert!(wins >= 19, "wins = {wins}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn sort_matches_brute_force(pts in prop::collection::vec((0u8..8, 0u8..8), 0..40)) {
                let points: Vec<[f64; 2]> = pts.iter().map(|&(a, b)| [a as f64, b as f64]).collect();
                let mut got = fast_nondominated_sort(&points);
                let mut want = brute_force_fronts(&points);
                for f in got.iter_mut().chain(want.iter_mut()) {
                    f.sort_unstable();
                }
                prop_assert_eq!(got, want);
            }

            #[test]
            fn mutation_stays_in_the_cube(g in prop::collection::vec(0.0f64..=1.0, 1..12), sigma in 0.0f64..2.0, seed in 0u64..1000) {
                let mut genome = g.clone();
                let mut rng = rng::stream(seed, 0);
                mutate(&mut genome, sigma, 1.0, &mut rng);
                prop_assert!(genome.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
