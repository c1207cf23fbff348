use mtj_codesign::device::DeviceKind;
use mtj_codesign::metrics::{evaluate_config, EvalConfig, SurrogateDevice};
use mtj_codesign::optimizer::{nsga2_run, pareto_front, Backend, ConfigEvaluator, Nsga2Config};
use mtj_codesign::target::{posterior_gamma, DistributionSpec, ParticleSetup, TruncatedDistribution};
use mtj_codesign::tree::{sample_many_blocks, IdealCoin};

#[test]
fn particle_posterior_feeds_the_target() {
    let g = posterior_gamma(&ParticleSetup::default().simulate()).unwrap();
    let d = TruncatedDistribution::new(g, 0.10, 0.24).unwrap();
    assert!((d.norm - 0.9979).abs() < 5e-4, "mass {}", d.norm);
}

#[test]
fn ideal_coins_reproduce_the_target() {
    let target = DistributionSpec::default().build().unwrap();
    let cfg = EvalConfig { n_samples: 100_000, ..EvalConfig::default() };
    let e = evaluate_config(&SurrogateDevice::ideal(), &target, &cfg, 3);
    assert!(e.valid);
    assert!(e.objectives.kl < 0.01, "kl {}", e.objectives.kl);
    assert_eq!(e.objectives.energy, 0.0);
    let run = e.run.unwrap();
    assert_eq!(run.total(), 100_000);
    assert_eq!(run.flips, 800_000);
}

#[test]
fn block_sampling_is_reproducible() {
    let target = TruncatedDistribution::reference();
    let a = sample_many_blocks(&target, 8, 5_000, |b| IdealCoin::new(9, b)).unwrap();
    let b = sample_many_blocks(&target, 8, 5_000, |b| IdealCoin::new(9, b)).unwrap();
    assert_eq!(a, b);
    let c = sample_many_blocks(&target, 8, 5_000, |b| IdealCoin::new(10, b)).unwrap();
    assert_ne!(a.counts, c.counts);
}

#[test]
fn surrogate_search_accounts_for_every_evaluation() {
    let ev = ConfigEvaluator::new(DeviceKind::Sot, Backend::Surrogate, DistributionSpec::default().build().unwrap(), EvalConfig::default());
    let cfg = Nsga2Config { pop_size: 8, generations: 3, seed: 4, ..Nsga2Config::default() };
    let mut seen = 0;
    let r = nsga2_run(&cfg, &ev, |_, recs| seen += recs.len()).unwrap();
    assert_eq!(r.archive.len(), 32);
    assert_eq!(seen, 32);
    assert!(r.best_scores.windows(2).all(|w| w[1] <= w[0]));
    let front = pareto_front(&r.archive).unwrap();
    assert!(front.iter().all(|f| f.valid));
    assert!(front
        .iter()
        .all(|f| !r.archive.iter().any(|q| q.valid && q.energy <= f.energy && q.kl <= f.kl && (q.energy < f.energy || q.kl < f.kl))));
}
