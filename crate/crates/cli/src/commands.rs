use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use mtj_codesign::device::{
    default_sweep, invert_scurve, keff, scurve_variation, simulate_bitstream, temperature_sensitivity, validate_device,
    write_trajectory_csv, SCurve, Sweep, ValidationConfig, ValidityReason,
};
use mtj_codesign::llg::MU0;
use mtj_codesign::metrics::{evaluate_config, EvalConfig, Evaluation, MtjDevice, SurrogateDevice};
use mtj_codesign::optimizer::{
    cem_agent, exploration_hist, nsga2_run, pareto_front, top_k, ArchiveRecord, CemConfig, CodesignEnv, ConfigEvaluator, Evaluator,
    Nsga2Config, OptimizerError, ParamSpace,
};
use mtj_codesign::target::{bin_probs, posterior_gamma, Cdf, DistributionSpec, GammaSpec};
use mtj_codesign::tree::write_histogram_csv;
use mtj_codesign::DeviceKind;
use serde_json::json;

use crate::config::{Algorithm, CoinKind, RunConfig};
use crate::{archive_file, Analysis, CliError, RunDir};

const BITS_CSV_HEADER: &str = "flip,bit,e_mtj_J,e_hm_J,e_total_J";
const SCURVE_CSV_HEADER: &str = "j_A_per_m2,p_one,n_flips,mean_energy_J,pulse_mean_abs_mz,p_isotonic";

pub fn simulate(cfg: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    let n = cfg.simulate.n_flips;
    let run = simulate_bitstream(&cfg.params, &cfg.protocol(), &cfg.sim_config(), cfg.seed, n, cfg.simulate.record_trajectory)?;
    write_trajectory_csv(dir.create_file("trajectory.csv")?, &run.trajectory)?;
    let mut w = dir.create_file("bits.csv")?;
    writeln!(w, "{BITS_CSV_HEADER}")?;
    for (i, (b, e)) in run.bits.iter().zip(&run.energies).enumerate() {
        writeln!(w, "{i},{},{:e},{:e},{:e}", *b as u8, e.e_mtj, e.e_hm, e.e_total)?;
    }
    w.flush()?;
    let total: f64 = run.energies.iter().map(|e| e.e_total).sum();
    let mean = if n == 0 { 0.0 } else { total / n as f64 };
    dir.write_json(
        "summary.json",
        &json!({
            "device": cfg.device,
            "n_flips": n,
            "ones": run.ones(),
            "p_one": run.p_one(),
            "total_energy_J": total,
            "mean_energy_J": mean,
        }),
    )?;
    println!("{} flips, {} ones (p = {:.4}), {:.3e} J per flip", n, run.ones(), run.p_one(), mean);
    Ok(())
}

fn sweep_of(cfg: &RunConfig, n_points: usize) -> Sweep {
    let d = default_sweep(cfg.device, n_points);
    Sweep::new(cfg.scurve.j_min.unwrap_or(d.j_min), cfg.scurve.j_max.unwrap_or(d.j_max), n_points)
}

fn write_scurve_csv<W: Write>(mut w: W, curve: &SCurve) -> std::io::Result<()> {
    writeln!(w, "{SCURVE_CSV_HEADER}")?;
    for (p, iso) in curve.points.iter().zip(curve.smoothed()) {
        writeln!(w, "{:e},{},{},{:e},{},{}", p.j, p.p_one, p.n_samples, p.mean_energy, p.pulse_mean_abs_mz, iso)?;
    }
    w.flush()
}

pub fn scurve(cfg: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    let n_points = cfg.scurve.n_points;
    if n_points == 1 {
        eprintln!("warning: a single-point S-curve cannot be inverted; no 50% current will be reported");
    }
    let vcfg =
        ValidationConfig { sweep: sweep_of(cfg, n_points), n_per_point: cfg.scurve.n_per_point, ..ValidationConfig::for_kind(cfg.device) };
    let report = validate_device(&cfg.params, &cfg.protocol(), &vcfg, &cfg.sim_config(), cfg.seed);
    if let ValidityReason::SimulationFailure(msg) = &report.reason {
        return Err(CliError::Unusable(format!("simulation failed: {msg}")));
    }
    let curve = report.curve.as_ref().expect("a completed sweep carries its curve");
    write_scurve_csv(dir.create_file("scurve.csv")?, curve)?;
    let j50 = invert_scurve(curve, 0.5).ok();
    dir.write_json(
        "summary.json",
        &json!({
            "device": cfg.device,
            "valid": report.valid,
            "reason": report.reason,
            "p_low": report.p_low,
            "p_high": report.p_high,
            "monotonicity_violations": report.monotonicity_violations,
            "stochastic_regime": report.stochastic_regime,
            "j50_A_per_m2": j50,
        }),
    )?;
    match j50 {
        Some(j) => println!("valid = {}, p(1) = 0.5 at {:.4e} A/m^2", report.valid, j),
        None => println!("valid = {}, no 50% crossing", report.valid),
    }
    Ok(())
}

fn score_with(cfg: &RunConfig, coin: CoinKind, ecfg: &EvalConfig, seed: u64) -> Result<Evaluation, CliError> {
    let target = cfg.target()?;
    Ok(match coin {
        CoinKind::Ideal => evaluate_config(&SurrogateDevice::ideal(), &target, ecfg, seed),
        CoinKind::Surrogate => evaluate_config(&SurrogateDevice::new(cfg.params.clone(), cfg.protocol()), &target, ecfg, seed),
        CoinKind::Device => {
            let mut dev = MtjDevice::new(cfg.params.clone(), cfg.protocol()).with_budget(&cfg.physics);
            dev.sim = cfg.sim_config();
            evaluate_config(&dev, &target, ecfg, seed)
        }
    })
}

pub fn sample(cfg: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    let ecfg = EvalConfig { n_samples: cfg.sample.n_samples, ..cfg.eval };
    let e = score_with(cfg, cfg.sample.coin, &ecfg, cfg.seed)?;
    if !e.valid {
        return Err(CliError::Unusable(e.reason.unwrap_or_else(|| "configuration is not a usable coin".into())));
    }
    let run = e.run.as_ref().expect("valid evaluations keep their histogram");
    let target = cfg.target()?;
    let (a, b) = target.support();
    write_histogram_csv(dir.create_file("histogram.csv")?, a, b, run, &bin_probs(&target, ecfg.k))?;
    dir.write_json(
        "summary.json",
        &json!({
            "coin": cfg.sample.coin,
            "device": cfg.device,
            "n_samples": ecfg.n_samples,
            "k": ecfg.k,
            "kl": e.objectives.kl,
            "energy_per_flip_J": e.objectives.energy,
            "flips": run.flips,
            "score": e.score,
            "w1": ecfg.w1,
            "w2": ecfg.w2,
        }),
    )?;
    println!("KL = {:.5}, {:.3e} J per flip, score {:.5}", e.objectives.kl, e.objectives.energy, e.score);
    Ok(())
}

/// Column name of a gene with its unit.
fn gene_column(name: &str) -> String {
    let unit = match name {
        "k_i" => "_J_per_m2",
        "m_s" => "_A_per_m",
        "r_p" => "_ohm",
        "j_sot" => "_A_per_m2",
        "t_pulse" | "t_relax" => "_s",
        _ => "",
    };
    format!("{name}{unit}")
}

fn gene_header(space: &ParamSpace) -> String {
    space.genes.iter().map(|g| gene_column(&g.name)).collect::<Vec<_>>().join(",")
}

fn gene_values(space: &ParamSpace, r: &ArchiveRecord) -> String {
    space
        .genes
        .iter()
        .zip(&r.genome)
        .map(|(g, &x)| r.params.get(&g.name).copied().unwrap_or_else(|| g.decode(x)))
        .map(|v| format!("{v:e}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn write_pareto(dir: &RunDir, space: &ParamSpace, archive: &[ArchiveRecord]) -> Result<usize, CliError> {
    let front = pareto_front(archive)?;
    let mut w = dir.create_file("pareto.csv")?;
    writeln!(w, "index,generation,{},energy_J_per_flip,kl_nats,score", gene_header(space))?;
    for r in &front {
        writeln!(w, "{},{},{},{:e},{},{}", r.index, r.generation, gene_values(space, r), r.energy, r.kl, r.score)?;
    }
    w.flush()?;
    Ok(front.len())
}

fn write_exploration(dir: &RunDir, space: &ParamSpace, archive: &[ArchiveRecord], bins: usize) -> Result<(), CliError> {
    let h = exploration_hist(archive, bins)?;
    let mut w = dir.create_file("exploration.csv")?;
    writeln!(w, "gene,bin,lower,upper,count")?;
    let bins = bins.max(1);
    for (gene, counts) in space.genes.iter().zip(&h) {
        for (i, c) in counts.iter().enumerate() {
            let lo = gene.decode(i as f64 / bins as f64);
            let hi = gene.decode((i + 1) as f64 / bins as f64);
            writeln!(w, "{},{i},{lo:e},{hi:e},{c}", gene_column(&gene.name))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn best_json(archive: &[ArchiveRecord]) -> serde_json::Value {
    match top_k(archive, 1).ok().and_then(|v| v.first().copied()) {
        Some(r) => json!({ "index": r.index, "score": r.score, "energy_J_per_flip": r.energy, "kl": r.kl, "params": r.params }),
        None => serde_json::Value::Null,
    }
}

pub fn optimize(cfg: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    let o = &cfg.optimize;
    let mut ev = ConfigEvaluator::new(cfg.device, o.backend, cfg.target()?, cfg.eval);
    ev.base = cfg.candidate();
    ev.sim = cfg.sim_config();
    ev.budget = cfg.physics;

    let mut sink = dir.create_file("archive.jsonl")?;
    let mut sink_err: Option<std::io::Error> = None;
    let total = match o.algorithm {
        Algorithm::Nsga2 => o.pop_size * (o.generations + 1),
        Algorithm::Cem => o.cem.batch * o.cem.iterations,
    };
    let mut done = 0usize;
    let mut best = f64::INFINITY;
    let observer = |gen: usize, records: &[ArchiveRecord]| {
        let res = records
            .iter()
            .try_for_each(|r| serde_json::to_writer(&mut sink, r).map_err(std::io::Error::from).and_then(|_| sink.write_all(b"\n")))
            .and_then(|_| sink.flush());
        if let Err(e) = res {
            sink_err.get_or_insert(e);
        }
        done += records.len();
        let valid = records.iter().filter(|r| r.valid).count();
        best = records.iter().filter(|r| r.valid).map(|r| r.score).fold(best, f64::min);
        eprintln!("{:?} step {gen}: {done}/{total} evaluations, {valid}/{} valid, best score {best:.5}", o.algorithm, records.len());
    };
    let result = match o.algorithm {
        Algorithm::Nsga2 => {
            let ncfg = Nsga2Config {
                pop_size: o.pop_size,
                generations: o.generations,
                mutation_sigma: o.mutation_sigma,
                mutation_prob: o.mutation_prob,
                crossover_prob: o.crossover_prob,
                seed: cfg.seed,
            };
            nsga2_run(&ncfg, &ev, observer).map(|r| (r.archive, r.best_scores))
        }
        Algorithm::Cem => {
            let ccfg = CemConfig {
                batch: o.cem.batch,
                elites: o.cem.elites,
                iterations: o.cem.iterations,
                init_sigma: o.cem.init_sigma,
                min_sigma: o.cem.min_sigma,
                seed: cfg.seed,
            };
            let mut env = CodesignEnv::new(&ev, cfg.seed);
            cem_agent(&mut env, &ccfg, observer).map(|r| (r.archive, Vec::new()))
        }
    };
    if let Some(e) = sink_err {
        return Err(e.into());
    }
    let (archive, best_scores) = match result {
        Ok(r) => r,
        Err(e @ OptimizerError::EvaluatorFailure { .. }) => {
            eprintln!("search aborted; the archive keeps every completed generation");
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };

    let space = &ev.space;
    let front_size = write_pareto(dir, space, &archive)?;
    write_exploration(dir, space, &archive, cfg.analyze.exploration_bins)?;

    let top = top_k(&archive, o.top_k)?;
    let mut final_ev = ev.clone();
    final_ev.eval.n_samples = o.final_samples;
    let mut w = dir.create_file(&format!("top{}.csv", o.top_k))?;
    writeln!(
        w,
        "rank,index,{},energy_J_per_flip,kl_nats,score,final_samples,final_energy_J_per_flip,final_kl_nats,final_score,final_valid",
        gene_header(space)
    )?;
    for (rank, r) in top.iter().enumerate() {
        eprintln!("re-scoring rank {} (evaluation {}) with {} samples", rank + 1, r.index, o.final_samples);
        let f = final_ev.evaluate(&r.genome, r.seed).map_err(CliError::Unusable)?;
        writeln!(
            w,
            "{},{},{},{:e},{},{},{},{:e},{},{},{}",
            rank + 1,
            r.index,
            gene_values(space, r),
            r.energy,
            r.kl,
            r.score,
            o.final_samples,
            f.objectives.energy,
            f.objectives.kl,
            f.score,
            f.valid
        )?;
    }
    w.flush()?;

    dir.write_json(
        "summary.json",
        &json!({
            "algorithm": o.algorithm,
            "backend": o.backend,
            "device": cfg.device,
            "evaluations": archive.len(),
            "valid": archive.iter().filter(|r| r.valid).count(),
            "pareto_size": front_size,
            "best": best_json(&archive),
            "best_score_per_generation": best_scores,
        }),
    )?;
    println!("{} evaluations, {} on the Pareto front", archive.len(), front_size);
    Ok(())
}

pub fn analyze(cfg: &RunConfig, dir: &RunDir, what: Analysis, archive: Option<&Path>) -> Result<(), CliError> {
    match what {
        Analysis::Keff => analyze_keff(cfg, dir),
        Analysis::Variation => analyze_variation(cfg, dir),
        Analysis::Temperature => analyze_temperature(cfg, dir),
        Analysis::Archive => {
            let path = archive.expect("checked before the run started");
            analyze_archive(cfg, dir, &archive_file(path))
        }
    }
}

fn analyze_keff(cfg: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    let space = ParamSpace::searchable(cfg.device);
    let (gk, gm) = (space.gene("k_i").expect("k_i gene"), space.gene("m_s").expect("m_s gene"));
    let n = cfg.analyze.keff_points.max(2);
    let at = |i: usize| i as f64 / (n - 1) as f64;
    let mut w = dir.create_file("keff.csv")?;
    writeln!(w, "k_i_J_per_m2,m_s_A_per_m,k_eff_J_per_m3,perpendicular")?;
    let mut perpendicular = 0usize;
    for i in 0..n {
        for j in 0..n {
            let p = mtj_codesign::DeviceParams { k_i: gk.decode(at(i)), m_s: gm.decode(at(j)), ..cfg.params.clone() };
            let k = keff(&p);
            perpendicular += (k > 0.0) as usize;
            writeln!(w, "{:e},{:e},{:e},{}", p.k_i, p.m_s, k, k > 0.0)?;
        }
    }
    w.flush()?;
    let mut w = dir.create_file("keff_border.csv")?;
    writeln!(w, "k_i_J_per_m2,m_s_border_A_per_m")?;
    for i in 0..n {
        let k_i = gk.decode(at(i));
        writeln!(w, "{:e},{:e}", k_i, (2.0 * k_i / (cfg.params.t_f * MU0)).sqrt())?;
    }
    w.flush()?;
    dir.write_json(
        "summary.json",
        &json!({ "t_f_m": cfg.params.t_f, "grid_points": n * n, "perpendicular_fraction": perpendicular as f64 / (n * n) as f64 }),
    )?;
    println!("{perpendicular}/{} grid points have K_eff > 0", n * n);
    Ok(())
}

fn analyze_variation(cfg: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    let a = &cfg.analyze;
    let curves = scurve_variation(
        &cfg.params,
        a.spread,
        a.n_devices,
        &cfg.protocol(),
        &sweep_of(cfg, a.n_points),
        a.n_per_point,
        &cfg.sim_config(),
        cfg.seed,
    )?;
    let mut w = dir.create_file("variation.csv")?;
    writeln!(w, "device,j_A_per_m2,p_one,p_isotonic")?;
    let mut j50 = Vec::with_capacity(curves.len());
    for (d, c) in curves.iter().enumerate() {
        for (p, iso) in c.points.iter().zip(c.smoothed()) {
            writeln!(w, "{d},{:e},{},{}", p.j, p.p_one, iso)?;
        }
        j50.push(invert_scurve(c, 0.5).ok());
    }
    w.flush()?;
    dir.write_json("summary.json", &json!({ "spread": a.spread, "n_devices": a.n_devices, "j50_A_per_m2": j50 }))?;
    println!("{} perturbed S-curves", curves.len());
    Ok(())
}

fn analyze_temperature(cfg: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    let mut w = dir.create_file("temperature.csv")?;
    writeln!(w, "delta_T_K,temperature_K,p_one_minus_half")?;
    for &dt in &cfg.analyze.delta_t {
        let shift = temperature_sensitivity(&cfg.params, &cfg.stt, dt, &cfg.analyze.sensitivity, &cfg.sim_config(), cfg.seed)?;
        eprintln!("dT = {dt} K: p(1) - 0.5 = {shift:.4}");
        writeln!(w, "{dt},{},{shift}", cfg.params.temperature + dt)?;
    }
    w.flush()?;
    Ok(())
}

fn analyze_archive(cfg: &RunConfig, dir: &RunDir, path: &Path) -> Result<(), CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Usage(format!("cannot open archive {}: {e}", path.display())))?;
    let mut archive = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            archive.push(serde_json::from_str::<ArchiveRecord>(&line)?);
        }
    }
    let dims = archive.first().map_or(0, |r| r.genome.len());
    let space = [DeviceKind::Sot, DeviceKind::Stt]
        .into_iter()
        .map(ParamSpace::searchable)
        .find(|s| s.dims() == dims)
        .ok_or_else(|| CliError::Usage(format!("archive genomes have {dims} genes, which matches no device kind")))?;
    let front_size = write_pareto(dir, &space, &archive)?;
    write_exploration(dir, &space, &archive, cfg.analyze.exploration_bins)?;
    let k = cfg.optimize.top_k;
    let mut w = dir.create_file(&format!("top{k}.csv"))?;
    writeln!(w, "rank,index,{},energy_J_per_flip,kl_nats,score", gene_header(&space))?;
    for (rank, r) in top_k(&archive, k)?.iter().enumerate() {
        writeln!(w, "{},{},{},{:e},{},{}", rank + 1, r.index, gene_values(&space, r), r.energy, r.kl, r.score)?;
    }
    w.flush()?;
    dir.write_json(
        "summary.json",
        &json!({
            "device": space.kind,
            "evaluations": archive.len(),
            "valid": archive.iter().filter(|r| r.valid).count(),
            "pareto_size": front_size,
            "best": best_json(&archive),
        }),
    )?;
    println!("{} evaluations, {} on the Pareto front", archive.len(), front_size);
    Ok(())
}

pub fn particle_gamma(cfg: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    let setup = &cfg.particle;
    let trace = setup.simulate();
    let mut w = dir.create_file("trajectory.csv")?;
    writeln!(w, "step,t_s,x_um")?;
    for (i, x) in trace.positions.iter().enumerate() {
        writeln!(w, "{i},{},{x}", i as f64 * setup.dt)?;
    }
    w.flush()?;
    let g: GammaSpec = posterior_gamma(&trace)?;
    let support_mass = match cfg.target {
        DistributionSpec::Gamma { a, b, .. } => Some(json!({ "a": a, "b": b, "mass": g.cdf(b)? - g.cdf(a)? })),
        DistributionSpec::Uniform { .. } => None,
    };
    let out = json!({
        "shape": g.shape,
        "rate_um_per_pN_s": g.rate,
        "mean_pN_s_per_um": g.mean(),
        "alpha_true_pN_s_per_um": setup.alpha,
        "steps": setup.steps,
        "seed": setup.seed,
        "support_mass": support_mass,
    });
    dir.write_json("gamma.json", &out)?;
    println!("{}", serde_json::to_string(&out)?);
    Ok(())
}
