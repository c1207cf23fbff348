use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mtj_codesign::DeviceKind;

#[derive(Debug, Parser)]
#[command(name = "mtj-codesign", version, about = "Simulate MTJ coins, sample target distributions and search device parameters")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; flags override its values.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory to create. It must not exist yet.
    #[arg(short, long, global = true)]
    pub out: Option<PathBuf>,
    /// Root that receives timestamped run directories when --out is absent.
    #[arg(long, global = true, env = "MTJ_CODESIGN_OUT")]
    pub out_root: Option<PathBuf>,
    /// Master seed of every random stream (particle seed for particle-gamma).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Device family: sot | stt.
    #[arg(long, global = true)]
    pub device: Option<DeviceKind>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Override any configuration key, e.g. --set params.alpha=0.05.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Analysis {
    /// Effective anisotropy over the K_i × M_s search box.
    Keff,
    /// S-curves of devices with randomly perturbed parameters.
    Variation,
    /// Drift of a 50% STT coin under temperature offsets.
    Temperature,
    /// Pareto front, top configurations and exploration of an archive.
    Archive,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run consecutive coinflips and record the magnetization.
    Simulate {
        /// Number of consecutive flips.
        #[arg(long)]
        flips: Option<usize>,
        /// Bias current density of the coin knob, A/m².
        #[arg(long, allow_negative_numbers = true)]
        bias: Option<f64>,
    },
    /// Measure p(1) against bias current.
    Scurve {
        /// Bias points of the sweep.
        #[arg(long)]
        points: Option<usize>,
        /// Flips measured at each bias point.
        #[arg(long)]
        per_point: Option<usize>,
        /// Lowest bias, A/m²; defaults to the device family's window.
        #[arg(long, allow_negative_numbers = true)]
        j_min: Option<f64>,
        /// Highest bias, A/m².
        #[arg(long, allow_negative_numbers = true)]
        j_max: Option<f64>,
    },
    /// Draw k-bit samples of the target through a coin source.
    Sample {
        /// ideal | surrogate | device
        #[arg(long)]
        coin: Option<String>,
        /// Number of k-bit samples.
        #[arg(long)]
        samples: Option<usize>,
        /// Tree depth k; the histogram has 2^k bins.
        #[arg(long)]
        bits: Option<u32>,
    },
    /// Search device parameters for low energy and low KL divergence.
    Optimize {
        /// nsga2 | cem
        #[arg(long)]
        algorithm: Option<String>,
        /// surrogate | physics
        #[arg(long)]
        backend: Option<String>,
        /// NSGA-II population size.
        #[arg(long)]
        pop: Option<usize>,
        /// NSGA-II generations after the initial population.
        #[arg(long)]
        gens: Option<usize>,
        /// CEM iterations.
        #[arg(long)]
        iterations: Option<usize>,
        /// CEM actions per iteration.
        #[arg(long)]
        batch: Option<usize>,
    },
    /// Device and archive analyses.
    Analyze {
        #[arg(value_enum)]
        what: Analysis,
        /// archive.jsonl, or a run directory containing one.
        #[arg(long)]
        archive: Option<PathBuf>,
    },
    /// Simulate a diffusing particle and derive the gamma posterior of its drag.
    ParticleGamma {
        /// Trajectory steps; the posterior shape is steps/2.
        #[arg(long)]
        steps: Option<usize>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Scurve { .. } => "scurve",
            Command::Sample { .. } => "sample",
            Command::Optimize { .. } => "optimize",
            Command::Analyze { .. } => "analyze",
            Command::ParticleGamma { .. } => "particle-gamma",
        }
    }
}

impl Cli {
    /// Flag values as `key=value` overrides, in increasing precedence.
    pub fn overrides(&self) -> Vec<String> {
        let mut o = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                o.push(format!("{k}={v}"));
            }
        };
        let g = &self.global;
        put("device", g.device.map(|d| format!("\"{d}\"")));
        let seed_key = if matches!(self.command, Command::ParticleGamma { .. }) { "particle.seed" } else { "seed" };
        put(seed_key, g.seed.map(|s| s.to_string()));
        let float = |v: Option<f64>| v.map(|x| format!("{x:e}"));
        let int = |v: Option<usize>| v.map(|x| x.to_string());
        let text = |v: &Option<String>| v.as_ref().map(|s| format!("{s:?}"));
        match &self.command {
            Command::Simulate { flips, bias } => {
                put("simulate.n_flips", int(*flips));
                // the knob of whichever protocol ends up active
                put("sot.j_stt_bias", float(*bias));
                put("stt.j_stt", float(*bias));
            }
            Command::Scurve { points, per_point, j_min, j_max } => {
                put("scurve.n_points", int(*points));
                put("scurve.n_per_point", int(*per_point));
                put("scurve.j_min", float(*j_min));
                put("scurve.j_max", float(*j_max));
            }
            Command::Sample { coin, samples, bits } => {
                put("sample.coin", text(coin));
                put("sample.n_samples", int(*samples));
                put("eval.k", bits.map(|b| b.to_string()));
            }
            Command::Optimize { algorithm, backend, pop, gens, iterations, batch } => {
                put("optimize.algorithm", text(algorithm));
                put("optimize.backend", text(backend));
                put("optimize.pop_size", int(*pop));
                put("optimize.generations", int(*gens));
                put("optimize.cem.iterations", int(*iterations));
                put("optimize.cem.batch", int(*batch));
            }
            Command::Analyze { .. } => {}
            Command::ParticleGamma { steps } => put("particle.steps", int(*steps)),
        }
        o.extend(g.set.iter().cloned());
        o
    }
}
