//! Online CDF-tree sampler.
//!
//! A k-bit sample is drawn with k weighted coinflips. At each level the
//! current interval [x0, x2] is split at its midpoint x1 and the coin for
//! "upper half" gets weight (F(x2) − F(x1)) / (F(x2) − F(x0)). Only the
//! current interval is kept; the weights are never tabulated as a tree.

use std::io::{self, Write};

use rand::Rng;
use thiserror::Error;

use crate::device::{invert_monotone, DeviceError, Protocol, SCurve};
use crate::llg::{DeviceParams, MagState, SimConfig};
use crate::par;
use crate::rng::{self, SimRng};
use crate::target::{bin_edge, Cdf};

pub const MAX_BITS: u32 = 16;

/// Samples per independent coin stream in [`sample_many_blocks`].
pub const BLOCK_SIZE: usize = 256;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoinError {
    #[error("configuration cannot realize required coin weights: {0}")]
    Unattainable(DeviceError),
    #[error(transparent)]
    Device(DeviceError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeError {
    #[error("no probability mass on [{x0}, {x2}]")]
    ZeroMassInterval { x0: f64, x2: f64 },
    #[error("bit depth must be in 1..={MAX_BITS}, got {0}")]
    InvalidBits(u32),
    #[error(transparent)]
    Coin(#[from] CoinError),
}

/// Anything that can flip a coin with a requested probability of one.
pub trait CoinSource {
    fn flip(&mut self, p_one: f64) -> Result<bool, CoinError>;
    /// Energy spent so far, J.
    fn energy(&self) -> f64;
    fn flips(&self) -> u64;
}

impl<S: CoinSource + ?Sized> CoinSource for &mut S {
    fn flip(&mut self, p_one: f64) -> Result<bool, CoinError> {
        (**self).flip(p_one)
    }
    fn energy(&self) -> f64 {
        (**self).energy()
    }
    fn flips(&self) -> u64 {
        (**self).flips()
    }
}

/// Pseudo-random coin that returns one with exactly the requested probability.
#[derive(Clone, Debug)]
pub struct IdealCoin {
    rng: SimRng,
    flips: u64,
}

impl IdealCoin {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { rng: rng::stream(seed, stream), flips: 0 }
    }
}

impl CoinSource for IdealCoin {
    fn flip(&mut self, p_one: f64) -> Result<bool, CoinError> {
        self.flips += 1;
        Ok(self.rng.random::<f64>() < p_one)
    }
    fn energy(&self) -> f64 {
        0.0
    }
    fn flips(&self) -> u64 {
        self.flips
    }
}

/// Coin realized by an MTJ: the requested weight is turned into a bias
/// current through a calibration S-curve and the device protocol is run.
/// The free layer carries its state from one flip to the next.
#[derive(Clone, Debug)]
pub struct DeviceCoin {
    params: DeviceParams,
    proto: Protocol,
    cfg: SimConfig,
    currents: Vec<f64>,
    smoothed: Vec<f64>,
    state: MagState,
    rng: SimRng,
    energy: f64,
    flips: u64,
}

impl DeviceCoin {
    pub fn new(params: DeviceParams, proto: Protocol, cfg: SimConfig, curve: &SCurve, seed: u64, stream: u64) -> Self {
        Self {
            state: proto.initial_state(),
            params,
            proto,
            cfg,
            currents: curve.currents(),
            smoothed: curve.smoothed(),
            rng: rng::stream(seed, stream),
            energy: 0.0,
            flips: 0,
        }
    }

    pub fn bias_for(&self, p_one: f64) -> Result<f64, CoinError> {
        invert_monotone(&self.currents, &self.smoothed, p_one).map_err(CoinError::Unattainable)
    }
}

impl CoinSource for DeviceCoin {
    fn flip(&mut self, p_one: f64) -> Result<bool, CoinError> {
        // a forced branch needs no device
        if p_one <= 0.0 || p_one >= 1.0 {
            self.flips += 1;
            return Ok(p_one >= 1.0);
        }
        let j = self.bias_for(p_one)?;
        let out = self.proto.with_bias(j).flip(&mut self.state, &self.params, &self.cfg, &mut self.rng).map_err(CoinError::Device)?;
        self.flips += 1;
        self.energy += out.energy.e_total;
        Ok(out.bit)
    }
    fn energy(&self) -> f64 {
        self.energy
    }
    fn flips(&self) -> u64 {
        self.flips
    }
}

/// Probability that the sample lies in the upper half [x1, x2] given it lies
/// in [x0, x2].
pub fn coin_weight<C: Cdf + ?Sized>(cdf: &C, x0: f64, x1: f64, x2: f64) -> Result<f64, TreeError> {
    weight_from(cdf.cdf(x0), cdf.cdf(x1), cdf.cdf(x2), x0, x2)
}

fn weight_from(f0: f64, f1: f64, f2: f64, x0: f64, x2: f64) -> Result<f64, TreeError> {
    let mass = f2 - f0;
    if !(mass > 0.0) {
        return Err(TreeError::ZeroMassInterval { x0, x2 });
    }
    Ok(((f2 - f1) / mass).clamp(0.0, 1.0))
}

/// One k-bit traversal. Returns the bin index (first flip is the most
/// significant bit, one = upper half) and the bin midpoint.
pub fn sample<C: Cdf + ?Sized, S: CoinSource + ?Sized>(cdf: &C, k: u32, coins: &mut S) -> Result<(usize, f64), TreeError> {
    if k == 0 || k > MAX_BITS {
        return Err(TreeError::InvalidBits(k));
    }
    let (a, b) = cdf.support();
    let mut idx = 0usize;
    let (mut f0, mut f2) = (cdf.cdf(a), cdf.cdf(b));
    for level in 0..k {
        let x0 = bin_edge(a, b, level, idx);
        let x2 = bin_edge(a, b, level, idx + 1);
        let x1 = bin_edge(a, b, level + 1, 2 * idx + 1);
        let f1 = cdf.cdf(x1);
        let w = weight_from(f0, f1, f2, x0, x2)?;
        if coins.flip(w)? {
            idx = 2 * idx + 1;
            f0 = f1;
        } else {
            idx *= 2;
            f2 = f1;
        }
    }
    let value = 0.5 * (bin_edge(a, b, k, idx) + bin_edge(a, b, k, idx + 1));
    Ok((idx, value))
}

/// Memoizes a CDF on the 2^k + 1 bin edges so repeated traversals do not
/// re-evaluate it. Off-grid arguments fall through to the wrapped CDF.
pub struct EdgeCache<'a, C: ?Sized> {
    inner: &'a C,
    a: f64,
    b: f64,
    k: u32,
    values: Vec<f64>,
}

impl<'a, C: Cdf + ?Sized> EdgeCache<'a, C> {
    pub fn new(inner: &'a C, k: u32) -> Self {
        let (a, b) = inner.support();
        let n = 1usize << k;
        let values = (0..=n).map(|i| inner.cdf(bin_edge(a, b, k, i))).collect();
        Self { inner, a, b, k, values }
    }
}

impl<C: Cdf + ?Sized> Cdf for EdgeCache<'_, C> {
    fn support(&self) -> (f64, f64) {
        (self.a, self.b)
    }
    fn cdf(&self, x: f64) -> f64 {
        let n = self.values.len() - 1;
        let u = ((x - self.a) / (self.b - self.a) * n as f64).round();
        if u >= 0.0 && u <= n as f64 {
            let i = u as usize;
            if bin_edge(self.a, self.b, self.k, i) == x {
                return self.values[i];
            }
        }
        self.inner.cdf(x)
    }
}

/// Histogram of `2^k` bins plus the cost of producing it.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRun {
    pub k: u32,
    pub counts: Vec<u64>,
    /// Total coin energy, J.
    pub energy: f64,
    pub flips: u64,
}

impl SampleRun {
    pub fn empty(k: u32) -> Self {
        Self { k, counts: vec![0; 1 << k], energy: 0.0, flips: 0 }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn energy_per_flip(&self) -> f64 {
        if self.flips == 0 {
            0.0
        } else {
            self.energy / self.flips as f64
        }
    }

    fn merge(&mut self, other: &SampleRun) {
        for (c, o) in self.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
        self.energy += other.energy;
        self.flips += other.flips;
    }
}

/// `n` traversals with one coin source.
pub fn sample_many<C: Cdf + ?Sized, S: CoinSource + ?Sized>(cdf: &C, k: u32, coins: &mut S, n: usize) -> Result<SampleRun, TreeError> {
    if k == 0 || k > MAX_BITS {
        return Err(TreeError::InvalidBits(k));
    }
    let cache = EdgeCache::new(cdf, k);
    let (e0, f0) = (coins.energy(), coins.flips());
    let mut run = SampleRun::empty(k);
    for _ in 0..n {
        let (i, _) = sample(&cache, k, coins)?;
        run.counts[i] += 1;
    }
    run.energy = coins.energy() - e0;
    run.flips = coins.flips() - f0;
    Ok(run)
}

/// `n` traversals split into blocks of [`BLOCK_SIZE`], block `i` drawing on
/// `make_coin(i)`. Blocks may run in parallel; the result does not depend on
/// the thread count.
pub fn sample_many_blocks<C, S, F>(cdf: &C, k: u32, n: usize, make_coin: F) -> Result<SampleRun, TreeError>
where
    C: Cdf + Sync + ?Sized,
    S: CoinSource,
    F: Fn(u64) -> S + Sync + Send,
{
    if k == 0 || k > MAX_BITS {
        return Err(TreeError::InvalidBits(k));
    }
    let cache = EdgeCache::new(cdf, k);
    let blocks = n.div_ceil(BLOCK_SIZE);
    let runs = par::map_indexed(blocks, |bi| {
        let len = BLOCK_SIZE.min(n - bi * BLOCK_SIZE);
        let mut coin = make_coin(bi as u64);
        sample_many(&cache, k, &mut coin, len)
    });
    let mut total = SampleRun::empty(k);
    for r in runs {
        total.merge(&r?);
    }
    Ok(total)
}

pub const HISTOGRAM_CSV_HEADER: &str = "bin_left,bin_right,count,empirical_prob,target_prob";

pub fn write_histogram_csv<W: Write>(mut w: W, a: f64, b: f64, run: &SampleRun, target: &[f64]) -> io::Result<()> {
    writeln!(w, "{HISTOGRAM_CSV_HEADER}")?;
    let total = run.total().max(1) as f64;
    for (i, &c) in run.counts.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{}",
            bin_edge(a, b, run.k, i),
            bin_edge(a, b, run.k, i + 1),
            c,
            c as f64 / total,
            target.get(i).copied().unwrap_or(f64::NAN)
        )?;
    }
    Ok(())
}
