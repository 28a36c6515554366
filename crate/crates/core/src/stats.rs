//! Empirical distribution of weights over conjugacy class spheres and over
//! spheres of the free group: means, variances, distance to the limiting
//! normal law and characteristic functions.
//!
//! Exact modes enumerate the full population in parallel over disjoint
//! shards. Sampled modes draw in fixed-size chunks, chunk `i` using its own
//! ChaCha8 stream of the master seed, so results do not depend on the number
//! of worker threads.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conjugacy::{
    class_sphere_shards, class_sphere_size, sample_uniform_class_sphere, shard_conjugators, ConjugacyClass,
};
use crate::error::{Error, Result};
use crate::symbolic::WeightFunction;
use crate::thermo::{lambda, sigma2};
use crate::words::{sample_uniform_sphere, sphere_shards, sphere_size, Rank, ReducedWords};

pub const MIN_SAMPLED: usize = 1_000;
pub const DEFAULT_CAP: u128 = 10_000_000;
/// Weights with `σ² <= DEGENERACY_THRESHOLD` are treated as cohomologous to a constant.
pub const DEGENERACY_THRESHOLD: f64 = 1e-8;
const CHUNK: usize = 1 << 14;
const SHARD_DEPTH: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SampleMode {
    Exact { cap: u128 },
    Sampled { count: usize, seed: u64 },
}

impl SampleMode {
    fn check(&self, population: u128) -> Result<()> {
        match *self {
            SampleMode::Exact { cap } if population > cap => Err(Error::CapExceeded { population, cap }),
            SampleMode::Sampled { count, .. } if count < MIN_SAMPLED => {
                Err(Error::InvalidArgument(format!("sampled mode needs at least {MIN_SAMPLED} draws, got {count}")))
            }
            _ => Ok(()),
        }
    }
}

/// Values of `F` over a sphere, with the normalizing length `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub values: Vec<f64>,
    pub n: usize,
    pub mode: SampleMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalSummary {
    pub mean: f64,
    /// Population variance (divides by `N`).
    pub variance: f64,
    /// `E|X - mean|^3 / variance^{3/2}`; zero when the variance is.
    pub third_abs_moment: f64,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        compensated_sum(self.values.iter().copied()) / self.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        compensated_sum(self.values.iter().map(|x| (x - mean) * (x - mean))) / self.len() as f64
    }

    pub fn summary(&self) -> Result<EmpiricalSummary> {
        if self.is_empty() {
            return Err(Error::EmptySample);
        }
        let mean = self.mean();
        let variance = self.variance();
        let third = compensated_sum(self.values.iter().map(|x| (x - mean).abs().powi(3))) / self.len() as f64;
        let third_abs_moment = if variance > 0.0 { third / variance.powf(1.5) } else { 0.0 };
        Ok(EmpiricalSummary { mean, variance, third_abs_moment })
    }

    /// Standard error of the mean, from the sample itself.
    pub fn standard_error(&self) -> f64 {
        (self.variance() / self.len() as f64).sqrt()
    }

    /// `(F - nλ) / sqrt(n)` for each value.
    pub fn standardized(&self, lambda: f64) -> Vec<f64> {
        let n = self.n as f64;
        self.values.iter().map(|x| (x - n * lambda) / n.sqrt()).collect()
    }
}

/// Neumaier's compensated summation.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn sample_chunks(count: usize, seed: u64, draw: impl Fn(&mut ChaCha8Rng) -> f64 + Sync) -> Vec<f64> {
    let chunks = count.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let len = CHUNK.min(count - i * CHUNK);
            (0..len).map(|_| draw(&mut rng)).collect()
        })
        .collect();
    parts.concat()
}

/// `F(x)` over `C_{k+2m}`, enumerated in the order of
/// [`crate::conjugacy::enumerate_class_sphere`] or sampled uniformly.
pub fn collect_class_sample(class: &ConjugacyClass, f: &WeightFunction, m: usize, mode: SampleMode) -> Result<Sample> {
    check_rank(class.rank(), f)?;
    mode.check(class_sphere_size(class, m))?;
    let values = match mode {
        SampleMode::Exact { .. } => {
            let shards = class_sphere_shards(class, m);
            let parts: Vec<Vec<f64>> = shards
                .par_iter()
                .map(|shard| {
                    let g: Vec<u16> = shard.g.letters().iter().map(|l| l.code()).collect();
                    let mut buf = Vec::with_capacity(g.len() + 2 * m);
                    let mut out = Vec::new();
                    let mut it = shard_conjugators(class, shard, m);
                    while let Some(w) = it.next_codes() {
                        buf.clear();
                        buf.extend(w.iter().rev().map(|c| c ^ 1));
                        buf.extend_from_slice(&g);
                        buf.extend_from_slice(w);
                        out.push(f.birkhoff_codes(&buf));
                    }
                    out
                })
                .collect();
            parts.concat()
        }
        SampleMode::Sampled { count, seed } => {
            sample_chunks(count, seed, |rng| f.birkhoff(&sample_uniform_class_sphere(class, m, rng)))
        }
    };
    Ok(Sample { values, n: class.length_at(m), mode })
}

/// `F(x)` over `Γ_n`, enumerated lexicographically or sampled uniformly.
pub fn collect_sphere_sample(rank: Rank, f: &WeightFunction, n: usize, mode: SampleMode) -> Result<Sample> {
    check_rank(rank, f)?;
    mode.check(sphere_size(rank, n))?;
    let values = match mode {
        SampleMode::Exact { .. } => {
            let parts: Vec<Vec<f64>> = sphere_shards(rank, n, SHARD_DEPTH)
                .par_iter()
                .map(|prefix| {
                    let mut out = Vec::new();
                    let mut it = ReducedWords::with_prefix(rank, prefix, n);
                    while let Some(w) = it.next_codes() {
                        out.push(f.birkhoff_codes(w));
                    }
                    out
                })
                .collect();
            parts.concat()
        }
        SampleMode::Sampled { count, seed } => {
            sample_chunks(count, seed, |rng| f.birkhoff(&sample_uniform_sphere(rank, n, rng)))
        }
    };
    Ok(Sample { values, n, mode })
}

fn check_rank(rank: Rank, f: &WeightFunction) -> Result<()> {
    if rank != f.rank() {
        return Err(Error::RankMismatch { expected: rank.get(), found: f.rank().get() });
    }
    Ok(())
}

/// `σ_f²`, or a degenerate-weight error when it does not exceed the threshold.
pub fn nondegenerate_sigma2(f: &WeightFunction) -> Result<f64> {
    let s2 = sigma2(f)?;
    if s2 <= DEGENERACY_THRESHOLD {
        return Err(Error::DegenerateWeight(s2));
    }
    Ok(s2)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanRow {
    pub m: usize,
    /// `k + 2m`.
    pub n: usize,
    /// Mean of `F / n` over the sample.
    pub mean: f64,
    /// `|mean - λ|`.
    pub discrepancy: f64,
    /// Standard error of `mean`; zero in exact mode.
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanConvergence {
    pub lambda: f64,
    pub rows: Vec<MeanRow>,
}

pub fn mean_convergence(
    class: &ConjugacyClass,
    f: &WeightFunction,
    ms: &[usize],
    mode: SampleMode,
) -> Result<MeanConvergence> {
    if ms.is_empty() || ms.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("m grid must be nonempty and strictly ascending".into()));
    }
    let lambda = lambda(f);
    let rows = ms
        .iter()
        .map(|&m| {
            let sample = collect_class_sample(class, f, m, mode)?;
            let n = sample.n as f64;
            let mean = sample.mean() / n;
            let standard_error = match mode {
                SampleMode::Exact { .. } => 0.0,
                SampleMode::Sampled { .. } => sample.standard_error() / n,
            };
            Ok(MeanRow { m, n: sample.n, mean, discrepancy: (mean - lambda).abs(), standard_error })
        })
        .collect::<Result<_>>()?;
    Ok(MeanConvergence { lambda, rows })
}

/// KS distance of a sample from a normal reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistComparison {
    pub ks: f64,
    pub target_mean: f64,
    pub target_variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CdfRow {
    pub y: f64,
    pub empirical: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltReport {
    pub m: usize,
    pub n: usize,
    pub lambda: f64,
    pub sigma2: f64,
    pub comparison: DistComparison,
    pub summary: EmpiricalSummary,
    pub cdf: Vec<CdfRow>,
}

/// Compares `(F - nλ)/sqrt(n)` over `C_{k+2m}` with `N(0, 2σ²)`.
pub fn clt_experiment(
    class: &ConjugacyClass,
    f: &WeightFunction,
    m: usize,
    mode: SampleMode,
    grid: &[f64],
) -> Result<CltReport> {
    let s2 = nondegenerate_sigma2(f)?;
    let lambda = lambda(f);
    let sample = collect_class_sample(class, f, m, mode)?;
    let mut z = sample.standardized(lambda);
    let target_variance = 2.0 * s2;
    let ks = ks_statistic(&z, 0.0, target_variance)?;
    z.sort_by(f64::total_cmp);
    let cdf = grid
        .iter()
        .map(|&y| CdfRow {
            y,
            empirical: z.partition_point(|&v| v <= y) as f64 / z.len() as f64,
            reference: normal_cdf(y, 0.0, target_variance),
        })
        .collect();
    Ok(CltReport {
        m,
        n: sample.n,
        lambda,
        sigma2: s2,
        comparison: DistComparison { ks, target_mean: 0.0, target_variance },
        summary: sample.summary()?,
        cdf,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceRatio {
    pub m: usize,
    pub n: usize,
    pub class_variance: f64,
    pub sphere_variance: f64,
    pub ratio: f64,
    pub sigma2: f64,
}

/// `Var_{C_{k+2m}}(F) / Var_{Γ_{k+2m}}(F)`, each population or sample drawn
/// with its own mode.
pub fn variance_ratio(
    class: &ConjugacyClass,
    f: &WeightFunction,
    m: usize,
    class_mode: SampleMode,
    sphere_mode: SampleMode,
) -> Result<VarianceRatio> {
    let s2 = nondegenerate_sigma2(f)?;
    let c = collect_class_sample(class, f, m, class_mode)?;
    let s = collect_sphere_sample(class.rank(), f, c.n, sphere_mode)?;
    let class_variance = c.variance();
    let sphere_variance = s.variance();
    Ok(VarianceRatio {
        m,
        n: c.n,
        class_variance,
        sphere_variance,
        ratio: class_variance / sphere_variance,
        sigma2: s2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CharFnPoint {
    pub t: f64,
    pub phi: Complex64,
    /// `exp(-σ² t²)`.
    pub target: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharFnReport {
    pub m: usize,
    pub n: usize,
    pub lambda: f64,
    pub sigma2: f64,
    pub points: Vec<CharFnPoint>,
}

/// `φ_m(t)`: the mean of `exp(i t (F - nλ)/sqrt(n))` over `C_{k+2m}`.
pub fn characteristic_function(
    class: &ConjugacyClass,
    f: &WeightFunction,
    m: usize,
    ts: &[f64],
    mode: SampleMode,
) -> Result<CharFnReport> {
    let s2 = nondegenerate_sigma2(f)?;
    let lambda = lambda(f);
    let sample = collect_class_sample(class, f, m, mode)?;
    let z = sample.standardized(lambda);
    let len = z.len() as f64;
    let points = ts
        .iter()
        .map(|&t| {
            let re = compensated_sum(z.iter().map(|y| (t * y).cos())) / len;
            let im = compensated_sum(z.iter().map(|y| (t * y).sin())) / len;
            let phi = Complex64::new(re, im);
            let target = (-s2 * t * t).exp();
            CharFnPoint { t, phi, target, deviation: (phi - target).norm() }
        })
        .collect();
    Ok(CharFnReport { m, n: sample.n, lambda, sigma2: s2, points })
}

/// `sup_i max(|i/N - Φ(x_i)|, |Φ(x_i) - (i-1)/N|)` over the sorted sample.
pub fn ks_statistic(sample: &[f64], mean: f64, variance: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if variance.is_nan() || variance <= 0.0 {
        return Err(Error::InvalidArgument(format!("reference variance must be positive, got {variance}")));
    }
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let ks = xs.iter().enumerate().fold(0.0f64, |acc, (i, &x)| {
        let phi = normal_cdf(x, mean, variance);
        let upper = ((i + 1) as f64 / n - phi).abs();
        let lower = (phi - i as f64 / n).abs();
        acc.max(upper).max(lower)
    });
    Ok(ks)
}

/// CDF of `N(mean, variance)` via `statrs`' erf (absolute error below
/// `1e-10`).
pub fn normal_cdf(y: f64, mean: f64, variance: f64) -> f64 {
    0.5 * (1.0 + statrs::function::erf::erf((y - mean) / (2.0 * variance).sqrt()))
}
