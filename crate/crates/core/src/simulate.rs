//! Monte Carlo sampling of discrete Lévy areas.
//!
//! Increments of both processes over the level-`n` dyadic cells are drawn as
//! `L·z` with `L` the Cholesky factor of the increment Gram matrix. Every
//! draw has its own ChaCha8 stream, `stream = 2·sample + process`, all
//! seeded from the same 64-bit seed, so the output does not depend on how
//! samples are spread across worker threads.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::covariance::{cholesky_factor, dyadic_partition, gram_matrix, CovKernel, LowerFactor};
use crate::error::{LevyError, Result};
use crate::numeric::{pairwise_sum, CompensatedSum, Num};

/// Largest sampling level; the dense factor at 2¹⁴ cells is ~1.6 GB.
pub const MAX_MC_LEVEL: u32 = 14;

#[derive(Debug, Clone, PartialEq)]
pub struct MCConfig {
    pub seed: u64,
    pub n_samples: usize,
    pub level: u32,
    pub kernel1: CovKernel,
    pub kernel2: CovKernel,
}

impl MCConfig {
    pub fn new(seed: u64, n_samples: usize, level: u32, kernel1: CovKernel, kernel2: CovKernel) -> Result<Self> {
        let cfg = MCConfig { seed, n_samples, level, kernel1, kernel2 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(LevyError::parameter("run_mc", "n_samples must be at least 1"));
        }
        if self.level > MAX_MC_LEVEL {
            return Err(LevyError::resource("run_mc", format!("level {} exceeds {MAX_MC_LEVEL}", self.level)));
        }
        Ok(())
    }

    pub fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            seed: self.seed,
            n_samples: self.n_samples,
            level: self.level,
            kernel1: self.kernel1.to_string(),
            kernel2: self.kernel2.to_string(),
        }
    }
}

/// Plain-data copy of an [`MCConfig`] for artifacts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigEcho {
    pub seed: u64,
    pub n_samples: usize,
    pub level: u32,
    pub kernel1: String,
    pub kernel2: String,
}

/// Increment sampler for the two processes on the level-`n` dyadic grid.
#[derive(Debug, Clone)]
pub struct PathSampler {
    seed: u64,
    factors: [LowerFactor; 2],
}

impl PathSampler {
    pub fn new(config: &MCConfig) -> Result<Self> {
        config.validate()?;
        let part = dyadic_partition(config.level);
        let factor = |k: &CovKernel| cholesky_factor(&gram_matrix(k, &part)?, 0.0);
        let f1 = factor(&config.kernel1)?;
        let f2 = if config.kernel2 == config.kernel1 { f1.clone() } else { factor(&config.kernel2)? };
        Ok(PathSampler { seed: config.seed, factors: [f1, f2] })
    }

    /// Number of increments per path.
    pub fn cells(&self) -> usize {
        self.factors[0].dim()
    }

    pub fn factor(&self, process: usize) -> &LowerFactor {
        &self.factors[process]
    }

    /// Increments of process `process ∈ {0,1}` for draw `sample`, written to
    /// `out`; `z` is scratch of the same length.
    pub fn fill(&self, sample: u64, process: usize, z: &mut [f64], out: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(sample.wrapping_mul(2).wrapping_add(process as u64));
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        self.factors[process].apply(z, out);
    }

    pub fn sample(&self, sample: u64) -> (Vec<f64>, Vec<f64>) {
        let n = self.cells();
        let (mut z, mut a, mut b) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        self.fill(sample, 0, &mut z, &mut a);
        self.fill(sample, 1, &mut z, &mut b);
        (a, b)
    }
}

/// Increment pairs for every sample of `config`.
pub fn sample_paths(config: &MCConfig) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let sampler = PathSampler::new(config)?;
    Ok((0..config.n_samples as u64).into_par_iter().map(|i| sampler.sample(i)).collect())
}

/// `Σ_{k<l} (a_k b_l − b_k a_l)` via prefix sums, compensated.
pub fn discrete_levy_area(increments1: &[f64], increments2: &[f64]) -> Result<f64> {
    if increments1.len() != increments2.len() {
        return Err(LevyError::shape(
            "discrete_levy_area",
            format!("increment lengths differ ({} vs {})", increments1.len(), increments2.len()),
        ));
    }
    Ok(area_unchecked(increments1, increments2))
}

fn area_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let (mut pa, mut pb) = (0.0, 0.0);
    let mut acc = CompensatedSum::new();
    for (&x, &y) in a.iter().zip(b) {
        acc.add(pa * y - pb * x);
        pa += x;
        pb += y;
    }
    acc.value()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MCResult {
    pub config: ConfigEcho,
    #[serde(skip)]
    pub samples: Vec<f64>,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Fourth central sample moment.
    pub fourth_moment: f64,
}

impl MCResult {
    pub fn from_samples(config: ConfigEcho, samples: Vec<f64>) -> Self {
        let n = samples.len() as f64;
        let mean = pairwise_sum(&samples) / n;
        let central = |k: i32| -> f64 {
            let pw: Vec<f64> = samples.iter().map(|x| (x - mean).powi(k)).collect();
            pairwise_sum(&pw)
        };
        let variance = if samples.len() > 1 { central(2) / (n - 1.0) } else { 0.0 };
        let fourth_moment = central(4) / n;
        MCResult { config, samples, mean, variance, fourth_moment }
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    /// Standard error of the sample mean.
    pub fn mean_stderr(&self) -> f64 {
        (self.variance / self.n_samples() as f64).sqrt()
    }

    /// Asymptotic standard error of the sample variance, `√((m₄ − s⁴)/n)`.
    pub fn variance_stderr(&self) -> f64 {
        ((self.fourth_moment - self.variance * self.variance).max(0.0) / self.n_samples() as f64).sqrt()
    }

    /// CSV with header `sample,area`.
    pub fn samples_csv(&self) -> String {
        let mut out = String::with_capacity(self.samples.len() * 24 + 12);
        out.push_str("sample,area\n");
        for (i, a) in self.samples.iter().enumerate() {
            out.push_str(&format!("{i},{}\n", Num(*a)));
        }
        out
    }
}

/// Draws `n_samples` discrete Lévy areas in parallel; the result is
/// independent of the number of worker threads.
pub fn run_mc(config: &MCConfig) -> Result<MCResult> {
    let sampler = PathSampler::new(config)?;
    let n = sampler.cells();
    let samples: Vec<f64> = (0..config.n_samples as u64)
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], vec![0.0; n], vec![0.0; n]),
            |(z, a, b), i| {
                sampler.fill(i, 0, z, a);
                sampler.fill(i, 1, z, b);
                area_unchecked(a, b)
            },
        )
        .collect();
    Ok(MCResult::from_samples(config.echo(), samples))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalCF {
    pub t_grid: Vec<f64>,
    pub estimates: Vec<Complex64>,
    pub std_errors: Vec<f64>,
}

impl EmpiricalCF {
    /// CSV with header `t,re,im,stderr`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,re,im,stderr\n");
        for ((t, z), se) in self.t_grid.iter().zip(&self.estimates).zip(&self.std_errors) {
            out.push_str(&format!("{},{},{},{}\n", Num(*t), Num(z.re), Num(z.im), Num(*se)));
        }
        out
    }
}

/// Sample mean of `exp(i t A)` at every `t`; standard error `1/√n` per component.
pub fn empirical_cf(result: &MCResult, t_grid: &[f64]) -> Result<EmpiricalCF> {
    let samples = &result.samples;
    if samples.is_empty() {
        return Err(LevyError::parameter("empirical_cf", "no samples"));
    }
    let n = samples.len() as f64;
    let estimates = t_grid
        .par_iter()
        .map(|&t| {
            let (re, im): (Vec<f64>, Vec<f64>) = samples
                .iter()
                .map(|&a| {
                    let (s, c) = (t * a).sin_cos();
                    (c, s)
                })
                .unzip();
            Complex64::new(pairwise_sum(&re) / n, pairwise_sum(&im) / n)
        })
        .collect();
    Ok(EmpiricalCF { t_grid: t_grid.to_vec(), estimates, std_errors: vec![1.0 / n.sqrt(); t_grid.len()] })
}
