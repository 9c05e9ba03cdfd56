//! Monte-Carlo caches of the scale-free statistic `2n·D` and the quantile
//! lookup that turns them into per-window thresholds.
//!
//! A cache stores draws of `S = U′ ∇²h(π) U` (or of the χ² mixture) without
//! the `1/(2n)` factor. One cache therefore serves every window size: the
//! threshold for `n` samples is `s_(k) / (2n)` with `k = ⌈(1−β)T⌉`.

use std::cell::Cell;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::threshold::covariance::CovarianceModel;

/// Default number of Monte-Carlo draws per cache.
pub const DEFAULT_SAMPLES: usize = 1000;

/// Below this many draws quantiles are too coarse to trust.
pub const MIN_RELIABLE_SAMPLES: usize = 100;

const NEGATIVE_SAMPLE_TOL: f64 = 1e-8;
const IMAGINARY_TOL: f64 = 1e-8;
const SYMMETRY_TOL: f64 = 1e-10;

thread_local! {
    static CACHE_BUILDS: Cell<usize> = const { Cell::new(0) };
}

/// Number of caches finalized on the current thread so far.
pub fn cache_builds_on_this_thread() -> usize {
    CACHE_BUILDS.with(Cell::get)
}

/// Which limiting distribution a cache was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CacheMethod {
    Gaussian,
    Chi2,
    Robust,
}

/// Which estimator produced a threshold. Serialized with the command-line
/// tags `sv`, `wc`, `wc-chi2`, `wc-robust`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ThresholdMethod {
    #[serde(rename = "sv")]
    Sanov,
    #[serde(rename = "wc")]
    WcGaussian,
    #[serde(rename = "wc-chi2")]
    WcChi2,
    #[serde(rename = "wc-robust")]
    WcRobust,
}

impl ThresholdMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            ThresholdMethod::Sanov => "sv",
            ThresholdMethod::WcGaussian => "wc",
            ThresholdMethod::WcChi2 => "wc-chi2",
            ThresholdMethod::WcRobust => "wc-robust",
        }
    }
}

impl From<CacheMethod> for ThresholdMethod {
    fn from(m: CacheMethod) -> Self {
        match m {
            CacheMethod::Gaussian => ThresholdMethod::WcGaussian,
            CacheMethod::Chi2 => ThresholdMethod::WcChi2,
            CacheMethod::Robust => ThresholdMethod::WcRobust,
        }
    }
}

/// A threshold `η` (nats) for sample size `n` and target rate `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    pub value: f64,
    pub method: ThresholdMethod,
    pub n: usize,
    pub beta: f64,
}

/// Sorted raw draws of the `2n`-free statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCache {
    raw: Vec<f64>,
    method: CacheMethod,
    seed: u64,
}

impl SampleCache {
    /// Finalizes a set of draws: checks them and sorts ascending.
    pub fn from_samples(mut raw: Vec<f64>, method: CacheMethod, seed: u64) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Input("sample cache needs at least one draw".into()));
        }
        if let Some(bad) = raw.iter().find(|&&s| !(s >= -NEGATIVE_SAMPLE_TOL)) {
            return Err(Error::Numerical(format!(
                "quadratic-form draw {bad} is negative or NaN"
            )));
        }
        raw.sort_by(f64::total_cmp);
        CACHE_BUILDS.with(|c| c.set(c.get() + 1));
        Ok(Self { raw, method, seed })
    }

    pub fn samples(&self) -> &[f64] {
        &self.raw
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn method(&self) -> CacheMethod {
        self.method
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Index `k = ⌈(1−β)T⌉` (1-based) of the order statistic used as quantile.
pub fn quantile_index(beta: f64, samples: usize) -> Result<usize> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Input(format!("beta must lie in (0, 1), got {beta}")));
    }
    // the nudge keeps exact products such as 0.999·1000 from rounding up
    let k = ((1.0 - beta) * samples as f64 - 1e-9).ceil() as usize;
    if k < 1 || k > samples {
        return Err(Error::QuantileResolution {
            beta,
            samples,
            index: k,
        });
    }
    Ok(k)
}

/// The `⌈(1−β)T⌉`-th smallest element of an ascending slice.
pub fn order_statistic(sorted: &[f64], beta: f64) -> Result<f64> {
    let k = quantile_index(beta, sorted.len())?;
    Ok(sorted[k - 1])
}

/// Threshold for a window of `n` samples: `s_(⌈(1−β)T⌉) / (2n)`.
pub fn quantile_threshold(cache: &SampleCache, n: usize, beta: f64) -> Result<ThresholdEstimate> {
    if n == 0 {
        return Err(Error::Input("sample size n must be at least 1".into()));
    }
    let s = order_statistic(&cache.raw, beta)?;
    Ok(ThresholdEstimate {
        value: s / (2.0 * n as f64),
        method: cache.method.into(),
        n,
        beta,
    })
}

fn warn_if_few(samples: usize) {
    if samples < MIN_RELIABLE_SAMPLES {
        log::warn!(
            "only {samples} Monte-Carlo draws requested; quantiles below {MIN_RELIABLE_SAMPLES} draws are unreliable"
        );
    }
}

/// Unsorted draws `U_t′ H U_t` with `U_t = F z_t ~ N(0, Λ)`; draw `t` uses
/// substream `t` of `seed`.
pub(crate) fn gaussian_draws(
    cov: &CovarianceModel,
    hess: &DMatrix<f64>,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let dim = cov.lambda().nrows();
    if hess.nrows() != dim || hess.ncols() != dim {
        return Err(Error::Input(format!(
            "Hessian is {}x{}, covariance is {dim}x{dim}",
            hess.nrows(),
            hess.ncols()
        )));
    }
    let factor = cov.factor();
    Ok((0..samples)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, t as u64);
            let z = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
            let u = &factor * z;
            u.dot(&(hess * &u))
        })
        .collect())
}

/// Gaussian-branch cache: `T` draws of `U′ ∇²h(π) U`, `U ~ N(0, Λ)`.
pub fn gaussian_sample_cache(
    cov: &CovarianceModel,
    hess: &DMatrix<f64>,
    samples: usize,
    seed: u64,
) -> Result<SampleCache> {
    warn_if_few(samples);
    let draws = gaussian_draws(cov, hess, samples, seed)?;
    SampleCache::from_samples(draws, CacheMethod::Gaussian, seed)
}

/// Weights `ρ_k`: eigenvalues of `∇²h(π) Λ`, negative parts floored at 0,
/// sorted descending.
///
/// With `Λ = F F′` and a symmetric Hessian the spectrum is that of the
/// symmetric `F′ H F`, which avoids a general eigensolver on a singular
/// product. A nonsymmetric `H` falls back to the general solver.
pub fn chi2_mixture_weights(hess: &DMatrix<f64>, cov: &CovarianceModel) -> Result<Vec<f64>> {
    let dim = cov.lambda().nrows();
    if hess.nrows() != dim || hess.ncols() != dim {
        return Err(Error::Input(format!(
            "Hessian is {}x{}, covariance is {dim}x{dim}",
            hess.nrows(),
            hess.ncols()
        )));
    }
    let asym = (hess - hess.transpose()).amax();
    let mut rho: Vec<f64> = if asym <= SYMMETRY_TOL * hess.amax().max(1.0) {
        let f = cov.factor();
        let mut inner = f.transpose() * hess * &f;
        inner = (&inner + inner.transpose()) * 0.5;
        inner.symmetric_eigenvalues().iter().map(|&r| r.max(0.0)).collect()
    } else {
        let eig = (hess * cov.lambda()).complex_eigenvalues();
        let scale = eig.iter().map(|c| c.norm()).fold(1.0, f64::max);
        let mut out = Vec::with_capacity(eig.len());
        for c in eig.iter() {
            if c.im.abs() > IMAGINARY_TOL * scale {
                return Err(Error::Numerical(format!(
                    "eigenvalue {} + {}i of the Hessian-covariance product is materially complex",
                    c.re, c.im
                )));
            }
            out.push(c.re.max(0.0));
        }
        out
    };
    rho.sort_by(|a, b| b.total_cmp(a));
    Ok(rho)
}

/// χ²-branch cache: `T` draws of `Σ_k ρ_k χ²_{1k}`.
pub fn chi2_sample_cache(rho: &[f64], samples: usize, seed: u64) -> Result<SampleCache> {
    if let Some(bad) = rho.iter().find(|&&r| !(r >= 0.0)) {
        return Err(Error::Input(format!("mixture weight {bad} is negative")));
    }
    warn_if_few(samples);
    let draws = (0..samples)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, t as u64);
            rho.iter()
                .map(|&r| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    r * z * z
                })
                .sum()
        })
        .collect();
    SampleCache::from_samples(draws, CacheMethod::Chi2, seed)
}
