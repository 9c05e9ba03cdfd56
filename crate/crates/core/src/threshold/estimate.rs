//! End-to-end threshold estimators: Sanov, the two weak-convergence
//! branches for the ordinary test, and the robust multi-law variant.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::divergence::{hessian_h, DivergenceWorkspace};
use crate::error::{Error, Result};
use crate::markov::{empirical_law, SymbolSequence, TransitionModel, DEFAULT_EPS};
use crate::rng::derive_seed;
use crate::threshold::cache::{
    chi2_mixture_weights, chi2_sample_cache, gaussian_draws, gaussian_sample_cache,
    quantile_threshold, CacheMethod, SampleCache, ThresholdEstimate, ThresholdMethod,
    DEFAULT_SAMPLES, MIN_RELIABLE_SAMPLES,
};
use crate::threshold::covariance::{covariance, CovarianceModel, CovarianceOptions};

/// A reference path must contain at least this many pairs per pair state.
pub const MIN_REFERENCE_PER_PAIR: usize = 500;

/// `η = −log(β) / n`.
pub fn sanov_threshold(n: usize, beta: f64) -> Result<ThresholdEstimate> {
    if n == 0 {
        return Err(Error::Input("sample size n must be at least 1".into()));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Input(format!("beta must lie in (0, 1], got {beta}")));
    }
    Ok(ThresholdEstimate {
        value: (-beta.ln() / n as f64).max(0.0),
        method: ThresholdMethod::Sanov,
        n,
        beta,
    })
}

/// Where the null law comes from.
#[derive(Debug, Clone)]
pub enum Reference {
    /// A long anomaly-free pair path; `π` is estimated from it.
    Path(SymbolSequence),
    /// A known chain; its exact stationary law is used.
    Model(TransitionModel),
    /// A pair law given directly.
    Law(Vec<f64>),
}

/// Which limiting distribution the ordinary estimator samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Gaussian,
    Chi2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdOptions {
    /// Monte-Carlo draws `T`.
    pub samples: usize,
    pub seed: u64,
    /// Floor for empirical and reference laws.
    pub eps: f64,
    pub covariance: CovarianceOptions,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            seed: 0,
            eps: DEFAULT_EPS,
            covariance: CovarianceOptions::default(),
        }
    }
}

fn floor_and_normalize(law: &[f64], eps: f64) -> Vec<f64> {
    let mut v: Vec<f64> = law.iter().map(|&x| x.max(eps)).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Everything derived from one reference: the law the statistic is measured
/// against, the Hessian there, and the covariance of the empirical measure.
#[derive(Debug, Clone)]
pub struct PreparedReference {
    law: Vec<f64>,
    model: TransitionModel,
    hessian: DMatrix<f64>,
    covariance: CovarianceModel,
}

impl PreparedReference {
    pub fn prepare(reference: &Reference, opts: &ThresholdOptions) -> Result<Self> {
        let (law, model) = match reference {
            Reference::Path(z) => {
                let needed = MIN_REFERENCE_PER_PAIR * z.alphabet().pair_size();
                if z.len() < needed {
                    return Err(Error::Input(format!(
                        "reference path has {} pairs, need at least {needed}",
                        z.len()
                    )));
                }
                let law = empirical_law(z, opts.eps)?.into_gamma();
                let model = TransitionModel::from_law(&law)?;
                (law, model)
            }
            Reference::Model(m) => {
                if m.pi().iter().all(|&p| p >= opts.eps) {
                    (m.pi().to_vec(), m.clone())
                } else {
                    // zero-probability pairs: floor, renormalize, rebuild Q
                    let law = floor_and_normalize(m.pi(), opts.eps);
                    let model = TransitionModel::from_law(&law)?;
                    (law, model)
                }
            }
            Reference::Law(v) => {
                let total: f64 = v.iter().sum();
                if v.iter().any(|&x| !(x >= 0.0)) || (total - 1.0).abs() > 1e-6 {
                    return Err(Error::Input(
                        "reference law must be a nonnegative vector summing to 1".into(),
                    ));
                }
                let law = floor_and_normalize(v, opts.eps);
                let model = TransitionModel::from_law(&law)?;
                (law, model)
            }
        };
        let hessian = hessian_h(&law)?;
        let covariance = covariance(&model, opts.covariance)?;
        Ok(Self {
            law,
            model,
            hessian,
            covariance,
        })
    }

    /// The reference law `π` (or its floored estimate).
    pub fn law(&self) -> &[f64] {
        &self.law
    }

    pub fn model(&self) -> &TransitionModel {
        &self.model
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn covariance(&self) -> &CovarianceModel {
        &self.covariance
    }

    pub fn workspace(&self) -> Result<DivergenceWorkspace> {
        DivergenceWorkspace::new(&self.law)
    }

    /// Builds the ordinary-test cache for the chosen branch.
    pub fn build_cache(&self, branch: Branch, samples: usize, seed: u64) -> Result<SampleCache> {
        match branch {
            Branch::Gaussian => gaussian_sample_cache(&self.covariance, &self.hessian, samples, seed),
            Branch::Chi2 => {
                let rho = chi2_mixture_weights(&self.hessian, &self.covariance)?;
                chi2_sample_cache(&rho, samples, seed)
            }
        }
    }
}

/// Serializable threshold record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub method: ThresholdMethod,
    pub n: usize,
    pub beta: f64,
    pub eta: f64,
    #[serde(rename = "T")]
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub truncation_m: Option<usize>,
    pub repaired_eigencount: Option<usize>,
}

impl ThresholdReport {
    pub fn sanov(estimate: ThresholdEstimate) -> Self {
        Self {
            method: estimate.method,
            n: estimate.n,
            beta: estimate.beta,
            eta: estimate.value,
            samples: None,
            seed: None,
            truncation_m: None,
            repaired_eigencount: None,
        }
    }

    fn simulated(estimate: ThresholdEstimate, opts: &ThresholdOptions, refs: &[&PreparedReference]) -> Self {
        Self {
            method: estimate.method,
            n: estimate.n,
            beta: estimate.beta,
            eta: estimate.value,
            samples: Some(opts.samples),
            seed: Some(opts.seed),
            truncation_m: refs.iter().map(|r| r.covariance.truncation_m()).max(),
            repaired_eigencount: Some(refs.iter().map(|r| r.covariance.repair_log().len()).sum()),
        }
    }

    pub fn estimate(&self) -> ThresholdEstimate {
        ThresholdEstimate {
            value: self.eta,
            method: self.method,
            n: self.n,
            beta: self.beta,
        }
    }
}

/// Ordinary-test weak-convergence threshold for `n` samples.
pub fn estimate_threshold_ordinary(
    reference: &Reference,
    n: usize,
    beta: f64,
    branch: Branch,
    opts: &ThresholdOptions,
) -> Result<ThresholdReport> {
    let prepared = PreparedReference::prepare(reference, opts)?;
    let cache = prepared.build_cache(branch, opts.samples, opts.seed)?;
    let estimate = quantile_threshold(&cache, n, beta)?;
    Ok(ThresholdReport::simulated(estimate, opts, &[&prepared]))
}

/// Seed for the draws of law `l`; law 0 shares the ordinary-test stream.
pub fn law_seed(seed: u64, l: usize) -> u64 {
    if l == 0 {
        seed
    } else {
        derive_seed(seed, l as u64)
    }
}

/// Robust-test cache: pointwise infimum over laws of independent
/// per-law Gaussian draws, plus the per-law caches themselves.
#[derive(Debug, Clone)]
pub struct RobustCache {
    combined: SampleCache,
    per_law: Vec<SampleCache>,
}

impl RobustCache {
    pub fn build(prepared: &[PreparedReference], samples: usize, seed: u64) -> Result<Self> {
        if prepared.is_empty() {
            return Err(Error::Input("robust threshold needs at least one reference".into()));
        }
        if samples < MIN_RELIABLE_SAMPLES {
            log::warn!("only {samples} Monte-Carlo draws requested for the robust cache");
        }
        let mut combined = vec![f64::INFINITY; samples];
        let mut per_law = Vec::with_capacity(prepared.len());
        for (l, p) in prepared.iter().enumerate() {
            let s = law_seed(seed, l);
            let draws = gaussian_draws(p.covariance(), p.hessian(), samples, s)?;
            for (c, &d) in combined.iter_mut().zip(&draws) {
                *c = c.min(d);
            }
            per_law.push(SampleCache::from_samples(draws, CacheMethod::Gaussian, s)?);
        }
        Ok(Self {
            combined: SampleCache::from_samples(combined, CacheMethod::Robust, seed)?,
            per_law,
        })
    }

    pub fn combined(&self) -> &SampleCache {
        &self.combined
    }

    pub fn per_law(&self) -> &[SampleCache] {
        &self.per_law
    }
}

/// Robust-test weak-convergence threshold for `n` samples.
pub fn estimate_threshold_robust(
    references: &[Reference],
    n: usize,
    beta: f64,
    opts: &ThresholdOptions,
) -> Result<ThresholdReport> {
    let prepared = references
        .iter()
        .map(|r| PreparedReference::prepare(r, opts))
        .collect::<Result<Vec<_>>>()?;
    let cache = RobustCache::build(&prepared, opts.samples, opts.seed)?;
    let estimate = quantile_threshold(cache.combined(), n, beta)?;
    let refs: Vec<&PreparedReference> = prepared.iter().collect();
    Ok(ThresholdReport::simulated(estimate, opts, &refs))
}
