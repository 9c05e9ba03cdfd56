//! Evaluation harnesses: random chains, the direct-simulation oracle
//! threshold, the accuracy metric over an experiment grid, and ROC points.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{relative_entropy, DivergenceWorkspace};
use crate::error::{Error, Result};
use crate::markov::{simulate_path, Alphabet, EmpiricalLaw, TransitionModel, DEFAULT_EPS};
use crate::rng::{derive_seed, stream_rng};
use crate::threshold::{
    order_statistic, quantile_threshold, sanov_threshold, Branch, PreparedReference, Reference,
    SampleCache, ThresholdOptions,
};

/// Default floor for [`random_transition`] rows.
pub const DEFAULT_MIN_ENTRY: f64 = 1e-3;

/// Random chain with every row drawn from a flat Dirichlet, floored at
/// `min_entry` and renormalized.
pub fn random_transition(n_states: usize, seed: u64, min_entry: f64) -> Result<TransitionModel> {
    Alphabet::new(n_states)?;
    if !(min_entry > 0.0 && min_entry * (n_states as f64) < 1.0) {
        return Err(Error::Input(format!(
            "min_entry must lie in (0, 1/N), got {min_entry} for N={n_states}"
        )));
    }
    let mut rng = stream_rng(seed, 0);
    let mut flat = Vec::with_capacity(n_states * n_states);
    for _ in 0..n_states {
        let mut row: Vec<f64> = (0..n_states).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x = (*x / s).max(min_entry));
        let s: f64 = row.iter().sum();
        flat.extend(row.iter().map(|x| x / s));
    }
    TransitionModel::from_q(nalgebra::DMatrix::from_row_slice(n_states, n_states, &flat))
}

/// Sorted statistics `D(Γ_n‖π)` over `paths` independent length-`n` paths
/// of `model`, each measured against `reference`. Path `t` uses substream `t`.
pub fn simulate_statistics(
    model: &TransitionModel,
    reference: &DivergenceWorkspace,
    n: usize,
    paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n == 0 || paths == 0 {
        return Err(Error::Input("n and the path count must be positive".into()));
    }
    if model.alphabet() != reference.alphabet() {
        return Err(Error::Input("model and reference alphabets differ".into()));
    }
    let mut stats = (0..paths)
        .into_par_iter()
        .map_init(
            || vec![0usize; model.alphabet().pair_size()],
            |counts, t| {
                let mut rng = stream_rng(seed, t as u64);
                model.sample_counts(n, &mut rng, counts);
                let law = EmpiricalLaw::from_counts(counts, DEFAULT_EPS)?;
                relative_entropy(law.gamma(), reference)
            },
        )
        .collect::<Result<Vec<f64>>>()?;
    stats.sort_by(f64::total_cmp);
    Ok(stats)
}

/// Direct-simulation threshold `η*`: the `⌈(1−β)T⌉`-th smallest of `T`
/// null statistics at sample size `n`.
pub fn oracle_threshold(
    model: &TransitionModel,
    n: usize,
    beta: f64,
    paths: usize,
    seed: u64,
) -> Result<f64> {
    let ws = DivergenceWorkspace::new(model.pi())?;
    order_statistic(&simulate_statistics(model, &ws, n, paths, seed)?, beta)
}

/// `n̄ = 2N² + i·⌊0.2N² + 1⌋` for `i = 1, 2, …` while `n̄ < 6N² + 5`.
pub fn n_grid(n_states: usize) -> Vec<usize> {
    let sq = n_states * n_states;
    let step = (0.2 * sq as f64 + 1.0).floor() as usize;
    (1..)
        .map(|i| 2 * sq + i * step)
        .take_while(|&n| n < 6 * sq + 5)
        .collect()
}

/// Estimators compared by the accuracy experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Estimator {
    #[serde(rename = "sv")]
    Sanov,
    #[serde(rename = "wc")]
    WcGaussian,
    #[serde(rename = "wc-chi2")]
    WcChi2,
    #[serde(rename = "oracle")]
    Oracle,
}

impl Estimator {
    pub const COMPARED: [Estimator; 3] = [Estimator::WcGaussian, Estimator::WcChi2, Estimator::Sanov];

    pub fn tag(&self) -> &'static str {
        match self {
            Estimator::Sanov => "sv",
            Estimator::WcGaussian => "wc",
            Estimator::WcChi2 => "wc-chi2",
            Estimator::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentGrid {
    pub n_states: Vec<usize>,
    /// Per-`N` sample sizes; [`n_grid`] when `None`.
    pub n_values: Option<Vec<usize>>,
    pub beta: f64,
    /// Random models per `N`.
    pub repetitions: usize,
    /// Oracle paths and weak-convergence draws.
    pub samples: usize,
    pub seed: u64,
    pub min_entry: f64,
    /// Reference path length is `reference_factor · N²` pairs.
    pub reference_factor: usize,
}

impl ExperimentGrid {
    pub fn new(n_states: Vec<usize>, beta: f64, repetitions: usize, samples: usize, seed: u64) -> Self {
        Self {
            n_states,
            n_values: None,
            beta,
            repetitions,
            samples,
            seed,
            min_entry: DEFAULT_MIN_ENTRY,
            reference_factor: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_states.is_empty() || self.n_states.contains(&0) {
            return Err(Error::Config("grid needs at least one positive N".into()));
        }
        if self.repetitions == 0 || self.samples == 0 || self.reference_factor == 0 {
            return Err(Error::Config("repetitions, samples and reference_factor must be positive".into()));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if self.n_values.as_ref().is_some_and(|v| v.is_empty() || v.contains(&0)) {
            return Err(Error::Config("n values must be positive and nonempty".into()));
        }
        Ok(())
    }

    pub fn ns_for(&self, n_states: usize) -> Vec<usize> {
        self.n_values.clone().unwrap_or_else(|| n_grid(n_states))
    }

    /// Seed of repetition `k` at alphabet size `N`.
    pub fn model_seed(&self, n_states: usize, k: usize) -> u64 {
        derive_seed(derive_seed(self.seed, n_states as u64), k as u64)
    }
}

/// `(N, n, method, eta)` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaRow {
    #[serde(rename = "N")]
    pub n_states: usize,
    pub n: usize,
    pub method: Estimator,
    pub eta: f64,
}

pub const ETA_COLUMNS: [&str; 4] = ["N", "n", "method", "eta"];

/// `(N, n, method, d)` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    #[serde(rename = "N")]
    pub n_states: usize,
    pub n: usize,
    pub method: Estimator,
    pub d: f64,
}

pub const ACCURACY_COLUMNS: [&str; 4] = ["N", "n", "method", "d"];

/// Thresholds of every estimator, and of the oracle, for one random model
/// across its `n` values. `π` is estimated from a reference path; the
/// weak-convergence caches are drawn once and reused for every `n`.
pub fn model_thresholds(grid: &ExperimentGrid, n_states: usize, k: usize) -> Result<Vec<EtaRow>> {
    let seed = grid.model_seed(n_states, k);
    let model = random_transition(n_states, seed, grid.min_entry)?;
    let n0 = grid.reference_factor * n_states * n_states;
    let path = simulate_path(&model, n0, derive_seed(seed, 1))?;
    let opts = ThresholdOptions {
        samples: grid.samples,
        seed: derive_seed(seed, 2),
        ..Default::default()
    };
    let prepared = PreparedReference::prepare(&Reference::Path(path), &opts)?;
    let gauss = prepared.build_cache(Branch::Gaussian, grid.samples, opts.seed)?;
    let chi2 = prepared.build_cache(Branch::Chi2, grid.samples, derive_seed(seed, 3))?;
    let mut rows = Vec::new();
    for (i, n) in grid.ns_for(n_states).into_iter().enumerate() {
        let oracle = oracle_threshold(&model, n, grid.beta, grid.samples, derive_seed(seed, 100 + i as u64))?;
        let eta = |c: &SampleCache| quantile_threshold(c, n, grid.beta).map(|e| e.value);
        for (method, value) in [
            (Estimator::Oracle, oracle),
            (Estimator::WcGaussian, eta(&gauss)?),
            (Estimator::WcChi2, eta(&chi2)?),
            (Estimator::Sanov, sanov_threshold(n, grid.beta)?.value),
        ] {
            rows.push(EtaRow { n_states, n, method, eta: value });
        }
    }
    Ok(rows)
}

/// Mean squared error `d = (1/K) Σ_k (η̂⁽ᵏ⁾ − η*⁽ᵏ⁾)²` per `(N, n, method)`.
pub fn accuracy_table(grid: &ExperimentGrid) -> Result<Vec<AccuracyRow>> {
    grid.validate()?;
    let mut out = Vec::new();
    for &n_states in &grid.n_states {
        let per_model = (0..grid.repetitions)
            .into_par_iter()
            .map(|k| model_thresholds(grid, n_states, k))
            .collect::<Result<Vec<_>>>()?;
        for n in grid.ns_for(n_states) {
            for method in Estimator::COMPARED {
                let errors: Vec<(f64, f64)> = per_model
                    .iter()
                    .map(|rows| {
                        let pick = |m| rows.iter().find(|r| r.n == n && r.method == m).map(|r| r.eta);
                        (pick(method).unwrap_or(f64::NAN), pick(Estimator::Oracle).unwrap_or(f64::NAN))
                    })
                    .collect();
                out.push(AccuracyRow {
                    n_states,
                    n,
                    method,
                    d: accuracy_metric(&errors),
                });
            }
        }
    }
    Ok(out)
}

/// Mean of `(η̂ − η*)²` over `(η̂, η*)` pairs.
pub fn accuracy_metric(pairs: &[(f64, f64)]) -> f64 {
    pairs.iter().map(|(e, o)| (e - o).powi(2)).sum::<f64>() / pairs.len() as f64
}

/// Tests compared in the ROC harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RocMethod {
    #[serde(rename = "HTWC-1")]
    HtWcGaussian,
    #[serde(rename = "HTWC-2")]
    HtWcChi2,
    #[serde(rename = "HTSV")]
    HtSanov,
}

impl RocMethod {
    pub const ALL: [RocMethod; 3] = [RocMethod::HtWcGaussian, RocMethod::HtWcChi2, RocMethod::HtSanov];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub beta: f64,
    pub method: RocMethod,
    pub fpr: f64,
    pub tpr: f64,
}

pub const ROC_COLUMNS: [&str; 4] = ["beta", "method", "fpr", "tpr"];

/// `{0.001} ∪ {0.01, 0.02, …, 0.19}`.
pub fn default_roc_betas() -> Vec<f64> {
    std::iter::once(0.001)
        .chain((1..=19).map(|i| i as f64 / 100.0))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocConfig {
    pub n: usize,
    /// Paths per class.
    pub paths: usize,
    /// Weak-convergence draws.
    pub samples: usize,
    pub betas: Vec<f64>,
    pub seed: u64,
}

/// Classifies `paths` null and `paths` alternative paths with every method
/// and target rate. Thresholds use the exact null law.
pub fn roc_experiment(
    null_model: &TransitionModel,
    alt_model: &TransitionModel,
    config: &RocConfig,
    methods: &[RocMethod],
) -> Result<Vec<RocPoint>> {
    if config.betas.is_empty() {
        return Err(Error::Config("ROC needs at least one beta".into()));
    }
    let ws = DivergenceWorkspace::new(null_model.pi())?;
    let negatives = simulate_statistics(null_model, &ws, config.n, config.paths, derive_seed(config.seed, 1))?;
    let positives = simulate_statistics(alt_model, &ws, config.n, config.paths, derive_seed(config.seed, 2))?;
    let opts = ThresholdOptions {
        samples: config.samples,
        seed: derive_seed(config.seed, 3),
        ..Default::default()
    };
    let prepared = PreparedReference::prepare(&Reference::Model(null_model.clone()), &opts)?;
    let cache = |m: RocMethod| -> Result<Option<SampleCache>> {
        Ok(match m {
            RocMethod::HtWcGaussian => Some(prepared.build_cache(Branch::Gaussian, config.samples, opts.seed)?),
            RocMethod::HtWcChi2 => {
                Some(prepared.build_cache(Branch::Chi2, config.samples, derive_seed(config.seed, 4))?)
            }
            RocMethod::HtSanov => None,
        })
    };
    let above = |sorted: &[f64], eta: f64| {
        (sorted.len() - sorted.partition_point(|&s| s <= eta)) as f64 / sorted.len() as f64
    };
    let mut points = Vec::new();
    for &method in methods {
        let c = cache(method)?;
        for &beta in &config.betas {
            let eta = match &c {
                Some(c) => quantile_threshold(c, config.n, beta)?.value,
                None => sanov_threshold(config.n, beta)?.value,
            };
            points.push(RocPoint {
                beta,
                method,
                fpr: above(&negatives, eta),
                tpr: above(&positives, eta),
            });
        }
    }
    Ok(points)
}
