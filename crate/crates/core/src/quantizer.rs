//! Quantization of multi-feature event records into a finite alphabet.
//!
//! One optional vector-valued feature is clustered with k-means; every
//! scalar feature is cut into `levels` bins at empirical quantiles of the
//! reference data. The state is the mixed-radix code of
//! `(cluster, bin₁, bin₂, …)` with radices `(k, n₁, n₂, …)`, cluster most
//! significant.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng};

const KMEANS_RESTARTS: u64 = 5;
const KMEANS_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSpec {
    /// CSV columns forming the clustered vector.
    pub columns: Vec<String>,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalarSpec {
    pub name: String,
    pub levels: usize,
}

/// Which features are quantized and how finely.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    #[serde(default)]
    pub cluster: Option<ClusterSpec>,
    #[serde(default)]
    pub scalars: Vec<ScalarSpec>,
}

impl FeatureSchema {
    pub fn validate(&self) -> Result<()> {
        if let Some(c) = &self.cluster {
            if c.k == 0 {
                return Err(Error::Config("cluster count k must be at least 1".into()));
            }
            if c.columns.is_empty() {
                return Err(Error::Config("cluster feature needs at least one column".into()));
            }
        }
        if let Some(s) = self.scalars.iter().find(|s| s.levels == 0) {
            return Err(Error::Config(format!("feature {} has zero levels", s.name)));
        }
        Ok(())
    }

    /// Cluster count, 1 when no feature is clustered.
    pub fn k(&self) -> usize {
        self.cluster.as_ref().map_or(1, |c| c.k)
    }

    /// Alphabet size `N = k · Π nᵢ`.
    pub fn n_states(&self) -> usize {
        self.k() * self.scalars.iter().map(|s| s.levels).product::<usize>()
    }

    /// Every column the schema reads, cluster columns first.
    pub fn columns(&self) -> Vec<&str> {
        let mut cols: Vec<&str> = self
            .cluster
            .iter()
            .flat_map(|c| c.columns.iter().map(String::as_str))
            .collect();
        cols.extend(self.scalars.iter().map(|s| s.name.as_str()));
        cols
    }
}

/// One event: timestamp, clustered vector, and scalar features in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub timestamp: f64,
    pub cluster: Vec<f64>,
    pub scalars: Vec<f64>,
}

/// Distance between two clustered feature vectors.
pub trait RecordMetric: Sync {
    fn distance(&self, a: &[f64], b: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Euclidean;

impl RecordMetric for Euclidean {
    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}

/// Frozen cluster centers and bin edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub centers: Vec<Vec<f64>>,
    pub bin_edges: Vec<Vec<f64>>,
}

/// Linear-interpolation quantile of an ascending slice.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn bin_edges(values: &mut [f64], levels: usize, name: &str) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (1..levels)
        .map(|i| quantile_sorted(values, i as f64 / levels as f64))
        .collect();
    edges.dedup();
    if edges.len() + 1 < levels {
        log::warn!(
            "feature {name}: only {} distinct bins out of {levels} (degenerate values)",
            edges.len() + 1
        );
    }
    edges
}

fn nearest(point: &[f64], centers: &[Vec<f64>], metric: &dyn RecordMetric) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = metric.distance(point, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_once(points: &[&[f64]], k: usize, metric: &dyn RecordMetric, seed: u64) -> (Vec<Vec<f64>>, f64) {
    let mut rng = stream_rng(seed, 0);
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..points.len())].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| metric.distance(p, &centers[0]).powi(2)).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[pick].to_vec());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(metric.distance(p, centers.last().unwrap()).powi(2));
        }
    }

    let dim = points[0].len();
    let mut assignment = vec![usize::MAX; points.len()];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (a, p) in assignment.iter_mut().zip(points) {
            let (c, _) = nearest(p, &centers, metric);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assignment.iter().zip(points) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        for c in 0..k {
            // an emptied cluster keeps its previous center
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let inertia = points
        .iter()
        .map(|p| nearest(p, &centers, metric).1.powi(2))
        .sum();
    (centers, inertia)
}

/// Fits cluster centers (k-means++ seeding, best of several restarts) and
/// per-feature quantile bin edges on reference records.
pub fn fit_codebook(
    records: &[FeatureRecord],
    schema: &FeatureSchema,
    metric: &dyn RecordMetric,
    seed: u64,
) -> Result<Codebook> {
    schema.validate()?;
    if records.is_empty() {
        return Err(Error::Input("cannot fit a codebook on zero records".into()));
    }
    let centers = match &schema.cluster {
        None => Vec::new(),
        Some(spec) => {
            if records.len() < spec.k {
                return Err(Error::Input(format!(
                    "{} records cannot form {} clusters",
                    records.len(),
                    spec.k
                )));
            }
            let points: Vec<&[f64]> = records.iter().map(|r| r.cluster.as_slice()).collect();
            let mut distinct: Vec<&[f64]> = points.clone();
            distinct.sort_by(|a, b| {
                a.iter()
                    .zip(b.iter())
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            distinct.dedup();
            if distinct.len() < spec.k {
                return Err(Error::Input(format!(
                    "only {} distinct cluster-feature values for {} clusters",
                    distinct.len(),
                    spec.k
                )));
            }
            let mut best: Option<(Vec<Vec<f64>>, f64)> = None;
            for restart in 0..KMEANS_RESTARTS {
                let run = kmeans_once(&points, spec.k, metric, derive_seed(seed, restart));
                if best.as_ref().is_none_or(|b| run.1 < b.1) {
                    best = Some(run);
                }
            }
            best.map(|b| b.0).unwrap_or_default()
        }
    };
    let bin_edges = schema
        .scalars
        .iter()
        .enumerate()
        .map(|(f, spec)| {
            let mut values: Vec<f64> = records.iter().map(|r| r.scalars[f]).collect();
            bin_edges(&mut values, spec.levels, &spec.name)
        })
        .collect();
    Ok(Codebook { centers, bin_edges })
}

/// 0-based state of a record under the Euclidean metric.
pub fn encode(record: &FeatureRecord, codebook: &Codebook, schema: &FeatureSchema) -> usize {
    encode_with_metric(record, codebook, schema, &Euclidean)
}

/// 0-based state of a record. Out-of-range values fall in the extreme bins;
/// a value equal to an edge goes to the lower bin.
pub fn encode_with_metric(
    record: &FeatureRecord,
    codebook: &Codebook,
    schema: &FeatureSchema,
    metric: &dyn RecordMetric,
) -> usize {
    let mut state = if codebook.centers.is_empty() {
        0
    } else {
        nearest(&record.cluster, &codebook.centers, metric).0
    };
    for ((spec, edges), &v) in schema.scalars.iter().zip(&codebook.bin_edges).zip(&record.scalars) {
        let bin = edges.partition_point(|&e| e < v);
        state = state * spec.levels + bin;
    }
    state
}

/// Nudges repeated timestamps forward by multiples of `delta` so every
/// record has a unique time. Input must be sorted by timestamp.
pub fn perturb_duplicate_timestamps(records: &mut [FeatureRecord], delta: f64) {
    let mut run = 0u32;
    for i in 1..records.len() {
        if records[i].timestamp == records[i - 1 - run as usize].timestamp {
            run += 1;
            records[i].timestamp += delta * f64::from(run);
        } else {
            run = 0;
        }
    }
}
