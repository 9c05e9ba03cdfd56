//! Sliding-window detection with per-window thresholds.
//!
//! The stream carries original-alphabet states with timestamps. Each window
//! `[s, s + w_s)` pair-encodes its own states, so a window holding `c`
//! events contributes `n = c − 1` pair samples. Thresholds come from a
//! shared sample cache scaled by `1/(2n)`; nothing is re-simulated per
//! window.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{relative_entropy, DivergenceWorkspace};
use crate::error::{Error, Result};
use crate::markov::{Alphabet, EmpiricalLaw, DEFAULT_EPS};
use crate::threshold::{
    law_seed, quantile_threshold, sanov_threshold, PreparedReference, Reference, RobustCache,
    SampleCache, ThresholdOptions,
};

/// Seconds in a day, the period of a time-of-day schedule.
pub const DAY_SECONDS: f64 = 86_400.0;

/// Timestamped original-alphabet observations.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedStream {
    alphabet: Alphabet,
    timestamps: Vec<f64>,
    states: Vec<usize>,
}

impl TimedStream {
    pub fn new(alphabet: Alphabet, timestamps: Vec<f64>, states: Vec<usize>) -> Result<Self> {
        if timestamps.len() != states.len() {
            return Err(Error::Input(format!(
                "{} timestamps for {} states",
                timestamps.len(),
                states.len()
            )));
        }
        if let Some(w) = timestamps.windows(2).position(|w| !(w[1] >= w[0])) {
            return Err(Error::Input(format!(
                "timestamps must be nondecreasing (row {} > row {})",
                w,
                w + 1
            )));
        }
        if let Some(&bad) = states.iter().find(|&&s| s >= alphabet.n_states()) {
            return Err(Error::Input(format!(
                "state {bad} outside 0..{}",
                alphabet.n_states()
            )));
        }
        Ok(Self {
            alphabet,
            timestamps,
            states,
        })
    }

    /// Stream stamped with the row index as its time in seconds.
    pub fn indexed(alphabet: Alphabet, states: Vec<usize>) -> Result<Self> {
        let timestamps = (0..states.len()).map(|i| i as f64).collect();
        Self::new(alphabet, timestamps, states)
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowConfig {
    /// Window length in seconds.
    pub w_s: f64,
    /// Stride between window starts in seconds.
    pub w_d: f64,
    pub beta: f64,
    /// Windows with fewer pair samples are skipped.
    pub min_samples: usize,
    /// Floor applied to window laws.
    pub eps: f64,
}

impl WindowConfig {
    /// Config with the default `min_samples = max(2, N²/4)` and ε.
    pub fn new(w_s: f64, w_d: f64, beta: f64, alphabet: Alphabet) -> Result<Self> {
        let cfg = Self {
            w_s,
            w_d,
            beta,
            min_samples: default_min_samples(alphabet),
            eps: DEFAULT_EPS,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w_s > 0.0 && self.w_d > 0.0) {
            return Err(Error::Config(format!(
                "window size and stride must be positive (w_s={}, w_d={})",
                self.w_s, self.w_d
            )));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if self.min_samples < 2 {
            return Err(Error::Config("min_samples must be at least 2".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("eps must be positive".into()));
        }
        Ok(())
    }
}

pub fn default_min_samples(alphabet: Alphabet) -> usize {
    (alphabet.pair_size() / 4).max(2)
}

/// One detection window: its time span and the stream rows inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub start: f64,
    pub end: f64,
    pub rows: std::ops::Range<usize>,
    /// Pair samples in the window.
    pub n: usize,
    pub skipped: bool,
}

/// Windows `[s, s + w_s)` for `s = t₀, t₀ + w_d, …` up to the last start
/// with `s + w_s ≤ t_last`; a stream shorter than `w_s` yields one window.
pub fn sliding_windows(stream: &TimedStream, config: &WindowConfig) -> Result<Vec<Window>> {
    config.validate()?;
    let ts = stream.timestamps();
    let (Some(&t0), Some(&t_last)) = (ts.first(), ts.last()) else {
        return Ok(Vec::new());
    };
    let span = t_last - t0;
    let count = if span >= config.w_s {
        ((span - config.w_s) / config.w_d + 1e-9).floor() as usize + 1
    } else {
        1
    };
    Ok((0..count)
        .map(|w| {
            let start = t0 + w as f64 * config.w_d;
            let end = start + config.w_s;
            let lo = ts.partition_point(|&t| t < start);
            let hi = ts.partition_point(|&t| t < end);
            let n = (hi - lo).saturating_sub(1);
            Window {
                start,
                end,
                rows: lo..hi,
                n,
                skipped: n < config.min_samples,
            }
        })
        .collect())
}

/// Outcome for one window. Skipped windows carry no statistic and are never flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub start: f64,
    pub end: f64,
    pub n: usize,
    pub stat: Option<f64>,
    pub eta: Option<f64>,
    pub flagged: bool,
    /// Law attaining the robust infimum (0-based).
    pub law_index: Option<usize>,
}

impl WindowReport {
    fn skipped(w: &Window) -> Self {
        Self {
            start: w.start,
            end: w.end,
            n: w.n,
            stat: None,
            eta: None,
            flagged: false,
            law_index: None,
        }
    }

    pub fn is_skipped(&self) -> bool {
        self.stat.is_none()
    }
}

/// Where per-window thresholds come from.
#[derive(Debug, Clone, Copy)]
pub enum ThresholdSource<'a> {
    /// Weak-convergence cache, scaled by `1/(2n)`.
    Cache(&'a SampleCache),
    /// `−log(β)/n`.
    Sanov,
}

impl ThresholdSource<'_> {
    pub fn eta(&self, n: usize, beta: f64) -> Result<f64> {
        Ok(match self {
            ThresholdSource::Cache(c) => quantile_threshold(c, n, beta)?.value,
            ThresholdSource::Sanov => sanov_threshold(n, beta)?.value,
        })
    }
}

fn window_law(stream: &TimedStream, w: &Window, eps: f64) -> Result<EmpiricalLaw> {
    let a = stream.alphabet();
    let mut counts = vec![0usize; a.pair_size()];
    for pair in stream.states()[w.rows.clone()].windows(2) {
        counts[a.pair_index(pair[0], pair[1])] += 1;
    }
    EmpiricalLaw::from_counts(&counts, eps)
}

fn check_alphabet(stream: &TimedStream, ws: &DivergenceWorkspace) -> Result<()> {
    if ws.alphabet() != stream.alphabet() {
        return Err(Error::Config(format!(
            "stream has {} states, reference has {}",
            stream.alphabet().n_states(),
            ws.alphabet().n_states()
        )));
    }
    Ok(())
}

/// Ordinary test on every window with a weak-convergence cache.
pub fn detect_ordinary(
    stream: &TimedStream,
    reference: &DivergenceWorkspace,
    config: &WindowConfig,
    cache: &SampleCache,
) -> Result<Vec<WindowReport>> {
    detect_ordinary_with(stream, reference, config, ThresholdSource::Cache(cache))
}

/// Ordinary test on every window with an arbitrary threshold source.
pub fn detect_ordinary_with(
    stream: &TimedStream,
    reference: &DivergenceWorkspace,
    config: &WindowConfig,
    source: ThresholdSource<'_>,
) -> Result<Vec<WindowReport>> {
    check_alphabet(stream, reference)?;
    let windows = sliding_windows(stream, config)?;
    windows
        .par_iter()
        .map(|w| {
            if w.skipped {
                return Ok(WindowReport::skipped(w));
            }
            let law = window_law(stream, w, config.eps)?;
            let stat = relative_entropy(law.gamma(), reference)?;
            let eta = source.eta(w.n, config.beta)?;
            Ok(WindowReport {
                start: w.start,
                end: w.end,
                n: w.n,
                stat: Some(stat),
                eta: Some(eta),
                flagged: stat > eta,
                law_index: None,
            })
        })
        .collect()
}

/// Time-of-day validity `[start, end)` in seconds; `start > end` wraps midnight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayInterval {
    pub start: f64,
    pub end: f64,
}

impl DayInterval {
    pub fn contains(&self, t: f64) -> bool {
        let tod = t.rem_euclid(DAY_SECONDS);
        if self.start <= self.end {
            tod >= self.start && tod < self.end
        } else {
            tod >= self.start || tod < self.end
        }
    }

    fn length(&self) -> f64 {
        if self.start <= self.end {
            self.end - self.start
        } else {
            DAY_SECONDS - self.start + self.end
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledLaw {
    pub law: Vec<f64>,
    #[serde(default)]
    pub validity: Option<DayInterval>,
}

/// A set of reference laws, optionally partitioned by time of day.
#[derive(Debug, Clone, PartialEq)]
pub struct LawSchedule {
    laws: Vec<ScheduledLaw>,
    /// Distinct validity groups as lists of law indices.
    groups: Vec<(Option<DayInterval>, Vec<usize>)>,
}

impl LawSchedule {
    /// Either every law has an interval or none does. Laws sharing an
    /// identical interval form one period; distinct periods must tile the day.
    pub fn new(laws: Vec<ScheduledLaw>) -> Result<Self> {
        if laws.is_empty() {
            return Err(Error::Config("schedule needs at least one law".into()));
        }
        let alphabet = Alphabet::from_pair_size(laws[0].law.len())?;
        if laws.iter().any(|l| l.law.len() != alphabet.pair_size()) {
            return Err(Error::Config("schedule laws have different alphabets".into()));
        }
        let timed = laws.iter().filter(|l| l.validity.is_some()).count();
        if timed != 0 && timed != laws.len() {
            return Err(Error::Config(
                "either every law has a validity interval or none does".into(),
            ));
        }
        let mut groups: Vec<(Option<DayInterval>, Vec<usize>)> = Vec::new();
        for (l, law) in laws.iter().enumerate() {
            match groups.iter_mut().find(|g| g.0 == law.validity) {
                Some(g) => g.1.push(l),
                None => groups.push((law.validity, vec![l])),
            }
        }
        if timed != 0 {
            let intervals: Vec<DayInterval> = groups.iter().filter_map(|g| g.0).collect();
            for iv in &intervals {
                if !(0.0..DAY_SECONDS).contains(&iv.start)
                    || !(0.0..=DAY_SECONDS).contains(&iv.end)
                    || iv.start == iv.end
                {
                    return Err(Error::Config(format!("invalid day interval {iv:?}")));
                }
            }
            let total: f64 = intervals.iter().map(DayInterval::length).sum();
            // every boundary must be owned by exactly one period
            let overlap = intervals
                .iter()
                .any(|iv| intervals.iter().filter(|o| o.contains(iv.start)).count() != 1);
            if (total - DAY_SECONDS).abs() > 1e-6 || overlap {
                return Err(Error::Config(
                    "validity intervals must cover the whole day without overlap".into(),
                ));
            }
        }
        Ok(Self { laws, groups })
    }

    pub fn laws(&self) -> &[ScheduledLaw] {
        &self.laws
    }

    pub fn alphabet(&self) -> Alphabet {
        Alphabet::from_pair_size(self.laws[0].law.len()).expect("validated on construction")
    }

    pub fn is_partitioned(&self) -> bool {
        self.groups.iter().any(|g| g.0.is_some())
    }

    /// Index of the validity group applicable at time `t`.
    pub fn group_at(&self, t: f64) -> Option<usize> {
        self.groups
            .iter()
            .position(|(iv, _)| iv.is_none_or(|iv| iv.contains(t)))
    }

    /// Laws applicable at time `t`.
    pub fn applicable(&self, t: f64) -> &[usize] {
        self.group_at(t).map_or(&[], |g| &self.groups[g].1)
    }

    pub fn group_laws(&self, g: usize) -> &[usize] {
        &self.groups[g].1
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }
}

/// Robust caches, one per validity group, plus per-law workspaces.
#[derive(Debug, Clone)]
pub struct RobustThresholds {
    caches: Vec<RobustCache>,
    workspaces: Vec<DivergenceWorkspace>,
}

impl RobustThresholds {
    /// Prepares every law and draws one robust cache per validity group.
    /// Group `g` uses seed [`law_seed`]`(seed, g)`.
    pub fn build(schedule: &LawSchedule, opts: &ThresholdOptions) -> Result<Self> {
        let prepared = schedule
            .laws()
            .iter()
            .map(|l| PreparedReference::prepare(&Reference::Law(l.law.clone()), opts))
            .collect::<Result<Vec<_>>>()?;
        let workspaces = prepared
            .iter()
            .map(PreparedReference::workspace)
            .collect::<Result<Vec<_>>>()?;
        let caches = (0..schedule.group_count())
            .map(|g| {
                let members: Vec<PreparedReference> = schedule
                    .group_laws(g)
                    .iter()
                    .map(|&l| prepared[l].clone())
                    .collect();
                RobustCache::build(&members, opts.samples, law_seed(opts.seed, g))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { caches, workspaces })
    }

    pub fn cache(&self, group: usize) -> Option<&RobustCache> {
        self.caches.get(group)
    }

    pub fn workspaces(&self) -> &[DivergenceWorkspace] {
        &self.workspaces
    }
}

/// Robust test: `inf_l D(Γ_n‖π^(l))` over the laws valid at each window's
/// start, against the matching robust cache.
pub fn detect_robust(
    stream: &TimedStream,
    schedule: &LawSchedule,
    config: &WindowConfig,
    thresholds: &RobustThresholds,
) -> Result<Vec<WindowReport>> {
    if schedule.alphabet() != stream.alphabet() {
        return Err(Error::Config(format!(
            "stream has {} states, schedule has {}",
            stream.alphabet().n_states(),
            schedule.alphabet().n_states()
        )));
    }
    let windows = sliding_windows(stream, config)?;
    windows
        .par_iter()
        .map(|w| {
            let group = schedule.group_at(w.start).ok_or_else(|| {
                Error::Config(format!("no reference law valid at t={}", w.start))
            })?;
            let laws = schedule.group_laws(group);
            let cache = thresholds
                .cache(group)
                .ok_or_else(|| Error::Config(format!("no robust cache for period {group}")))?;
            if w.skipped {
                return Ok(WindowReport::skipped(w));
            }
            let law = window_law(stream, w, config.eps)?;
            let mut best = (usize::MAX, f64::INFINITY);
            for &l in laws {
                let d = relative_entropy(law.gamma(), &thresholds.workspaces()[l])?;
                if d < best.1 {
                    best = (l, d);
                }
            }
            let eta = quantile_threshold(cache.combined(), w.n, config.beta)?.value;
            Ok(WindowReport {
                start: w.start,
                end: w.end,
                n: w.n,
                stat: Some(best.1),
                eta: Some(eta),
                flagged: best.1 > eta,
                law_index: Some(best.0),
            })
        })
        .collect()
}

/// Keeps candidates whose value exceeds `μ + k_sigma·σ` of the reference
/// values (σ with the `n − 1` denominator).
pub fn sigma_refine<T: Clone>(
    candidates: &[(T, f64)],
    reference_values: &[f64],
    k_sigma: f64,
) -> Result<Vec<T>> {
    if reference_values.len() < 2 {
        return Err(Error::Input(
            "need at least two reference values for a standard deviation".into(),
        ));
    }
    let n = reference_values.len() as f64;
    let mean = reference_values.iter().sum::<f64>() / n;
    let var = reference_values
        .iter()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    let sd = var.sqrt();
    if !(sd > 0.0) {
        return Err(Error::Input(
            "reference values have zero spread (degenerate reference)".into(),
        ));
    }
    let cutoff = mean + k_sigma * sd;
    Ok(candidates
        .iter()
        .filter(|(_, v)| *v > cutoff)
        .map(|(r, _)| r.clone())
        .collect())
}
