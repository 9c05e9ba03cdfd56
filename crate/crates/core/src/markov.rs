//! Finite-alphabet Markov chains and their pair-chain lifting.
//!
//! An observation stream `Y` over `N` states is turned into the pair chain
//! `Z_l = (Y_{l-1}, Y_l)` over `N²` states. Pair `(i, j)` has the row-major
//! index `i * N + j`; every module in the crate shares that convention.
//! All in-memory indices are 0-based.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Tolerance on row sums when accepting a transition matrix.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Default floor applied to empirical frequencies.
pub const DEFAULT_EPS: f64 = 1e-10;

/// Default residual tolerance for the stationary-law power iteration.
pub const STATIONARY_TOL: f64 = 1e-12;

/// Default iteration cap for the stationary-law power iteration.
pub const STATIONARY_MAX_ITER: usize = 100_000;

/// The original alphabet of `N` symbols and its `N²` pair alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Alphabet {
    n_states: usize,
}

impl Alphabet {
    pub fn new(n_states: usize) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::Input("alphabet must have at least one state".into()));
        }
        Ok(Self { n_states })
    }

    /// Number of original states `N`.
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Number of pair states `N²`.
    pub fn pair_size(&self) -> usize {
        self.n_states * self.n_states
    }

    /// Row-major index of pair `(i, j)`.
    pub fn pair_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n_states && j < self.n_states);
        i * self.n_states + j
    }

    /// Inverse of [`Alphabet::pair_index`].
    pub fn pair_of(&self, k: usize) -> (usize, usize) {
        (k / self.n_states, k % self.n_states)
    }

    /// Infers the alphabet from a pair-alphabet length, which must be a square.
    pub fn from_pair_size(pair_size: usize) -> Result<Self> {
        let n = (pair_size as f64).sqrt().round() as usize;
        if n * n != pair_size {
            return Err(Error::Input(format!(
                "law length {pair_size} is not the square of an integer"
            )));
        }
        Self::new(n)
    }
}

/// Pair-state observations `Z_1, …, Z_n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolSequence {
    alphabet: Alphabet,
    symbols: Vec<usize>,
}

impl SymbolSequence {
    /// Wraps raw pair indices, checking their range.
    pub fn new(alphabet: Alphabet, symbols: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = symbols.iter().find(|&&s| s >= alphabet.pair_size()) {
            return Err(Error::Input(format!(
                "pair symbol {bad} outside 0..{}",
                alphabet.pair_size()
            )));
        }
        Ok(Self { alphabet, symbols })
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// True when every pair's second coordinate matches the next pair's first.
    pub fn is_chain_consistent(&self) -> bool {
        self.symbols.windows(2).all(|w| {
            let (_, j) = self.alphabet.pair_of(w[0]);
            let (k, _) = self.alphabet.pair_of(w[1]);
            j == k
        })
    }

    /// Recovers the original-alphabet stream (`n + 1` states) from a
    /// chain-consistent pair sequence.
    pub fn to_states(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.symbols.len() + 1);
        if let Some(&first) = self.symbols.first() {
            out.push(self.alphabet.pair_of(first).0);
        }
        out.extend(self.symbols.iter().map(|&s| self.alphabet.pair_of(s).1));
        out
    }
}

/// Encodes `Y_0, …, Y_n` as the pair sequence `Z_l = (Y_{l-1}, Y_l)`.
pub fn pair_encode(states: &[usize], alphabet: Alphabet) -> Result<SymbolSequence> {
    if states.len() < 2 {
        return Err(Error::Input(format!(
            "need at least 2 states to form a pair, got {}",
            states.len()
        )));
    }
    if let Some(&bad) = states.iter().find(|&&s| s >= alphabet.n_states()) {
        return Err(Error::Input(format!(
            "state {bad} outside 0..{}",
            alphabet.n_states()
        )));
    }
    let symbols = states
        .windows(2)
        .map(|w| alphabet.pair_index(w[0], w[1]))
        .collect();
    Ok(SymbolSequence { alphabet, symbols })
}

fn validate_stochastic(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::Validation(format!(
            "{what} must be a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    for (r, row) in m.row_iter().enumerate() {
        if row.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::Validation(format!(
                "{what} row {r} has a negative or non-finite entry"
            )));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::Validation(format!(
                "{what} row {r} sums to {sum}, not 1"
            )));
        }
    }
    Ok(())
}

/// Builds the `N² × N²` pair-chain matrix: `P[(k,l), (i,j)] = 1{i = l} · q_ij`.
pub fn lift_transition(q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    validate_stochastic(q, "transition matrix")?;
    let n = q.nrows();
    let mut p = DMatrix::zeros(n * n, n * n);
    for k in 0..n {
        for l in 0..n {
            let row = k * n + l;
            // only pairs starting at l are reachable from (k, l)
            for j in 0..n {
                p[(row, l * n + j)] = q[(l, j)];
            }
        }
    }
    Ok(p)
}

/// Stationary law of a row-stochastic matrix by power iteration from the
/// uniform law, stopping once `‖πP − π‖∞ ≤ tol`.
pub fn stationary_law(p: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    validate_stochastic(p, "pair transition matrix")?;
    let m = p.nrows();
    let pt = p.transpose();
    let mut pi = nalgebra::DVector::from_element(m, 1.0 / m as f64);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let mut next = &pt * &pi;
        let s = next.sum();
        next /= s;
        residual = (&next - &pi).amax();
        pi = next;
        if residual <= tol {
            polish(&pt, &mut pi, residual);
            return Ok(pi.iter().copied().collect());
        }
    }
    Err(Error::Convergence {
        what: "stationary law power iteration",
        iterations: max_iter,
        residual,
    })
}

/// Keeps iterating past the stopping tolerance while the residual still
/// shrinks, so powers of `P` converge onto the returned law to rounding
/// precision (the covariance series relies on that).
fn polish(pt: &DMatrix<f64>, pi: &mut nalgebra::DVector<f64>, mut residual: f64) {
    for _ in 0..1000 {
        let mut next = pt * &*pi;
        let s = next.sum();
        next /= s;
        let r = (&next - &*pi).amax();
        if r >= residual {
            break;
        }
        residual = r;
        *pi = next;
    }
}

/// Conditional rows `q̂_ij = π_ij / Σ_t π_it` of a strictly positive pair law.
pub fn conditional_rows(pi: &[f64], alphabet: Alphabet) -> Result<DMatrix<f64>> {
    let n = alphabet.n_states();
    if pi.len() != alphabet.pair_size() {
        return Err(Error::Input(format!(
            "law has {} entries, expected {}",
            pi.len(),
            alphabet.pair_size()
        )));
    }
    let mut q = DMatrix::zeros(n, n);
    for i in 0..n {
        let row = &pi[i * n..(i + 1) * n];
        let s: f64 = row.iter().sum();
        if !(s > 0.0) {
            return Err(Error::Numerical(format!(
                "row {i} of the pair law has zero mass"
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            q[(i, j)] = v / s;
        }
    }
    Ok(q)
}

/// Cumulative distribution padded so the last reachable entry is exactly 1.
fn cumulative(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    if let Some(last_pos) = (0..cdf.len()).rev().find(|&k| k == 0 || cdf[k] > cdf[k - 1]) {
        for c in &mut cdf[last_pos..] {
            *c = 1.0;
        }
    }
    cdf
}

fn sample_index<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// A validated chain: the original matrix `Q`, its lift `P`, and the
/// stationary pair law `π`.
#[derive(Debug, Clone)]
pub struct TransitionModel {
    alphabet: Alphabet,
    q: DMatrix<f64>,
    p: DMatrix<f64>,
    pi: Vec<f64>,
    q_cdf: Vec<Vec<f64>>,
    pi_cdf: Vec<f64>,
}

impl TransitionModel {
    /// Validates `q`, lifts it and solves for its stationary pair law.
    pub fn from_q(q: DMatrix<f64>) -> Result<Self> {
        Self::from_q_with(q, STATIONARY_TOL, STATIONARY_MAX_ITER)
    }

    pub fn from_q_with(q: DMatrix<f64>, tol: f64, max_iter: usize) -> Result<Self> {
        let p = lift_transition(&q)?;
        let pi = stationary_law(&p, tol, max_iter)?;
        Ok(Self::assemble(q, p, pi))
    }

    /// Model whose conditional rows come from a strictly positive pair law.
    pub fn from_law(law: &[f64]) -> Result<Self> {
        let alphabet = Alphabet::from_pair_size(law.len())?;
        Self::from_q(conditional_rows(law, alphabet)?)
    }

    fn assemble(q: DMatrix<f64>, p: DMatrix<f64>, pi: Vec<f64>) -> Self {
        let alphabet = Alphabet { n_states: q.nrows() };
        let q_cdf = q
            .row_iter()
            .map(|row| cumulative(row.iter().copied()))
            .collect();
        let pi_cdf = cumulative(pi.iter().copied());
        Self {
            alphabet,
            q,
            p,
            pi,
            q_cdf,
            pi_cdf,
        }
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// Draws an original-alphabet path `Y_0, …, Y_n` with `(Y_0, Y_1) ~ π`.
    pub fn sample_states<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        let mut states = Vec::with_capacity(n + 1);
        let (first, second) = self.alphabet.pair_of(sample_index(&self.pi_cdf, rng));
        states.push(first);
        states.push(second);
        let mut current = second;
        for _ in 1..n {
            current = sample_index(&self.q_cdf[current], rng);
            states.push(current);
        }
        states
    }

    /// Pair counts of a freshly sampled length-`n` pair path.
    pub fn sample_counts<R: Rng + ?Sized>(&self, n: usize, rng: &mut R, counts: &mut [usize]) {
        counts.iter_mut().for_each(|c| *c = 0);
        let k0 = sample_index(&self.pi_cdf, rng);
        counts[k0] += 1;
        let mut current = self.alphabet.pair_of(k0).1;
        for _ in 1..n {
            let next = sample_index(&self.q_cdf[current], rng);
            counts[self.alphabet.pair_index(current, next)] += 1;
            current = next;
        }
    }
}

/// Simulates `n` pair symbols from the lifted chain started at `π`.
pub fn simulate_path(model: &TransitionModel, n: usize, seed: u64) -> Result<SymbolSequence> {
    if n == 0 {
        return Err(Error::Input("path length must be at least 1".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let states = model.sample_states(n, &mut rng);
    pair_encode(&states, model.alphabet())
}

/// Simulates an original-alphabet path of `n + 1` states (`n` pairs).
pub fn simulate_states(model: &TransitionModel, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::Input("path length must be at least 1".into()));
    }
    let mut rng = stream_rng(seed, 0);
    Ok(model.sample_states(n, &mut rng))
}

/// An ε-floored, normalized frequency vector over the pair alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalLaw {
    gamma: Vec<f64>,
    floor_eps: f64,
    sample_size: usize,
}

impl EmpiricalLaw {
    /// Floors raw pair frequencies at `eps` and renormalizes.
    pub fn from_counts(counts: &[usize], eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::Input(format!("floor eps must be positive, got {eps}")));
        }
        let n: usize = counts.iter().sum();
        if n == 0 {
            return Err(Error::Input("empirical law of an empty sequence".into()));
        }
        let mut gamma: Vec<f64> = counts
            .iter()
            .map(|&c| (c as f64 / n as f64).max(eps))
            .collect();
        let s: f64 = gamma.iter().sum();
        gamma.iter_mut().for_each(|g| *g /= s);
        Ok(Self {
            gamma,
            floor_eps: eps,
            sample_size: n,
        })
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn floor_eps(&self) -> f64 {
        self.floor_eps
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn into_gamma(self) -> Vec<f64> {
        self.gamma
    }
}

/// Empirical pair law of `z`, floored at `eps` and renormalized.
pub fn empirical_law(z: &SymbolSequence, eps: f64) -> Result<EmpiricalLaw> {
    let mut counts = vec![0usize; z.alphabet().pair_size()];
    for &s in z.symbols() {
        counts[s] += 1;
    }
    EmpiricalLaw::from_counts(&counts, eps)
}
