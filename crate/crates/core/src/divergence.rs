//! The Hoeffding test statistic `h(ν) = D(ν‖π)` and its derivatives.
//!
//! `D` compares the conditional rows `ν_ij / Σ_t ν_it` of a pair law with
//! those of the reference, weighted by `ν`. Inputs must be strictly
//! positive; flooring happens upstream in [`crate::markov::EmpiricalLaw`].

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::markov::Alphabet;

fn check_positive(v: &[f64], what: &str) -> Result<()> {
    match v.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
        Some(k) => Err(Error::Domain(format!(
            "{what} entry {k} is {} (must be strictly positive)",
            v[k]
        ))),
        None => Ok(()),
    }
}

fn row_sums(v: &[f64], n: usize) -> Vec<f64> {
    v.chunks_exact(n).map(|row| row.iter().sum()).collect()
}

/// Reference law plus the log of its conditional rows, precomputed once.
#[derive(Debug, Clone)]
pub struct DivergenceWorkspace {
    alphabet: Alphabet,
    reference: Vec<f64>,
    log_conditional: Vec<f64>,
}

impl DivergenceWorkspace {
    pub fn new(reference: &[f64]) -> Result<Self> {
        let alphabet = Alphabet::from_pair_size(reference.len())?;
        check_positive(reference, "reference law")?;
        let n = alphabet.n_states();
        let sums = row_sums(reference, n);
        let log_conditional = reference
            .iter()
            .enumerate()
            .map(|(k, &p)| (p / sums[k / n]).ln())
            .collect();
        Ok(Self {
            alphabet,
            reference: reference.to_vec(),
            log_conditional,
        })
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    fn check_input(&self, v: &[f64], what: &str) -> Result<()> {
        if v.len() != self.reference.len() {
            return Err(Error::Input(format!(
                "{what} has {} entries, expected {}",
                v.len(),
                self.reference.len()
            )));
        }
        check_positive(v, what)
    }
}

/// `D(γ‖π)`; tiny negative rounding noise is clamped to zero.
pub fn relative_entropy(gamma: &[f64], ws: &DivergenceWorkspace) -> Result<f64> {
    ws.check_input(gamma, "empirical law")?;
    let n = ws.alphabet.n_states();
    let mut total = 0.0;
    for (i, row) in gamma.chunks_exact(n).enumerate() {
        let s: f64 = row.iter().sum();
        for (j, &g) in row.iter().enumerate() {
            total += g * ((g / s).ln() - ws.log_conditional[i * n + j]);
        }
    }
    Ok(total.max(0.0))
}

/// `∂h/∂ν_ij = log ν_ij − log Σ_t ν_it − log π_ij + log Σ_t π_it`.
pub fn gradient_h(nu: &[f64], ws: &DivergenceWorkspace) -> Result<Vec<f64>> {
    ws.check_input(nu, "gradient point")?;
    let n = ws.alphabet.n_states();
    let sums = row_sums(nu, n);
    Ok(nu
        .iter()
        .enumerate()
        .map(|(k, &v)| (v / sums[k / n]).ln() - ws.log_conditional[k])
        .collect())
}

/// Hessian of `h` at `ν`. It does not depend on the reference law.
///
/// Block diagonal with one `N × N` block per row `i` of the pair law:
/// `1/ν_ij − 1/Σ_t ν_it` on the diagonal and `−1/Σ_t ν_it` elsewhere in the
/// block. Cross-row entries are exactly zero.
pub fn hessian_h(nu: &[f64]) -> Result<DMatrix<f64>> {
    let alphabet = Alphabet::from_pair_size(nu.len())?;
    check_positive(nu, "Hessian point")?;
    let n = alphabet.n_states();
    let m = alphabet.pair_size();
    let sums = row_sums(nu, n);
    let mut h = DMatrix::zeros(m, m);
    for i in 0..n {
        let inv_s = 1.0 / sums[i];
        for j in 0..n {
            for l in 0..n {
                h[(i * n + j, i * n + l)] = -inv_s;
            }
            h[(i * n + j, i * n + j)] += 1.0 / nu[i * n + j];
        }
    }
    Ok(h)
}
