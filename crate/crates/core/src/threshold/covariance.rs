//! Asymptotic covariance `Λ` of the scaled empirical measure
//! `√n (Γ_n − π)` for a pair chain.
//!
//! ```text
//! Λ_ij = π_i (I_ij − π_j) + Σ_{m≥1} [ π_i (P^m_ij − π_j) + π_j (P^m_ji − π_i) ]
//! ```
//!
//! The series is summed until `max_ij |P^m_ij − π_j| < tol`, then the sum is
//! symmetrized and repaired onto the PSD cone.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::markov::TransitionModel;
use crate::threshold::psd::{psd_repair, PsdRepair, DEFAULT_PSD_FLOOR};

/// Default series stopping tolerance.
pub const DEFAULT_SERIES_TOL: f64 = 1e-12;

/// Default cap on the number of series terms.
pub const DEFAULT_MAX_TERMS: usize = 5000;

/// Knobs for [`covariance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceOptions {
    pub tol: f64,
    pub max_terms: usize,
    pub psd_floor: f64,
}

impl Default for CovarianceOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_SERIES_TOL,
            max_terms: DEFAULT_MAX_TERMS,
            psd_floor: DEFAULT_PSD_FLOOR,
        }
    }
}

/// Symmetrized, PSD-repaired covariance of the empirical measure.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    repaired: PsdRepair,
    truncation_m: usize,
    null_residual: f64,
}

impl CovarianceModel {
    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.repaired.matrix
    }

    /// Number of series terms summed.
    pub fn truncation_m(&self) -> usize {
        self.truncation_m
    }

    /// Eigenvalues that were floored during repair.
    pub fn repair_log(&self) -> &[f64] {
        &self.repaired.repair_log
    }

    /// `‖Λ·1‖∞` of the symmetrized matrix before repair.
    pub fn null_residual(&self) -> f64 {
        self.null_residual
    }

    /// Matrix `F` with `F F′ = Λ`, from the repair eigendecomposition.
    pub fn factor(&self) -> DMatrix<f64> {
        self.repaired.factor()
    }

    /// Wraps an arbitrary symmetric matrix (repairing it if needed).
    pub fn from_matrix(lambda: &DMatrix<f64>, psd_floor: f64) -> Result<Self> {
        let repaired = psd_repair(lambda, psd_floor)?;
        let null_residual = (lambda * DVector::from_element(lambda.ncols(), 1.0)).amax();
        Ok(Self {
            repaired,
            truncation_m: 0,
            null_residual,
        })
    }
}

/// The unsymmetrized series sum and the number of terms it took.
pub fn covariance_series(model: &TransitionModel, tol: f64, max_terms: usize) -> Result<(DMatrix<f64>, usize)> {
    let pi = DVector::from_column_slice(model.pi());
    let m = pi.len();
    let p = model.p();
    let limit = DVector::from_element(m, 1.0) * pi.transpose();
    let d = DMatrix::from_diagonal(&pi);

    let mut lambda = &d - &pi * pi.transpose();
    let mut acc = DMatrix::zeros(m, m);
    let mut power = p.clone();
    let mut terms = 0;
    loop {
        let deviation = &power - &limit;
        let residual = deviation.amax();
        if residual < tol {
            break;
        }
        if terms == max_terms {
            return Err(Error::Convergence {
                what: "covariance series",
                iterations: max_terms,
                residual,
            });
        }
        acc += &deviation;
        terms += 1;
        power = &power * p;
    }
    // Σ_m D (P^m − 1π′) plus its transpose
    let half = &d * acc;
    lambda += &half + half.transpose();
    Ok((lambda, terms))
}

/// Covariance of the empirical measure for `model`, symmetrized and repaired.
pub fn covariance(model: &TransitionModel, opts: CovarianceOptions) -> Result<CovarianceModel> {
    let (raw, terms) = covariance_series(model, opts.tol, opts.max_terms)?;
    let sym = (&raw + raw.transpose()) * 0.5;
    let null_residual = (&sym * DVector::from_element(sym.ncols(), 1.0)).amax();
    let repaired = psd_repair(&sym, opts.psd_floor)?;
    Ok(CovarianceModel {
        repaired,
        truncation_m: terms,
        null_residual,
    })
}
