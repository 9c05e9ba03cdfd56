//! Eigenvalue-clipping repair of symmetric matrices onto the PSD cone.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Default floor for repaired eigenvalues.
pub const DEFAULT_PSD_FLOOR: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-9;

/// A repaired matrix together with the eigendecomposition it came from.
#[derive(Debug, Clone)]
pub struct PsdRepair {
    /// `O · diag(λ̃) · O′`, or the input itself when nothing was floored.
    pub matrix: DMatrix<f64>,
    /// Eigenvalues after flooring.
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors, one per column.
    pub eigenvectors: DMatrix<f64>,
    /// Original eigenvalues that fell below the floor.
    pub repair_log: Vec<f64>,
}

impl PsdRepair {
    /// `O · diag(√λ̃)`, so that `F F′` reproduces the repaired matrix.
    pub fn factor(&self) -> DMatrix<f64> {
        let mut f = self.eigenvectors.clone();
        for (mut col, &lam) in f.column_iter_mut().zip(self.eigenvalues.iter()) {
            col *= lam.max(0.0).sqrt();
        }
        f
    }
}

/// Replaces every eigenvalue below `floor` with `floor` and recomposes.
pub fn psd_repair(m: &DMatrix<f64>, floor: f64) -> Result<PsdRepair> {
    if !m.is_square() {
        return Err(Error::Input(format!(
            "PSD repair needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Validation(format!(
            "matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let mut eigenvalues = eig.eigenvalues.clone();
    let mut repair_log = Vec::new();
    for lam in eigenvalues.iter_mut() {
        if *lam < floor {
            repair_log.push(*lam);
            *lam = floor;
        }
    }
    let matrix = if repair_log.is_empty() {
        m.clone()
    } else {
        let v = &eig.eigenvectors;
        let mut r = v * DMatrix::from_diagonal(&eigenvalues) * v.transpose();
        // recomposition drifts from symmetry at rounding level
        r = (&r + r.transpose()) * 0.5;
        r
    };
    Ok(PsdRepair {
        matrix,
        eigenvalues,
        eigenvectors: eig.eigenvectors,
        repair_log,
    })
}
