//! Pointwise second-order jets `(u, Du, D^2 u)`.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Absolute floor of the symmetry tolerance for Hessians.
const SYMMETRY_TOL: f64 = 1e-12;

/// Value, gradient and symmetric Hessian of a function at a point.
///
/// Construction rejects Hessians whose asymmetry exceeds `1e-12` relative to
/// their magnitude; the extremal operators downstream assume exact symmetry
/// and symmetrize silently would hide bugs.
#[derive(Debug, Clone)]
pub struct Jet {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl Jet {
    pub fn new(value: f64, gradient: DVector<f64>, hessian: DMatrix<f64>) -> Result<Self> {
        if gradient.len() != hessian.nrows() || !hessian.is_square() {
            return Err(Error::Config(format!(
                "jet shape mismatch: gradient {}, hessian {}x{}",
                gradient.len(),
                hessian.nrows(),
                hessian.ncols()
            )));
        }
        check_symmetric(&hessian)?;
        if !value.is_finite()
            || gradient.iter().any(|v| !v.is_finite())
            || hessian.iter().any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("jet entries".into()));
        }
        Ok(Jet {
            value,
            gradient,
            hessian,
        })
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }
}

/// Shared symmetry check for Hessian-like matrices.
pub fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let scale = m.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1.0);
    let tol = SYMMETRY_TOL * scale;
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if worst > tol {
        return Err(Error::NotSymmetric {
            asymmetry: worst,
            tolerance: tol,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn asymmetric_hessian_rejected() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5 + 1e-6, 1.0]);
        assert!(Jet::new(0.0, DVector::zeros(2), h).is_err());
    }

    #[test]
    fn symmetric_within_tolerance_accepted() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5 + 1e-14, 1.0]);
        assert!(Jet::new(0.0, DVector::zeros(2), h).is_ok());
    }
}
