//! Small Hermitian-matrix helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Condition-number cap beyond which a Gram matrix counts as singular.
pub const CONDITION_CAP: f64 = 1e12;

/// `(A + A†)/2`.
pub fn symmetrize(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Largest entry of `|A − A†|` relative to the largest entry of `|A|`.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    let scale = a.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let diff = (a - a.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Real eigenvalues of a Hermitian matrix, ascending.
pub fn eigenvalues(a: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spectrum {
    pub min: f64,
    pub max: f64,
    pub condition: f64,
}

pub fn spectrum(a: &CMatrix) -> Spectrum {
    let ev = eigenvalues(a);
    let (min, max) = (ev[0], ev[ev.len() - 1]);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    Spectrum { min, max, condition }
}

/// Checks Hermitian symmetry and positive definiteness.
pub fn check_hermitian_pd(a: &CMatrix, tol: f64) -> Result<()> {
    if !a.is_square() {
        return Err(Error::NotPositiveDefinite("matrix is not square".into()));
    }
    if a.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::NotPositiveDefinite("matrix has non-finite entries".into()));
    }
    let defect = hermitian_defect(a);
    if defect > tol {
        return Err(Error::NotPositiveDefinite(format!("Hermitian defect {defect:e}")));
    }
    let s = spectrum(&symmetrize(a));
    if !(s.min > 0.0) {
        return Err(Error::NotPositiveDefinite(format!("smallest eigenvalue {:e}", s.min)));
    }
    Ok(())
}

/// Inverse of a Hermitian positive-definite matrix by Cholesky, rejecting
/// matrices whose condition number exceeds [`CONDITION_CAP`]. The result is
/// symmetrized.
pub fn hermitian_inverse(a: &CMatrix) -> Result<(CMatrix, Spectrum)> {
    let s = spectrum(a);
    if !(s.min > 0.0) || s.condition > CONDITION_CAP {
        return Err(Error::SingularGram { condition: s.condition, min_eigenvalue: s.min });
    }
    let chol = a
        .clone()
        .cholesky()
        .ok_or(Error::SingularGram { condition: s.condition, min_eigenvalue: s.min })?;
    Ok((symmetrize(&chol.inverse()), s))
}

/// `v† A v` (real part).
pub fn quad_form(a: &CMatrix, v: &[Complex64]) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = Complex64::new(0.0, 0.0);
        for j in 0..n {
            row += a[(i, j)] * v[j];
        }
        acc += (v[i].conj() * row).re;
    }
    acc
}
