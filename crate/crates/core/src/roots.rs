//! Roots of univariate complex polynomials.

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;

/// Horner evaluation of `coeffs` (lowest degree first) and its derivative.
pub fn horner(coeffs: &[Complex64], t: Complex64) -> (Complex64, Complex64) {
    let mut f = Complex64::new(0.0, 0.0);
    let mut df = Complex64::new(0.0, 0.0);
    for c in coeffs.iter().rev() {
        df = df * t + f;
        f = f * t + c;
    }
    (f, df)
}

/// Newton polish of a root; stops after `max_steps` or when the update
/// falls below `rel_tol` relative to |t|.
pub fn polish(coeffs: &[Complex64], mut t: Complex64, max_steps: usize, rel_tol: f64) -> Complex64 {
    for _ in 0..max_steps {
        let (f, df) = horner(coeffs, t);
        if df.norm() == 0.0 {
            break;
        }
        let step = f / df;
        t -= step;
        if step.norm() <= rel_tol * t.norm().max(1.0) {
            break;
        }
    }
    t
}

/// All complex roots of the polynomial with coefficients `coeffs` (lowest
/// degree first). Trailing zero leading coefficients are stripped, so the
/// number of roots equals the true degree. Companion-matrix eigenvalues are
/// used first, with Aberth iteration as a fallback when the Schur
/// decomposition does not converge; `None` if both fail.
pub fn roots(coeffs: &[Complex64]) -> Option<Vec<Complex64>> {
    let mut deg = coeffs.len().checked_sub(1)?;
    while deg > 0 && coeffs[deg] == Complex64::new(0.0, 0.0) {
        deg -= 1;
    }
    if deg == 0 {
        return Some(Vec::new());
    }
    let lead = coeffs[deg];
    if deg == 1 {
        return Some(vec![-coeffs[0] / lead]);
    }
    let mut comp = DMatrix::<Complex64>::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -coeffs[i] / lead;
    }
    let trimmed = &coeffs[..=deg];
    let eig: Vec<Complex64> = match Schur::try_new(comp, f64::EPSILON, 500).and_then(|s| s.eigenvalues()) {
        Some(e) => e.iter().copied().collect(),
        None => aberth(trimmed)?,
    };
    Some(eig.iter().map(|&t| polish(trimmed, t, 40, 1e-15)).collect())
}

/// Simultaneous Aberth–Ehrlich iteration from points on a circle whose
/// radius is the Cauchy bound.
fn aberth(coeffs: &[Complex64]) -> Option<Vec<Complex64>> {
    let deg = coeffs.len() - 1;
    let lead = coeffs[deg].norm();
    let radius = coeffs[..deg].iter().map(|c| (c.norm() / lead).powf(1.0 / deg as f64)).fold(0.0, f64::max).max(1e-3);
    let mut z: Vec<Complex64> = (0..deg)
        .map(|k| Complex64::from_polar(radius, 0.4 + std::f64::consts::TAU * k as f64 / deg as f64))
        .collect();
    for _ in 0..500 {
        let mut moved: f64 = 0.0;
        for i in 0..deg {
            let (f, df) = horner(coeffs, z[i]);
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            let ratio = f / df;
            let repulsion: Complex64 = (0..deg).filter(|&j| j != i).map(|j| (z[i] - z[j]).inv()).sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            if step.re.is_finite() && step.im.is_finite() {
                z[i] -= step;
                moved = moved.max(step.norm() / z[i].norm().max(1.0));
            }
        }
        if moved < 1e-14 {
            return Some(z);
        }
    }
    z.iter().all(|t| t.re.is_finite() && t.im.is_finite()).then_some(z)
}
