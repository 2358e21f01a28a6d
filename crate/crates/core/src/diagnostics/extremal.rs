use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::iteration::{gram, GramOptions, MetricState};
use crate::linalg::{self, CMatrix};
use crate::sampling::SampleSet;
use crate::variety::{Hypersurface, VarietyPoint};
use crate::weights::WeightSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremalCheck {
    /// `|ρ_direct − ρ_extremal| / ρ_direct`.
    pub gap: f64,
    pub rho_direct: f64,
    pub rho_extremal: f64,
    /// Largest `|d†v|²/ρ_direct` over random unit-norm sections.
    pub max_random_ratio: f64,
}

/// Compares `ρ = v†G⁻¹v` (explicit inverse) with the value of the extremal
/// unit-norm section `d ∝ G⁻¹v` (Cholesky solve), and checks that random
/// unit-norm sections stay below `ρ`.
pub fn bergman_extremal_gap_at(g: &CMatrix, v: &[Complex64], trials: usize, seed: u64) -> Result<ExtremalCheck> {
    let n = v.len();
    if g.nrows() != n {
        return Err(Error::Dimension { expected: g.nrows(), got: n });
    }
    let (inv, _) = linalg::hermitian_inverse(g)?;
    let rho_direct = linalg::quad_form(&inv, v);
    let chol = g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("Gram matrix has no Cholesky factor".into()))?;
    let dv = DVector::from_column_slice(v);
    let d = chol.solve(&dv);
    let norm2 = linalg::quad_form(g, d.as_slice());
    let value = (d.adjoint() * &dv)[(0, 0)].norm_sqr();
    let rho_extremal = value / norm2;

    let l = chol.l();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut max_random_ratio: f64 = 0.0;
    for _ in 0..trials {
        let xi = DVector::from_fn(n, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        let xi = &xi / Complex64::new(xi.norm(), 0.0);
        // d = L^{-†} ξ has d†Gd = |ξ|² = 1.
        let d = l.adjoint().solve_upper_triangular(&xi).expect("nonsingular factor");
        let val = (d.adjoint() * &dv)[(0, 0)].norm_sqr();
        max_random_ratio = max_random_ratio.max(val / rho_direct);
    }
    Ok(ExtremalCheck { gap: (rho_direct - rho_extremal).abs() / rho_direct, rho_direct, rho_extremal, max_random_ratio })
}

/// Extremal check at `p` for the Gram matrix of the step out of `state`.
pub fn bergman_extremal_gap(
    x: &Hypersurface,
    state: &MetricState,
    p: &VarietyPoint,
    s: &SampleSet,
    w: &WeightSpec,
    seed: u64,
) -> Result<ExtremalCheck> {
    let target = x.canonical_power_basis(state.power() + 1)?;
    let g = gram(state, &target, s, w, &GramOptions::default())?.matrix;
    bergman_extremal_gap_at(&g, &target.evaluate(p), 200, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iteration::{init_state, InitSpec};
    use crate::sampling::sample_fs;

    #[test]
    fn identity_gram_gives_euclidean_norm() {
        let v = [Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.0), Complex64::new(0.0, 3.0)];
        let c = bergman_extremal_gap_at(&CMatrix::identity(3, 3), &v, 200, 1).unwrap();
        assert!((c.rho_direct - 14.25).abs() < 1e-14);
        assert!(c.gap < 1e-15);
        assert!(c.max_random_ratio <= 1.0 + 1e-12);
    }

    #[test]
    fn chain_state_probes() {
        let x = Hypersurface::parse("x^4+y^4+z^4", None).unwrap();
        let s = sample_fs(&x, 4000, 3).unwrap();
        let w = WeightSpec::constant_one(1.0).unwrap();
        let st = init_state(&x, 3, &InitSpec::Identity).unwrap();
        for p in s.points.iter().take(10) {
            let c = bergman_extremal_gap(&x, &st, p, &s, &w, 9).unwrap();
            assert!(c.gap <= 1e-9, "{c:?}");
            assert!(c.max_random_ratio <= 1.0 + 1e-12, "{c:?}");
        }
    }
}
