//! Smooth projective hypersurfaces `X = {F = 0} ⊂ P^N` with ample canonical
//! bundle, their affine/residue charts, and monomial bases of `H⁰(X, K_X^m)`.
//!
//! # Frames
//!
//! Adjunction gives `K_X = O(d − N − 1)|_X`. In the affine chart `z_a = 1`
//! a degree `m(d−N−1)` polynomial `P` defines the pluricanonical section
//! `P · ω_j^{⊗m}`, where `ω_j = (−1)^j dz_{k_1}∧…∧dz_{k_n} / ∂_jF` is the
//! Poincaré residue form and `k_1 < … < k_n` are the remaining (free)
//! coordinates. On `X` the forms `ω_j` for different `j` agree up to sign,
//! so the *residue frame* is independent of the residue index and only the
//! moduli `|ω_j|²` ever enter a computation.
//!
//! Two frames are exposed:
//! * residue frame: coefficient `M(z)` of a monomial section, used by the
//!   iteration;
//! * coordinate frame: coefficient `M(z)/(∂_jF)^m` against
//!   `(dz_{k_1}∧…∧dz_{k_n})^{⊗m}`.
//!
//! A quantity `B_m = v†Pv` built from frame coefficients scales like
//! `|λ|^{-2m}` under a frame change `e ↦ λe` while the matching density
//! `Φ` scales like `|λ|²`, so `B_m · Φ^m` is frame invariant.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::poly::{divides, monomials, Exponent, Polynomial, PolynomialSpec};
use crate::roots;
use crate::sampling::random_line;

/// Point-on-variety tolerance, relative to the coefficient l¹ norm of `F`
/// (which bounds `|F|` on the max-modulus-normalized polydisc).
pub const TOL_ON_VARIETY: f64 = 1e-9;
/// A residue coordinate is rejected if `|∂_jF| < RECHART_RATIO · |∇F|`.
pub const RECHART_RATIO: f64 = 1e-6;
/// Gradient floor (relative to the l¹ norm) below which a point is singular.
pub const GRADIENT_FLOOR: f64 = 1e-10;
/// Smoothness-probe failure floor for the scaled gradient norm.
pub const SMOOTHNESS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Hypersurface {
    poly: Polynomial,
    gradient: Vec<Polynomial>,
    degree: u32,
    l1: f64,
}

pub type VarietySpec = PolynomialSpec;

impl Hypersurface {
    pub fn new(poly: Polynomial) -> Result<Self> {
        if poly.is_zero() {
            return Err(Error::ZeroPolynomial);
        }
        let degree = poly.homogeneous_degree()?;
        let nvars = poly.nvars();
        if nvars < 3 {
            return Err(Error::Unsupported(format!("need at least 3 homogeneous variables, got {nvars}")));
        }
        let ambient = nvars as i64 - 1;
        if (degree as i64) < ambient + 2 {
            return Err(Error::Unsupported(format!(
                "degree {degree} in P^{ambient} has canonical twist {} < 1 (K_X not ample)",
                degree as i64 - ambient - 1
            )));
        }
        let gradient = (0..nvars).map(|i| poly.derivative(i)).collect();
        let l1 = poly.l1_norm();
        Ok(Self { poly, gradient, degree, l1 })
    }

    pub fn parse(text: &str, variables: Option<usize>) -> Result<Self> {
        Self::new(Polynomial::parse(text, variables)?)
    }

    pub fn from_spec(spec: &VarietySpec) -> Result<Self> {
        Self::new(Polynomial::from_spec(spec)?)
    }

    pub fn polynomial(&self) -> &Polynomial {
        &self.poly
    }

    pub fn nvars(&self) -> usize {
        self.poly.nvars()
    }

    /// `N` with `X ⊂ P^N`.
    pub fn ambient_dim(&self) -> usize {
        self.nvars() - 1
    }

    /// Complex dimension `n = N − 1`.
    pub fn dim(&self) -> usize {
        self.nvars() - 2
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// `d − N − 1`, the degree of the line bundle restricting to `K_X`.
    pub fn canonical_twist(&self) -> u32 {
        self.degree - self.nvars() as u32
    }

    /// Leading monomial of `F` in graded-lex order.
    pub fn pivot(&self) -> &Exponent {
        &self.poly.leading().expect("nonzero").0
    }

    /// Genus of a smooth plane curve, `(d−1)(d−2)/2`.
    pub fn plane_curve_genus(&self) -> Option<u32> {
        (self.ambient_dim() == 2).then(|| (self.degree - 1) * (self.degree - 2) / 2)
    }

    pub fn l1_norm(&self) -> f64 {
        self.l1
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        self.poly.eval(z)
    }

    pub fn gradient(&self, z: &[Complex64]) -> Vec<Complex64> {
        self.gradient.iter().map(|g| g.eval(z)).collect()
    }

    pub fn partial(&self, i: usize, z: &[Complex64]) -> Complex64 {
        self.gradient[i].eval(z)
    }

    /// Content hash of the defining polynomial.
    pub fn hash(&self) -> String {
        let body = serde_json::to_string(&(self.nvars(), self.poly.to_table())).expect("serializable");
        hex::encode(Sha256::digest(body.as_bytes()))
    }

    pub fn spec(&self) -> VarietySpec {
        self.poly.to_spec()
    }

    /// Normalizes `raw` so its max-modulus coordinate is exactly 1 (lowest
    /// index on ties) and picks the residue index maximizing `|∂_jF|` among
    /// the remaining coordinates (lowest index on ties).
    pub fn chart_select(&self, raw: &[Complex64]) -> Result<VarietyPoint> {
        let z = normalize(raw)?;
        let a = z.iter().position(|c| *c == Complex64::new(1.0, 0.0)).expect("normalized");
        self.check_on_variety(&z)?;
        let grad = self.gradient(&z);
        let mut best = None;
        for (j, g) in grad.iter().enumerate() {
            if j == a {
                continue;
            }
            match best {
                Some((_, m)) if g.norm() <= m => {}
                _ => best = Some((j, g.norm())),
            }
        }
        let (j, _) = best.expect("at least two other coordinates");
        self.chart_with_normalized(z, a, j, &grad)
    }

    /// Like [`chart_select`](Self::chart_select) but with an explicit
    /// residue index; the affine chart is still the max-modulus one.
    pub fn chart_with_residue(&self, raw: &[Complex64], residue: usize) -> Result<VarietyPoint> {
        let z = normalize(raw)?;
        let a = z.iter().position(|c| *c == Complex64::new(1.0, 0.0)).expect("normalized");
        if residue == a || residue >= z.len() {
            return Err(Error::Chart(format!("residue index {residue} invalid for affine chart {a}")));
        }
        self.check_on_variety(&z)?;
        let grad = self.gradient(&z);
        self.chart_with_normalized(z, a, residue, &grad)
    }

    fn chart_with_normalized(&self, z: Vec<Complex64>, a: usize, j: usize, grad: &[Complex64]) -> Result<VarietyPoint> {
        let gnorm = grad.iter().map(|g| g.norm_sqr()).sum::<f64>().sqrt();
        if gnorm < GRADIENT_FLOOR * self.l1 {
            return Err(Error::Chart(format!("gradient norm {gnorm:e} below floor (singular point)")));
        }
        if grad[j].norm() < RECHART_RATIO * gnorm {
            return Err(Error::Chart(format!("|∂F/∂z{j}| too small relative to gradient; re-chart required")));
        }
        Ok(VarietyPoint { coords: z, chart_affine: a, chart_residue: j })
    }

    fn check_on_variety(&self, z: &[Complex64]) -> Result<()> {
        let residual = self.eval(z).norm();
        let tolerance = TOL_ON_VARIETY * self.l1;
        if residual > tolerance || !residual.is_finite() {
            return Err(Error::OffVariety { residual, tolerance });
        }
        Ok(())
    }

    /// Indices of the free (local) coordinates of a point's chart.
    pub fn free_indices(&self, p: &VarietyPoint) -> Vec<usize> {
        (0..self.nvars()).filter(|&k| k != p.chart_affine && k != p.chart_residue).collect()
    }

    /// Pullback of the Fubini–Study form `(i/2π)∂∂̄ log|Z|²` to the free
    /// coordinates of the chart of `p`, as the Hermitian matrix `g_{kl̄}`.
    pub fn fs_metric(&self, p: &VarietyPoint) -> nalgebra::DMatrix<Complex64> {
        fs_metric_at(self, &p.coords, p.chart_residue, &self.free_indices(p))
    }

    /// Fubini–Study volume `ω_FS^n` per unit coordinate volume
    /// `(i/2π)^n ∏ dz_k∧dz̄_k`, i.e. `n!·det g`.
    pub fn fs_volume_density(&self, p: &VarietyPoint) -> f64 {
        let g = self.fs_metric(p);
        factorial(self.dim()) * g.determinant().re
    }

    /// Density `Φ` of the residue volume `(i/2π)^n ω_j∧ω̄_j` against the
    /// Fubini–Study volume `ω_FS^n` at `p`. Independent of the residue index.
    pub fn residue_fs_density(&self, p: &VarietyPoint) -> Result<f64> {
        let vol = self.fs_volume_density(p);
        let fj = self.partial(p.chart_residue, &p.coords).norm_sqr();
        let phi = 1.0 / (vol * fj);
        if !(vol > 0.0) || !phi.is_finite() {
            return Err(Error::Chart(format!("degenerate Fubini–Study pullback (det = {vol:e})")));
        }
        Ok(phi)
    }

    /// Coordinate-frame density: `(i/2π)^n ∏dz_k∧dz̄_k` against `ω_FS^n`.
    pub fn coordinate_fs_density(&self, p: &VarietyPoint) -> Result<f64> {
        let vol = self.fs_volume_density(p);
        if !(vol > 0.0) {
            return Err(Error::Chart(format!("degenerate Fubini–Study pullback (det = {vol:e})")));
        }
        Ok(1.0 / vol)
    }

    /// Moves the free coordinates of `p` to `free` and re-solves the residue
    /// coordinate by Newton iteration (affine normalization kept, no
    /// re-charting). Returns the full affine coordinate vector.
    pub fn local_lift(&self, p: &VarietyPoint, free: &[Complex64]) -> Result<Vec<Complex64>> {
        let idx = self.free_indices(p);
        if idx.len() != free.len() {
            return Err(Error::Dimension { expected: idx.len(), got: free.len() });
        }
        let mut z = p.coords.clone();
        for (k, w) in idx.iter().zip(free) {
            z[*k] = *w;
        }
        let j = p.chart_residue;
        let scale = self.l1 * z.iter().map(|c| c.norm()).fold(1.0, f64::max).powi(self.degree as i32);
        for _ in 0..60 {
            let f = self.eval(&z);
            let fj = self.partial(j, &z);
            if fj.norm() == 0.0 {
                break;
            }
            let step = f / fj;
            z[j] -= step;
            if step.norm() <= 1e-15 * z[j].norm().max(1.0) {
                break;
            }
        }
        let residual = self.eval(&z).norm();
        if !(residual <= 1e-12 * scale) {
            return Err(Error::Chart(format!("local lift did not converge (|F| = {residual:e})")));
        }
        Ok(z)
    }

    /// Samples `trials` points on random lines (without rejecting clustered
    /// roots) and records the scaled gradient norm `|∇F|/‖F‖₁` at each.
    pub fn smoothness_probe(&self, trials: usize, seed: u64) -> Result<SmoothnessReport> {
        if trials == 0 {
            return Err(Error::Invalid("smoothness probe needs at least one trial".into()));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut report = SmoothnessReport { probes: 0, min_gradient_norm: f64::INFINITY, failures: 0 };
        let mut stalls = 0;
        while report.probes < trials {
            let (p, q) = random_line(&mut rng, self.nvars());
            let coeffs = self.poly.restrict_to_line(&p, &q);
            let Some(ts) = roots::roots(&coeffs) else {
                stalls += 1;
                if stalls > 1000 {
                    return Err(Error::Sampling("root finding keeps failing".into()));
                }
                continue;
            };
            for t in ts {
                if report.probes == trials {
                    break;
                }
                let z: Vec<Complex64> = p.iter().zip(&q).map(|(a, b)| a + t * b).collect();
                let Ok(z) = normalize(&z) else { continue };
                let g = self.gradient(&z).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt() / self.l1;
                report.probes += 1;
                report.min_gradient_norm = report.min_gradient_norm.min(g);
                if g < SMOOTHNESS_FLOOR {
                    report.failures += 1;
                }
            }
        }
        Ok(report)
    }

    /// Monomial basis of `H⁰(X, K_X^m)`: all exponents of degree
    /// `m(d−N−1)` not divisible by the pivot monomial of `F`.
    pub fn canonical_power_basis(&self, m: u32) -> Result<CanonicalBasis> {
        if m == 0 {
            return Err(Error::Invalid("canonical power must be at least 1".into()));
        }
        let degree = m * self.canonical_twist();
        let pivot = self.pivot().clone();
        let exponents: Vec<Exponent> = monomials(self.nvars(), degree)
            .into_iter()
            .filter(|e| degree < self.degree || !divides(&pivot, e))
            .collect();
        Ok(CanonicalBasis { power: m, degree, exponents, pivot })
    }
}

fn fs_metric_at(x: &Hypersurface, z: &[Complex64], j: usize, free: &[usize]) -> nalgebra::DMatrix<Complex64> {
    let grad = x.gradient(z);
    let n = free.len();
    let tangents: Vec<Vec<Complex64>> = free
        .iter()
        .map(|&k| {
            let mut t = vec![Complex64::new(0.0, 0.0); z.len()];
            t[k] = Complex64::new(1.0, 0.0);
            t[j] = -grad[k] / grad[j];
            t
        })
        .collect();
    let s: f64 = z.iter().map(|c| c.norm_sqr()).sum();
    let dot = |a: &[Complex64], b: &[Complex64]| -> Complex64 { a.iter().zip(b).map(|(x, y)| x.conj() * y).sum() };
    nalgebra::DMatrix::from_fn(n, n, |k, l| {
        let tk = &tangents[k];
        let tl = &tangents[l];
        dot(tl, tk) / s - dot(z, tk) * dot(tl, z) / (s * s)
    })
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Divides by the max-modulus coordinate (lowest index on ties) and sets
/// that coordinate to exactly 1.
pub fn normalize(raw: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut a = 0;
    let mut best = -1.0;
    for (i, c) in raw.iter().enumerate() {
        let m = c.norm();
        if !m.is_finite() {
            return Err(Error::Invalid("non-finite homogeneous coordinate".into()));
        }
        if m > best {
            best = m;
            a = i;
        }
    }
    if best <= 0.0 {
        return Err(Error::Invalid("all homogeneous coordinates vanish".into()));
    }
    let s = raw[a];
    let mut z: Vec<Complex64> = raw.iter().map(|c| c / s).collect();
    z[a] = Complex64::new(1.0, 0.0);
    Ok(z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarietyPoint {
    pub coords: Vec<Complex64>,
    pub chart_affine: usize,
    pub chart_residue: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessReport {
    pub probes: usize,
    pub min_gradient_norm: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalBasis {
    pub power: u32,
    pub degree: u32,
    pub exponents: Vec<Exponent>,
    /// Pivot monomial of `F` whose multiples are excluded.
    pub pivot: Exponent,
}

impl CanonicalBasis {
    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// Residue-frame coefficients `M_α(z)` at `p` (affine coordinates).
    pub fn evaluate(&self, p: &VarietyPoint) -> Vec<Complex64> {
        self.evaluate_affine(&p.coords)
    }

    /// Residue-frame coefficients at an arbitrary affine coordinate vector.
    pub fn evaluate_affine(&self, z: &[Complex64]) -> Vec<Complex64> {
        let table = PowerTable::new(z, self.degree);
        self.exponents.iter().map(|e| table.monomial(e)).collect()
    }

    /// Writes the residue-frame coefficients into `out` (reused buffer).
    pub fn evaluate_into(&self, z: &[Complex64], out: &mut Vec<Complex64>) {
        let table = PowerTable::new(z, self.degree);
        out.clear();
        out.extend(self.exponents.iter().map(|e| table.monomial(e)));
    }

    /// Directional derivatives `Σ_i dir_i ∂M_α/∂z_i` at `z`.
    pub fn evaluate_directional(&self, z: &[Complex64], dir: &[Complex64]) -> Vec<Complex64> {
        let table = PowerTable::new(z, self.degree);
        let mut e2 = vec![0u32; z.len()];
        self.exponents
            .iter()
            .map(|e| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (i, d) in dir.iter().enumerate() {
                    if e[i] == 0 || *d == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    e2.copy_from_slice(e);
                    e2[i] -= 1;
                    acc += d * table.monomial(&e2) * e[i] as f64;
                }
                acc
            })
            .collect()
    }

    /// Coordinate-frame coefficients `M_α(z) / (∂_jF)^m`.
    pub fn evaluate_coordinate(&self, x: &Hypersurface, p: &VarietyPoint) -> Result<Vec<Complex64>> {
        let fj = x.partial(p.chart_residue, &p.coords);
        let gnorm = x.gradient(&p.coords).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if fj.norm() < RECHART_RATIO * gnorm || fj.norm() == 0.0 {
            return Err(Error::Chart("residue derivative below floor; re-chart required".into()));
        }
        let scale = fj.powu(self.power).inv();
        Ok(self.evaluate(p).into_iter().map(|v| v * scale).collect())
    }
}

/// Cached integer powers of each coordinate.
pub(crate) struct PowerTable {
    pows: Vec<Vec<Complex64>>,
}

impl PowerTable {
    pub(crate) fn new(z: &[Complex64], max_degree: u32) -> Self {
        let pows = z
            .iter()
            .map(|&c| {
                let mut row = Vec::with_capacity(max_degree as usize + 1);
                let mut acc = Complex64::new(1.0, 0.0);
                row.push(acc);
                for _ in 0..max_degree {
                    acc *= c;
                    row.push(acc);
                }
                row
            })
            .collect();
        Self { pows }
    }

    pub(crate) fn monomial(&self, e: &[u32]) -> Complex64 {
        let mut acc = Complex64::new(1.0, 0.0);
        for (row, &k) in self.pows.iter().zip(e) {
            if k > 0 {
                acc *= row[k as usize];
            }
        }
        acc
    }
}
