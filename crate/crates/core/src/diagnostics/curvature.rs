//! Curvature of `ω_m = (1/m)(i/2π)∂∂̄ log B̃_m` on plane curves.
//!
//! Forms are written `ω = (i/2π) g dz∧dz̄`, so the coefficient is
//! `g = ∂_z∂_z̄ φ = Δφ/4` for a potential `φ`. The Ricci form of `ω` has
//! coefficient `−∂_z∂_z̄ log g`, and the Einstein condition `Ric = −ω` reads
//! `∂_z∂_z̄ log g = g`.
//!
//! Along a curve the chart coordinate is the free affine coordinate `z_f`;
//! the residue coordinate `z_j` is the holomorphic implicit function, so the
//! residue-frame coefficients `v(z_f) = M(z(z_f))` are holomorphic. The
//! coordinate-frame density differs from the residue one by
//! `|∂_jF|^{−2m}`, whose logarithm is pluriharmonic, so both give the same
//! `g`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::iteration::MetricState;
use crate::linalg;
use crate::variety::{Hypersurface, VarietyPoint};

/// Base step of the finite-difference stencils.
pub const FD_STEP: f64 = 1e-2;

/// `∂_z∂_z̄ f = (f_xx + f_yy)/4` by the fourth-order five-point stencil on
/// each axis.
pub fn ddbar_fd<F>(f: &F, z0: Complex64, h: f64) -> Result<f64>
where
    F: Fn(Complex64) -> Result<f64>,
{
    let c = f(z0)?;
    let mut lap = 0.0;
    for dir in [Complex64::new(h, 0.0), Complex64::new(0.0, h)] {
        let (p1, m1) = (f(z0 + dir)?, f(z0 - dir)?);
        let (p2, m2) = (f(z0 + 2.0 * dir)?, f(z0 - 2.0 * dir)?);
        lap += (-p2 + 16.0 * p1 - 30.0 * c + 16.0 * m1 - m2) / (12.0 * h * h);
    }
    let v = lap / 4.0;
    if !v.is_finite() {
        return Err(Error::Diagnostic("non-finite finite difference".into()));
    }
    Ok(v)
}

/// [`ddbar_fd`] at `h`, `h/2`, `h/4` combined by two Richardson levels.
pub fn ddbar_richardson<F>(f: &F, z0: Complex64, h: f64) -> Result<f64>
where
    F: Fn(Complex64) -> Result<f64>,
{
    let d0 = ddbar_fd(f, z0, h)?;
    let d1 = ddbar_fd(f, z0, h / 2.0)?;
    let d2 = ddbar_fd(f, z0, h / 4.0)?;
    let r1 = (16.0 * d1 - d0) / 15.0;
    let r2 = (16.0 * d2 - d1) / 15.0;
    Ok((64.0 * r2 - r1) / 63.0)
}

/// Kähler coefficient of `(i/2π)∂∂̄φ` at `z0`.
pub fn curvature_of_potential<F>(phi: &F, z0: Complex64) -> Result<f64>
where
    F: Fn(Complex64) -> Result<f64>,
{
    ddbar_richardson(phi, z0, FD_STEP)
}

fn require_curve(x: &Hypersurface) -> Result<()> {
    if x.dim() != 1 {
        return Err(Error::Unsupported("curvature diagnostics support curves only".into()));
    }
    Ok(())
}

fn free_index(x: &Hypersurface, p: &VarietyPoint) -> usize {
    x.free_indices(p)[0]
}

/// `g_m(p)` by finite differences of `φ = (1/m) log B_m` along the chart
/// coordinate of `p`.
pub fn curvature_coefficient(x: &Hypersurface, state: &MetricState, p: &VarietyPoint) -> Result<f64> {
    require_curve(x)?;
    let f = free_index(x, p);
    let inv_m = 1.0 / state.power() as f64;
    let phi = |w: Complex64| -> Result<f64> {
        let z = x.local_lift(p, &[w])?;
        let b = linalg::quad_form(&state.p, &state.basis.evaluate_affine(&z));
        Ok(b.ln() * inv_m)
    };
    curvature_of_potential(&phi, p.coords[f])
}

/// `g_m` at affine coordinates `z` (chart of `p`) from the closed form
/// `∂∂̄ log B = v'†Pv'/B − |v†Pv'|²/B²`.
fn exact_at(x: &Hypersurface, state: &MetricState, p: &VarietyPoint, z: &[Complex64]) -> Result<f64> {
    let f = free_index(x, p);
    let j = p.chart_residue;
    let fj = x.partial(j, z);
    if fj.norm() == 0.0 {
        return Err(Error::Chart("vanishing residue derivative".into()));
    }
    let mut dir = vec![Complex64::new(0.0, 0.0); z.len()];
    dir[f] = Complex64::new(1.0, 0.0);
    dir[j] = -x.partial(f, z) / fj;
    let v = state.basis.evaluate_affine(z);
    let dv = state.basis.evaluate_directional(z, &dir);
    let n = v.len();
    let mut pv = vec![Complex64::new(0.0, 0.0); n];
    let mut pdv = vec![Complex64::new(0.0, 0.0); n];
    for a in 0..n {
        for b in 0..n {
            pv[a] += state.p[(a, b)] * v[b];
            pdv[a] += state.p[(a, b)] * dv[b];
        }
    }
    let bb: f64 = v.iter().zip(&pv).map(|(a, c)| (a.conj() * c).re).sum();
    let dd: f64 = dv.iter().zip(&pdv).map(|(a, c)| (a.conj() * c).re).sum();
    let vd: Complex64 = v.iter().zip(&pdv).map(|(a, c)| a.conj() * c).sum();
    let g = (dd / bb - vd.norm_sqr() / (bb * bb)) / state.power() as f64;
    if !g.is_finite() {
        return Err(Error::Diagnostic("non-finite curvature".into()));
    }
    Ok(g)
}

/// `g_m(p)` from the closed-form second derivative of `log B_m`.
pub fn curvature_coefficient_exact(x: &Hypersurface, state: &MetricState, p: &VarietyPoint) -> Result<f64> {
    require_curve(x)?;
    exact_at(x, state, p, &p.coords)
}

/// `|1 − ∂∂̄ log g / g|` at `z0` for a metric coefficient `g`.
pub fn einstein_residual_of_metric<F>(g: &F, z0: Complex64, h: f64) -> Result<f64>
where
    F: Fn(Complex64) -> Result<f64>,
{
    let g0 = g(z0)?;
    if !(g0 > 0.0) {
        return Err(Error::Diagnostic(format!("non-positive metric coefficient {g0:e}")));
    }
    let log_g = |w: Complex64| -> Result<f64> {
        let v = g(w)?;
        if !(v > 0.0) {
            return Err(Error::Diagnostic(format!("non-positive metric coefficient {v:e}")));
        }
        Ok(v.ln())
    };
    let ric = ddbar_richardson(&log_g, z0, h)?;
    Ok((1.0 - ric / g0).abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EinsteinSummary {
    pub sup: f64,
    pub mean: f64,
    pub median: f64,
    /// Per-probe residuals in probe order; `None` for skipped probes.
    pub values: Vec<Option<f64>>,
    pub skipped: usize,
}

/// Einstein residual of `ω_m` at each probe, with the metric coefficient
/// from the closed form and the Ricci term by finite differences of
/// `log g_m`. Probes where the local lift fails are skipped; more than 20%
/// skipped is an error.
pub fn einstein_residual(x: &Hypersurface, state: &MetricState, probes: &[VarietyPoint]) -> Result<EinsteinSummary> {
    require_curve(x)?;
    if probes.is_empty() {
        return Err(Error::Invalid("no probe points".into()));
    }
    let values: Vec<Option<f64>> = probes
        .par_iter()
        .map(|p| {
            let f = free_index(x, p);
            let g = |w: Complex64| -> Result<f64> {
                let z = x.local_lift(p, &[w])?;
                exact_at(x, state, p, &z)
            };
            einstein_residual_of_metric(&g, p.coords[f], FD_STEP).ok()
        })
        .collect();
    let mut ok: Vec<f64> = values.iter().flatten().copied().collect();
    let skipped = values.len() - ok.len();
    if skipped * 5 > probes.len() {
        return Err(Error::Diagnostic(format!("{skipped} of {} probes skipped", probes.len())));
    }
    ok.sort_by(f64::total_cmp);
    let k = ok.len();
    let median = if k % 2 == 1 { ok[k / 2] } else { 0.5 * (ok[k / 2 - 1] + ok[k / 2]) };
    Ok(EinsteinSummary {
        sup: ok[k - 1],
        mean: ok.iter().sum::<f64>() / k as f64,
        median,
        values,
        skipped,
    })
}
