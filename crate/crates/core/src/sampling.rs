//! Fubini–Study distributed point sets on a hypersurface and weighted sums
//! over them.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::roots;
use crate::variety::{Hypersurface, VarietyPoint};

pub const SAMPLE_SET_VERSION: u32 = 1;
/// Redraws allowed per line before sampling gives up.
pub const LINE_RETRY_CAP: usize = 100;
/// Roots closer than this (relative to their modulus) count as clustered.
pub const CLUSTER_TOL: f64 = 1e-8;
pub const MIN_QUADRATURE_RESOLUTION: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleMethod {
    RandomLine,
    ChartQuadrature,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSet {
    pub version: u32,
    pub method: SampleMethod,
    pub seed: u64,
    pub variety_hash: String,
    pub points: Vec<VarietyPoint>,
    pub weights: Vec<f64>,
    /// Residue-volume density `Φ` at each point, cached at construction.
    pub densities: Vec<f64>,
    /// Consecutive points coming from one random line (random-line sets).
    #[serde(default)]
    pub points_per_line: Option<usize>,
    /// Grid cells whose root solve failed (quadrature sets).
    #[serde(default)]
    pub dropped_cells: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    /// `None` for deterministic quadrature sets.
    pub stderr: Option<f64>,
}

/// Complex Gaussian pair `(p, q)` spanning a random projective line; the
/// induced measure on lines is unitarily invariant.
pub fn random_line<R: Rng>(rng: &mut R, nvars: usize) -> (Vec<Complex64>, Vec<Complex64>) {
    let mut draw = || -> Vec<Complex64> {
        (0..nvars)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect()
    };
    let p = draw();
    let q = draw();
    (p, q)
}

fn clustered(ts: &[Complex64]) -> bool {
    for (i, a) in ts.iter().enumerate() {
        for b in &ts[i + 1..] {
            if (a - b).norm() < CLUSTER_TOL * a.norm().max(b.norm()).max(1.0) {
                return true;
            }
        }
    }
    false
}

fn sample_line(x: &Hypersurface, seed: u64, line: u64) -> Result<Vec<VarietyPoint>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(line);
    let d = x.degree() as usize;
    'retry: for _ in 0..LINE_RETRY_CAP {
        let (p, q) = random_line(&mut rng, x.nvars());
        let coeffs = x.polynomial().restrict_to_line(&p, &q);
        let Some(ts) = roots::roots(&coeffs) else { continue };
        if ts.len() != d || clustered(&ts) {
            continue;
        }
        let mut pts = Vec::with_capacity(d);
        for t in ts {
            let z: Vec<Complex64> = p.iter().zip(&q).map(|(a, b)| a + t * b).collect();
            match x.chart_select(&z) {
                Ok(pt) => pts.push(pt),
                Err(_) => continue 'retry,
            }
        }
        return Ok(pts);
    }
    Err(Error::Sampling(format!("line {line}: retry cap {LINE_RETRY_CAP} exhausted")))
}

/// Random-line sample with `ceil(n_points/d)` lines. Every point carries
/// weight `1/lines`, so the weights sum to `d = ∫_X ω_FS^n`.
pub fn sample_fs(x: &Hypersurface, n_points: usize, seed: u64) -> Result<SampleSet> {
    let d = x.degree() as usize;
    if n_points < d {
        return Err(Error::Invalid(format!("need at least d = {d} points, got {n_points}")));
    }
    let lines = n_points.div_ceil(d);
    let per_line: Vec<Vec<VarietyPoint>> = (0..lines as u64)
        .into_par_iter()
        .map(|l| sample_line(x, seed, l))
        .collect::<Result<_>>()?;
    let points: Vec<VarietyPoint> = per_line.into_iter().flatten().collect();
    let weights = vec![1.0 / lines as f64; points.len()];
    SampleSet::assemble(x, SampleMethod::RandomLine, seed, points, weights, Some(d), 0)
}

/// Half-width of the grid in the free affine coordinate.
const ZMAX: f64 = 1.5;
/// Exponent `p` of the `|F_k|^{2p}` split between solved coordinates; it
/// vanishes to high order at branch points where the graph density blows up.
const GRADIENT_POWER: i32 = 3;

fn smooth_step(t: f64, lo: f64, hi: f64) -> f64 {
    // C^∞ transition from 1 (t ≤ lo) to 0 (t ≥ hi).
    let f = |u: f64| if u <= 0.0 { 0.0 } else { (-1.0 / u).exp() };
    let u = (t - lo) / (hi - lo);
    let (a, b) = (f(1.0 - u), f(u));
    if a + b == 0.0 {
        return if u < 0.5 { 1.0 } else { 0.0 };
    }
    a / (a + b)
}

/// Partition-of-unity factor for the graph chart over affine index `a`
/// solving for coordinate `k`.
fn chart_bump(z: &[Complex64], grad: &[Complex64], a: usize, k: usize) -> f64 {
    let za = z[a].norm();
    let fk = grad[k].norm();
    let mut v = 1.0;
    for (i, zi) in z.iter().enumerate() {
        if i != a {
            v *= smooth_step(zi.norm_sqr() / (za * za), 1.0, ZMAX * ZMAX);
        }
    }
    let sum: f64 = grad.iter().enumerate().filter(|(i, _)| *i != a).map(|(_, g)| g.norm().powi(2 * GRADIENT_POWER)).sum();
    v * fk.powi(2 * GRADIENT_POWER) / sum
}

/// Deterministic quadrature for plane curves: a midpoint grid over
/// `[−1.5, 1.5]²` in the free coordinate of every graph chart, glued by a
/// smooth partition of unity so each point of the curve is counted once in
/// total weight.
pub fn curve_chart_quadrature(x: &Hypersurface, resolution: usize) -> Result<SampleSet> {
    if x.dim() != 1 {
        return Err(Error::Unsupported("chart quadrature supports plane curves only".into()));
    }
    if resolution < MIN_QUADRATURE_RESOLUTION {
        return Err(Error::Invalid(format!("resolution {resolution} below floor {MIN_QUADRATURE_RESOLUTION}")));
    }
    let nv = x.nvars();
    let h = 2.0 * ZMAX / resolution as f64;
    let mut charts = Vec::new();
    for a in 0..nv {
        for k in 0..nv {
            if k != a {
                let f = (0..nv).find(|&i| i != a && i != k).expect("three coordinates");
                charts.push((a, k, f));
            }
        }
    }
    let cells: Vec<(usize, usize, usize)> = (0..charts.len())
        .flat_map(|c| (0..resolution).flat_map(move |i| (0..resolution).map(move |j| (c, i, j))))
        .collect();
    let results: Vec<(Vec<(VarietyPoint, f64)>, bool)> = cells
        .par_iter()
        .map(|&(c, i, j)| {
            let (a, k, f) = charts[c];
            let w = Complex64::new(-ZMAX + (i as f64 + 0.5) * h, -ZMAX + (j as f64 + 0.5) * h);
            let mut base = vec![Complex64::new(0.0, 0.0); nv];
            base[a] = Complex64::new(1.0, 0.0);
            base[f] = w;
            let mut dir = vec![Complex64::new(0.0, 0.0); nv];
            dir[k] = Complex64::new(1.0, 0.0);
            let coeffs = x.polynomial().restrict_to_line(&base, &dir);
            let Some(ts) = roots::roots(&coeffs) else { return (Vec::new(), true) };
            let mut out = Vec::new();
            for t in ts {
                let mut z = base.clone();
                z[k] = t;
                let grad = x.gradient(&z);
                if grad[k].norm() == 0.0 {
                    continue;
                }
                let own = chart_bump(&z, &grad, a, k);
                if own == 0.0 {
                    continue;
                }
                let mut total = 0.0;
                for (a2, k2, _) in &charts {
                    total += chart_bump(&z, &grad, *a2, *k2);
                }
                let Ok(pt) = x.chart_select(&z) else { continue };
                // ω_FS = (i/2π) g dw∧dw̄ and (i/2π) dw∧dw̄ = dA/π.
                let g = fs_graph_metric(&z, &grad, k, f);
                out.push((pt, g * h * h / std::f64::consts::PI * own / total));
            }
            (out, false)
        })
        .collect();
    let dropped = results.iter().filter(|r| r.1).count();
    let (points, weights): (Vec<_>, Vec<_>) = results.into_iter().flat_map(|r| r.0).unzip();
    SampleSet::assemble(x, SampleMethod::ChartQuadrature, 0, points, weights, None, dropped)
}

fn fs_graph_metric(z: &[Complex64], grad: &[Complex64], k: usize, f: usize) -> f64 {
    let mut t = vec![Complex64::new(0.0, 0.0); z.len()];
    t[f] = Complex64::new(1.0, 0.0);
    t[k] = -grad[f] / grad[k];
    let s: f64 = z.iter().map(|c| c.norm_sqr()).sum();
    let tt: f64 = t.iter().map(|c| c.norm_sqr()).sum();
    let zt: Complex64 = z.iter().zip(&t).map(|(a, b)| a.conj() * b).sum();
    tt / s - zt.norm_sqr() / (s * s)
}

impl SampleSet {
    fn assemble(
        x: &Hypersurface,
        method: SampleMethod,
        seed: u64,
        points: Vec<VarietyPoint>,
        weights: Vec<f64>,
        points_per_line: Option<usize>,
        dropped_cells: usize,
    ) -> Result<Self> {
        let densities = points.par_iter().map(|p| x.residue_fs_density(p)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            version: SAMPLE_SET_VERSION,
            method,
            seed,
            variety_hash: x.hash(),
            points,
            weights,
            densities,
            points_per_line,
            dropped_cells,
        })
    }

    /// A hand-built set; densities are computed from `x`.
    pub fn from_points(x: &Hypersurface, points: Vec<VarietyPoint>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::Dimension { expected: points.len(), got: weights.len() });
        }
        if points.is_empty() {
            return Err(Error::Invalid("sample set is empty".into()));
        }
        if let Some(i) = weights.iter().position(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Invalid(format!("weight {i} is not positive")));
        }
        Self::assemble(x, SampleMethod::ChartQuadrature, 0, points, weights, None, 0)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Content hash over the bit patterns of points, weights and method.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.variety_hash.as_bytes());
        h.update([self.method as u8]);
        h.update(self.seed.to_le_bytes());
        for (p, w) in self.points.iter().zip(&self.weights) {
            for c in &p.coords {
                h.update(c.re.to_bits().to_le_bytes());
                h.update(c.im.to_bits().to_le_bytes());
            }
            h.update((p.chart_affine as u32).to_le_bytes());
            h.update((p.chart_residue as u32).to_le_bytes());
            h.update(w.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Consistency checks after loading from disk.
    pub fn validate(&self, x: &Hypersurface) -> Result<()> {
        if self.version != SAMPLE_SET_VERSION {
            return Err(Error::Format(format!("unsupported sample set version {}", self.version)));
        }
        if self.variety_hash != x.hash() {
            return Err(Error::Unlinked("sample set belongs to a different variety".into()));
        }
        if self.points.len() != self.weights.len() || self.points.len() != self.densities.len() {
            return Err(Error::Format("sample set arrays have different lengths".into()));
        }
        Ok(())
    }
}

/// `Σ_k w_k f(p_k)`, with a standard error from the spread of per-line sums
/// for random-line sets.
pub fn mc_integrate<F>(s: &SampleSet, f: F) -> Result<Estimate>
where
    F: Fn(usize, &VarietyPoint) -> f64,
{
    let vals: Vec<f64> = s.points.iter().enumerate().map(|(i, p)| f(i, p)).collect();
    if let Some(index) = vals.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let value = vals.iter().zip(&s.weights).map(|(v, w)| v * w).sum();
    let stderr = match (s.method, s.points_per_line) {
        (SampleMethod::RandomLine, Some(k)) if s.len() >= 2 * k => {
            let sums: Vec<f64> = vals
                .chunks(k)
                .zip(s.weights.chunks(k))
                .map(|(v, w)| v.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() * (s.len() / k) as f64)
                .collect();
            let l = sums.len() as f64;
            let mean = sums.iter().sum::<f64>() / l;
            let var = sums.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (l - 1.0);
            Some((var / l).sqrt())
        }
        _ => None,
    };
    Ok(Estimate { value, stderr })
}

/// Complex-valued variant of [`mc_integrate`]; no error estimate.
pub fn mc_integrate_complex<F>(s: &SampleSet, f: F) -> Result<Complex64>
where
    F: Fn(usize, &VarietyPoint) -> Complex64,
{
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, (p, w)) in s.points.iter().zip(&s.weights).enumerate() {
        let v = f(i, p);
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::NonFinite { index: i });
        }
        acc += v * w;
    }
    Ok(acc)
}
