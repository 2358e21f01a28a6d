//! The iteration `h_m ↦ h_{m+1}` and the exact finite-sample functionals
//! attached to it.
//!
//! A state stores `P_m` with `h_m(ω^{⊗m}, ω^{⊗m}) = 1/B_m`,
//! `B_m(p) = v(p)† P_m v(p)`, where `v` are the residue-frame coefficients of
//! the monomial basis. For the Gram matrix `G` of the `β^ε h_m`-weighted
//! inner product on `H⁰(K_X^{m+1})`, every `G`-orthonormal basis satisfies
//! `Σ σ_i σ̄_i = v† G⁻¹ v`, so the update is
//! `P_{m+1} = (m+1)!/(m+n+1)! · G⁻¹`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, Spectrum};
use crate::poly::Exponent;
use crate::sampling::{sample_fs, SampleSet};
use crate::variety::{CanonicalBasis, Hypersurface, VarietyPoint};
use crate::weights::WeightSpec;
use num_complex::Complex64;

pub const STATE_VERSION: u32 = 1;
pub const CONVENTION: &str = "B-inverse";
/// Largest power a chain may reach.
pub const MAX_POWER: u32 = 40;
/// Hermitian tolerance for user-supplied matrices.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Sample points per Gram-assembly chunk; fixed so the reduction order
/// does not depend on the thread count.
const GRAM_CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    Initial,
    Stepped { seed: u64, sample_hash: String, weight_hash: String, parent_hash: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricState {
    pub variety_hash: String,
    pub basis: CanonicalBasis,
    pub p: CMatrix,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StateFile {
    version: u32,
    variety_hash: String,
    m: u32,
    dim: usize,
    basis_degree: u32,
    basis_pivot: Exponent,
    basis_exponents: Vec<Exponent>,
    /// Row-major `[re, im]` entries of `P`.
    p: Vec<[f64; 2]>,
    convention: String,
    provenance: Provenance,
}

impl MetricState {
    pub fn power(&self) -> u32 {
        self.basis.power
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn to_json(&self) -> String {
        let n = self.dim();
        let file = StateFile {
            version: STATE_VERSION,
            variety_hash: self.variety_hash.clone(),
            m: self.power(),
            dim: n,
            basis_degree: self.basis.degree,
            basis_pivot: self.basis.pivot.clone(),
            basis_exponents: self.basis.exponents.clone(),
            p: (0..n * n).map(|k| {
                let c = self.p[(k / n, k % n)];
                [c.re, c.im]
            }).collect(),
            convention: CONVENTION.into(),
            provenance: self.provenance.clone(),
        };
        serde_json::to_string_pretty(&file).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: StateFile = serde_json::from_str(text)?;
        if f.version != STATE_VERSION {
            return Err(Error::Format(format!("unsupported state version {}", f.version)));
        }
        if f.convention != CONVENTION {
            return Err(Error::Format(format!("unknown convention {:?}", f.convention)));
        }
        let n = f.dim;
        if f.basis_exponents.len() != n || f.p.len() != n * n {
            return Err(Error::Format("state dimensions are inconsistent".into()));
        }
        let p = CMatrix::from_fn(n, n, |i, j| {
            let [re, im] = f.p[i * n + j];
            Complex64::new(re, im)
        });
        let basis = CanonicalBasis { power: f.m, degree: f.basis_degree, exponents: f.basis_exponents, pivot: f.basis_pivot };
        Ok(Self { variety_hash: f.variety_hash, basis, p, provenance: f.provenance })
    }

    /// Hash of the serialized state.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    /// Returns the state for `c · h_m`, i.e. `P/c`.
    pub fn scaled_metric(&self, c: f64) -> Self {
        let mut s = self.clone();
        s.p = &self.p * Complex64::new(1.0 / c, 0.0);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitSpec {
    #[default]
    Identity,
    /// Row-major `[re, im]` entries.
    Matrix { entries: Vec<Vec<[f64; 2]>> },
}

impl InitSpec {
    pub fn from_matrix(m: &CMatrix) -> Self {
        InitSpec::Matrix {
            entries: (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect(),
        }
    }
}

/// `h_{m0}` on `K_X^{m0}`; identity init is a Fubini–Study-type metric.
pub fn init_state(x: &Hypersurface, m0: u32, init: &InitSpec) -> Result<MetricState> {
    if m0 == 0 {
        return Err(Error::Invalid("m0 must be at least 1".into()));
    }
    let basis = x.canonical_power_basis(m0)?;
    let n = basis.len();
    let p = match init {
        InitSpec::Identity => CMatrix::identity(n, n),
        InitSpec::Matrix { entries } => {
            if entries.len() != n || entries.iter().any(|r| r.len() != n) {
                return Err(Error::Dimension { expected: n, got: entries.len() });
            }
            let p = CMatrix::from_fn(n, n, |i, j| Complex64::new(entries[i][j][0], entries[i][j][1]));
            linalg::check_hermitian_pd(&p, HERMITIAN_TOL)?;
            p
        }
    };
    Ok(MetricState { variety_hash: x.hash(), basis, p, provenance: Provenance::Initial })
}

/// `B(p) = v† P v` in the residue frame.
pub fn eval_b(state: &MetricState, p: &VarietyPoint) -> f64 {
    linalg::quad_form(&state.p, &state.basis.evaluate(p))
}

/// `m!/(m+n)!` as a product of `n` reciprocals.
pub fn factorial_ratio(m: u32, n: usize) -> f64 {
    (1..=n as u32).map(|i| 1.0 / (m + i) as f64).product()
}

#[derive(Debug, Clone, Default)]
pub struct GramOptions {
    /// Evaluate the target basis as `A·v` (basis change `M ↦ A M`).
    pub transform: Option<CMatrix>,
    /// Added to the diagonal after assembly; only for fault injection.
    pub fault_ridge: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StepOptions {
    /// Added to the Gram diagonal before inversion; only for fault injection.
    pub fault_ridge: f64,
}

#[derive(Debug, Clone)]
pub struct Gram {
    pub matrix: CMatrix,
    /// `Σ w_k β^ε(p_k)`.
    pub weight_sum: f64,
}

/// `G_{αβ} = Σ_k w_k β^ε(p_k) u_α(p_k) ū_β(p_k) Φ(p_k) / B_m(p_k)` with `u`
/// the target-basis coefficients.
pub fn gram(state: &MetricState, target: &CanonicalBasis, s: &SampleSet, w: &WeightSpec, opts: &GramOptions) -> Result<Gram> {
    if s.is_empty() {
        return Err(Error::Invalid("sample set is empty".into()));
    }
    let n = opts.transform.as_ref().map_or(target.len(), |a| a.nrows());
    if let Some(a) = &opts.transform {
        if a.ncols() != target.len() {
            return Err(Error::Dimension { expected: target.len(), got: a.ncols() });
        }
    }
    let chunks = s.len().div_ceil(GRAM_CHUNK);
    let partials: Vec<(Vec<Complex64>, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * GRAM_CHUNK;
            let hi = (lo + GRAM_CHUNK).min(s.len());
            let mut acc = vec![Complex64::new(0.0, 0.0); n * n];
            let mut wsum = 0.0;
            let mut vm = Vec::new();
            let mut u = Vec::new();
            for k in lo..hi {
                let p = &s.points[k];
                state.basis.evaluate_into(&p.coords, &mut vm);
                let b = linalg::quad_form(&state.p, &vm);
                if !b.is_finite() {
                    return Err(Error::NonFinite { index: k });
                }
                if b <= 0.0 {
                    return Err(Error::NotPositiveDefinite(format!("B_m = {b:e} at sample {k} (corrupt state)")));
                }
                target.evaluate_into(&p.coords, &mut u);
                if let Some(a) = &opts.transform {
                    u = (0..n).map(|i| (0..u.len()).map(|j| a[(i, j)] * u[j]).sum()).collect();
                }
                let bw = s.weights[k] * w.factor(p);
                wsum += bw;
                let coef = bw * s.densities[k] / b;
                if !coef.is_finite() {
                    return Err(Error::NonFinite { index: k });
                }
                for i in 0..n {
                    let ui = u[i] * coef;
                    let row = &mut acc[i * n..i * n + i + 1];
                    for (j, r) in row.iter_mut().enumerate() {
                        *r += ui * u[j].conj();
                    }
                }
            }
            Ok((acc, wsum))
        })
        .collect::<Result<_>>()?;
    let mut total = vec![Complex64::new(0.0, 0.0); n * n];
    let mut weight_sum = 0.0;
    for (acc, ws) in partials {
        for (t, a) in total.iter_mut().zip(&acc) {
            *t += a;
        }
        weight_sum += ws;
    }
    let mut g = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = total[i * n + j];
            g[(i, j)] = v;
            g[(j, i)] = v.conj();
        }
        g[(i, i)] = Complex64::new(total[i * n + i].re + opts.fault_ridge, 0.0);
    }
    if g.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::NonFinite { index: 0 });
    }
    Ok(Gram { matrix: g, weight_sum })
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub state: MetricState,
    pub spectrum: Spectrum,
    pub weight_sum: f64,
}

/// One step of the iteration on the sample set `s`.
pub fn step(x: &Hypersurface, state: &MetricState, s: &SampleSet, w: &WeightSpec, opts: StepOptions) -> Result<StepOutput> {
    if state.variety_hash != x.hash() || s.variety_hash != state.variety_hash {
        return Err(Error::Unlinked("state, sample set and variety disagree".into()));
    }
    let m1 = state.power() + 1;
    let target = x.canonical_power_basis(m1)?;
    let g = gram(state, &target, s, w, &GramOptions { transform: None, fault_ridge: opts.fault_ridge })?;
    let (inv, spectrum) = linalg::hermitian_inverse(&g.matrix)?;
    let p = inv * Complex64::new(factorial_ratio(m1, x.dim()), 0.0);
    let provenance = Provenance::Stepped {
        seed: s.seed,
        sample_hash: s.hash(),
        weight_hash: w.hash(),
        parent_hash: state.hash(),
    };
    Ok(StepOutput {
        state: MetricState { variety_hash: state.variety_hash.clone(), basis: target, p, provenance },
        spectrum,
        weight_sum: g.weight_sum,
    })
}

/// Coefficient vectors `d_i` (columns) of a `G`-orthonormal basis: section
/// `i` has value `d_i† v` and `d_i† G d_j = δ_ij`.
pub fn orthonormal_sections(g: &CMatrix) -> Result<CMatrix> {
    let chol = g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("Gram matrix has no Cholesky factor".into()))?;
    let l = chol.l();
    let linv = l
        .solve_lower_triangular(&CMatrix::identity(g.nrows(), g.nrows()))
        .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
    Ok(linv.adjoint())
}

/// `h_a^{1/m_a} / h_b^{1/m_b} = B_b^{1/m_b} / B_a^{1/m_a}` at `p`.
///
/// Both `B`s are taken in the residue frame of `p`. Since all residue forms
/// `ω_j` agree up to sign, `h^{1/m}(ω, ω)` is a frame-free number and the
/// frame exponent is zero: no density factor enters.
pub fn eta_ratio(a: &MetricState, b: &MetricState, p: &VarietyPoint) -> Result<f64> {
    Ok(log_eta_ratio(a, b, p)?.exp())
}

pub fn log_eta_ratio(a: &MetricState, b: &MetricState, p: &VarietyPoint) -> Result<f64> {
    if a.variety_hash != b.variety_hash {
        return Err(Error::Unlinked("states belong to different varieties".into()));
    }
    if a == b {
        return Ok(0.0);
    }
    let (ba, bb) = (eval_b(a, p), eval_b(b, p));
    if !(ba > 0.0 && bb > 0.0) {
        return Err(Error::Chart("non-positive Bergman density".into()));
    }
    Ok(bb.ln() / b.power() as f64 - ba.ln() / a.power() as f64)
}

/// `L_{m,ε} = Σ_k w_k β^ε B_m^{1/m} Φ`, the discretization of
/// `∫ β^ε h_m^{-1/m}`.
pub fn functional_l(state: &MetricState, s: &SampleSet, w: &WeightSpec) -> Result<f64> {
    let inv_m = 1.0 / state.power() as f64;
    sum_points(s, |k, p| s.weights[k] * w.factor(p) * eval_b(state, p).powf(inv_m) * s.densities[k])
}

fn sum_points<F>(s: &SampleSet, f: F) -> Result<f64>
where
    F: Fn(usize, &VarietyPoint) -> f64 + Sync,
{
    let chunks = s.len().div_ceil(GRAM_CHUNK);
    let partial: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * GRAM_CHUNK;
            let hi = (lo + GRAM_CHUNK).min(s.len());
            let mut acc = 0.0;
            for k in lo..hi {
                let v = f(k, &s.points[k]);
                if !v.is_finite() {
                    return Err(Error::NonFinite { index: k });
                }
                acc += v;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Ok(partial.iter().sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceCheck {
    pub value: f64,
    /// `c_m = m!/(m+n)! · (N_m + 1)`.
    pub expected: f64,
    pub residual: f64,
}

/// `c_m = m!/(m+n)! · dim H⁰(K_X^m)`.
pub fn trace_constant(m: u32, n: usize, dim: usize) -> f64 {
    factorial_ratio(m, n) * dim as f64
}

/// `Σ_k w_k β^ε (B_m/B_{m−1}) Φ` against `c_m`; an algebraic identity for a
/// state stepped from `prev` on exactly `s` and `w`.
pub fn trace_identity_check(x: &Hypersurface, prev: &MetricState, state: &MetricState, s: &SampleSet, w: &WeightSpec) -> Result<TraceCheck> {
    match &state.provenance {
        Provenance::Stepped { sample_hash, weight_hash, parent_hash, .. }
            if *sample_hash == s.hash() && *weight_hash == w.hash() && *parent_hash == prev.hash() => {}
        _ => return Err(Error::Unlinked("state was not stepped from this parent on this sample set and weight".into())),
    }
    trace_sum(x, prev, state, s, w)
}

fn trace_sum(x: &Hypersurface, prev: &MetricState, state: &MetricState, s: &SampleSet, w: &WeightSpec) -> Result<TraceCheck> {
    let value = sum_points(s, |k, p| s.weights[k] * w.factor(p) * eval_b(state, p) / eval_b(prev, p) * s.densities[k])?;
    let expected = trace_constant(state.power(), x.dim(), state.dim());
    Ok(TraceCheck { value, expected, residual: (value - expected).abs() / expected })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderCheck {
    /// `c_m^{1/m} L_{m−1}^{(m−1)/m} − L_m`.
    pub slack: f64,
    pub bound: f64,
    pub relative: f64,
    pub ok: bool,
}

/// Hölder recursion `L_m ≤ c_m^{1/m} L_{m−1}^{(m−1)/m}`.
pub fn holder_check(l_m: f64, l_prev: f64, c_m: f64, m: u32) -> HolderCheck {
    let mf = m as f64;
    let bound = c_m.powf(1.0 / mf) * l_prev.powf((mf - 1.0) / mf);
    let slack = bound - l_m;
    let relative = slack / bound;
    HolderCheck { slack, bound, relative, ok: relative >= -1e-12 }
}

#[derive(Debug, Clone, Copy)]
pub enum SamplingPolicy<'a> {
    Shared(&'a SampleSet),
    /// A fresh random-line set per step, seeded with `seed + step index`.
    Fresh { n_points: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub m: u32,
    pub condition: f64,
    pub min_eigenvalue: f64,
    pub weight_sum: f64,
    pub l_value: f64,
    /// `None` where the exact checks do not apply (fresh samples).
    pub trace_residual: Option<f64>,
    pub holder_slack: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChainReport {
    pub exact_checks: bool,
    pub steps: Vec<StepRecord>,
}

#[derive(Debug)]
pub struct ChainOutput {
    /// The initial state followed by one state per completed step.
    pub states: Vec<MetricState>,
    pub report: ChainReport,
    /// Set when a step failed; `states` then holds the partial chain.
    pub error: Option<Error>,
}

/// Iterates from `m0` to `m_max`. With a shared sample set the trace
/// identity and the Hölder recursion are recorded at every step.
pub fn run_chain(
    x: &Hypersurface,
    m0: u32,
    m_max: u32,
    init: &InitSpec,
    w: &WeightSpec,
    policy: SamplingPolicy<'_>,
    opts: StepOptions,
) -> Result<ChainOutput> {
    run_chain_observed(x, m0, m_max, init, w, policy, opts, |_, _| Ok(()))
}

/// [`run_chain`] calling `observe` on the initial state and after every
/// accepted step. An observer error stops the chain and is stored like a
/// step failure.
#[allow(clippy::too_many_arguments)]
pub fn run_chain_observed<F>(
    x: &Hypersurface,
    m0: u32,
    m_max: u32,
    init: &InitSpec,
    w: &WeightSpec,
    policy: SamplingPolicy<'_>,
    opts: StepOptions,
    mut observe: F,
) -> Result<ChainOutput>
where
    F: FnMut(&MetricState, Option<&StepRecord>) -> Result<()>,
{
    if m_max <= m0 {
        return Err(Error::Invalid(format!("empty chain: m_max = {m_max} must exceed m0 = {m0}")));
    }
    if m_max > MAX_POWER {
        return Err(Error::Invalid(format!("m_max = {m_max} exceeds the cap {MAX_POWER}")));
    }
    let first = init_state(x, m0, init)?;
    let shared = matches!(policy, SamplingPolicy::Shared(_));
    let mut out = ChainOutput { states: vec![first], report: ChainReport { exact_checks: shared, steps: Vec::new() }, error: None };
    if let Err(e) = observe(&out.states[0], None) {
        out.error = Some(e);
        return Ok(out);
    }
    let mut l_prev = None;
    for (i, m) in (m0..m_max).enumerate() {
        let started = Instant::now();
        let fresh;
        let s = match policy {
            SamplingPolicy::Shared(s) => s,
            SamplingPolicy::Fresh { n_points, seed } => match sample_fs(x, n_points, seed.wrapping_add(i as u64)) {
                Ok(set) => {
                    fresh = set;
                    &fresh
                }
                Err(e) => {
                    out.error = Some(e);
                    return Ok(out);
                }
            },
        };
        let prev = out.states.last().expect("nonempty");
        let result = (|| -> Result<(StepOutput, f64, Option<f64>, Option<f64>)> {
            let stepped = step(x, prev, s, w, opts)?;
            let l_m = functional_l(&stepped.state, s, w)?;
            let (trace, holder) = if shared {
                let lp = match l_prev {
                    Some(v) => v,
                    None => functional_l(prev, s, w)?,
                };
                let t = trace_sum(x, prev, &stepped.state, s, w)?;
                let h = holder_check(l_m, lp, t.expected, m + 1);
                (Some(t.residual), Some(h.relative))
            } else {
                (None, None)
            };
            Ok((stepped, l_m, trace, holder))
        })();
        match result {
            Ok((stepped, l_m, trace_residual, holder_slack)) => {
                out.report.steps.push(StepRecord {
                    m: m + 1,
                    condition: stepped.spectrum.condition,
                    min_eigenvalue: stepped.spectrum.min,
                    weight_sum: stepped.weight_sum,
                    l_value: l_m,
                    trace_residual,
                    holder_slack,
                    seconds: started.elapsed().as_secs_f64(),
                });
                out.states.push(stepped.state);
                l_prev = Some(l_m);
                if let Err(e) = observe(out.states.last().expect("pushed"), out.report.steps.last()) {
                    out.error = Some(e);
                    return Ok(out);
                }
            }
            Err(e) => {
                out.error = Some(e);
                return Ok(out);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::sample_fs;
    use crate::poly::Polynomial;
    use crate::weights::normalize_weight_sup;
    use proptest::prelude::*;

    fn quartic() -> Hypersurface {
        Hypersurface::parse("x^4+y^4+z^4", None).unwrap()
    }

    fn one() -> WeightSpec {
        WeightSpec::constant_one(1.0).unwrap()
    }

    #[test]
    fn identity_init_sizes() {
        let x = quartic();
        assert_eq!(init_state(&x, 1, &InitSpec::Identity).unwrap().p, CMatrix::identity(3, 3));
        assert_eq!(init_state(&x, 2, &InitSpec::Identity).unwrap().p, CMatrix::identity(6, 6));
        let mut bad = CMatrix::identity(3, 3);
        bad[(2, 2)] = Complex64::new(-1.0, 0.0);
        assert!(init_state(&x, 1, &InitSpec::from_matrix(&bad)).is_err());
        assert!(matches!(init_state(&x, 1, &InitSpec::from_matrix(&CMatrix::identity(4, 4))), Err(Error::Dimension { .. })));
    }

    #[test]
    fn update_constant() {
        // (m+1)!/(m+n+1)! for the step m → m+1.
        assert_eq!(factorial_ratio(3, 1), 0.25);
        assert!((factorial_ratio(3, 2) - 1.0 / 20.0).abs() < 1e-16);
        assert!((trace_constant(2, 1, 6) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn step_scales_inverse_gram() {
        // P = 2!/3! · G⁻¹ against an independent dense inverse.
        let x = quartic();
        let s = sample_fs(&x, 400, 1).unwrap();
        let st = init_state(&x, 1, &InitSpec::Identity).unwrap();
        let out = step(&x, &st, &s, &one(), StepOptions::default()).unwrap();
        let g = gram(&st, &x.canonical_power_basis(2).unwrap(), &s, &one(), &GramOptions::default()).unwrap();
        let want = g.matrix.clone().try_inverse().unwrap() * Complex64::new(1.0 / 3.0, 0.0);
        assert!((&out.state.p - want).norm() < 1e-10 * out.state.p.norm());
    }

    #[test]
    fn gram_is_exactly_hermitian_and_matches_hand_sum() {
        let x = quartic();
        let s = sample_fs(&x, 8, 4).unwrap();
        let pts = vec![s.points[0].clone(), s.points[5].clone()];
        let two = SampleSet::from_points(&x, pts.clone(), vec![0.3, 1.7]).unwrap();
        let st = init_state(&x, 1, &InitSpec::Identity).unwrap();
        let target = x.canonical_power_basis(2).unwrap();
        let g = gram(&st, &target, &two, &one(), &GramOptions::default()).unwrap().matrix;
        assert_eq!(g, g.adjoint());
        // Hand oracle on entry (1, 4).
        let mut want = Complex64::new(0.0, 0.0);
        for (k, p) in pts.iter().enumerate() {
            let v = st.basis.evaluate(p);
            let b: f64 = v.iter().map(|c| c.norm_sqr()).sum();
            let u = target.evaluate(p);
            want += u[1] * u[4].conj() * (two.weights[k] * x.residue_fs_density(p).unwrap() / b);
        }
        assert!((g[(1, 4)] - want).norm() < 1e-14 * want.norm());
    }

    #[test]
    fn constant_weight_any_epsilon_gives_identical_gram() {
        let x = quartic();
        let s = sample_fs(&x, 400, 4).unwrap();
        let st = init_state(&x, 2, &InitSpec::Identity).unwrap();
        let t = x.canonical_power_basis(3).unwrap();
        let a = gram(&st, &t, &s, &one(), &GramOptions::default()).unwrap().matrix;
        let b = gram(&st, &t, &s, &WeightSpec::constant_one(0.3).unwrap(), &GramOptions::default()).unwrap().matrix;
        assert_eq!(a, b);
    }

    #[test]
    fn metric_scaling_propagates() {
        let x = quartic();
        let s = sample_fs(&x, 2000, 5).unwrap();
        let st = init_state(&x, 1, &InitSpec::Identity).unwrap();
        let a = step(&x, &st, &s, &one(), StepOptions::default()).unwrap().state;
        let b = step(&x, &st.scaled_metric(7.0), &s, &one(), StepOptions::default()).unwrap().state;
        // h ↦ 7h means P ↦ P/7.
        let diff = (&a.p * Complex64::new(1.0 / 7.0, 0.0) - &b.p).norm();
        assert!(diff < 1e-12 * b.p.norm());
    }

    #[test]
    fn exact_identities_on_shared_set() {
        let x = quartic();
        let s = sample_fs(&x, 4000, 6).unwrap();
        let w = normalize_weight_sup(&WeightSpec::polynomial_zero(Polynomial::parse("x", Some(3)).unwrap(), 0.5).unwrap(), &s).unwrap();
        let out = run_chain(&x, 1, 6, &InitSpec::Identity, &w, SamplingPolicy::Shared(&s), StepOptions::default()).unwrap();
        assert!(out.error.is_none());
        assert_eq!(out.states.len(), 6);
        for r in &out.report.steps {
            assert!(r.trace_residual.unwrap() < 1e-10, "{r:?}");
            assert!(r.holder_slack.unwrap() >= -1e-12, "{r:?}");
        }
        let t = trace_identity_check(&x, &out.states[0], &out.states[1], &s, &w).unwrap();
        assert!((t.expected - 2.0).abs() < 1e-15 && t.residual < 1e-10);
        assert!(trace_identity_check(&x, &out.states[1], &out.states[1], &s, &w).is_err());
    }

    #[test]
    fn fresh_policy_skips_exact_checks() {
        let x = quartic();
        let out = run_chain(&x, 1, 3, &InitSpec::Identity, &one(), SamplingPolicy::Fresh { n_points: 800, seed: 3 }, StepOptions::default()).unwrap();
        assert!(!out.report.exact_checks);
        assert!(out.report.steps.iter().all(|r| r.trace_residual.is_none()));
        assert!(run_chain(&x, 3, 3, &InitSpec::Identity, &one(), SamplingPolicy::Fresh { n_points: 800, seed: 3 }, StepOptions::default()).is_err());
    }

    #[test]
    fn observer_sees_every_state_and_can_stop_the_chain() {
        let x = quartic();
        let s = sample_fs(&x, 1000, 4).unwrap();
        let mut seen = Vec::new();
        let out = run_chain_observed(&x, 1, 4, &InitSpec::Identity, &one(), SamplingPolicy::Shared(&s), StepOptions::default(), |st, rec| {
            seen.push((st.power(), rec.map(|r| r.m)));
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![(1, None), (2, Some(2)), (3, Some(3)), (4, Some(4))]);
        assert_eq!(out.states.len(), 4);
        let out = run_chain_observed(&x, 1, 4, &InitSpec::Identity, &one(), SamplingPolicy::Shared(&s), StepOptions::default(), |st, _| {
            if st.power() == 2 { Err(Error::Invalid("stop".into())) } else { Ok(()) }
        })
        .unwrap();
        assert_eq!(out.states.len(), 2);
        assert!(matches!(out.error, Some(Error::Invalid(_))));
    }

    #[test]
    fn ridge_fault_breaks_trace_identity() {
        let x = quartic();
        let s = sample_fs(&x, 2000, 6).unwrap();
        let out = run_chain(&x, 1, 3, &InitSpec::Identity, &one(), SamplingPolicy::Shared(&s), StepOptions { fault_ridge: 1e-3 }).unwrap();
        assert!(out.report.steps.iter().all(|r| r.trace_residual.unwrap() > 1e-6));
    }

    #[test]
    fn holder_equality_and_detector() {
        let h = holder_check(2.0, 2.0, 2.0, 3);
        assert!(h.ok && h.relative.abs() < 1e-15);
        let perturbed = holder_check(h.bound * 1.1, 2.0, 2.0, 3);
        assert!(!perturbed.ok);
    }

    #[test]
    fn eta_ratio_contracts() {
        let x = quartic();
        let s = sample_fs(&x, 400, 7).unwrap();
        let st = init_state(&x, 2, &InitSpec::Identity).unwrap();
        let p = &s.points[3];
        assert_eq!(eta_ratio(&st, &st, p).unwrap(), 1.0);
        let other = step(&x, &st, &s, &one(), StepOptions::default()).unwrap().state;
        let r1 = eta_ratio(&st, &other, p).unwrap();
        let r2 = eta_ratio(&st.scaled_metric(5.0), &other, p).unwrap();
        assert!((r2 / r1 - 5f64.powf(0.5)).abs() < 1e-12);
    }

    #[test]
    fn state_json_round_trip() {
        let x = quartic();
        let s = sample_fs(&x, 400, 7).unwrap();
        let st = init_state(&x, 1, &InitSpec::Identity).unwrap();
        let next = step(&x, &st, &s, &one(), StepOptions::default()).unwrap().state;
        let back = MetricState::from_json(&next.to_json()).unwrap();
        assert_eq!(back, next);
        assert!(next.to_json().contains("\"convention\": \"B-inverse\""));
    }

    #[test]
    fn orthonormal_sections_reproduce_density() {
        let x = quartic();
        let s = sample_fs(&x, 2000, 8).unwrap();
        let st = init_state(&x, 2, &InitSpec::Identity).unwrap();
        let t = x.canonical_power_basis(3).unwrap();
        let g = gram(&st, &t, &s, &one(), &GramOptions::default()).unwrap().matrix;
        let d = orthonormal_sections(&g).unwrap();
        let id = d.adjoint() * &g * &d;
        assert!((id - CMatrix::identity(t.len(), t.len())).norm() < 1e-10);
        let v = t.evaluate(&s.points[0]);
        let (inv, _) = linalg::hermitian_inverse(&g).unwrap();
        let rho = linalg::quad_form(&inv, &v);
        let sum: f64 = (0..t.len()).map(|i| (0..t.len()).map(|a| d[(a, i)].conj() * v[a]).sum::<Complex64>().norm_sqr()).sum();
        assert!((sum - rho).abs() < 1e-10 * rho);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn unitary_conjugation_leaves_b_unchanged(seed in 0u64..1000, theta in 0.0f64..6.28) {
            let x = quartic();
            let s = sample_fs(&x, 8, seed).unwrap();
            let st = init_state(&x, 1, &InitSpec::Identity).unwrap();
            let mut p = st.p.clone();
            p[(0, 1)] = Complex64::new(0.2, 0.1);
            p[(1, 0)] = Complex64::new(0.2, -0.1);
            let (c, sn) = (theta.cos(), theta.sin());
            let mut u = CMatrix::identity(3, 3);
            u[(0, 0)] = Complex64::new(c, 0.0);
            u[(0, 2)] = Complex64::new(0.0, -sn);
            u[(2, 0)] = Complex64::new(0.0, -sn);
            u[(2, 2)] = Complex64::new(c, 0.0);
            let v = st.basis.evaluate(&s.points[0]);
            let uv: Vec<Complex64> = (0..3).map(|i| (0..3).map(|j| u[(i, j)] * v[j]).sum()).collect();
            let pu = &u * &p * u.adjoint();
            let (a, b) = (linalg::quad_form(&p, &v), linalg::quad_form(&pu, &uv));
            prop_assert!((a - b).abs() < 1e-12 * a);
        }
    }
}
