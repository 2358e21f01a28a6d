//! Built-in property suite behind `kemetric verify`.

use std::path::Path;
use std::sync::OnceLock;

use kemetric::diagnostics::{
    bergman_extremal_gap_at, curvature_of_potential, einstein_residual_of_metric, lemma22_quadrature, FD_STEP,
};
use kemetric::iteration::{
    eval_b, gram, init_state, orthonormal_sections, run_chain, ChainOutput, GramOptions, InitSpec, SamplingPolicy,
};
use kemetric::linalg::{hermitian_inverse, CMatrix, CONDITION_CAP};
use kemetric::sampling::{curve_chart_quadrature, sample_fs};
use kemetric::weights::{normalize_weight_sup, WeightSpec};
use kemetric::{Complex64, SampleSet, StepOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::config::Resolved;
use crate::error::CliError;

pub const VERIFY_CSV: &str = "verify.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRow {
    pub check: &'static str,
    pub status: Status,
    pub value: f64,
    pub threshold: String,
    pub detail: String,
}

type CheckFn = fn(&Fixture) -> Result<CheckRow, CliError>;

pub const CHECKS: &[(&str, CheckFn)] = &[
    ("lemma22", lemma22),
    ("trace_identity", trace_identity),
    ("holder_recursion", holder_recursion),
    ("positive_definite", positive_definite),
    ("extremal_density", extremal_density),
    ("basis_invariance", basis_invariance),
    ("unitary_invariance", unitary_invariance),
    ("init_scaling", init_scaling),
    ("weight_reduction", weight_reduction),
    ("dimension_law", dimension_law),
    ("curvature_synthetic", curvature_synthetic),
    ("sample_mass", sample_mass),
    ("quadrature_mass", quadrature_mass),
];

/// Shared inputs: the configured variety, a random-line set and one chain
/// built on it with the configured weight at its first exponent.
pub struct Fixture<'a> {
    r: &'a Resolved,
    opts: StepOptions,
    samples: OnceLock<SampleSet>,
    weight: OnceLock<WeightSpec>,
    chain: OnceLock<ChainOutput>,
}

impl<'a> Fixture<'a> {
    pub fn new(r: &'a Resolved, opts: StepOptions) -> Self {
        Self { r, opts, samples: OnceLock::new(), weight: OnceLock::new(), chain: OnceLock::new() }
    }

    fn samples(&self) -> Result<&SampleSet, CliError> {
        if self.samples.get().is_none() {
            let s = sample_fs(&self.r.variety, self.r.config.sampling.n_points, self.r.config.seed)?;
            let _ = self.samples.set(s);
        }
        Ok(self.samples.get().expect("set"))
    }

    fn weight(&self) -> Result<&WeightSpec, CliError> {
        if self.weight.get().is_none() {
            let eps = self.r.config.epsilon_list()[0];
            let w = normalize_weight_sup(&self.r.weight.with_epsilon(eps)?, self.samples()?)?;
            let _ = self.weight.set(w);
        }
        Ok(self.weight.get().expect("set"))
    }

    fn chain(&self) -> Result<&ChainOutput, CliError> {
        if self.chain.get().is_none() {
            let c = &self.r.config;
            let out = run_chain(
                &self.r.variety,
                c.m0,
                c.m_max,
                &c.init,
                self.weight()?,
                SamplingPolicy::Shared(self.samples()?),
                self.opts,
            )?;
            if let Some(e) = out.error {
                return Err(e.into());
            }
            let _ = self.chain.set(out);
        }
        Ok(self.chain.get().expect("set"))
    }

    /// Gram matrix and inverse for the step out of every non-final state.
    fn grams(&self) -> Result<Vec<(usize, CMatrix, CMatrix, kemetric::CanonicalBasis)>, CliError> {
        let chain = self.chain()?;
        let mut out = Vec::new();
        for (i, st) in chain.states[..chain.states.len() - 1].iter().enumerate() {
            let target = self.r.variety.canonical_power_basis(st.power() + 1)?;
            let g = gram(st, &target, self.samples()?, self.weight()?, &GramOptions::default())?.matrix;
            let (inv, _) = hermitian_inverse(&g)?;
            out.push((i, g, inv, target));
        }
        Ok(out)
    }
}

fn row(check: &'static str, ok: bool, value: f64, threshold: &str, detail: String) -> CheckRow {
    CheckRow { check, status: if ok { Status::Pass } else { Status::Fail }, value, threshold: threshold.into(), detail }
}

fn skipped(check: &'static str, detail: &str) -> CheckRow {
    CheckRow { check, status: Status::Skipped, value: f64::NAN, threshold: String::new(), detail: detail.into() }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn gaussian_matrix(n: usize, r: &mut ChaCha20Rng) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| {
        let (a, b): (f64, f64) = (StandardNormal.sample(r), StandardNormal.sample(r));
        Complex64::new(a, b)
    })
}

fn lemma22(_: &Fixture) -> Result<CheckRow, CliError> {
    let r = lemma22_quadrature(1, 100, 16.0)?;
    let mut pts = Vec::new();
    for m in [20u32, 50, 100, 200] {
        pts.push(((m as f64).ln(), lemma22_quadrature(1, m, 1.0)?.abs_error.ln()));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let slope = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / pts.iter().map(|(x, _)| (x - mx).powi(2)).sum::<f64>();
    Ok(row(
        "lemma22",
        r.abs_error <= 1e-8 && slope < -4.0,
        r.abs_error,
        "1e-8; slope < -4",
        format!("n=1 m=100 b=16 numeric {:.12e} analytic {:.12e}; log-log error slope {slope:.2}", r.numeric, r.analytic),
    ))
}

fn trace_identity(f: &Fixture) -> Result<CheckRow, CliError> {
    let worst = f.chain()?.report.steps.iter().filter_map(|s| s.trace_residual).fold(0.0, f64::max);
    Ok(row("trace_identity", worst <= 1e-8, worst, "1e-8", "max relative residual over steps".into()))
}

fn holder_recursion(f: &Fixture) -> Result<CheckRow, CliError> {
    let worst = f.chain()?.report.steps.iter().filter_map(|s| s.holder_slack).fold(f64::INFINITY, f64::min);
    Ok(row("holder_recursion", worst >= -1e-12, worst, ">= -1e-12", "min relative slack over steps".into()))
}

fn positive_definite(f: &Fixture) -> Result<CheckRow, CliError> {
    let steps = &f.chain()?.report.steps;
    let min_eig = steps.iter().map(|s| s.min_eigenvalue).fold(f64::INFINITY, f64::min);
    let cond = steps.iter().map(|s| s.condition).fold(0.0, f64::max);
    Ok(row(
        "positive_definite",
        min_eig > 0.0 && cond < CONDITION_CAP,
        cond,
        "min eigenvalue > 0; condition < 1e12",
        format!("min eigenvalue {min_eig:.3e}"),
    ))
}

fn extremal_density(f: &Fixture) -> Result<CheckRow, CliError> {
    let probes = sample_fs(&f.r.variety, 10, f.r.config.seed.wrapping_add(1))?;
    let (mut gap, mut ratio): (f64, f64) = (0.0, 0.0);
    for (i, g, _, target) in f.grams()? {
        for (k, p) in probes.points.iter().enumerate() {
            let e = bergman_extremal_gap_at(&g, &target.evaluate(p), 200, (100 * i + k) as u64)?;
            gap = gap.max(e.gap);
            ratio = ratio.max(e.max_random_ratio);
        }
    }
    Ok(row(
        "extremal_density",
        gap <= 1e-9 && ratio <= 1.0,
        gap,
        "1e-9; random ratio <= 1",
        format!("max random section / density {ratio:.4}"),
    ))
}

fn basis_invariance(f: &Fixture) -> Result<CheckRow, CliError> {
    let chain = f.chain()?;
    let probes = sample_fs(&f.r.variety, 10, f.r.config.seed.wrapping_add(2))?;
    let mut rng = ChaCha20Rng::seed_from_u64(f.r.config.seed);
    let mut worst: f64 = 0.0;
    for (i, _, inv, target) in f.grams()? {
        let a = gaussian_matrix(target.len(), &mut rng);
        let opts = GramOptions { transform: Some(a.clone()), fault_ridge: 0.0 };
        let ga = gram(&chain.states[i], &target, f.samples()?, f.weight()?, &opts)?.matrix;
        let (inv_a, _) = hermitian_inverse(&ga)?;
        for p in &probes.points {
            let v = CMatrix::from_column_slice(target.len(), 1, &target.evaluate(p));
            let b = (v.adjoint() * &inv * &v)[(0, 0)].re;
            let va = &a * &v;
            worst = worst.max(rel((va.adjoint() * &inv_a * &va)[(0, 0)].re, b));
        }
    }
    Ok(row("basis_invariance", worst <= 1e-9, worst, "1e-9", "random invertible basis change".into()))
}

fn unitary_invariance(f: &Fixture) -> Result<CheckRow, CliError> {
    let probes = sample_fs(&f.r.variety, 10, f.r.config.seed.wrapping_add(3))?;
    let mut rng = ChaCha20Rng::seed_from_u64(f.r.config.seed.wrapping_add(1));
    let mut worst: f64 = 0.0;
    for (_, g, inv, target) in f.grams()? {
        let d = orthonormal_sections(&g)?;
        let du = &d * gaussian_matrix(target.len(), &mut rng).qr().q();
        for p in &probes.points {
            let v = CMatrix::from_column_slice(target.len(), 1, &target.evaluate(p));
            let b = (v.adjoint() * &inv * &v)[(0, 0)].re;
            let rho: f64 = (du.adjoint() * &v).iter().map(|z| z.norm_sqr()).sum();
            worst = worst.max(rel(rho, b));
        }
    }
    Ok(row("unitary_invariance", worst <= 1e-9, worst, "1e-9", "rotated orthonormal sections against G⁻¹".into()))
}

fn init_scaling(f: &Fixture) -> Result<CheckRow, CliError> {
    let c = &f.r.config;
    let chain = f.chain()?;
    let scaled_init = InitSpec::from_matrix(&init_state(&f.r.variety, c.m0, &c.init)?.scaled_metric(7.0).p);
    let scaled = run_chain(&f.r.variety, c.m0, c.m_max, &scaled_init, f.weight()?, SamplingPolicy::Shared(f.samples()?), f.opts)?;
    if let Some(e) = scaled.error {
        return Err(e.into());
    }
    let probes = sample_fs(&f.r.variety, 10, c.seed.wrapping_add(4))?;
    let mut worst: f64 = 0.0;
    for (a, b) in chain.states.iter().zip(&scaled.states) {
        for p in &probes.points {
            worst = worst.max(rel(eval_b(a, p) / eval_b(b, p), 7.0));
        }
    }
    Ok(row("init_scaling", worst <= 1e-12, worst, "1e-12", "h scaled by 7 at every step".into()))
}

fn weight_reduction(f: &Fixture) -> Result<CheckRow, CliError> {
    let c = &f.r.config;
    let s = f.samples()?;
    let run = |w: &WeightSpec| -> Result<ChainOutput, CliError> {
        let out = run_chain(&f.r.variety, c.m0, c.m_max, &c.init, w, SamplingPolicy::Shared(s), f.opts)?;
        match out.error {
            Some(e) => Err(e.into()),
            None => Ok(out),
        }
    };
    let (a, b) = (run(&WeightSpec::constant_one(1.0)?)?, run(&WeightSpec::constant_one(0.5)?)?);
    let differing = a
        .states
        .iter()
        .zip(&b.states)
        .filter(|(x, y)| x.p.iter().zip(y.p.iter()).any(|(u, v)| u.re.to_bits() != v.re.to_bits() || u.im.to_bits() != v.im.to_bits()))
        .count();
    Ok(row(
        "weight_reduction",
        differing == 0 && a.states.len() == b.states.len(),
        differing as f64,
        "0 differing states",
        "β ≡ 1 with ε = 0.5 against the plain chain, bitwise".into(),
    ))
}

fn dimension_law(f: &Fixture) -> Result<CheckRow, CliError> {
    let x = &f.r.variety;
    let Some(genus) = x.plane_curve_genus() else {
        return Ok(skipped("dimension_law", "not a plane curve"));
    };
    if genus < 2 {
        return Ok(skipped("dimension_law", "genus below 2"));
    }
    let mut bad = Vec::new();
    for m in 2..=8u32 {
        let b = x.canonical_power_basis(m)?;
        let expected = (2 * m as usize - 1) * (genus as usize - 1);
        let pts = sample_fs(x, 3 * b.len(), f.r.config.seed.wrapping_add(m as u64))?;
        let mat = CMatrix::from_fn(pts.len(), b.len(), |i, j| {
            let v = b.evaluate(&pts.points[i]);
            v[j] / v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
        });
        let sv = mat.singular_values();
        let rank = sv.iter().filter(|s| **s > 1e-10 * sv.max()).count();
        if b.len() != expected || rank != expected {
            bad.push(format!("m={m}: basis {} rank {rank} expected {expected}", b.len()));
        }
    }
    Ok(row(
        "dimension_law",
        bad.is_empty(),
        bad.len() as f64,
        "0 mismatches",
        if bad.is_empty() { format!("(2m−1)(g−1) with g = {genus}, m = 2..8") } else { bad.join("; ") },
    ))
}

fn curvature_synthetic(_: &Fixture) -> Result<CheckRow, CliError> {
    let mut worst: f64 = 0.0;
    for z in [Complex64::new(0.1, 0.2), Complex64::new(-0.4, 0.3), Complex64::new(0.5, -0.5)] {
        worst = worst.max((curvature_of_potential(&|w: Complex64| Ok(w.norm_sqr()), z)? - 1.0).abs());
        worst = worst.max((einstein_residual_of_metric(&|_| Ok(1.0), z, FD_STEP)? - 1.0).abs());
        let fs = curvature_of_potential(&|w: Complex64| Ok((1.0 + w.norm_sqr()).ln()), z)?;
        worst = worst.max(rel(fs, (1.0 + z.norm_sqr()).powi(-2)));
        let hyp = |w: Complex64| Ok(2.0 / (1.0 - w.norm_sqr()).powi(2));
        worst = worst.max(einstein_residual_of_metric(&hyp, z, FD_STEP)?);
    }
    Ok(row("curvature_synthetic", worst <= 1e-7, worst, "1e-7", "flat, Fubini–Study and hyperbolic closed forms".into()))
}

fn sample_mass(f: &Fixture) -> Result<CheckRow, CliError> {
    let s = f.samples()?;
    let d = f.r.variety.degree() as f64;
    let err = rel(s.total_weight(), d);
    Ok(row("sample_mass", err <= 1e-12, err, "1e-12", format!("total weight against degree {d}")))
}

fn quadrature_mass(f: &Fixture) -> Result<CheckRow, CliError> {
    let x = &f.r.variety;
    if x.dim() != 1 {
        return Ok(skipped("quadrature_mass", "not a plane curve"));
    }
    let err = (curve_chart_quadrature(x, 64)?.total_weight() - x.degree() as f64).abs();
    Ok(row("quadrature_mass", err <= 1e-3, err, "1e-3", "chart quadrature at resolution 64".into()))
}

/// Runs the selected checks, writes the CSV table and returns the rows.
pub fn cmd_verify(r: &Resolved, dir: &Path, only: Option<&str>, opts: StepOptions) -> Result<Vec<CheckRow>, CliError> {
    if let Some(name) = only {
        if !CHECKS.iter().any(|(n, _)| *n == name) {
            let names: Vec<&str> = CHECKS.iter().map(|(n, _)| *n).collect();
            return Err(CliError::Config(format!("unknown check `{name}`; available: {}", names.join(", "))));
        }
    }
    let fixture = Fixture::new(r, opts);
    let mut rows = Vec::new();
    for (name, check) in CHECKS {
        if only.is_some_and(|o| o != *name) {
            continue;
        }
        let result = match check(&fixture) {
            Ok(row) => row,
            Err(e) => CheckRow { check: name, status: Status::Fail, value: f64::NAN, threshold: String::new(), detail: e.to_string() },
        };
        println!("{:<20} {:<8} {:<12.3e} {}", result.check, format!("{:?}", result.status).to_lowercase(), result.value, result.detail);
        rows.push(result);
    }
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(VERIFY_CSV))?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(rows)
}
