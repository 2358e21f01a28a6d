use crate::error::{Error, Result};
use crate::iteration::factorial_ratio;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma22 {
    pub numeric: f64,
    /// `m!/(m+n)!`.
    pub analytic: f64,
    pub abs_error: f64,
}

/// `a_m = m / (log m)²`.
pub fn peak_scale(m: u32) -> f64 {
    let l = (m as f64).ln();
    m as f64 / (l * l)
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_KRONROD: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_GAUSS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = GK_KRONROD[7] * fc;
    let mut g = GK_GAUSS[3] * fc;
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let s = f(c - x) + f(c + x);
        k += GK_KRONROD[i] * s;
        if i % 2 == 1 {
            g += GK_GAUSS[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature of `f` on `[a, b]`.
pub fn gauss_kronrod<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    let mut intervals = vec![(a, b, gk15(&f, a, b))];
    for _ in 0..2000 {
        let total: f64 = intervals.iter().map(|i| i.2 .0).sum();
        let err: f64 = intervals.iter().map(|i| i.2 .1).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            // Sum smallest contributions first.
            let mut vals: Vec<f64> = intervals.iter().map(|i| i.2 .0).collect();
            vals.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
            return Ok(vals.iter().sum());
        }
        let (k, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .expect("nonempty");
        let (lo, hi, _) = intervals.swap_remove(k);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Err(Error::Quadrature("interval cannot be bisected further".into()));
        }
        intervals.push((lo, mid, gk15(&f, lo, mid)));
        intervals.push((mid, hi, gk15(&f, mid, hi)));
    }
    Err(Error::Quadrature("subdivision limit reached".into()))
}

/// Integral of `(1 − |z|²)_+^m` over the ball `|z|² ≤ b/a_m` in `C^n`
/// against `(i/2π)^n ∏ dz_k∧dz̄_k`, which reduces to
/// `∫_0^{min(b/a_m, 1)} (1−s)^m s^{n−1}/(n−1)! ds`; the full-space value is
/// `m!/(m+n)!`.
pub fn lemma22_quadrature(n: u32, m: u32, b: f64) -> Result<Lemma22> {
    if !(1..=2).contains(&n) {
        return Err(Error::Invalid(format!("n must be 1 or 2, got {n}")));
    }
    if m < 5 {
        return Err(Error::Invalid(format!("m must be at least 5, got {m}")));
    }
    if !(b > 0.0) {
        return Err(Error::Invalid(format!("b must be positive, got {b}")));
    }
    let upper = (b / peak_scale(m)).min(1.0);
    let nf = (1..n).map(|k| k as f64).product::<f64>();
    let f = |s: f64| (1.0 - s).powi(m as i32) * s.powi(n as i32 - 1) / nf;
    let numeric = gauss_kronrod(f, 0.0, upper, 1e-300, 1e-15)?;
    let analytic = factorial_ratio(m, n as usize);
    Ok(Lemma22 { numeric, analytic, abs_error: (numeric - analytic).abs() })
}
