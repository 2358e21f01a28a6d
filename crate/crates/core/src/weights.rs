//! The weight `β = |Q|² / (c · ‖z‖^{2k})` with `0 ≤ β ≤ 1` and exponent `ε`
//! of the modified iteration.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::poly::{Polynomial, PolynomialSpec};
use crate::sampling::SampleSet;
use crate::variety::VarietyPoint;

/// Serialized form used inside run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightConfig {
    ConstantOne {
        #[serde(default = "one")]
        epsilon: f64,
    },
    PolynomialZero {
        #[serde(rename = "Q", alias = "q")]
        q: PolynomialSpec,
        epsilon: f64,
        #[serde(default)]
        norm_constant: Option<f64>,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightKind {
    ConstantOne,
    PolynomialZero { q: Polynomial, degree: u32, norm_constant: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpec {
    pub kind: WeightKind,
    pub epsilon: f64,
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Invalid(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    Ok(())
}

impl WeightSpec {
    pub fn constant_one(epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(Self { kind: WeightKind::ConstantOne, epsilon })
    }

    /// `β = |Q|²/‖z‖^{2k}` with placeholder normalization 1; finalize with
    /// [`normalize_weight_sup`].
    pub fn polynomial_zero(q: Polynomial, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        if q.is_zero() {
            return Err(Error::Invalid("weight polynomial Q is identically zero".into()));
        }
        let degree = q.homogeneous_degree()?;
        Ok(Self { kind: WeightKind::PolynomialZero { q, degree, norm_constant: 1.0 }, epsilon })
    }

    pub fn from_config(cfg: &WeightConfig) -> Result<Self> {
        match cfg {
            WeightConfig::ConstantOne { epsilon } => Self::constant_one(*epsilon),
            WeightConfig::PolynomialZero { q, epsilon, norm_constant } => {
                let mut w = Self::polynomial_zero(Polynomial::from_spec(q)?, *epsilon)?;
                if let Some(c) = norm_constant {
                    w.set_norm_constant(*c)?;
                }
                Ok(w)
            }
        }
    }

    pub fn to_config(&self) -> WeightConfig {
        match &self.kind {
            WeightKind::ConstantOne => WeightConfig::ConstantOne { epsilon: self.epsilon },
            WeightKind::PolynomialZero { q, norm_constant, .. } => WeightConfig::PolynomialZero {
                q: q.to_spec(),
                epsilon: self.epsilon,
                norm_constant: Some(*norm_constant),
            },
        }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(Self { kind: self.kind.clone(), epsilon })
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, WeightKind::ConstantOne)
    }

    fn set_norm_constant(&mut self, c: f64) -> Result<()> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Invalid(format!("norm constant must be positive, got {c}")));
        }
        if let WeightKind::PolynomialZero { norm_constant, .. } = &mut self.kind {
            *norm_constant = c;
        }
        Ok(())
    }

    /// Unnormalized `|Q(z)|²/‖z‖^{2k}`.
    fn raw(&self, p: &VarietyPoint) -> f64 {
        match &self.kind {
            WeightKind::ConstantOne => 1.0,
            WeightKind::PolynomialZero { q, degree, .. } => {
                let n: f64 = p.coords.iter().map(|c| c.norm_sqr()).sum();
                q.eval(&p.coords).norm_sqr() / n.powi(*degree as i32)
            }
        }
    }

    /// `β^ε`; exactly 1 for the constant weight.
    pub fn factor(&self, p: &VarietyPoint) -> f64 {
        match self.kind {
            WeightKind::ConstantOne => 1.0,
            _ => eval_weight(self, p).powf(self.epsilon),
        }
    }

    /// Hash of the kind, polynomial, normalization and exponent.
    pub fn hash(&self) -> String {
        let body = serde_json::to_string(&self.to_config()).expect("serializable");
        hex::encode(Sha256::digest(body.as_bytes()))
    }
}

/// Sets the normalization so that the sample maximum of `β` is exactly 1.
pub fn normalize_weight_sup(w: &WeightSpec, s: &SampleSet) -> Result<WeightSpec> {
    if s.is_empty() {
        return Err(Error::Invalid("cannot normalize a weight on an empty sample set".into()));
    }
    if w.is_constant() {
        return Ok(w.clone());
    }
    let max = s.points.iter().map(|p| w.raw(p)).fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::Invalid("weight polynomial vanishes on every sample".into()));
    }
    let mut out = w.clone();
    out.set_norm_constant(max)?;
    Ok(out)
}

/// `β(p)`; callers raise it to `ε` themselves or use [`WeightSpec::factor`].
pub fn eval_weight(w: &WeightSpec, p: &VarietyPoint) -> f64 {
    match &w.kind {
        WeightKind::ConstantOne => 1.0,
        WeightKind::PolynomialZero { norm_constant, .. } => w.raw(p) / norm_constant,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::sample_fs;
    use crate::variety::Hypersurface;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn quartic() -> Hypersurface {
        Hypersurface::parse("x^4+y^4+z^4", None).unwrap()
    }

    fn qx() -> Polynomial {
        Polynomial::parse("x", Some(3)).unwrap()
    }

    #[test]
    fn constructor_contracts() {
        let w = WeightSpec::constant_one(0.5).unwrap();
        assert!(w.is_constant());
        assert!(WeightSpec::constant_one(0.0).is_err());
        assert!(WeightSpec::constant_one(1.5).is_err());
        assert!(WeightSpec::polynomial_zero(Polynomial::from_terms(3, []).unwrap(), 0.5).is_err());
        assert!(WeightSpec::polynomial_zero(Polynomial::parse("x^2+y", Some(3)).unwrap(), 0.5).is_err());
    }

    #[test]
    fn vanishes_exactly_on_q_zero_locus() {
        // Bézout: x = 0 meets the quartic in the 4 points y⁴ = −1, z = 1.
        let x = quartic();
        let w = WeightSpec::polynomial_zero(qx(), 1.0).unwrap();
        let mut zeros = 0;
        for k in 0..4 {
            let y = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4 * (2 * k + 1) as f64);
            let p = x.chart_select(&[Complex64::new(0.0, 0.0), y, Complex64::new(1.0, 0.0)]).unwrap();
            assert!(x.eval(&p.coords).norm() < 1e-14);
            if eval_weight(&w, &p) == 0.0 {
                zeros += 1;
            }
        }
        assert_eq!(zeros, 4);
    }

    #[test]
    fn sup_normalization_and_fresh_sample_sup() {
        let x = quartic();
        let dense = sample_fs(&x, 40_000, 1).unwrap();
        let w = normalize_weight_sup(&WeightSpec::polynomial_zero(qx(), 0.5).unwrap(), &dense).unwrap();
        let fresh = sample_fs(&x, 40_000, 2).unwrap();
        let max = fresh.points.iter().map(|p| eval_weight(&w, p)).fold(0.0, f64::max);
        assert!((0.95..=1.0 + 1e-6).contains(&max), "{max}");
        let c = WeightSpec::constant_one(1.0).unwrap();
        assert_eq!(normalize_weight_sup(&c, &dense).unwrap(), c);
    }

    #[test]
    fn single_point_normalization_is_exact() {
        let x = quartic();
        let s = sample_fs(&x, 4, 3).unwrap();
        let one = SampleSet::from_points(&x, vec![s.points[1].clone()], vec![1.0]).unwrap();
        let w = normalize_weight_sup(&WeightSpec::polynomial_zero(qx(), 1.0).unwrap(), &one).unwrap();
        assert_eq!(eval_weight(&w, &one.points[0]), 1.0);
    }

    #[test]
    fn constant_weight_factor_is_one() {
        let x = quartic();
        let s = sample_fs(&x, 40, 3).unwrap();
        for eps in [1.0, 0.5, 0.125] {
            let w = WeightSpec::constant_one(eps).unwrap();
            assert!(s.points.iter().all(|p| w.factor(p) == 1.0 && eval_weight(&w, p) == 1.0));
        }
    }

    #[test]
    fn config_round_trip() {
        let w = WeightSpec::polynomial_zero(qx(), 0.25).unwrap();
        let cfg = w.to_config();
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"kind\":\"polynomial_zero\""));
        let back = WeightSpec::from_config(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, w);
        let parsed: WeightConfig = serde_json::from_str(r#"{"kind":"polynomial_zero","Q":{"polynomial":"x"},"epsilon":0.5}"#).unwrap();
        assert!(WeightSpec::from_config(&parsed).is_ok());
    }

    proptest! {
        #[test]
        fn scale_invariant(re in -3.0f64..3.0, im in -3.0f64..3.0, seed in 0u64..50) {
            prop_assume!(re.abs() + im.abs() > 1e-2);
            let x = quartic();
            let s = sample_fs(&x, 4, seed).unwrap();
            let w = WeightSpec::polynomial_zero(Polynomial::parse("x*y - 2*z^2", None).unwrap(), 0.5).unwrap();
            let p = &s.points[0];
            let mut q = p.clone();
            let c = Complex64::new(re, im);
            q.coords.iter_mut().for_each(|z| *z *= c);
            let (a, b) = (eval_weight(&w, p), eval_weight(&w, &q));
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }

        #[test]
        fn monotone_in_epsilon(beta in 0.001f64..0.999, e1 in 0.01f64..1.0, e2 in 0.01f64..1.0) {
            prop_assume!(e1 < e2);
            prop_assert!(beta.powf(e1) > beta.powf(e2));
        }
    }
}
