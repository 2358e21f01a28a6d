use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iteration::{eval_b, MetricState};
use crate::variety::VarietyPoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Coefficient of the model `δ_m = C · log m / m`.
    pub c: f64,
    /// Coefficient of determination about the mean of `δ`.
    pub r2: f64,
}

/// Least-squares fit of `δ_m ≈ C log m / m` through the origin.
pub fn rate_fit(ms: &[u32], deltas: &[f64]) -> Result<RateFit> {
    if ms.len() != deltas.len() {
        return Err(Error::Dimension { expected: ms.len(), got: deltas.len() });
    }
    if ms.len() < 4 {
        return Err(Error::Invalid(format!("rate fit needs at least 4 points, got {}", ms.len())));
    }
    if deltas.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
        return Err(Error::Invalid("rate fit needs positive finite deltas".into()));
    }
    if ms.iter().any(|&m| m < 2) {
        return Err(Error::Invalid("rate fit needs m ≥ 2".into()));
    }
    let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
    let ss_tot: f64 = deltas.iter().map(|d| (d - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Invalid("degenerate series: all deltas equal".into()));
    }
    let xs: Vec<f64> = ms.iter().map(|&m| (m as f64).ln() / m as f64).collect();
    let sxy: f64 = xs.iter().zip(deltas).map(|(x, d)| x * d).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let c = sxy / sxx;
    let ss_res: f64 = xs.iter().zip(deltas).map(|(x, d)| (d - c * x).powi(2)).sum();
    Ok(RateFit { c, r2: 1.0 - ss_res / ss_tot })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    /// Smallest `A'` with `Π(1 − A'/k) ≤ h_m/h_ref^m ≤ Π(1 + A'/k)` step by
    /// step on the probe set.
    pub a_prime: f64,
    /// `E_{i+1} − E_i` for the sampled sup `E_i = sup_p log(h_{m_i}/h_ref^{m_i})`.
    pub sup_increments: Vec<f64>,
    /// Same for the sampled inf.
    pub inf_increments: Vec<f64>,
    /// Powers `m_{i+1}` at which an increment grew in magnitude.
    pub violations: Vec<u32>,
}

/// `log(h_m/h_ref^m)` at each probe for every state, with
/// `h_ref = h_last^{1/m_last}`.
pub fn chain_log_ratios(states: &[MetricState], probes: &[VarietyPoint]) -> Result<Vec<Vec<f64>>> {
    let last = states.last().ok_or_else(|| Error::Invalid("empty chain".into()))?;
    let ml = last.power() as f64;
    let reference: Vec<f64> = probes.iter().map(|p| eval_b(last, p).ln() / ml).collect();
    Ok(states
        .iter()
        .map(|s| {
            let m = s.power() as f64;
            probes.iter().zip(&reference).map(|(p, r)| -eval_b(s, p).ln() + m * r).collect()
        })
        .collect())
}

/// Fits the finite-product envelope of the sampled sup/inf sequences and
/// lists steps where the increments fail to shrink.
pub fn envelope_monotonicity(ms: &[u32], log_ratios: &[Vec<f64>]) -> Result<EnvelopeReport> {
    if ms.len() != log_ratios.len() {
        return Err(Error::Dimension { expected: ms.len(), got: log_ratios.len() });
    }
    if ms.len() < 4 {
        return Err(Error::Invalid(format!("envelope check needs at least 4 states, got {}", ms.len())));
    }
    let sup: Vec<f64> = log_ratios.iter().map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
    let inf: Vec<f64> = log_ratios.iter().map(|r| r.iter().copied().fold(f64::INFINITY, f64::min)).collect();
    let diff = |v: &[f64]| -> Vec<f64> { v.windows(2).map(|w| w[1] - w[0]).collect() };
    let (de, df) = (diff(&sup), diff(&inf));
    let mut a_prime: f64 = 0.0;
    for i in 0..de.len() {
        let m = ms[i + 1] as f64;
        a_prime = a_prime.max(m * de[i].exp_m1()).max(-m * df[i].exp_m1());
    }
    let mut violations = Vec::new();
    for i in 1..de.len() {
        let tol = 1e-12;
        if de[i].abs() > de[i - 1].abs() + tol || df[i].abs() > df[i - 1].abs() + tol {
            violations.push(ms[i + 1]);
        }
    }
    Ok(EnvelopeReport { a_prime, sup_increments: de, inf_increments: df, violations })
}
