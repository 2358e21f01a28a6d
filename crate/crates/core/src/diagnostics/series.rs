use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::curvature::einstein_residual;
use super::rates::{rate_fit, RateFit};
use crate::error::Result;
use crate::iteration::{log_eta_ratio, ChainReport, MetricState};
use crate::variety::{Hypersurface, VarietyPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub m: u32,
    /// Sampled sup over probes of `|log eta_ratio(state_m, state_{m+1})|`.
    pub sup_delta: Option<f64>,
    pub mean_delta: Option<f64>,
    pub einstein_sup: Option<f64>,
    pub einstein_median: Option<f64>,
    pub l_value: Option<f64>,
    pub trace_residual: Option<f64>,
    pub holder_slack: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSeries {
    pub rows: Vec<ConvergenceRow>,
    /// Fit of `sup_delta` against `C log m / m`, when at least 4 deltas exist.
    pub fit: Option<RateFit>,
    /// All sups are over the finite probe set.
    pub sup_kind: String,
}

/// Assembles per-`m` convergence rows. Einstein residuals are computed for
/// curves when `einstein` is set.
pub fn convergence_series(
    x: &Hypersurface,
    states: &[MetricState],
    report: Option<&ChainReport>,
    probes: &[VarietyPoint],
    einstein: bool,
) -> Result<ConvergenceSeries> {
    let mut rows = Vec::with_capacity(states.len());
    for (i, st) in states.iter().enumerate() {
        let (sup_delta, mean_delta) = match states.get(i + 1) {
            Some(next) => {
                let d: Vec<f64> = probes
                    .par_iter()
                    .map(|p| log_eta_ratio(st, next, p).map(f64::abs))
                    .collect::<Result<_>>()?;
                (Some(d.iter().copied().fold(0.0, f64::max)), Some(d.iter().sum::<f64>() / d.len() as f64))
            }
            None => (None, None),
        };
        let (einstein_sup, einstein_median) = if einstein && x.dim() == 1 {
            let e = einstein_residual(x, st, probes)?;
            (Some(e.sup), Some(e.median))
        } else {
            (None, None)
        };
        let rec = report.and_then(|r| r.steps.iter().find(|s| s.m == st.power()));
        rows.push(ConvergenceRow {
            m: st.power(),
            sup_delta,
            mean_delta,
            einstein_sup,
            einstein_median,
            l_value: rec.map(|r| r.l_value),
            trace_residual: rec.and_then(|r| r.trace_residual),
            holder_slack: rec.and_then(|r| r.holder_slack),
        });
    }
    let (ms, ds): (Vec<u32>, Vec<f64>) = rows.iter().filter_map(|r| r.sup_delta.map(|d| (r.m, d))).filter(|(m, _)| *m >= 2).unzip();
    let fit = if ds.len() >= 4 { rate_fit(&ms, &ds).ok() } else { None };
    Ok(ConvergenceSeries { rows, fit, sup_kind: "sampled sup".into() })
}
