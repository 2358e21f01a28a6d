//! `kemetric report`: convergence series and the ε stabilization table.

use std::path::Path;

use kemetric::diagnostics::{convergence_series, ConvergenceSeries};
use kemetric::iteration::{eval_b, ChainReport, MetricState, Provenance};
use kemetric::sampling::sample_fs;
use kemetric::weights::{eval_weight, WeightSpec};
use kemetric::{Hypersurface, VarietyPoint};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::run::{write_json, Manifest, CONFIG_COPY};

pub const REPORT_DIR: &str = "report";
/// Offset of the probe seed from the run seed, so probes differ from the
/// shared sample set.
pub const PROBE_SEED_OFFSET: u64 = 0x9e37_79b9;
/// Threshold on `β` selecting the probes of the ε table.
pub const BETA_FLOOR: f64 = 0.5;

#[derive(Debug, Serialize)]
pub struct Stabilization {
    pub m: u32,
    pub epsilons: Vec<f64>,
    pub probes_used: usize,
    /// `max_p |h^{1/m}_{ε_j} − h^{1/m}_{ε_{j+1}}|` over probes with `β ≥ 0.5`.
    pub max_successive_differences: Vec<f64>,
    pub decreasing: bool,
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Loads the states of one chain and rejects files that do not belong to
/// the run described by the manifest.
fn load_chain(dir: &Path, manifest: &Manifest, index: usize) -> Result<(Vec<MetricState>, Option<ChainReport>), CliError> {
    let entry = &manifest.chains[index];
    let chain_dir = dir.join(&entry.dir);
    let mut states = Vec::new();
    for name in &entry.states {
        let st = MetricState::from_json(&read(&chain_dir.join(name))?)
            .map_err(|e| CliError::Io(format!("{}: {e}", chain_dir.join(name).display())))?;
        if st.variety_hash != manifest.variety_hash {
            return Err(CliError::Config(format!("{}/{name}: variety hash differs from the manifest", entry.dir)));
        }
        if let Provenance::Stepped { sample_hash, weight_hash, .. } = &st.provenance {
            if manifest.sample_hash.as_ref().is_some_and(|h| h != sample_hash) {
                return Err(CliError::Config(format!("{}/{name}: sample set hash differs from the manifest", entry.dir)));
            }
            if *weight_hash != entry.weight_hash {
                return Err(CliError::Config(format!("{}/{name}: weight hash differs from the manifest", entry.dir)));
            }
        }
        states.push(st);
    }
    for pair in states.windows(2) {
        if pair[1].power() != pair[0].power() + 1 {
            continue;
        }
        match &pair[1].provenance {
            Provenance::Stepped { parent_hash, .. } if *parent_hash == pair[0].hash() => {}
            _ => return Err(CliError::Config(format!("{}: state m = {} is not stepped from its predecessor", entry.dir, pair[1].power()))),
        }
    }
    let report = match std::fs::read_to_string(chain_dir.join(&entry.report)) {
        Ok(text) => Some(serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", entry.report)))?),
        Err(_) => None,
    };
    Ok((states, report))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn write_series_csv(path: &Path, series: &ConvergenceSeries) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["m", "sup_delta", "mean_delta", "einstein_sup", "einstein_median", "l_value", "trace_residual", "holder_slack"])?;
    for r in &series.rows {
        w.write_record([
            r.m.to_string(),
            opt(r.sup_delta),
            opt(r.mean_delta),
            opt(r.einstein_sup),
            opt(r.einstein_median),
            opt(r.l_value),
            opt(r.trace_residual),
            opt(r.holder_slack),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn epsilon_table(
    out: &Path,
    manifest: &Manifest,
    chains: &[Vec<MetricState>],
    probes: &[VarietyPoint],
) -> Result<Stabilization, CliError> {
    let m = chains.iter().map(|c| c.last().map(|s| s.power()).unwrap_or(0)).min().unwrap_or(0);
    let finals: Vec<&MetricState> = chains
        .iter()
        .map(|c| c.iter().find(|s| s.power() == m))
        .collect::<Option<_>>()
        .ok_or_else(|| CliError::Config(format!("not every chain has a state at m = {m}")))?;
    let beta = WeightSpec::from_config(&manifest.chains[0].weight)?;
    let epsilons: Vec<f64> = manifest.chains.iter().map(|c| c.epsilon).collect();
    let mut w = csv::Writer::from_path(out.join("epsilon_table.csv"))?;
    let mut header = vec!["probe".to_string(), "beta".to_string()];
    header.extend(epsilons.iter().map(|e| format!("h_root_eps_{e}")));
    w.write_record(&header)?;
    let mut diffs = vec![0.0f64; finals.len().saturating_sub(1)];
    let mut used = 0;
    for (k, p) in probes.iter().enumerate() {
        let b = eval_weight(&beta, p);
        let values: Vec<f64> = finals.iter().map(|s| eval_b(s, p).powf(-1.0 / m as f64)).collect();
        if b >= BETA_FLOOR {
            used += 1;
            for (d, pair) in diffs.iter_mut().zip(values.windows(2)) {
                *d = d.max((pair[0] - pair[1]).abs());
            }
        }
        let mut rec = vec![k.to_string(), format!("{b:e}")];
        rec.extend(values.iter().map(|v| format!("{v:e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(Stabilization {
        m,
        epsilons,
        probes_used: used,
        decreasing: diffs.windows(2).all(|d| d[1] < d[0]),
        max_successive_differences: diffs,
    })
}

pub fn cmd_report(dir: &Path) -> Result<(), CliError> {
    let manifest = Manifest::load(dir)?;
    let config: RunConfig = serde_json::from_str(&read(&dir.join(CONFIG_COPY))?)
        .map_err(|e| CliError::Io(format!("{CONFIG_COPY}: {e}")))?;
    if config.hash() != manifest.config_hash {
        return Err(CliError::Config("config.json does not match the manifest's config hash".into()));
    }
    if manifest.chains.is_empty() {
        return Err(CliError::Config("manifest lists no chains".into()));
    }
    let x = Hypersurface::from_spec(&config.variety)?;
    if x.hash() != manifest.variety_hash {
        return Err(CliError::Config("variety in config.json does not match the manifest".into()));
    }
    let probes = sample_fs(&x, config.probes, config.seed.wrapping_add(PROBE_SEED_OFFSET))?.points;
    let out = dir.join(REPORT_DIR);
    std::fs::create_dir_all(&out)?;
    let mut chains = Vec::new();
    for (j, entry) in manifest.chains.iter().enumerate() {
        let (states, report) = load_chain(dir, &manifest, j)?;
        if states.is_empty() {
            return Err(CliError::Io(format!("{}: no state files", entry.dir)));
        }
        let series = convergence_series(&x, &states, report.as_ref(), &probes, x.dim() == 1)?;
        write_json(&out.join(format!("series_eps{j}.json")), &series)?;
        write_series_csv(&out.join(format!("series_eps{j}.csv")), &series)?;
        match series.fit {
            Some(f) => println!("ε = {}: {} rows, C = {:.4}, R² = {:.4}", entry.epsilon, series.rows.len(), f.c, f.r2),
            None => println!("ε = {}: {} rows", entry.epsilon, series.rows.len()),
        }
        chains.push(states);
    }
    if chains.len() > 1 {
        let st = epsilon_table(&out, &manifest, &chains, &probes)?;
        println!(
            "ε table at m = {}: {} probes with β ≥ {BETA_FLOOR}, max successive differences {:?}, decreasing: {}",
            st.m, st.probes_used, st.max_successive_differences, st.decreasing
        );
        write_json(&out.join("stabilization.json"), &st)?;
    }
    Ok(())
}
