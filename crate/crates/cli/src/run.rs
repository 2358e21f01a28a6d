//! `iterate` and `sample`: chains, sample sets and the run manifest.

use std::path::Path;

use kemetric::iteration::{run_chain_observed, MetricState, SamplingPolicy, STATE_VERSION};
use kemetric::persist::atomic_write;
use kemetric::sampling::{curve_chart_quadrature, sample_fs, SampleMethod, SAMPLE_SET_VERSION};
use kemetric::weights::{normalize_weight_sup, WeightConfig, WeightSpec};
use kemetric::{Hypersurface, SampleSet, StepOptions};
use serde::{Deserialize, Serialize};

use crate::config::{Policy, Resolved};
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_COPY: &str = "config.json";
pub const SAMPLES: &str = "samples.json";
pub const CHAIN_REPORT: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainEntry {
    pub epsilon: f64,
    /// Weight with its normalization constant resolved.
    pub weight: WeightConfig,
    pub weight_hash: String,
    pub dir: String,
    pub states: Vec<String>,
    pub report: String,
    pub status: ChainStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub state_version: u32,
    pub sample_set_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub variety_hash: String,
    /// Hash of the shared sample set; absent under the fresh policy.
    pub sample_hash: Option<String>,
    pub chains: Vec<ChainEntry>,
}

impl Manifest {
    fn new(command: &str, r: &Resolved, sample_hash: Option<String>) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            state_version: STATE_VERSION,
            sample_set_version: SAMPLE_SET_VERSION,
            config_hash: r.config.hash(),
            seed: r.config.seed,
            variety_hash: r.variety.hash(),
            sample_hash,
            chains: Vec::new(),
        }
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    fn write(&self, dir: &Path) -> Result<(), CliError> {
        write_json(&dir.join(MANIFEST), self)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    Ok(atomic_write(path, text.as_bytes())?)
}

/// The sample set for a shared-policy run.
pub fn build_samples(r: &Resolved) -> Result<SampleSet, CliError> {
    let s = &r.config.sampling;
    Ok(match s.method {
        SampleMethod::RandomLine => sample_fs(&r.variety, s.n_points, r.config.seed)?,
        SampleMethod::ChartQuadrature => curve_chart_quadrature(&r.variety, s.resolution)?,
    })
}

fn normalized_weight(r: &Resolved, reference: &SampleSet) -> Result<WeightSpec, CliError> {
    match &r.config.weight {
        WeightConfig::PolynomialZero { norm_constant: None, .. } => Ok(normalize_weight_sup(&r.weight, reference)?),
        _ => Ok(r.weight.clone()),
    }
}

fn write_common(dir: &Path, r: &Resolved) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let mut text = r.config.canonical_json();
    text.push('\n');
    Ok(atomic_write(&dir.join(CONFIG_COPY), text.as_bytes())?)
}

pub fn cmd_sample(r: &Resolved, dir: &Path) -> Result<(), CliError> {
    write_common(dir, r)?;
    let s = build_samples(r)?;
    write_json(&dir.join(SAMPLES), &s)?;
    Manifest::new("sample", r, Some(s.hash())).write(dir)?;
    println!("{} points, total weight {:.12}, hash {}", s.len(), s.total_weight(), s.hash());
    Ok(())
}

fn state_file(m: u32) -> String {
    format!("state_m{m:03}.json")
}

fn write_state(dir: &Path, st: &MetricState) -> Result<String, kemetric::Error> {
    let name = state_file(st.power());
    let mut text = st.to_json();
    text.push('\n');
    atomic_write(&dir.join(&name), text.as_bytes())?;
    Ok(name)
}

/// Runs one chain per ε. Artifacts of failed chains are kept and the
/// failure is recorded in the manifest before the error is returned.
pub fn cmd_iterate(r: &Resolved, dir: &Path, opts: StepOptions) -> Result<(), CliError> {
    write_common(dir, r)?;
    let cfg = &r.config;
    let x: &Hypersurface = &r.variety;
    let shared = match cfg.sampling.policy {
        Policy::Shared => {
            let s = build_samples(r)?;
            write_json(&dir.join(SAMPLES), &s)?;
            Some(s)
        }
        Policy::Fresh => None,
    };
    let reference = match &shared {
        Some(s) => s.clone(),
        None => sample_fs(x, cfg.sampling.n_points, cfg.seed)?,
    };
    let base = normalized_weight(r, &reference)?;
    let mut manifest = Manifest::new("iterate", r, shared.as_ref().map(|s| s.hash()));
    let mut first_error = None;
    for (j, eps) in cfg.epsilon_list().into_iter().enumerate() {
        let w = base.with_epsilon(eps)?;
        let sub = format!("eps{j}");
        let chain_dir = dir.join(&sub);
        std::fs::create_dir_all(&chain_dir)?;
        let policy = match &shared {
            Some(s) => SamplingPolicy::Shared(s),
            None => SamplingPolicy::Fresh { n_points: cfg.sampling.n_points, seed: cfg.seed },
        };
        let mut written = Vec::new();
        let every = cfg.checkpoint_every;
        let out = run_chain_observed(x, cfg.m0, cfg.m_max, &cfg.init, &w, policy, opts, |st, _| {
            let k = st.power() - cfg.m0;
            if k % every == 0 || st.power() == cfg.m_max {
                written.push(write_state(&chain_dir, st)?);
            }
            Ok(())
        })?;
        if let Some(last) = out.states.last() {
            let name = state_file(last.power());
            if !written.contains(&name) {
                written.push(write_state(&chain_dir, last)?);
            }
        }
        write_json(&chain_dir.join(CHAIN_REPORT), &out.report)?;
        let last_m = out.states.last().map(|s| s.power()).unwrap_or(cfg.m0);
        println!("ε = {eps}: {} steps to m = {last_m}", out.report.steps.len());
        let error = out.error.map(CliError::from);
        manifest.chains.push(ChainEntry {
            epsilon: eps,
            weight: w.to_config(),
            weight_hash: w.hash(),
            dir: sub,
            states: written,
            report: CHAIN_REPORT.into(),
            status: if error.is_some() { ChainStatus::Failed } else { ChainStatus::Complete },
            error: error.as_ref().map(|e| e.to_string()),
        });
        manifest.write(dir)?;
        if let Some(e) = error {
            eprintln!("chain ε = {eps} failed at m = {}: {e}", last_m + 1);
            first_error.get_or_insert(e);
        }
    }
    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
