//! Run configuration, accepted as TOML or JSON.

use std::path::{Path, PathBuf};

use kemetric::iteration::{init_state, InitSpec, MAX_POWER};
use kemetric::persist::sha256_hex;
use kemetric::sampling::SampleMethod;
use kemetric::variety::VarietySpec;
use kemetric::weights::{WeightConfig, WeightKind, WeightSpec};
use kemetric::Hypersurface;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_OUT_DIR: &str = "kemetric-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// One sample set for every step; enables the exact finite-sum checks.
    #[default]
    Shared,
    /// A fresh random-line set per step.
    Fresh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(default = "default_method")]
    pub method: SampleMethod,
    #[serde(default)]
    pub policy: Policy,
    #[serde(default = "default_points")]
    pub n_points: usize,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { method: default_method(), policy: Policy::Shared, n_points: default_points(), resolution: default_resolution() }
    }
}

fn default_method() -> SampleMethod {
    SampleMethod::RandomLine
}

fn default_points() -> usize {
    20_000
}

fn default_resolution() -> usize {
    64
}

fn default_m0() -> u32 {
    1
}

fn default_probes() -> usize {
    200
}

fn default_cadence() -> u32 {
    1
}

fn default_weight() -> WeightConfig {
    WeightConfig::ConstantOne { epsilon: 1.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub variety: VarietySpec,
    #[serde(default = "default_m0")]
    pub m0: u32,
    pub m_max: u32,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default = "default_weight")]
    pub weight: WeightConfig,
    /// Overrides the weight exponent; one chain per entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub seed: u64,
    /// Number of probe points for diagnostics and reports.
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Write every k-th state; the last state is always written.
    #[serde(default = "default_cadence")]
    pub checkpoint_every: u32,
}

/// A validated configuration with its resolved objects.
pub struct Resolved {
    pub config: RunConfig,
    pub variety: Hypersurface,
    pub weight: WeightSpec,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        if is_toml {
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))
        } else {
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        }
    }

    /// Hash of the canonical JSON form; the output directory is excluded
    /// because it does not affect results.
    pub fn hash(&self) -> String {
        sha256_hex(self.canonical_json().as_bytes())
    }

    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        serde_json::to_string_pretty(&c).expect("serializable")
    }

    pub fn epsilon_list(&self) -> Vec<f64> {
        match (&self.epsilons, &self.weight) {
            (Some(list), _) => list.clone(),
            (None, WeightConfig::ConstantOne { epsilon } | WeightConfig::PolynomialZero { epsilon, .. }) => vec![*epsilon],
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    pub fn resolve(self) -> Result<Resolved, CliError> {
        let field = |name: &str, e: kemetric::Error| CliError::Config(format!("config field `{name}`: {e}"));
        let variety = Hypersurface::from_spec(&self.variety).map_err(|e| field("variety", e))?;
        if self.m0 == 0 {
            return Err(CliError::Config("config field `m0`: must be at least 1".into()));
        }
        if self.m_max <= self.m0 || self.m_max > MAX_POWER {
            return Err(CliError::Config(format!(
                "config field `m_max`: must satisfy m0 < m_max ≤ {MAX_POWER}, got m0 = {}, m_max = {}",
                self.m0, self.m_max
            )));
        }
        init_state(&variety, self.m0, &self.init).map_err(|e| field("init", e))?;
        let weight = WeightSpec::from_config(&self.weight).map_err(|e| field("weight", e))?;
        if let WeightKind::PolynomialZero { q, .. } = &weight.kind {
            if q.nvars() > variety.nvars() {
                return Err(CliError::Config(format!(
                    "config field `weight.Q`: uses {} variables, the variety has {}",
                    q.nvars(),
                    variety.nvars()
                )));
            }
        }
        if let Some(list) = &self.epsilons {
            if list.is_empty() {
                return Err(CliError::Config("config field `epsilons`: list is empty".into()));
            }
            if list.windows(2).any(|w| w[1] >= w[0]) {
                return Err(CliError::Config("config field `epsilons`: values must be strictly decreasing".into()));
            }
            for e in list {
                weight.with_epsilon(*e).map_err(|err| field("epsilons", err))?;
            }
        }
        let s = &self.sampling;
        match s.method {
            SampleMethod::RandomLine if s.n_points == 0 => {
                return Err(CliError::Config("config field `sampling.n_points`: must be positive".into()));
            }
            SampleMethod::ChartQuadrature if s.policy == Policy::Fresh => {
                return Err(CliError::Config("config field `sampling.policy`: chart quadrature is deterministic; use `shared`".into()));
            }
            SampleMethod::ChartQuadrature if variety.dim() != 1 => {
                return Err(CliError::Config("config field `sampling.method`: chart quadrature needs a plane curve".into()));
            }
            _ => {}
        }
        if self.probes == 0 {
            return Err(CliError::Config("config field `probes`: must be positive".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(CliError::Config("config field `checkpoint_every`: must be positive".into()));
        }
        Ok(Resolved { config: self, variety, weight })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOML: &str = r#"
        m_max = 4
        seed = 3
        epsilons = [1.0, 0.5]

        [variety]
        polynomial = "x^4+y^4+z^4"

        [weight]
        kind = "polynomial_zero"
        Q = { polynomial = "x" }
        epsilon = 1.0

        [sampling]
        n_points = 1000
    "#;

    fn parse(text: &str) -> Result<RunConfig, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    #[test]
    fn toml_and_json_agree() {
        let a = parse(TOML).unwrap();
        let b: RunConfig = serde_json::from_str(&a.canonical_json()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.epsilon_list(), vec![1.0, 0.5]);
        assert!(a.resolve().is_ok());
    }

    #[test]
    fn out_dir_does_not_change_the_hash() {
        let a = parse(TOML).unwrap();
        let mut b = a.clone();
        b.out_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 4;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn missing_variety_names_the_field() {
        let err = parse("m_max = 3").unwrap_err().to_string();
        assert!(err.contains("variety"), "{err}");
    }

    #[test]
    fn validation_names_fields() {
        let base = parse(TOML).unwrap();
        let cases: Vec<(&str, Box<dyn Fn(&mut RunConfig)>)> = vec![
            ("epsilons", Box::new(|c| c.epsilons = Some(vec![0.5, 0.5]))),
            ("epsilons", Box::new(|c| c.epsilons = Some(vec![2.0, 0.5]))),
            ("m_max", Box::new(|c| c.m_max = 1)),
            ("variety", Box::new(|c| c.variety = VarietySpec::Text { polynomial: "x^2+y".into(), variables: None })),
            ("checkpoint_every", Box::new(|c| c.checkpoint_every = 0)),
            ("weight.Q", Box::new(|c| {
                c.weight = WeightConfig::PolynomialZero {
                    q: VarietySpec::Text { polynomial: "w".into(), variables: Some(4) },
                    epsilon: 1.0,
                    norm_constant: None,
                }
            })),
            ("sampling.policy", Box::new(|c| {
                c.sampling.method = SampleMethod::ChartQuadrature;
                c.sampling.policy = Policy::Fresh;
            })),
        ];
        for (name, edit) in cases {
            let mut c = base.clone();
            edit(&mut c);
            let err = c.resolve().err().expect("invalid config accepted").to_string();
            assert!(err.contains(name), "{name}: {err}");
        }
    }
}
