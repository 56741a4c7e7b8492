//! Experiment configuration: one JSON document.

use std::fs;
use std::path::{Path, PathBuf};

use droptune_core::measure::{MeasureConfig, SyntheticSpec};
use droptune_core::scheduler::{Budgets, TuneTask};
use droptune_core::search::{Strategy, StrategyParams};
use droptune_core::space::SearchSpace;
use droptune_core::Target;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendConfig {
    Native,
    Synthetic(SyntheticSpec),
}

/// A parsed config. `output_dir` is relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Layers of the model, each a workload.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tasks: Vec<TuneTask>,
    /// A bare search space timed by a synthetic landscape, instead of tasks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<SearchSpace>,
    pub backend: BackendConfig,
    /// Defaults to the host for native runs and 8 cores otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Target>,
    pub strategy: Strategy,
    pub budgets: Budgets,
    #[serde(default)]
    pub measure: MeasureConfig,
    #[serde(default)]
    pub rng_seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub params: StrategyParams,
}

/// A config error naming the offending field.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<(Self, PathBuf), ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        let cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let out = base.join(&cfg.output_dir);
        Ok((cfg, out))
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            if path == "." {
                bad(e.inner().to_string())
            } else {
                bad(format!("{path}: {}", e.inner()))
            }
        })?;
        cfg.validate_common()?;
        Ok(cfg)
    }

    fn validate_common(&self) -> Result<(), ConfigError> {
        match (&self.space, self.tasks.is_empty()) {
            (Some(_), false) => return Err(bad("tasks: give either tasks or space, not both")),
            (None, true) => return Err(bad("tasks: at least one task (or a space) is required")),
            _ => {}
        }
        if self.space.is_some() && !matches!(self.backend, BackendConfig::Synthetic(_)) {
            return Err(bad("backend: a bare space needs the synthetic backend"));
        }
        for (i, t) in self.tasks.iter().enumerate() {
            t.workload
                .validate()
                .map_err(|e| bad(format!("tasks[{i}].workload: {e}")))?;
            if !(t.weight >= 1.0 && t.weight.is_finite()) {
                return Err(bad(format!(
                    "tasks[{i}].weight: must be at least 1, got {}",
                    t.weight
                )));
            }
            if self.tasks[..i].iter().any(|o| o.layer_id == t.layer_id) {
                return Err(bad(format!(
                    "tasks[{i}].layer_id: duplicate `{}`",
                    t.layer_id
                )));
            }
        }
        if let BackendConfig::Synthetic(s) = &self.backend {
            if !(0.0..1.0).contains(&s.invalid_fraction) {
                return Err(bad("backend.synthetic.invalid_fraction: must be in [0, 1)"));
            }
            if !(s.noise_rel >= 0.0 && s.noise_rel.is_finite()) {
                return Err(bad("backend.synthetic.noise_rel: must be non-negative"));
            }
            if !(s.ns_per_flop > 0.0 && s.ns_per_flop.is_finite()) {
                return Err(bad("backend.synthetic.ns_per_flop: must be positive"));
            }
        }
        if let Some(t) = self.target {
            if t.cores == 0 || t.max_workers == 0 {
                return Err(bad("target: cores and max_workers must be positive"));
            }
        }
        self.measure
            .validate()
            .map_err(|e| bad(format!("measure: {e}")))?;
        Ok(())
    }

    /// Checks that `strategy` can run under this config.
    pub fn validate_for(&self, strategy: Strategy) -> Result<(), ConfigError> {
        self.budgets
            .validate(strategy)
            .map_err(|e| bad(e.to_string()))?;
        if self.params.ga.population == 0 {
            return Err(bad("params.ga.population: must be at least 1"));
        }
        Ok(())
    }

    pub fn target(&self) -> Target {
        self.target.unwrap_or(match self.backend {
            BackendConfig::Native => Target::host(),
            BackendConfig::Synthetic(_) => Target::default(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "tasks": [{"layer_id": "mm", "workload": {"name": "mm", "body": {"matmul": {"m": 8, "n": 8, "k": 8}}}}],
        "backend": {"synthetic": {"family": "rugged", "seed": 1}},
        "strategy": "combined",
        "budgets": {"k": 50, "n": 20},
        "output_dir": "out"
    }"#;

    fn with(key: &str, value: serde_json::Value) -> String {
        let mut v: serde_json::Value = serde_json::from_str(BASE).unwrap();
        v[key] = value;
        v.to_string()
    }

    #[test]
    fn parses_and_fills_defaults() {
        let c = ExperimentConfig::parse(BASE).unwrap();
        assert_eq!(c.measure, MeasureConfig::default());
        assert_eq!(c.budgets.droplet_budget, 100);
        assert_eq!(c.target(), Target::fixed(8));
        c.validate_for(c.strategy).unwrap();
    }

    #[test]
    fn errors_name_the_field() {
        let e = ExperimentConfig::parse(&with("budgets", serde_json::json!({"k": "many"})))
            .unwrap_err();
        assert!(e.0.starts_with("budgets.k"), "{e}");
        let e =
            ExperimentConfig::parse(&with("strategy", serde_json::json!("annealing"))).unwrap_err();
        assert!(e.0.starts_with("strategy"), "{e}");
        let e = ExperimentConfig::parse(&with("measure", serde_json::json!({"repeats": 2})))
            .unwrap_err();
        assert!(e.0.starts_with("measure"), "{e}");
        let e = ExperimentConfig::parse(&with("bogus", serde_json::json!(1))).unwrap_err();
        assert!(e.0.contains("bogus"), "{e}");
    }

    #[test]
    fn combined_needs_n_below_k() {
        let c = ExperimentConfig::parse(&with("budgets", serde_json::json!({"k": 20, "n": 20})))
            .unwrap();
        let e = c.validate_for(Strategy::Combined).unwrap_err();
        assert!(e.0.contains("budgets.n"), "{e}");
        c.validate_for(Strategy::Random).unwrap();
    }

    #[test]
    fn space_and_tasks_are_exclusive() {
        let space =
            serde_json::json!({"params": [{"name": "x", "kind": "other", "values": [1, 2]}]});
        assert!(ExperimentConfig::parse(&with("space", space)).is_err());
    }
}
