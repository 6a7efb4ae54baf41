//! One TOML document drives a whole experiment.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::data::{DataConfig, Split};
use crate::error::{Error, Result};
use crate::params::ModelConfig;
use crate::tasks::TaskConfig;
use crate::train::TrainConfig;
use crate::world::WorldConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Success radius in meters.
    pub threshold: f64,
    pub splits: Vec<Split>,
    /// Cap on evaluated episodes per kind and split.
    pub max_episodes: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            threshold: crate::metrics::DEFAULT_THRESHOLD,
            splits: vec![Split::ValSeen, Split::ValUnseen],
            max_episodes: None,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold >= 0.0) {
            return Err(Error::Config("eval.threshold must be non-negative".into()));
        }
        if self.splits.is_empty() {
            return Err(Error::Config("eval.splits must not be empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub world: WorldConfig,
    pub tasks: TaskConfig,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub agent: AgentConfig,
    pub eval: EvalConfig,
}

/// Independent seeds derived from the run seed, one per consumer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubSeeds {
    pub world: u64,
    pub data: u64,
    pub model: u64,
    pub train: u64,
    pub eval: u64,
}

/// Keys that are valid but absent from the serialized defaults.
const OPTIONAL_KEYS: [&str; 2] = ["train.weights", "eval.max_episodes"];

fn key_paths(v: &toml::Value, prefix: &str, out: &mut BTreeSet<String>) {
    if let toml::Value::Table(t) = v {
        for (k, sub) in t {
            let path = if prefix.is_empty() {
                k.clone()
            } else {
                format!("{prefix}.{k}")
            };
            out.insert(path.clone());
            if !OPTIONAL_KEYS.contains(&path.as_str()) {
                key_paths(sub, &path, out);
            }
        }
    }
}

impl RunConfig {
    /// Parses a TOML document, reporting every unknown key at once.
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let doc: toml::Value = text
            .parse::<toml::Table>()
            .map(toml::Value::Table)
            .map_err(|e| Error::Config(e.to_string()))?;
        let defaults = toml::Value::try_from(RunConfig::default()).expect("defaults serialize");
        let mut known = BTreeSet::new();
        key_paths(&defaults, "", &mut known);
        known.extend(OPTIONAL_KEYS.iter().map(|k| k.to_string()));
        let mut given = BTreeSet::new();
        key_paths(&doc, "", &mut given);
        let unknown: Vec<_> = given.difference(&known).cloned().collect();
        if !unknown.is_empty() {
            return Err(Error::Config(format!(
                "unknown keys: {}",
                unknown.join(", ")
            )));
        }
        let mut cfg: RunConfig = doc
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.train.seed = cfg.seeds().train;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Default experiment with the train seed filled in.
    pub fn standard() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.train.seed = cfg.seeds().train;
        cfg
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn seeds(&self) -> SubSeeds {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        SubSeeds {
            world: rng.next_u64(),
            data: rng.next_u64(),
            model: rng.next_u64(),
            train: rng.next_u64(),
            eval: rng.next_u64(),
        }
    }

    /// Validates every section and lists all failures together.
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("world", self.world.validate()),
            ("tasks", self.tasks.validate()),
            ("data", self.data.validate()),
            ("model", self.model.validate()),
            ("train", self.train.validate()),
            ("agent", self.agent.validate()),
            ("eval", self.eval.validate()),
        ];
        let mut problems: Vec<String> = checks
            .into_iter()
            .filter_map(|(name, r)| r.err().map(|e| format!("[{name}] {e}")))
            .collect();
        if self.model.d_feat != self.world.d_feat {
            problems.push(format!(
                "[model] d_feat {} differs from world.d_feat {}",
                self.model.d_feat, self.world.d_feat
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::standard());
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_all_listed() {
        let e =
            RunConfig::from_toml("colour = 1\n[train]\nlr = 0.1\nsteps = 3\n[model]\nwidth = 2\n")
                .unwrap_err();
        let m = e.to_string();
        for k in ["colour", "train.steps", "model.width"] {
            assert!(m.contains(k), "{m}");
        }
        assert_eq!(e.exit_code(), 2);
        // the train seed comes from the run seed only
        assert!(RunConfig::from_toml("[train]\nseed = 3\n").is_err());
    }

    #[test]
    fn invalid_values_are_all_listed() {
        let m = RunConfig::from_toml("[train]\nlr = -1.0\n[eval]\nthreshold = -2.0\n")
            .unwrap_err()
            .to_string();
        assert!(m.contains("[train]") && m.contains("[eval]"), "{m}");
    }

    #[test]
    fn optional_sections_parse() {
        let cfg = RunConfig::from_toml(
            "seed = 9\n[train.weights]\nQA = 1.0\nVLN = 0.0\n[eval]\nmax_episodes = 5\n",
        )
        .unwrap();
        assert_eq!(cfg.eval.max_episodes, Some(5));
        assert_eq!(cfg.train.seed, cfg.seeds().train);
        let s = cfg.seeds();
        let all = [s.world, s.data, s.model, s.train, s.eval];
        assert_eq!(all.iter().collect::<BTreeSet<_>>().len(), 5);
    }
}
