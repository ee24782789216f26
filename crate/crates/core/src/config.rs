//! TOML run configuration shared by every pipeline command.
//!
//! Relative paths are resolved against the directory holding the config file.
//!
//! ```toml
//! seed = 42
//! out = "out"
//! schema = "ozonation.schema.toml"   # omitted: built-in ozonation schema
//!
//! [data]
//! path = "data.csv"                  # omitted: <out>/data.csv
//! count = 500
//!
//! [train]
//! grid_search = false
//!
//! [ahp]
//! matrix = "ozonation_matrix.csv"
//!
//! [agent]
//! episodes = 5
//!
//! [[scenario]]
//! name = "1"
//! targets = [0.81, 15.76, -20.84, -70.79]
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::agents::AgentConfig;
use crate::ahp::DEFAULT_CR_THRESHOLD;
use crate::data::ProcessSchema;
use crate::error::{Error, Result};
use crate::forest::ForestHyperParams;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_out")]
    out: PathBuf,
    schema: Option<PathBuf>,
    #[serde(default)]
    data: DataSection,
    #[serde(default)]
    train: TrainSection,
    #[serde(default)]
    ahp: AhpSection,
    #[serde(default)]
    agent: AgentConfig,
    #[serde(default, rename = "scenario")]
    scenarios: Vec<Scenario>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    #[serde(default = "default_count")]
    pub count: usize,
    /// Per-criterion noise sigma; omitted: 2% of each criterion's range.
    pub noise: Option<Vec<f64>>,
}

fn default_count() -> usize {
    500
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            path: None,
            count: default_count(),
            noise: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub grid_search: bool,
    /// Grid file; omitted: the full 3960-entry tuning grid.
    pub grid: Option<PathBuf>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Used when grid search is off.
    #[serde(default)]
    pub hyperparams: ForestHyperParams,
}

fn default_fraction() -> f64 {
    0.75
}

fn default_folds() -> usize {
    3
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            train_fraction: default_fraction(),
            grid_search: false,
            grid: None,
            folds: default_folds(),
            hyperparams: ForestHyperParams::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AhpSection {
    pub matrix: Option<PathBuf>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Weights file written by `ahp` and read by `optimize`/`compare`;
    /// omitted: <out>/weights.json.
    pub weights: Option<PathBuf>,
}

fn default_threshold() -> f64 {
    DEFAULT_CR_THRESHOLD
}

impl Default for AhpSection {
    fn default() -> Self {
        AhpSection {
            matrix: None,
            threshold: default_threshold(),
            weights: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub targets: Vec<f64>,
}

/// A resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub schema: ProcessSchema,
    pub schema_path: Option<PathBuf>,
    pub data: DataSection,
    pub train: TrainSection,
    pub ahp: AhpSection,
    pub agent: AgentConfig,
    pub scenarios: Vec<Scenario>,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let schema_path = raw.schema.map(resolve);
        let schema = match &schema_path {
            Some(p) => ProcessSchema::load(p)?,
            None => ProcessSchema::ozonation(),
        };
        let mut data = raw.data;
        data.path = data.path.map(resolve);
        let mut train = raw.train;
        train.grid = train.grid.map(resolve);
        let mut ahp = raw.ahp;
        ahp.matrix = ahp.matrix.map(resolve);
        ahp.weights = ahp.weights.map(resolve);

        raw.agent.validate()?;
        train.hyperparams.validate()?;
        for s in &raw.scenarios {
            if s.targets.len() != schema.n_criteria() {
                return Err(Error::Config(format!(
                    "scenario {:?} has {} targets, schema has {} criteria",
                    s.name,
                    s.targets.len(),
                    schema.n_criteria()
                )));
            }
        }
        Ok(RunConfig {
            seed: raw.seed,
            out: resolve(raw.out),
            schema,
            schema_path,
            data,
            train,
            ahp,
            agent: raw.agent,
            scenarios: raw.scenarios,
        })
    }

    pub fn data_path(&self) -> PathBuf {
        self.data
            .path
            .clone()
            .unwrap_or_else(|| self.out.join("data.csv"))
    }

    pub fn weights_path(&self) -> PathBuf {
        self.ahp
            .weights
            .clone()
            .unwrap_or_else(|| self.out.join("weights.json"))
    }

    pub fn models_dir(&self) -> PathBuf {
        self.out.join("models")
    }

    pub fn model_path(&self, criterion: &str) -> PathBuf {
        self.models_dir().join(format!("{criterion}.json"))
    }

    /// Keeps only the named scenario.
    pub fn select_scenario(&mut self, name: &str) -> Result<()> {
        self.scenarios.retain(|s| s.name == name);
        if self.scenarios.is_empty() {
            return Err(Error::Config(format!("no scenario named {name:?}")));
        }
        Ok(())
    }
}

/// Target vectors of the ozonation case study, one per expert scenario.
pub fn ozonation_scenarios() -> Vec<Scenario> {
    [
        [0.81, 15.76, -20.84, -70.79],
        [1.00, 11.63, -24.08, -54.1],
        [2.45, 8.2, -18.73, -38.17],
        [1.84, 9.72, -21.09, -42.78],
        [0.41, 21.6, -36.48, -59.95],
    ]
    .iter()
    .enumerate()
    .map(|(i, t)| Scenario {
        name: (i + 1).to_string(),
        targets: t.to_vec(),
    })
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_agent_table() {
        let c = RunConfig::parse("", Path::new("/tmp/x")).unwrap();
        assert_eq!(c.agent, AgentConfig::default());
        assert_eq!(c.schema, ProcessSchema::ozonation());
        assert_eq!(c.out, Path::new("/tmp/x/out"));
        assert_eq!(c.data_path(), Path::new("/tmp/x/out/data.csv"));
        assert_eq!(c.ahp.threshold, 0.08);
        assert_eq!(c.train.train_fraction, 0.75);
    }

    #[test]
    fn overrides_and_scenarios() {
        let text = r#"
seed = 9
out = "/abs/out"
[agent]
episodes = 2
[train.hyperparams]
n_estimators = 10
max_depth = 4
max_features = "sqrt"
[[scenario]]
name = "a"
targets = [1.0, 2.0, 3.0, 4.0]
"#;
        let mut c = RunConfig::parse(text, Path::new("/base")).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.out, Path::new("/abs/out"));
        assert_eq!(c.agent.episodes, 2);
        assert_eq!(c.agent.steps_per_episode, 5000);
        assert_eq!(c.train.hyperparams.n_estimators, 10);
        assert_eq!(c.train.hyperparams.max_depth, Some(4));
        assert!(c.select_scenario("b").is_err());
    }

    #[test]
    fn rejects_bad_scenario_arity_and_unknown_keys() {
        assert!(RunConfig::parse(
            "[[scenario]]\nname = \"x\"\ntargets = [1.0]\n",
            Path::new(".")
        )
        .is_err());
        assert!(RunConfig::parse("[agent]\nepisodez = 3\n", Path::new(".")).is_err());
    }

    #[test]
    fn five_case_study_scenarios() {
        let s = ozonation_scenarios();
        assert_eq!(s.len(), 5);
        assert_eq!(s[0].targets, vec![0.81, 15.76, -20.84, -70.79]);
        assert_eq!(s[4].targets, vec![0.41, 21.6, -36.48, -59.95]);
    }
}
