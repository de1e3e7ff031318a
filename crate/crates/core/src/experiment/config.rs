use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::augment::{FeatureSet, PrepareOpts};
use crate::nn::{Architecture, ModelConfig};

/// Where the sensor table comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    /// Simulate the default network under synthetic weather.
    Generate { weather_seed: u64 },
    /// Read a table previously written by `generate`.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Ideal,
    /// Gaussian noise of std `sigma` (kg/s) on every mass-flow sensor.
    Noisy,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Ideal => "ideal",
            Scenario::Noisy => "noisy",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ideal" => Ok(Scenario::Ideal),
            "noisy" => Ok(Scenario::Noisy),
            other => Err(ExperimentError::Config(format!("unknown scenario {other:?}"))),
        }
    }
}

/// One sweep: every architecture × variant × seed on one scenario.
///
/// `model.architecture` and `model.seed` are replaced per cell; every other
/// model field applies to all cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DataSource,
    /// Leading hourly rows of the table that are used.
    pub rows: usize,
    pub scenario: Scenario,
    /// Noise std in kg/s, used by the noisy scenario only.
    pub sigma: f64,
    pub noise_seed: u64,
    pub architectures: Vec<Architecture>,
    pub variants: Vec<FeatureSet>,
    pub seeds: Vec<u64>,
    /// Train, validation and test shares of the windows.
    pub fractions: [f64; 3],
    pub stride: usize,
    pub model: ModelConfig,
    /// Target columns whose test series go to the plot data.
    pub plot_sensors: Vec<String>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DataSource::Generate { weather_seed: 7 },
            rows: 2000,
            scenario: Scenario::Ideal,
            sigma: 0.1,
            noise_seed: 101,
            architectures: Architecture::ALL.to_vec(),
            variants: vec![FeatureSet::DataDriven, FeatureSet::PhysicsEnhanced],
            seeds: vec![0, 1, 2],
            fractions: [0.8, 0.1, 0.1],
            stride: 1,
            model: desk_model(),
            plot_sensors: vec!["p_FD".into(), "t_R".into()],
            out_dir: PathBuf::from("runs/desk"),
        }
    }
}

/// Training budget that fits a full desk-scale sweep on one core. Smaller
/// batches buy more optimizer steps per epoch at about the same cost.
pub fn desk_model() -> ModelConfig {
    ModelConfig {
        learning_rate: 1e-3,
        batch_size: 16,
        max_epochs: 16,
        patience: 5,
        ..ModelConfig::default()
    }
}

impl ExperimentConfig {
    /// Parse a config file. Keys missing from a `[model]` section keep the
    /// desk budget rather than the bare model defaults.
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let err = |e: &dyn fmt::Display| ExperimentError::Config(e.to_string());
        let mut table: toml::Table = toml::from_str(text).map_err(|e| err(&e))?;
        if let Some(toml::Value::Table(model)) = table.get_mut("model") {
            let toml::Value::Table(mut base) = toml::Value::try_from(desk_model()).map_err(|e| err(&e))? else {
                unreachable!("model config serializes to a table")
            };
            base.extend(std::mem::take(model));
            *model = base;
        }
        let cfg: Self = table.try_into().map_err(|e| err(&e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.architectures.is_empty() || self.variants.is_empty() {
            return bad("architectures and variants must not be empty".into());
        }
        let sum: f64 = self.fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return bad(format!("split fractions {:?} must lie in [0, 1] and sum to 1", self.fractions));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return bad(format!("sigma {} must be finite and non-negative", self.sigma));
        }
        if self.stride == 0 {
            return bad("stride must be at least 1".into());
        }
        if self.rows < self.model.window {
            return bad(format!("{} rows cannot fill a window of {}", self.rows, self.model.window));
        }
        for (name, list) in [
            ("architecture", dupes(&self.architectures)),
            ("variant", dupes(&self.variants)),
            ("seed", dupes(&self.seeds)),
        ] {
            if list {
                return bad(format!("duplicate {name} in the sweep"));
            }
        }
        self.model.validate().map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn prepare_opts(&self) -> PrepareOpts {
        PrepareOpts {
            window: self.model.window,
            stride: self.stride,
            fractions: self.fractions,
            ..PrepareOpts::default()
        }
    }

    /// Model settings of one cell.
    pub fn cell_model(&self, arch: Architecture, seed: u64) -> ModelConfig {
        ModelConfig {
            architecture: arch,
            seed,
            ..self.model.clone()
        }
    }
}

fn dupes<T: PartialEq>(v: &[T]) -> bool {
    v.iter().enumerate().any(|(i, a)| v[..i].contains(a))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "scenario = \"noisy\"\nseeds = [4]\n[dataset]\nkind = \"file\"\npath = \"a.csv\"\n[model]\nmax_epochs = 3\n",
        )
        .unwrap();
        assert_eq!(cfg.scenario, Scenario::Noisy);
        assert_eq!(cfg.seeds, vec![4]);
        assert_eq!(cfg.dataset, DataSource::File { path: "a.csv".into() });
        assert_eq!(cfg.model.max_epochs, 3);
        assert_eq!(cfg.model.graph_hidden, 16);
        assert_eq!(cfg.model.learning_rate, desk_model().learning_rate);
        assert_eq!(cfg.model.batch_size, desk_model().batch_size);
        assert_eq!(cfg.rows, 2000);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cases = [
            "seeds = []",
            "fractions = [0.8, 0.1, 0.2]",
            "sigma = -1.0",
            "architectures = [\"gatv2\", \"gatv2\"]",
            "rows = 3",
            "unknown_key = 1",
            "architectures = [\"resnet\"]",
            "[model]\nlearning_rat = 0.1",
        ];
        for text in cases {
            assert!(ExperimentConfig::from_toml_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn cell_model_overrides_architecture_and_seed() {
        let cfg = ExperimentConfig::default();
        let m = cfg.cell_model(Architecture::Fgo, 9);
        assert_eq!((m.architecture, m.seed), (Architecture::Fgo, 9));
        assert_eq!(m.learning_rate, cfg.model.learning_rate);
        assert_eq!("Noisy".parse::<Scenario>().unwrap(), Scenario::Noisy);
    }
}
