use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::growth::GrowthConfig;
use crate::refined::RefinedSpec;

use super::scenario::SCENARIOS;

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "RENFORGE_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub scenario: String,
    pub max_ticks: u64,
    pub output_dir: PathBuf,
    pub growth: GrowthConfig,
    pub refined_specs: Vec<RefinedSpec>,
    pub schedule: ScheduleConfig,
    pub sweep: SweepConfig,
    /// Corpus for the tree scenarios; a built-in corpus is used when absent.
    pub corpus: Option<PathBuf>,
    pub fuzzy: bool,
    pub decay: f64,
}

/// A direct unit: `inputs` sources into one main neuron.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub inputs: u32,
    pub threshold: f64,
    /// Per-tick firing probability of each source; 1 drives all of them every tick.
    pub firing_probability: f64,
}

/// Grid cycled through by sweep samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub inputs: Vec<u32>,
    pub thresholds: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            scenario: "fig2_growth".into(),
            max_ticks: 200,
            output_dir: PathBuf::from("out"),
            growth: GrowthConfig {
                window: 16,
                ..GrowthConfig::default()
            },
            refined_specs: vec![
                RefinedSpec::new(25, 5, 4, 4),
                RefinedSpec::new(125, 5, 4, 4).with_layers(2),
            ],
            schedule: ScheduleConfig::default(),
            sweep: SweepConfig::default(),
            corpus: None,
            fuzzy: false,
            decay: 0.0,
        }
    }
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            inputs: 25,
            threshold: 5.0,
            firing_probability: 1.0,
        }
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            inputs: vec![10, 25, 50],
            thresholds: vec![5.0],
        }
    }
}

impl ExperimentConfig {
    pub fn for_scenario(name: &str) -> Self {
        Self {
            scenario: name.to_owned(),
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Applies `RENFORGE_SEED` if it is set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            self.seed = raw.trim().parse().map_err(|_| {
                Error::Config(format!("{SEED_ENV}={raw:?} is not a 64-bit integer"))
            })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !SCENARIOS.contains(&self.scenario.as_str()) {
            return Err(Error::Config(format!(
                "unknown scenario {:?}; expected one of {}",
                self.scenario,
                SCENARIOS.join(", ")
            )));
        }
        if self.max_ticks == 0 {
            return Err(Error::Config("max_ticks must be at least 1".into()));
        }
        self.growth
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        for spec in &self.refined_specs {
            spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        let s = &self.schedule;
        if s.inputs == 0 || !(s.threshold > 0.0) || !(0.0..=1.0).contains(&s.firing_probability) {
            return Err(Error::Config(format!("invalid schedule {s:?}")));
        }
        if self.sweep.inputs.is_empty()
            || self.sweep.thresholds.is_empty()
            || self.sweep.inputs.contains(&0)
            || self.sweep.thresholds.iter().any(|t| !(*t > 0.0))
        {
            return Err(Error::Config(format!(
                "invalid sweep grid {:?}",
                self.sweep
            )));
        }
        if !(self.decay >= 0.0) {
            return Err(Error::Config("decay must be non-negative".into()));
        }
        Ok(())
    }
}
