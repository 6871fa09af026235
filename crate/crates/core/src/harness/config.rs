//! Benchmark configuration: one JSON document, every field defaulted.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compat::ComparisonParams;
use crate::explorer::{Budget, PerceptionParams, Strategy, Variant};
use crate::kinematics::ArmConfig;
use crate::simbench::{CameraRig, Scene};

pub const ENV_OUT: &str = "ARMBENCH_OUT";
pub const ENV_SEED: &str = "ARMBENCH_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub views: usize,
    /// Inner corners per row and column.
    pub grid: (u32, u32),
    pub square_mm: f64,
    /// Corner localization noise, pixels.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            views: 5,
            grid: (9, 6),
            square_mm: 20.0,
            noise_sigma: 0.2,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyConfig {
    pub cone_half_angle_deg: f64,
    pub prefer_unvisited: bool,
    pub scroll_probability: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        let s = Strategy::new(Variant::Center, 0);
        StrategyConfig {
            cone_half_angle_deg: s.cone_half_angle.to_degrees(),
            prefer_unvisited: s.prefer_unvisited,
            scroll_probability: s.scroll_probability,
        }
    }
}

/// A device under test and its reference. Paths point at device profile
/// documents; `None` selects the built-in notched phone (for the device
/// under test) or the regular twin of the device under test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DevicePair {
    pub name: String,
    #[serde(default)]
    pub dut: Option<PathBuf>,
    #[serde(default)]
    pub reference: Option<PathBuf>,
    /// Use the regular twin as the device under test as well.
    #[serde(default)]
    pub regular_dut: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    /// App model documents; empty runs the shipped suite.
    pub apps: Vec<PathBuf>,
    /// Device profile for exploration runs; `None` is the regular phone.
    pub device: Option<PathBuf>,
    pub pairs: Vec<DevicePair>,
    pub strategies: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub budget: Budget,
    pub strategy: StrategyConfig,
    pub camera: CameraRig,
    pub scene: Scene,
    pub arm: ArmConfig,
    pub calibration: CalibrationConfig,
    pub perception: PerceptionParams,
    pub comparison: ComparisonParams,
    pub glyph_scale: u32,
    /// Parallel grid cells; 0 uses every core.
    pub workers: usize,
    pub out: PathBuf,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            apps: Vec::new(),
            device: None,
            pairs: vec![
                DevicePair {
                    name: "notch".into(),
                    dut: None,
                    reference: None,
                    regular_dut: false,
                },
                DevicePair {
                    name: "clean".into(),
                    dut: None,
                    reference: None,
                    regular_dut: true,
                },
            ],
            strategies: Variant::ALL.to_vec(),
            seeds: (0..10).collect(),
            budget: Budget::steps(200),
            strategy: StrategyConfig::default(),
            camera: CameraRig::default(),
            scene: Scene::default(),
            arm: ArmConfig::default(),
            calibration: CalibrationConfig::default(),
            perception: PerceptionParams::default(),
            comparison: ComparisonParams::default(),
            glyph_scale: 2,
            workers: 0,
            out: PathBuf::from("armbench-out"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {0}: {1}")]
    Read(PathBuf, std::io::Error),
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid {0}: {1:?}")]
    Env(&'static str, String),
    #[error("invalid config: {0}")]
    Invalid(&'static str),
}

/// Command-line overrides, applied after the config file and environment.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub strategy: Option<Variant>,
    pub budget_steps: Option<usize>,
    pub budget_seconds: Option<f64>,
    pub out: Option<PathBuf>,
}

impl BenchmarkConfig {
    pub fn from_json(s: &str) -> Result<BenchmarkConfig, ConfigError> {
        serde_json::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Defaults, then `path`, then the environment, then `overrides`.
    pub fn load(
        path: Option<&Path>,
        env: impl Fn(&str) -> Option<String>,
        overrides: &Overrides,
    ) -> Result<BenchmarkConfig, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Read(p.to_path_buf(), e))?;
                let mut cfg = BenchmarkConfig::from_json(&text)?;
                // relative model paths are relative to the config file
                let base = p.parent().unwrap_or(Path::new(""));
                let rebase = |q: &mut PathBuf| {
                    if q.is_relative() {
                        *q = base.join(&*q);
                    }
                };
                cfg.apps.iter_mut().for_each(rebase);
                cfg.device.iter_mut().for_each(rebase);
                for pair in &mut cfg.pairs {
                    pair.dut.iter_mut().for_each(rebase);
                    pair.reference.iter_mut().for_each(rebase);
                }
                cfg
            }
            None => BenchmarkConfig::default(),
        };
        if let Some(out) = env(ENV_OUT).filter(|s| !s.is_empty()) {
            cfg.out = PathBuf::from(out);
        }
        if let Some(seed) = env(ENV_SEED).filter(|s| !s.is_empty()) {
            let n = seed.trim().parse().map_err(|_| ConfigError::Env(ENV_SEED, seed.clone()))?;
            cfg.seeds = vec![n];
        }
        if let Some(n) = overrides.seed {
            cfg.seeds = vec![n];
        }
        if let Some(v) = overrides.strategy {
            cfg.strategies = vec![v];
        }
        if overrides.budget_steps.is_some() || overrides.budget_seconds.is_some() {
            cfg.budget = Budget {
                steps: overrides.budget_steps,
                seconds: overrides.budget_seconds,
            };
        }
        if let Some(out) = &overrides.out {
            cfg.out = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.strategies.is_empty() {
            return Err(ConfigError::Invalid("at least one strategy is required"));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("at least one seed is required"));
        }
        if self.budget.steps.is_none() && self.budget.seconds.is_none() {
            return Err(ConfigError::Invalid("a step or seconds budget is required"));
        }
        if self.budget.steps == Some(0) || self.budget.seconds.is_some_and(|s| s.is_nan() || s <= 0.0) {
            return Err(ConfigError::Invalid("budgets must be positive"));
        }
        if self.glyph_scale == 0 {
            return Err(ConfigError::Invalid("glyph_scale must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.comparison.threshold) {
            return Err(ConfigError::Invalid("comparison threshold must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn strategy_for(&self, variant: Variant, seed: u64) -> Strategy {
        Strategy {
            variant,
            seed,
            cone_half_angle: self.strategy.cone_half_angle_deg.to_radians(),
            prefer_unvisited: self.strategy.prefer_unvisited,
            scroll_probability: self.strategy.scroll_probability,
        }
    }

    /// Label of the budget granularity, e.g. `200step` or `300s`.
    pub fn budget_label(&self) -> String {
        match (self.budget.steps, self.budget.seconds) {
            (Some(n), None) => format!("{n}step"),
            (None, Some(s)) => format!("{s}s"),
            (Some(n), Some(s)) => format!("{n}step/{s}s"),
            (None, None) => "unbounded".into(),
        }
    }
}
