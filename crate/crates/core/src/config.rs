//! One TOML file drives every subsystem. Each table is optional and missing
//! keys keep their defaults; `config/default.toml` lists them all.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline_hc::HcConfig;
use crate::bridge::BridgeConfig;
use crate::error::{Error, Result};
use crate::eval::ablation::AblationConfig;
use crate::eval::ScriptParams;
use crate::human_motion::TrajectoryLibrary;
use crate::planner::PlannerConfig;
use crate::rl::trainer::TrainConfig;
use crate::sim::EpisodeConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub seeds: Vec<u64>,
    /// Discount of the discounted-reward column.
    pub gamma: f64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    /// Scenario names to run; empty runs the whole suite.
    pub scenarios: Vec<String>,
    /// Any of LBGP, E2E, HC, random, stationary. The learned controllers
    /// need a checkpoint.
    pub controllers: Vec<String>,
    pub scripts: ScriptParams,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seeds: vec![1, 2, 3, 4, 5],
            gamma: 0.99,
            threads: 0,
            scenarios: Vec::new(),
            controllers: vec!["HC".into(), "random".into()],
            scripts: ScriptParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub episode: EpisodeConfig,
    pub planner: PlannerConfig,
    pub hc: HcConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub ablation: AblationConfig,
    pub bridge: BridgeConfig,
    /// Extra recorded trajectories for curriculum level 4, added to the
    /// bundled set.
    pub trajectory_dir: Option<PathBuf>,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.episode.validate()?;
        self.planner.validate()?;
        self.train.validate()?;
        self.bridge.validate()?;
        if !(0.0..=1.0).contains(&self.eval.gamma) {
            return Err(Error::Config("eval.gamma must lie in [0, 1]".into()));
        }
        if self.eval.seeds.is_empty() {
            return Err(Error::Config("eval.seeds is empty".into()));
        }
        Ok(())
    }

    /// Bundled trajectories plus those in `trajectory_dir`.
    pub fn library(&self) -> Result<TrajectoryLibrary> {
        let mut lib = TrajectoryLibrary::bundled();
        if let Some(dir) = &self.trajectory_dir {
            for t in TrajectoryLibrary::load_dir(dir)?.trajectories() {
                lib.add(t.clone());
            }
        }
        Ok(lib)
    }
}
