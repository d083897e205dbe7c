//! Key/value configuration of an optimization run.

use super::{Budget, PolishOptions, Schedule, Strategy};
use crate::objective::{ObjectiveParams, DEFAULT_MU_ANGLE, DEFAULT_MU_MINLEN};
use crate::trimesh::RefineGrid;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Duration;

/// Which strategies the main annealing run may use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyFlags {
    pub direct_single: bool,
    pub direct_group: bool,
    pub cluster_single: bool,
    pub cluster_group: bool,
    pub resample_small: bool,
    pub resample_large: bool,
    pub swap_contracted: bool,
    pub contract_to_neighbor: bool,
    pub flip_edges: bool,
}

impl Default for StrategyFlags {
    fn default() -> Self {
        Self {
            direct_single: true,
            direct_group: true,
            cluster_single: true,
            cluster_group: true,
            resample_small: true,
            resample_large: true,
            swap_contracted: true,
            contract_to_neighbor: true,
            flip_edges: true,
        }
    }
}

impl StrategyFlags {
    pub fn enabled(&self) -> Vec<Strategy> {
        let on = [
            self.direct_single,
            self.direct_group,
            self.cluster_single,
            self.cluster_group,
            self.resample_small,
            self.resample_large,
            self.swap_contracted,
            self.contract_to_neighbor,
            self.flip_edges,
        ];
        Strategy::ALL.iter().zip(on).filter(|(_, b)| *b).map(|(s, _)| *s).collect()
    }
}

/// Settings for [`super::full_pipeline`]. Every field has a default, so a
/// config file only lists what it changes:
///
/// ```text
/// levels = 50
/// steps_per_level = 500
/// seed = 7
/// [strategies]
/// flip_edges = false
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealConfig {
    pub t_init: f64,
    pub t_final: f64,
    pub eps_init: f64,
    pub eps_final: f64,
    pub levels: usize,
    pub steps_per_level: u64,
    /// Optimization passes; each pass after the first starts by subdividing.
    pub iterations: usize,
    pub seed: u64,
    /// Proposals per polishing run; defaults to a tenth of the main run.
    pub polish_steps: Option<u64>,
    pub polish_levels: usize,
    pub polish_passes: usize,
    pub polish_rounds: usize,
    pub mu_angle: f64,
    pub mu_minlen: f64,
    /// Wall-clock limit for each annealing run, in seconds.
    pub max_seconds: Option<f64>,
    pub refine_angles: Vec<f64>,
    pub refine_areas: Vec<f64>,
    pub strategies: StrategyFlags,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        let s = Schedule::default();
        let g = RefineGrid::default();
        let p = PolishOptions::default();
        Self {
            t_init: s.t_init,
            t_final: s.t_final,
            eps_init: s.eps_init,
            eps_final: s.eps_final,
            levels: s.levels,
            steps_per_level: s.steps_per_level,
            iterations: 2,
            seed: 0,
            polish_steps: None,
            polish_levels: p.levels,
            polish_passes: p.max_passes,
            polish_rounds: p.max_rounds,
            mu_angle: DEFAULT_MU_ANGLE,
            mu_minlen: DEFAULT_MU_MINLEN,
            max_seconds: None,
            refine_angles: g.angles,
            refine_areas: g.areas,
            strategies: StrategyFlags::default(),
        }
    }
}

impl AnnealConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.check()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn check(&self) -> Result<()> {
        self.schedule().check()?;
        self.objective_params().check()?;
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.strategies.enabled().is_empty() {
            return Err(Error::Config("no strategy enabled".into()));
        }
        if self.refine_angles.is_empty() || self.refine_areas.is_empty() {
            return Err(Error::Config("empty refinement grid".into()));
        }
        if self.max_seconds.is_some_and(|s| !(s > 0.0)) {
            return Err(Error::Config("max_seconds must be positive".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            t_init: self.t_init,
            t_final: self.t_final,
            eps_init: self.eps_init,
            eps_final: self.eps_final,
            levels: self.levels,
            steps_per_level: self.steps_per_level,
        }
    }

    /// Objective parameters at the final contraction length.
    pub fn objective_params(&self) -> ObjectiveParams {
        ObjectiveParams {
            mu_angle: self.mu_angle,
            mu_minlen: self.mu_minlen,
            ..ObjectiveParams::new(self.eps_final)
        }
    }

    pub fn polish_options(&self) -> PolishOptions {
        PolishOptions {
            t_init: self.t_final,
            t_final: self.t_final / 10.0,
            levels: self.polish_levels,
            steps: self.polish_steps.unwrap_or(self.schedule().total_steps() / 10).max(1),
            max_passes: self.polish_passes,
            max_rounds: self.polish_rounds,
            ..PolishOptions::default()
        }
    }

    pub fn budget(&self) -> Budget {
        Budget {
            max_steps: None,
            max_time: self.max_seconds.map(Duration::from_secs_f64),
        }
    }

    pub fn refine_grid(&self) -> RefineGrid {
        RefineGrid {
            angles: self.refine_angles.clone(),
            areas: self.refine_areas.clone(),
        }
    }
}
