//! TOML configuration shared by the `run-study` and `sweep` commands.
//!
//! Every section and key is optional; omitted values take the defaults of
//! [`StudyConfig`] and [`SweepConfig`].
//!
//! ```toml
//! [seed]
//! master = 7
//!
//! [study]
//! n_users = 72
//! t_decisions = 140
//! recruit_per_week = 4
//! update_cadence = 14
//! effect_shrink = 0.0          # E
//! clip_min = 0.1
//! clip_max = 0.9
//! strict_cohorts = true
//! redraw_effects = true        # draw per-user effects from [effects]
//! fixed_send_probability = 0.5 # optional; replaces posterior sampling
//!
//! [cost]
//! xi1 = 100.0
//! xi2 = 100.0
//! b = 111.0
//! a1 = 0.5
//! a2 = 0.8
//! gamma = 0.9285714285714286
//!
//! [effects]
//! delta_b_mean = 0.743
//! delta_n_mean = 0.227
//! sigma_b = 0.177
//! sigma_n = 0.109
//!
//! [sweep]
//! xi1_grid = [0.0, 20.0, 40.0]
//! xi2_grid = [0.0, 20.0, 40.0]
//! e_values = [0.0, 0.5, 0.8]
//! mc_trials = 100
//! common_random_numbers = true
//! workers = 4
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::bandit::ClipBounds;
use crate::env::PopulationEffectStats;
use crate::error::{Error, Result};
use crate::features::CostParams;
use crate::sim::{Policy, StudyConfig};
use crate::sweep::SweepConfig;

#[derive(Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub seed: SeedSection,
    #[serde(default)]
    pub study: StudySection,
    #[serde(default)]
    pub cost: CostSection,
    pub effects: Option<EffectsSection>,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SeedSection {
    pub master: Option<u64>,
}

#[derive(Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub n_users: Option<usize>,
    pub t_decisions: Option<u32>,
    pub recruit_per_week: Option<usize>,
    pub decisions_per_day: Option<u32>,
    pub update_cadence: Option<u32>,
    pub effect_shrink: Option<f64>,
    pub clip_min: Option<f64>,
    pub clip_max: Option<f64>,
    pub strict_cohorts: Option<bool>,
    pub redraw_effects: Option<bool>,
    pub fixed_send_probability: Option<f64>,
}

#[derive(Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub xi1: Option<f64>,
    pub xi2: Option<f64>,
    pub b: Option<f64>,
    pub a1: Option<f64>,
    pub a2: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EffectsSection {
    pub delta_b_mean: f64,
    pub delta_n_mean: f64,
    pub sigma_b: f64,
    pub sigma_n: f64,
}

#[derive(Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub xi1_grid: Option<Vec<f64>>,
    pub xi2_grid: Option<Vec<f64>>,
    pub e_values: Option<Vec<f64>>,
    pub mc_trials: Option<usize>,
    pub common_random_numbers: Option<bool>,
    pub workers: Option<usize>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn study_config(&self) -> Result<StudyConfig> {
        let d = StudyConfig::default();
        let s = &self.study;
        let c = &self.cost;
        let dc = d.cost_params;
        let cost_params = CostParams {
            xi1: c.xi1.unwrap_or(dc.xi1),
            xi2: c.xi2.unwrap_or(dc.xi2),
            b: c.b.unwrap_or(dc.b),
            a1: c.a1.unwrap_or(dc.a1),
            a2: c.a2.unwrap_or(dc.a2),
            gamma: c.gamma.unwrap_or(dc.gamma),
        };
        let clip_bounds = ClipBounds::new(
            s.clip_min.unwrap_or(d.clip_bounds.min),
            s.clip_max.unwrap_or(d.clip_bounds.max),
        )?;
        let stats = self.effects.as_ref().map_or_else(PopulationEffectStats::default, |e| {
            PopulationEffectStats {
                delta_b_mean: e.delta_b_mean,
                delta_n_mean: e.delta_n_mean,
                sigma_b: e.sigma_b,
                sigma_n: e.sigma_n,
            }
        });
        let config = StudyConfig {
            n_users: s.n_users.unwrap_or(d.n_users),
            t_decisions: s.t_decisions.unwrap_or(d.t_decisions),
            recruit_per_week: s.recruit_per_week.unwrap_or(d.recruit_per_week),
            decisions_per_day: s.decisions_per_day.unwrap_or(d.decisions_per_day),
            update_cadence: s.update_cadence.unwrap_or(d.update_cadence),
            cost_params,
            effect_shrink: s.effect_shrink.unwrap_or(d.effect_shrink),
            clip_bounds,
            master_seed: self.seed.master.unwrap_or(d.master_seed),
            effect_stats: s.redraw_effects.unwrap_or(true).then_some(stats),
            policy: s
                .fixed_send_probability
                .map_or(Policy::Thompson, Policy::FixedProbability),
            strict_cohorts: s.strict_cohorts.unwrap_or(d.strict_cohorts),
        };
        config.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn sweep_config(&self) -> Result<SweepConfig> {
        let d = SweepConfig::default();
        let s = &self.sweep;
        let config = SweepConfig {
            xi1_grid: s.xi1_grid.clone().unwrap_or(d.xi1_grid),
            xi2_grid: s.xi2_grid.clone().unwrap_or(d.xi2_grid),
            e_values: s.e_values.clone().unwrap_or(d.e_values),
            mc_trials: s.mc_trials.unwrap_or(d.mc_trials),
            study: self.study_config()?,
            common_random_numbers: s.common_random_numbers.unwrap_or(d.common_random_numbers),
            workers: s.workers.or(d.workers),
        };
        config.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(config)
    }
}
