//! One simulated trial: staggered recruitment, twice-daily bandit decisions,
//! weekly pooled posterior updates and habituating user environments.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bandit::{
    clip, posterior_update, prob_positive_advantage, select_action, ClipBounds, DecisionRecord,
    PosteriorState, PriorSpec,
};
use crate::env::{
    habituation_step, impute_effect_sizes, ModelRecord, PopulationEffectStats, UserEnvModel,
};
use crate::error::{Error, Result};
use crate::features::{
    advantage_features_from, baseline_features_from, cost_term, env_baseline_features,
    env_treatment_features, surrogate_reward, CostParams, DiscountedAverages, NormalizationSpec,
    UserHistory,
};

/// How actions are chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Policy {
    /// Posterior sampling against the current pooled posterior.
    Thompson,
    /// Send with a fixed probability; still clipped to the bounds.
    FixedProbability(f64),
    /// Always take this action. The logged `pi` is the clip bound on the
    /// side of the action so the record invariants keep holding.
    FixedAction(u8),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub n_users: usize,
    /// Decisions per user.
    pub t_decisions: u32,
    pub recruit_per_week: usize,
    pub decisions_per_day: u32,
    /// Global decision slots between posterior updates.
    pub update_cadence: u32,
    pub cost_params: CostParams,
    /// Habituation shrink factor `E`.
    pub effect_shrink: f64,
    pub clip_bounds: ClipBounds,
    pub master_seed: u64,
    /// Population statistics for fresh per-user effect draws. `None` uses
    /// the effect sizes stored with each pool model.
    pub effect_stats: Option<PopulationEffectStats>,
    pub policy: Policy,
    /// Require `n_users` to be a multiple of `recruit_per_week`.
    pub strict_cohorts: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            n_users: 72,
            t_decisions: 140,
            recruit_per_week: 4,
            decisions_per_day: 2,
            update_cadence: 14,
            cost_params: CostParams::default(),
            effect_shrink: 0.0,
            clip_bounds: ClipBounds::default(),
            master_seed: 0,
            effect_stats: Some(PopulationEffectStats::default()),
            policy: Policy::Thompson,
            strict_cohorts: true,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_users == 0 || self.recruit_per_week == 0 {
            return bad("n_users and recruit_per_week must be positive".into());
        }
        if self.strict_cohorts && !self.n_users.is_multiple_of(self.recruit_per_week) {
            return bad(format!(
                "n_users {} is not a multiple of recruit_per_week {} (disable strict_cohorts to allow a partial last cohort)",
                self.n_users, self.recruit_per_week
            ));
        }
        if self.decisions_per_day != 2 {
            return bad(format!(
                "decisions_per_day must be 2 (morning and evening), got {}",
                self.decisions_per_day
            ));
        }
        if self.t_decisions == 0 || !self.t_decisions.is_multiple_of(2) {
            return bad(format!(
                "t_decisions must be positive and even, got {}",
                self.t_decisions
            ));
        }
        if self.update_cadence == 0 {
            return bad("update_cadence must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.effect_shrink) {
            return bad(format!("E must lie in [0, 1], got {}", self.effect_shrink));
        }
        self.cost_params.validate()?;
        if let Some(stats) = &self.effect_stats {
            stats.validate()?;
        }
        match self.policy {
            Policy::FixedProbability(p) if !(0.0..=1.0).contains(&p) => {
                bad(format!("fixed send probability {p} outside [0, 1]"))
            }
            Policy::FixedAction(a) if a > 1 => bad(format!("fixed action {a} is not 0 or 1")),
            _ => Ok(()),
        }
    }

    /// Decision slots in one study week.
    pub fn slots_per_week(&self) -> u32 {
        7 * self.decisions_per_day
    }

    /// Global slot at which user `user` makes their first decision.
    pub fn entry_slot(&self, user: usize) -> u32 {
        (user / self.recruit_per_week) as u32 * self.slots_per_week()
    }

    /// Total global slots until the last cohort finishes.
    pub fn total_slots(&self) -> u32 {
        self.entry_slot(self.n_users - 1) + self.t_decisions
    }
}

/// Per-user outcome of a study.
#[derive(Clone, Debug, PartialEq)]
pub struct UserTrace {
    /// Index into the model pool this user was drawn from.
    pub pool_index: usize,
    pub delta_b: f64,
    pub delta_n: f64,
    pub entry_slot: u32,
    pub qualities: Vec<f64>,
    /// Shrink power in effect at each decision.
    pub shrink_powers: Vec<u32>,
}

impl UserTrace {
    pub fn cumulative_quality(&self) -> f64 {
        self.qualities.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyResult {
    pub users: Vec<UserTrace>,
    /// Every decision in the order it was made.
    pub log: Vec<DecisionRecord>,
    /// Global slots at which the posterior was recomputed, with the record count used.
    pub updates: Vec<(u32, usize)>,
    pub final_posterior: PosteriorState,
}

impl StudyResult {
    pub fn cumulative_qualities(&self) -> Vec<f64> {
        self.users.iter().map(UserTrace::cumulative_quality).collect()
    }

    pub fn mean_quality(&self) -> f64 {
        mean(self.log.iter().map(|r| r.quality))
    }

    pub fn mean_surrogate_reward(&self) -> f64 {
        mean(self.log.iter().map(|r| r.surrogate_reward))
    }

    pub fn send_rate(&self) -> f64 {
        mean(self.log.iter().map(|r| r.action as f64))
    }
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    values.sum::<f64>() / n as f64
}

/// Stream identifiers inside one trial; user streams follow the draw stream.
const POOL_DRAW_STREAM: u64 = 0;
const STREAMS_PER_TRIAL: u64 = 1 << 24;

/// Generator for one `(trial, stream)` pair under a master seed.
pub fn stream_rng(master_seed: u64, trial: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial * STREAMS_PER_TRIAL + stream);
    rng
}

struct ActiveUser {
    model: UserEnvModel,
    history: UserHistory,
    rng: ChaCha8Rng,
    trace: UserTrace,
}

/// Run one study with trial index 0.
pub fn run_study(
    config: &StudyConfig,
    pool: &[ModelRecord],
    prior: &PriorSpec,
) -> Result<StudyResult> {
    run_trial(config, pool, prior, 0)
}

/// Run the `trial`-th independent replicate of a study.
///
/// Users are drawn with replacement from `pool`; cohort `k` enters at the
/// start of study week `k`, and study day 1 is a Monday. The posterior is
/// recomputed from every pooled record at each update boundary, before any
/// decision at that slot.
pub fn run_trial(
    config: &StudyConfig,
    pool: &[ModelRecord],
    prior: &PriorSpec,
    trial: u64,
) -> Result<StudyResult> {
    config.validate()?;
    if pool.is_empty() {
        return Err(Error::InvalidArgument("user model pool is empty".into()));
    }
    let norm = NormalizationSpec::generation();
    let params = &config.cost_params;

    let mut draw_rng = stream_rng(config.master_seed, trial, POOL_DRAW_STREAM);
    let mut users = Vec::with_capacity(config.n_users);
    for u in 0..config.n_users {
        let pool_index = draw_rng.random_range(0..pool.len());
        let mut rng = stream_rng(config.master_seed, trial, u as u64 + 1);
        let record = &pool[pool_index];
        let mut model = record.to_env_model()?;
        if let Some(stats) = &config.effect_stats {
            let (db, dn) = impute_effect_sizes(stats, &mut rng)?;
            model = UserEnvModel::new(record.w_b, record.w_p, db, dn)?;
        }
        let entry_slot = config.entry_slot(u);
        let start_weekday = ((entry_slot / config.decisions_per_day) % 7) as u8;
        users.push(ActiveUser {
            trace: UserTrace {
                pool_index,
                delta_b: model.delta_b(),
                delta_n: model.delta_n(),
                entry_slot,
                qualities: Vec::with_capacity(config.t_decisions as usize),
                shrink_powers: Vec::with_capacity(config.t_decisions as usize),
            },
            model,
            history: UserHistory::new(start_weekday),
            rng,
        });
    }

    let mut posterior = PosteriorState::from_prior(prior);
    let mut log = Vec::with_capacity(config.n_users * config.t_decisions as usize);
    let mut updates = Vec::new();

    for slot in 0..config.total_slots() {
        if slot > 0 && slot % config.update_cadence == 0 {
            posterior = posterior_update(prior, &log)?;
            updates.push((slot, log.len()));
        }
        for (uid, user) in users.iter_mut().enumerate() {
            let start = user.trace.entry_slot;
            if slot < start || slot >= start + config.t_decisions {
                continue;
            }
            let record = decide(config, &norm, params, &posterior, uid, slot, user).map_err(|e| {
                Error::Study {
                    user: uid,
                    t: user.history.decision_index(),
                    source: Box::new(e),
                }
            })?;
            log.push(record);
        }
    }

    Ok(StudyResult {
        users: users.into_iter().map(|u| u.trace).collect(),
        log,
        updates,
        final_posterior: posterior,
    })
}

fn decide(
    config: &StudyConfig,
    norm: &NormalizationSpec,
    params: &CostParams,
    posterior: &PosteriorState,
    uid: usize,
    slot: u32,
    user: &mut ActiveUser,
) -> Result<DecisionRecord> {
    let t = user.history.decision_index();
    let avgs = DiscountedAverages::of(&user.history, params.gamma)?;
    let f = advantage_features_from(&user.history, &avgs);
    let m = baseline_features_from(&user.history, &avgs);

    let (pi_tilde, pi, action) = match config.policy {
        Policy::Thompson => {
            let pi_tilde = prob_positive_advantage(posterior, &f);
            let pi = clip(pi_tilde, config.clip_bounds);
            (pi_tilde, pi, select_action(pi, &mut user.rng))
        }
        Policy::FixedProbability(p) => {
            let pi = clip(p, config.clip_bounds);
            (p, pi, select_action(pi, &mut user.rng))
        }
        Policy::FixedAction(a) => {
            // Keep the stream aligned with the sampling policies.
            let _: f64 = user.rng.random();
            let pi = clip(a as f64, config.clip_bounds);
            (a as f64, pi, a)
        }
    };

    let g = env_baseline_features(&user.history, norm);
    let h = env_treatment_features(&user.history, norm);
    user.trace
        .shrink_powers
        .push(user.model.habituation.shrink_power());
    let zip = user.model.zip_params(&g, &h, action, config.effect_shrink)?;
    let quality = zip.sample(&mut user.rng)? as f64;

    let cost = cost_term(avgs.b_bar, avgs.a_bar, action, params);
    let record = DecisionRecord {
        user_id: uid,
        decision_index: t,
        slot,
        m,
        f,
        pi_tilde,
        pi,
        action,
        quality,
        cost,
        surrogate_reward: surrogate_reward(quality, cost),
    };

    user.model.habituation =
        habituation_step(user.model.habituation, avgs.b_bar, avgs.a_bar, params, t);
    user.history.push(quality, action)?;
    user.trace.qualities.push(quality);
    Ok(record)
}

/// `(1/N) sum_i sum_t Q_it`.
pub fn mean_cumulative_quality(result: &StudyResult) -> f64 {
    let c = result.cumulative_qualities();
    mean(c.into_iter())
}

/// 25th percentile of per-user cumulative quality.
pub fn percentile25_cumulative_quality(result: &StudyResult) -> f64 {
    percentile(&result.cumulative_qualities(), 0.25)
}

/// Percentile by linear interpolation between closest ranks: position
/// `(n - 1) p` in the sorted sample. Returns NaN for an empty sample.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub const USER_SUMMARY_HEADER: [&str; 9] = [
    "user",
    "pool_index",
    "delta_b",
    "delta_n",
    "entry_slot",
    "decisions",
    "cumulative_quality",
    "mean_quality",
    "max_shrink_power",
];

pub fn write_user_summary<W: Write>(out: W, result: &StudyResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(USER_SUMMARY_HEADER)?;
    for (i, u) in result.users.iter().enumerate() {
        let n = u.qualities.len();
        let cum = u.cumulative_quality();
        w.write_record([
            i.to_string(),
            u.pool_index.to_string(),
            u.delta_b.to_string(),
            u.delta_n.to_string(),
            u.entry_slot.to_string(),
            n.to_string(),
            cum.to_string(),
            (if n == 0 { 0.0 } else { cum / n as f64 }).to_string(),
            u.shrink_powers.iter().max().copied().unwrap_or(0).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("user summary", e))?;
    Ok(())
}
