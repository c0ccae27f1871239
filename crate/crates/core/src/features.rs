//! Brushing quality, discounted histories, the burden cost, the surrogate
//! reward, and the feature vectors used by the environment and the bandit.
//!
//! A [`UserHistory`] is the single source for every feature: the bandit's
//! advantage features and the cost term read the same discounted averages.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Number of past decision times that enter the discounted averages.
pub const LOOKBACK: usize = 14;

/// Upper truncation of brushing quality, in seconds.
pub const QUALITY_CAP: f64 = 180.0;

/// Default discount, one week of twice-daily decision times.
pub const DEFAULT_GAMMA: f64 = 13.0 / 14.0;

/// `max(min(duration - pressure, 180), 0)`.
pub fn brushing_quality(duration_s: f64, pressure_s: f64) -> Result<f64> {
    if !(duration_s >= 0.0) || !(pressure_s >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "brushing and pressure durations must be non-negative, got ({duration_s}, {pressure_s})"
        )));
    }
    Ok((duration_s - pressure_s).clamp(0.0, QUALITY_CAP))
}

/// Scale `(1 - gamma) / (1 - gamma^14)` that makes the 14 discount weights sum to one.
pub fn discount_weight_constant(gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok((1.0 - gamma) / (1.0 - gamma.powi(LOOKBACK as i32)))
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "discount gamma must lie in (0, 1), got {gamma}"
        )))
    }
}

/// The 14 weights `c_gamma * gamma^(j-1)`, most recent first.
pub fn discount_weights(gamma: f64) -> Result<[f64; LOOKBACK]> {
    let c = discount_weight_constant(gamma)?;
    let mut w = [0.0; LOOKBACK];
    let mut g = 1.0;
    for wj in w.iter_mut() {
        *wj = c * g;
        g *= gamma;
    }
    Ok(w)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TimeOfDay {
    Morning,
    Evening,
}

impl TimeOfDay {
    pub fn indicator(self) -> f64 {
        match self {
            TimeOfDay::Morning => 0.0,
            TimeOfDay::Evening => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TimeOfDay::Morning => "morning",
            TimeOfDay::Evening => "evening",
        }
    }
}

/// Rolling per-user record of past qualities and actions plus the calendar
/// position of the upcoming decision time.
///
/// Decision times alternate morning/evening starting with the morning of day 1.
/// Retained entries are most-recent-first; fewer than 14 entries means the
/// missing lookback terms count as zero.
#[derive(Clone, Debug, PartialEq)]
pub struct UserHistory {
    qualities: VecDeque<f64>,
    actions: VecDeque<u8>,
    decision_index: u32,
    /// Weekday of study day 1, 0 = Monday .. 6 = Sunday.
    start_weekday: u8,
    prior_day_total: f64,
    current_day_total: f64,
}

impl UserHistory {
    /// Empty history positioned at the morning of day 1.
    pub fn new(start_weekday: u8) -> Self {
        Self {
            qualities: VecDeque::with_capacity(LOOKBACK + 1),
            actions: VecDeque::with_capacity(LOOKBACK + 1),
            decision_index: 1,
            start_weekday: start_weekday % 7,
            prior_day_total: 0.0,
            current_day_total: 0.0,
        }
    }

    /// Build a history directly from its parts.
    ///
    /// `past_qualities` and `past_actions` are most-recent-first. When
    /// `decision_index` is an evening slot, the morning quality of the same
    /// day is taken to be `past_qualities[0]`.
    pub fn from_parts(
        past_qualities: &[f64],
        past_actions: &[u8],
        decision_index: u32,
        start_weekday: u8,
        prior_day_total_quality: f64,
    ) -> Result<Self> {
        if past_qualities.len() != past_actions.len() || past_qualities.len() > LOOKBACK {
            return Err(Error::InvalidArgument(format!(
                "history needs equal-length quality/action lists of at most {LOOKBACK}, got {} and {}",
                past_qualities.len(),
                past_actions.len()
            )));
        }
        if decision_index == 0 {
            return Err(Error::InvalidArgument("decision index starts at 1".into()));
        }
        if let Some(q) = past_qualities
            .iter()
            .find(|q| !(**q >= 0.0 && **q <= QUALITY_CAP))
        {
            return Err(Error::InvalidArgument(format!(
                "quality {q} outside [0, {QUALITY_CAP}]"
            )));
        }
        if let Some(a) = past_actions.iter().find(|a| **a > 1) {
            return Err(Error::InvalidArgument(format!("action {a} is not binary")));
        }
        if !(0.0..=2.0 * QUALITY_CAP).contains(&prior_day_total_quality) {
            return Err(Error::InvalidArgument(format!(
                "prior-day total quality {prior_day_total_quality} outside [0, {}]",
                2.0 * QUALITY_CAP
            )));
        }
        let current_day_total = if decision_index.is_multiple_of(2) {
            past_qualities.first().copied().unwrap_or(0.0)
        } else {
            0.0
        };
        Ok(Self {
            qualities: past_qualities.iter().copied().collect(),
            actions: past_actions.iter().copied().collect(),
            decision_index,
            start_weekday: start_weekday % 7,
            prior_day_total: prior_day_total_quality,
            current_day_total,
        })
    }

    /// Record the outcome of the current decision time and advance to the next.
    pub fn push(&mut self, quality: f64, action: u8) -> Result<()> {
        if !(0.0..=QUALITY_CAP).contains(&quality) {
            return Err(Error::InvalidArgument(format!(
                "quality {quality} outside [0, {QUALITY_CAP}]"
            )));
        }
        if action > 1 {
            return Err(Error::InvalidArgument(format!("action {action} is not binary")));
        }
        self.qualities.push_front(quality);
        self.actions.push_front(action);
        self.qualities.truncate(LOOKBACK);
        self.actions.truncate(LOOKBACK);

        self.current_day_total += quality;
        if self.time_of_day() == TimeOfDay::Evening {
            self.prior_day_total = self.current_day_total;
            self.current_day_total = 0.0;
        }
        self.decision_index += 1;
        Ok(())
    }

    pub fn past_qualities(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.qualities.iter().copied()
    }

    pub fn past_actions(&self) -> impl ExactSizeIterator<Item = u8> + '_ {
        self.actions.iter().copied()
    }

    /// Index `t` of the upcoming decision time, starting at 1.
    pub fn decision_index(&self) -> u32 {
        self.decision_index
    }

    pub fn day_in_study(&self) -> u32 {
        self.decision_index.div_ceil(2)
    }

    pub fn time_of_day(&self) -> TimeOfDay {
        if self.decision_index % 2 == 1 {
            TimeOfDay::Morning
        } else {
            TimeOfDay::Evening
        }
    }

    pub fn start_weekday(&self) -> u8 {
        self.start_weekday
    }

    /// Weekday of the current day, 0 = Monday.
    pub fn weekday(&self) -> u8 {
        ((self.start_weekday as u32 + self.day_in_study() - 1) % 7) as u8
    }

    pub fn is_weekend(&self) -> bool {
        self.weekday() >= 5
    }

    /// Sum of the previous calendar day's two qualities, 0 on day 1.
    pub fn prior_day_total_quality(&self) -> f64 {
        self.prior_day_total
    }

    /// Fraction of retained sessions with non-zero quality (0 with no history).
    pub fn proportion_nonzero(&self) -> f64 {
        if self.qualities.is_empty() {
            return 0.0;
        }
        let nonzero = self.qualities.iter().filter(|q| **q > 0.0).count();
        nonzero as f64 / self.qualities.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HistoryField {
    Quality,
    Action,
}

/// Exponentially discounted average of past qualities (`B̄`) or actions (`Ā`).
pub fn exp_avg(history: &UserHistory, field: HistoryField, gamma: f64) -> Result<f64> {
    let weights = discount_weights(gamma)?;
    let value = match field {
        HistoryField::Quality => weights
            .iter()
            .zip(history.past_qualities())
            .map(|(w, q)| w * q)
            .sum(),
        HistoryField::Action => weights
            .iter()
            .zip(history.past_actions())
            .map(|(w, a)| w * a as f64)
            .sum(),
    };
    Ok(value)
}

/// `B̄` and `Ā` computed together from one history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscountedAverages {
    pub b_bar: f64,
    pub a_bar: f64,
}

impl DiscountedAverages {
    pub fn of(history: &UserHistory, gamma: f64) -> Result<Self> {
        Ok(Self {
            b_bar: exp_avg(history, HistoryField::Quality, gamma)?,
            a_bar: exp_avg(history, HistoryField::Action, gamma)?,
        })
    }
}

/// Parameters of the burden cost: penalty weights, thresholds and discount.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostParams {
    pub xi1: f64,
    pub xi2: f64,
    /// Quality threshold for a "high-performing" user, seconds.
    pub b: f64,
    pub a1: f64,
    pub a2: f64,
    pub gamma: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            xi1: 100.0,
            xi2: 100.0,
            b: 111.0,
            a1: 0.5,
            a2: 0.8,
            gamma: DEFAULT_GAMMA,
        }
    }
}

impl CostParams {
    /// Default thresholds with the given penalty weights.
    pub fn with_xi(xi1: f64, xi2: f64) -> Result<Self> {
        let p = Self {
            xi1,
            xi2,
            ..Self::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xi1 >= 0.0 && self.xi2 >= 0.0) || !self.xi1.is_finite() || !self.xi2.is_finite()
        {
            return Err(Error::InvalidArgument(format!(
                "xi1 and xi2 must be finite and non-negative, got ({}, {})",
                self.xi1, self.xi2
            )));
        }
        if !(0.0..=1.0).contains(&self.a1) || !(0.0..=1.0).contains(&self.a2) || self.a1 >= self.a2
        {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= a1 < a2 <= 1, got a1={} a2={}",
                self.a1, self.a2
            )));
        }
        if !self.b.is_finite() {
            return Err(Error::InvalidArgument("threshold b must be finite".into()));
        }
        check_gamma(self.gamma)
    }
}

/// `(B̄ > b and Ā > a1) or Ā > a2`; shared by the cost term and habituation.
pub fn burden_criterion(b_bar: f64, a_bar: f64, params: &CostParams) -> bool {
    (b_bar > params.b && a_bar > params.a1) || a_bar > params.a2
}

/// Cost of sending a message. Zero whenever `action == 0`.
pub fn cost_term(b_bar: f64, a_bar: f64, action: u8, params: &CostParams) -> f64 {
    debug_assert!(action <= 1);
    if action == 0 {
        return 0.0;
    }
    let mut cost = 0.0;
    if b_bar > params.b && a_bar > params.a1 {
        cost += params.xi1;
    }
    if a_bar > params.a2 {
        cost += params.xi2;
    }
    cost
}

pub fn surrogate_reward(quality: f64, cost: f64) -> f64 {
    quality - cost
}

/// Affine normalizations of the quality and day-in-study features.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizationSpec {
    pub quality_mean: f64,
    pub quality_sd: f64,
    pub day_center: f64,
    pub day_halfspan: f64,
}

impl Default for NormalizationSpec {
    fn default() -> Self {
        Self::generation()
    }
}

impl NormalizationSpec {
    /// Constants used when generating rewards over a 70-day study.
    pub const fn generation() -> Self {
        Self {
            quality_mean: 154.0,
            quality_sd: 163.0,
            day_center: 35.5,
            day_halfspan: 34.5,
        }
    }

    /// Day normalization for a user observed over `days` days, mapping
    /// `[1, days]` onto `[-1, 1]`. A single-day user maps to 0.
    pub fn for_study_length(days: u32) -> Self {
        let days = days.max(1) as f64;
        let halfspan = (days - 1.0) / 2.0;
        Self {
            day_center: (days + 1.0) / 2.0,
            day_halfspan: if halfspan > 0.0 { halfspan } else { 1.0 },
            ..Self::generation()
        }
    }

    pub fn quality(&self, value: f64) -> f64 {
        (value - self.quality_mean) / self.quality_sd
    }

    pub fn day(&self, day: u32) -> f64 {
        (day as f64 - self.day_center) / self.day_halfspan
    }
}

pub const ENV_BASELINE_DIM: usize = 6;
pub const ENV_TREATMENT_DIM: usize = 5;
pub const ADVANTAGE_DIM: usize = 4;
pub const ALG_BASELINE_DIM: usize = 5;

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Environment baseline features `g`: intercept, time of day, normalized
/// prior-day total quality, weekend, proportion of non-zero sessions,
/// normalized day in study.
pub fn env_baseline_features(
    history: &UserHistory,
    norm: &NormalizationSpec,
) -> [f64; ENV_BASELINE_DIM] {
    [
        1.0,
        history.time_of_day().indicator(),
        norm.quality(history.prior_day_total_quality()),
        indicator(history.is_weekend()),
        history.proportion_nonzero(),
        norm.day(history.day_in_study()),
    ]
}

/// Environment treatment features `h`: `g` without the proportion of non-zero sessions.
pub fn env_treatment_features(
    history: &UserHistory,
    norm: &NormalizationSpec,
) -> [f64; ENV_TREATMENT_DIM] {
    let g = env_baseline_features(history, norm);
    [g[0], g[1], g[2], g[3], g[5]]
}

/// Bandit advantage features `f`: intercept, time of day, normalized `B̄`, `Ā`.
pub fn alg_advantage_features(history: &UserHistory, gamma: f64) -> Result<[f64; ADVANTAGE_DIM]> {
    let avgs = DiscountedAverages::of(history, gamma)?;
    Ok(advantage_features_from(history, &avgs))
}

/// Advantage features from precomputed averages, so the cost term and the
/// features can share one [`DiscountedAverages`].
pub fn advantage_features_from(
    history: &UserHistory,
    avgs: &DiscountedAverages,
) -> [f64; ADVANTAGE_DIM] {
    let norm = NormalizationSpec::generation();
    [
        1.0,
        history.time_of_day().indicator(),
        norm.quality(avgs.b_bar),
        avgs.a_bar,
    ]
}

/// Bandit baseline features `m`: `f` followed by the weekend indicator.
pub fn alg_baseline_features(history: &UserHistory, gamma: f64) -> Result<[f64; ALG_BASELINE_DIM]> {
    let avgs = DiscountedAverages::of(history, gamma)?;
    Ok(baseline_features_from(history, &avgs))
}

pub fn baseline_features_from(
    history: &UserHistory,
    avgs: &DiscountedAverages,
) -> [f64; ALG_BASELINE_DIM] {
    let f = advantage_features_from(history, avgs);
    [f[0], f[1], f[2], f[3], indicator(history.is_weekend())]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn default_params() -> CostParams {
        CostParams::with_xi(100.0, 100.0).unwrap()
    }

    #[test]
    fn quality_examples() {
        assert_eq!(brushing_quality(200.0, 10.0).unwrap(), 180.0);
        assert_eq!(brushing_quality(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(brushing_quality(100.0, 30.0).unwrap(), 70.0);
        assert_eq!(brushing_quality(10.0, 50.0).unwrap(), 0.0);
    }

    #[test]
    fn quality_rejects_negative_inputs() {
        assert!(matches!(
            brushing_quality(-1.0, 0.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(brushing_quality(10.0, -0.5).is_err());
        assert!(brushing_quality(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn discount_constant_rejects_out_of_range() {
        for g in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(discount_weight_constant(g).is_err(), "gamma {g}");
        }
    }

    #[test]
    fn single_recent_quality_gives_c_gamma() {
        let h = UserHistory::from_parts(&[1.0], &[0], 2, 0, 0.0).unwrap();
        let b = exp_avg(&h, HistoryField::Quality, DEFAULT_GAMMA).unwrap();
        assert!(close(b, 0.110628, 1e-6), "{b}");
    }

    #[test]
    fn saturated_history() {
        let h = UserHistory::from_parts(&[180.0; 14], &[1; 14], 30, 0, 0.0).unwrap();
        let avgs = DiscountedAverages::of(&h, DEFAULT_GAMMA).unwrap();
        assert!(close(avgs.b_bar, 180.0, 1e-10));
        assert!(close(avgs.a_bar, 1.0, 1e-12));
        let f = alg_advantage_features(&h, DEFAULT_GAMMA).unwrap();
        assert!(close(f[2], (180.0 - 154.0) / 163.0, 1e-12));
        assert!(close(f[3], 1.0, 1e-12));
    }

    #[test]
    fn cost_truth_table() {
        let p = default_params();
        assert_eq!(cost_term(120.0, 0.6, 0, &p), 0.0);
        assert_eq!(cost_term(120.0, 0.6, 1, &p), 100.0);
        assert_eq!(cost_term(50.0, 0.9, 1, &p), 100.0);
        assert_eq!(cost_term(120.0, 0.9, 1, &p), 200.0);
    }

    #[test]
    fn cost_ties_are_free() {
        let p = default_params();
        assert_eq!(cost_term(111.0, 0.8, 1, &p), 0.0);
        assert_eq!(cost_term(111.5, 0.5, 1, &p), 0.0);
        assert!(!burden_criterion(111.0, 0.8, &p));
    }

    #[test]
    fn surrogate_examples() {
        assert_eq!(surrogate_reward(180.0, 0.0), 180.0);
        assert_eq!(surrogate_reward(0.0, 200.0), -200.0);
        assert_eq!(surrogate_reward(80.0, 100.0), -20.0);
    }

    #[test]
    fn cost_params_validation() {
        assert!(CostParams::with_xi(-1.0, 0.0).is_err());
        let bad = CostParams {
            a1: 0.9,
            a2: 0.8,
            ..CostParams::default()
        };
        assert!(bad.validate().is_err());
        let bad_gamma = CostParams {
            gamma: 1.0,
            ..CostParams::default()
        };
        assert!(bad_gamma.validate().is_err());
    }

    #[test]
    fn env_features_day_one() {
        let h = UserHistory::new(0);
        let g = env_baseline_features(&h, &NormalizationSpec::generation());
        assert_eq!(g[0], 1.0);
        assert_eq!(g[1], 0.0);
        assert!(close(g[2], -154.0 / 163.0, 1e-15));
        assert_eq!(g[3], 0.0);
        assert_eq!(g[4], 0.0);
        assert!(close(g[5], (1.0 - 35.5) / 34.5, 1e-15));
        let h5 = env_treatment_features(&h, &NormalizationSpec::generation());
        assert_eq!(h5, [g[0], g[1], g[2], g[3], g[5]]);
    }

    #[test]
    fn env_features_normalizations() {
        let norm = NormalizationSpec::generation();
        let h = UserHistory::from_parts(&[], &[], 139, 0, 154.0).unwrap();
        let g = env_baseline_features(&h, &norm);
        assert!(close(g[2], 0.0, 1e-15));
        assert!(close(g[5], 1.0, 1e-15));

        let h = UserHistory::from_parts(&[], &[], 71, 0, 0.0).unwrap();
        assert_eq!(h.day_in_study(), 36);
        let t = env_treatment_features(&h, &norm);
        assert!(close(t[4], 0.5 / 34.5, 1e-12));
        assert!(close(t[4], 0.0145, 1e-4));
        assert_eq!(t[1], 0.0);
        assert_eq!(t[3], 0.0);
    }

    #[test]
    fn alg_features_examples() {
        let h = UserHistory::new(0);
        let f = alg_advantage_features(&h, DEFAULT_GAMMA).unwrap();
        assert_eq!(f, [1.0, 0.0, -154.0 / 163.0, 0.0]);
        let m = alg_baseline_features(&h, DEFAULT_GAMMA).unwrap();
        assert_eq!(m, [1.0, 0.0, -154.0 / 163.0, 0.0, 0.0]);

        // Start on Saturday: day 1 is a weekend day.
        let h = UserHistory::new(5);
        let m = alg_baseline_features(&h, DEFAULT_GAMMA).unwrap();
        assert_eq!(m[4], 1.0);
        let h = UserHistory::new(4);
        assert_eq!(alg_baseline_features(&h, DEFAULT_GAMMA).unwrap()[4], 0.0);
    }

    #[test]
    fn b_bar_of_154_normalizes_to_zero() {
        let avgs = DiscountedAverages {
            b_bar: 154.0,
            a_bar: 0.3,
        };
        let h = UserHistory::new(0);
        let f = advantage_features_from(&h, &avgs);
        assert_eq!(f[2], 0.0);
        assert_eq!(f[3], 0.3);
    }

    #[test]
    fn push_advances_calendar() {
        let mut h = UserHistory::new(0);
        assert_eq!(h.time_of_day(), TimeOfDay::Morning);
        h.push(60.0, 1).unwrap();
        assert_eq!(h.time_of_day(), TimeOfDay::Evening);
        assert_eq!(h.day_in_study(), 1);
        assert_eq!(h.prior_day_total_quality(), 0.0);
        h.push(40.0, 0).unwrap();
        assert_eq!(h.day_in_study(), 2);
        assert_eq!(h.time_of_day(), TimeOfDay::Morning);
        assert_eq!(h.prior_day_total_quality(), 100.0);
        h.push(0.0, 0).unwrap();
        h.push(0.0, 0).unwrap();
        assert_eq!(h.prior_day_total_quality(), 0.0);
        assert_eq!(h.past_qualities().collect::<Vec<_>>(), vec![0.0, 0.0, 40.0, 60.0]);
        assert_eq!(h.proportion_nonzero(), 0.5);

        for _ in 0..20 {
            h.push(10.0, 1).unwrap();
        }
        assert_eq!(h.past_qualities().len(), LOOKBACK);
        assert_eq!(h.decision_index(), 25);
        assert!(h.push(181.0, 0).is_err());
        assert!(h.push(10.0, 2).is_err());
    }

    #[test]
    fn weekend_calendar_from_monday() {
        let mut h = UserHistory::new(0);
        let mut weekend_days = Vec::new();
        for _ in 0..14 {
            if h.time_of_day() == TimeOfDay::Morning && h.is_weekend() {
                weekend_days.push(h.day_in_study());
            }
            h.push(0.0, 0).unwrap();
        }
        assert_eq!(weekend_days, vec![6, 7]);
    }

    #[test]
    fn from_parts_validation() {
        assert!(UserHistory::from_parts(&[1.0], &[], 2, 0, 0.0).is_err());
        assert!(UserHistory::from_parts(&[1.0; 15], &[0; 15], 20, 0, 0.0).is_err());
        assert!(UserHistory::from_parts(&[200.0], &[0], 2, 0, 0.0).is_err());
        assert!(UserHistory::from_parts(&[], &[], 0, 0, 0.0).is_err());
        assert!(UserHistory::from_parts(&[], &[], 3, 0, 400.0).is_err());
    }

    #[test]
    fn normalization_for_study_length() {
        let n = NormalizationSpec::for_study_length(70);
        assert_eq!(n.day_center, 35.5);
        assert_eq!(n.day_halfspan, 34.5);
        let n = NormalizationSpec::for_study_length(9);
        assert_eq!(n.day(1), -1.0);
        assert_eq!(n.day(9), 1.0);
        assert_eq!(NormalizationSpec::for_study_length(1).day(1), 0.0);
    }
}
