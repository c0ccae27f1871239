//! Simulated user environment.
//!
//! Brushing quality is drawn from a zero-inflated Poisson model whose
//! Bernoulli and Poisson components are shifted by non-negative treatment
//! effects when a message is sent. Effects shrink by a factor `E` each time
//! the burden criterion holds at a weekly check and recover fully otherwise.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::features::{
    burden_criterion, CostParams, ENV_BASELINE_DIM, ENV_TREATMENT_DIM, QUALITY_CAP,
};

/// Decision times between two habituation checks.
pub const HABITUATION_PERIOD: u32 = 14;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot<const N: usize>(a: &[f64; N], b: &[f64; N]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Habituation bookkeeping for one user. The effect multiplier is `E^shrink_power`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct HabituationState {
    shrink_power: u32,
    last_check: Option<u32>,
    ever_triggered: bool,
}

impl HabituationState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn shrink_power(&self) -> u32 {
        self.shrink_power
    }

    /// Decision index of the most recent trigger, cleared on recovery.
    pub fn last_check(&self) -> Option<u32> {
        self.last_check
    }

    pub fn ever_triggered(&self) -> bool {
        self.ever_triggered
    }

    pub fn multiplier(&self, e: f64) -> f64 {
        e.powi(self.shrink_power as i32)
    }
}

/// Advance the habituation state after the decision at `decision_index`.
///
/// While no check is pending the criterion is evaluated at every decision
/// time; once it holds, the next evaluation happens exactly 14 decision times
/// later. A successful check shrinks the effects once more, a failed one
/// restores them. The returned state applies from `decision_index + 1`.
pub fn habituation_step(
    state: HabituationState,
    b_bar: f64,
    a_bar: f64,
    params: &CostParams,
    decision_index: u32,
) -> HabituationState {
    match state.last_check {
        None => {
            if burden_criterion(b_bar, a_bar, params) {
                HabituationState {
                    shrink_power: state.shrink_power + 1,
                    last_check: Some(decision_index),
                    ever_triggered: true,
                }
            } else {
                state
            }
        }
        Some(last) if decision_index == last + HABITUATION_PERIOD => {
            if burden_criterion(b_bar, a_bar, params) {
                HabituationState {
                    shrink_power: state.shrink_power + 1,
                    last_check: Some(decision_index),
                    ever_triggered: true,
                }
            } else {
                HabituationState {
                    shrink_power: 0,
                    last_check: None,
                    ever_triggered: state.ever_triggered,
                }
            }
        }
        Some(_) => state,
    }
}

/// Generative model for one simulated user.
#[derive(Clone, Debug, PartialEq)]
pub struct UserEnvModel {
    pub w_b: [f64; ENV_BASELINE_DIM],
    pub w_p: [f64; ENV_BASELINE_DIM],
    delta_b: f64,
    delta_n: f64,
    pub habituation: HabituationState,
}

/// Mixture parameters of one zero-inflated Poisson draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZipParams {
    /// Probability of the structural zero (no brushing).
    pub p_zero: f64,
    pub lambda: f64,
}

impl ZipParams {
    /// Mean before the 180 clamp, `(1 - p) * lambda`.
    pub fn mean(&self) -> f64 {
        (1.0 - self.p_zero) * self.lambda
    }

    /// `P(Q = 0) = p + (1 - p) e^(-lambda)`.
    pub fn prob_zero(&self) -> f64 {
        self.p_zero + (1.0 - self.p_zero) * (-self.lambda).exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<u32> {
        let brushes = rng.random::<f64>() >= self.p_zero;
        let poisson = Poisson::new(self.lambda)
            .map_err(|e| Error::ModelDegenerate(format!("Poisson rate {}: {e}", self.lambda)))?;
        let count: f64 = poisson.sample(rng);
        if !brushes {
            return Ok(0);
        }
        Ok(count.min(QUALITY_CAP) as u32)
    }
}

impl UserEnvModel {
    pub fn new(
        w_b: [f64; ENV_BASELINE_DIM],
        w_p: [f64; ENV_BASELINE_DIM],
        delta_b: f64,
        delta_n: f64,
    ) -> Result<Self> {
        if w_b.iter().chain(&w_p).any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("model weights must be finite".into()));
        }
        if !(delta_b >= 0.0 && delta_n >= 0.0) || !delta_b.is_finite() || !delta_n.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "effect sizes must be finite and non-negative, got ({delta_b}, {delta_n})"
            )));
        }
        Ok(Self {
            w_b,
            w_p,
            delta_b,
            delta_n,
            habituation: HabituationState::new(),
        })
    }

    pub fn delta_b(&self) -> f64 {
        self.delta_b
    }

    pub fn delta_n(&self) -> f64 {
        self.delta_n
    }

    /// Effect sizes after shrinkage, `E^k * (delta_b, delta_n)`.
    pub fn effective_effects(&self, e: f64) -> (f64, f64) {
        let m = self.habituation.multiplier(e);
        (m * self.delta_b, m * self.delta_n)
    }

    /// Mixture parameters for features `g`, `h` under `action`.
    pub fn zip_params(
        &self,
        g: &[f64; ENV_BASELINE_DIM],
        h: &[f64; ENV_TREATMENT_DIM],
        action: u8,
        e: f64,
    ) -> Result<ZipParams> {
        let (db, dn) = self.effective_effects(e);
        let h_sum: f64 = h.iter().sum();
        let a = action as f64;
        let bern_logit = dot(g, &self.w_b) - a * (db * h_sum).max(0.0);
        let log_rate = dot(g, &self.w_p) + a * (dn * h_sum).max(0.0);
        let lambda = log_rate.exp();
        if !lambda.is_finite() || !bern_logit.is_finite() {
            return Err(Error::ModelDegenerate(format!(
                "non-finite Poisson rate (log rate {log_rate}) or logit {bern_logit}"
            )));
        }
        Ok(ZipParams {
            p_zero: sigmoid(bern_logit),
            lambda,
        })
    }
}

/// Draw one brushing quality, clamped to `[0, 180]`.
pub fn sample_quality<R: Rng + ?Sized>(
    model: &UserEnvModel,
    g: &[f64; ENV_BASELINE_DIM],
    h: &[f64; ENV_TREATMENT_DIM],
    action: u8,
    e: f64,
    rng: &mut R,
) -> Result<u32> {
    model.zip_params(g, h, action, e)?.sample(rng)
}

/// Population-level effect sizes and their spread across users.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PopulationEffectStats {
    pub delta_b_mean: f64,
    pub delta_n_mean: f64,
    pub sigma_b: f64,
    pub sigma_n: f64,
}

impl Default for PopulationEffectStats {
    /// Values obtained from the 13 fitted users of the reference data set.
    fn default() -> Self {
        Self {
            delta_b_mean: 0.743,
            delta_n_mean: 0.227,
            sigma_b: 0.177,
            sigma_n: 0.109,
        }
    }
}

impl PopulationEffectStats {
    /// Every user gets exactly zero effect.
    pub fn zero() -> Self {
        Self {
            delta_b_mean: 0.0,
            delta_n_mean: 0.0,
            sigma_b: 0.0,
            sigma_n: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.delta_b_mean, self.delta_n_mean, self.sigma_b, self.sigma_n];
        if all.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "effect statistics must be finite and non-negative: {self:?}"
            )))
        }
    }
}

/// Draw from `N(mean, sd^2)` conditioned on `[0, inf)` by rejection.
pub fn truncated_normal_nonneg<R: Rng + ?Sized>(mean: f64, sd: f64, rng: &mut R) -> Result<f64> {
    if !(sd >= 0.0) || !sd.is_finite() || !mean.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "truncated normal needs finite mean and sd >= 0, got ({mean}, {sd})"
        )));
    }
    if sd == 0.0 {
        return Ok(mean.max(0.0));
    }
    // Below this the acceptance rate is too small for plain rejection.
    if mean / sd < -5.0 {
        return Err(Error::InvalidArgument(format!(
            "truncated normal acceptance too low for mean {mean}, sd {sd}"
        )));
    }
    let normal = Normal::new(mean, sd).expect("validated parameters");
    loop {
        let x = normal.sample(rng);
        if x >= 0.0 {
            return Ok(x);
        }
    }
}

/// Draw user-specific `(delta_b, delta_n)`.
pub fn impute_effect_sizes<R: Rng + ?Sized>(
    stats: &PopulationEffectStats,
    rng: &mut R,
) -> Result<(f64, f64)> {
    stats.validate()?;
    let db = truncated_normal_nonneg(stats.delta_b_mean, stats.sigma_b, rng)?;
    let dn = truncated_normal_nonneg(stats.delta_n_mean, stats.sigma_n, rng)?;
    Ok((db, dn))
}

/// Mean absolute non-intercept weight of one fitted weight vector.
pub fn mean_abs_effect(w: &[f64; ENV_BASELINE_DIM]) -> f64 {
    w[1..].iter().map(|x| x.abs()).sum::<f64>() / (ENV_BASELINE_DIM - 1) as f64
}

fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (n - 1.0)).sqrt()
}

/// Population effect statistics from fitted `(w_b, w_p)` pairs.
///
/// Means average `|w|` over users and the five non-intercept dimensions; the
/// spreads are sample (n - 1) standard deviations of the per-user means.
pub fn population_effect_stats(
    models: &[([f64; ENV_BASELINE_DIM], [f64; ENV_BASELINE_DIM])],
) -> Result<PopulationEffectStats> {
    if models.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "population effect statistics need at least 2 fitted models, got {}",
            models.len()
        )));
    }
    let mu_b: Vec<f64> = models.iter().map(|(wb, _)| mean_abs_effect(wb)).collect();
    let mu_n: Vec<f64> = models.iter().map(|(_, wp)| mean_abs_effect(wp)).collect();
    let n = models.len() as f64;
    Ok(PopulationEffectStats {
        delta_b_mean: mu_b.iter().sum::<f64>() / n,
        delta_n_mean: mu_n.iter().sum::<f64>() / n,
        sigma_b: sample_sd(&mu_b),
        sigma_n: sample_sd(&mu_n),
    })
}

/// One line of a model file: fitted weights and, once imputed, effect sizes.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelRecord {
    pub id: String,
    pub w_b: [f64; ENV_BASELINE_DIM],
    pub w_p: [f64; ENV_BASELINE_DIM],
    pub effects: Option<(f64, f64)>,
}

impl ModelRecord {
    /// Environment model using the recorded effects, or zero effects if none were imputed.
    pub fn to_env_model(&self) -> Result<UserEnvModel> {
        let (db, dn) = self.effects.unwrap_or((0.0, 0.0));
        UserEnvModel::new(self.w_b, self.w_p, db, dn)
    }
}

const MODEL_HEADER: [&str; 15] = [
    "id", "wb0", "wb1", "wb2", "wb3", "wb4", "wb5", "wp0", "wp1", "wp2", "wp3", "wp4", "wp5",
    "delta_b", "delta_n",
];

/// Write model records as CSV: `id, wb0..wb5, wp0..wp5, delta_b, delta_n`.
/// Effect columns are left empty for models without imputed effects.
pub fn write_models<W: Write>(out: W, records: &[ModelRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MODEL_HEADER)?;
    for r in records {
        let mut row = Vec::with_capacity(MODEL_HEADER.len());
        row.push(r.id.clone());
        row.extend(r.w_b.iter().chain(&r.w_p).map(|x| x.to_string()));
        match r.effects {
            Some((db, dn)) => {
                row.push(db.to_string());
                row.push(dn.to_string());
            }
            None => {
                row.push(String::new());
                row.push(String::new());
            }
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<models>", e))?;
    Ok(())
}

pub fn read_models<R: Read>(input: R) -> Result<Vec<ModelRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != MODEL_HEADER {
        return Err(Error::SchemaMismatch(format!(
            "model file header must be {}, got {}",
            MODEL_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let num = |k: usize| -> Result<f64> {
            let raw = &row[k];
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::UnparseableNumeric {
                    row: line,
                    field: MODEL_HEADER[k].to_string(),
                    value: raw.to_string(),
                })
        };
        let mut w_b = [0.0; ENV_BASELINE_DIM];
        let mut w_p = [0.0; ENV_BASELINE_DIM];
        for d in 0..ENV_BASELINE_DIM {
            w_b[d] = num(1 + d)?;
            w_p[d] = num(7 + d)?;
        }
        let effects = if row[13].is_empty() && row[14].is_empty() {
            None
        } else {
            let (db, dn) = (num(13)?, num(14)?);
            if db < 0.0 || dn < 0.0 {
                return Err(Error::InvalidRow {
                    row: line,
                    message: "effect sizes must be non-negative".into(),
                });
            }
            Some((db, dn))
        };
        records.push(ModelRecord {
            id: row[0].to_string(),
            w_b,
            w_p,
            effects,
        });
    }
    Ok(records)
}

pub fn read_models_file(path: &Path) -> Result<Vec<ModelRecord>> {
    let file = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    read_models(file)
}

pub fn write_models_file(path: &Path, records: &[ModelRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_models(file, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{env_baseline_features, env_treatment_features, NormalizationSpec, UserHistory};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> CostParams {
        CostParams::default()
    }

    fn model(db: f64, dn: f64) -> UserEnvModel {
        UserEnvModel::new(
            [0.2, -0.3, 0.1, 0.05, -0.4, 0.1],
            [4.0, 0.1, 0.05, -0.1, 0.2, 0.0],
            db,
            dn,
        )
        .unwrap()
    }

    #[test]
    fn zero_linear_predictor_gives_unit_rate() {
        let m = UserEnvModel::new([0.0; 6], [0.0; 6], 0.5, 0.5).unwrap();
        let g = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let h = [1.0, 0.0, 0.0, 0.0, 0.0];
        let z = m.zip_params(&g, &h, 0, 1.0).unwrap();
        assert_eq!(z.lambda, 1.0);
        assert_eq!(z.p_zero, 0.5);
        assert_eq!(z.mean(), 0.5);
    }

    #[test]
    fn negative_treatment_sum_means_no_effect() {
        let m = model(0.7, 0.3);
        let g = [1.0, 0.0, -0.9, 0.0, 0.3, -1.0];
        let h = [1.0, 0.0, -0.9, 0.0, -1.0];
        assert!(h.iter().sum::<f64>() < 0.0);
        assert_eq!(m.zip_params(&g, &h, 1, 1.0).unwrap(), m.zip_params(&g, &h, 0, 1.0).unwrap());
    }

    #[test]
    fn fully_shrunk_effects_vanish() {
        let mut m = model(0.7, 0.3);
        m.habituation = HabituationState {
            shrink_power: 1,
            last_check: Some(5),
            ever_triggered: true,
        };
        let g = [1.0, 1.0, 0.2, 0.0, 0.8, 0.0];
        let h = [1.0, 1.0, 0.2, 0.0, 0.0];
        assert_eq!(m.zip_params(&g, &h, 1, 0.0).unwrap(), m.zip_params(&g, &h, 0, 0.0).unwrap());
        assert_eq!(m.effective_effects(0.0), (0.0, 0.0));
    }

    #[test]
    fn sending_never_hurts() {
        let m = model(0.7, 0.3);
        let g = [1.0, 1.0, 0.2, 1.0, 0.8, 0.5];
        let h = [1.0, 1.0, 0.2, 1.0, 0.5];
        let z0 = m.zip_params(&g, &h, 0, 1.0).unwrap();
        let z1 = m.zip_params(&g, &h, 1, 1.0).unwrap();
        assert!(z1.p_zero < z0.p_zero);
        assert!(z1.lambda > z0.lambda);
    }

    #[test]
    fn overflowing_rate_is_degenerate() {
        let m = UserEnvModel::new([0.0; 6], [800.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.0, 0.0).unwrap();
        let g = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let h = [1.0, 0.0, 0.0, 0.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            sample_quality(&m, &g, &h, 0, 1.0, &mut rng),
            Err(Error::ModelDegenerate(_))
        ));
    }

    #[test]
    fn samples_are_clamped() {
        let m = UserEnvModel::new([-10.0, 0.0, 0.0, 0.0, 0.0, 0.0], [6.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.0, 0.0)
            .unwrap();
        let g = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let h = [1.0, 0.0, 0.0, 0.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            assert_eq!(sample_quality(&m, &g, &h, 0, 1.0, &mut rng).unwrap(), 180);
        }
    }

    #[test]
    fn never_send_never_habituates() {
        let mut s = HabituationState::new();
        for t in 1..=140 {
            s = habituation_step(s, 150.0, 0.0, &params(), t);
            assert_eq!(s.shrink_power(), 0);
        }
        assert!(!s.ever_triggered());
    }

    #[test]
    fn trigger_then_recover() {
        let p = params();
        let mut s = HabituationState::new();
        s = habituation_step(s, 0.0, 0.9, &p, 20);
        assert_eq!(s.shrink_power(), 1);
        assert_eq!(s.last_check(), Some(20));
        // Criterion is ignored between checks.
        for t in 21..34 {
            s = habituation_step(s, 0.0, 0.0, &p, t);
            assert_eq!(s.shrink_power(), 1);
        }
        s = habituation_step(s, 0.0, 0.1, &p, 34);
        assert_eq!(s.shrink_power(), 0);
        assert_eq!(s.last_check(), None);
        assert!(s.ever_triggered());
        // Watching resumes at every decision after recovery.
        s = habituation_step(s, 120.0, 0.6, &p, 35);
        assert_eq!(s.shrink_power(), 1);
        assert_eq!(s.last_check(), Some(35));
    }

    #[test]
    fn repeated_checks_compound() {
        let p = params();
        let mut s = HabituationState::new();
        let mut powers = Vec::new();
        for t in 1..=60 {
            s = habituation_step(s, 0.0, 0.95, &p, t);
            powers.push(s.shrink_power());
        }
        assert_eq!(powers[0], 1);
        assert_eq!(powers[13], 1);
        assert_eq!(powers[14], 2);
        assert_eq!(powers[28], 3);
        assert_eq!(powers[42], 4);
        assert_eq!(powers[56], 5);
        assert_eq!(s.multiplier(0.5), 0.5f64.powi(5));
    }

    #[test]
    fn truncated_normal_support_and_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert!(truncated_normal_nonneg(0.1, 1.0, &mut rng).unwrap() >= 0.0);
        }
        assert_eq!(truncated_normal_nonneg(0.743, 0.0, &mut rng).unwrap(), 0.743);
        assert!(truncated_normal_nonneg(0.0, -1.0, &mut rng).is_err());
    }

    #[test]
    fn population_stats_identical_users() {
        let w = ([0.3, 0.5, -0.5, 0.5, -0.5, 0.5], [4.0, 0.1, 0.1, -0.1, 0.1, 0.1]);
        let s = population_effect_stats(&[w, w, w]).unwrap();
        assert!((s.delta_b_mean - 0.5).abs() < 1e-15);
        assert!((s.delta_n_mean - 0.1).abs() < 1e-15);
        assert!(s.sigma_b < 1e-12);
        assert!(s.sigma_n < 1e-12);
    }

    #[test]
    fn population_stats_two_users() {
        let u1 = ([9.0, 0.5, -0.5, 0.5, 0.5, -0.5], [0.0; 6]);
        let u2 = ([-9.0, 0.9, 0.9, -0.9, 0.9, 0.9], [0.0; 6]);
        let s = population_effect_stats(&[u1, u2]).unwrap();
        assert!((s.delta_b_mean - 0.7).abs() < 1e-12);
        // Sample SD of {0.5, 0.9}: |0.9 - 0.5| / sqrt(2).
        assert!((s.sigma_b - 0.4 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn population_stats_needs_two() {
        let u = ([0.0; 6], [0.0; 6]);
        assert!(matches!(
            population_effect_stats(&[u]),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn model_file_round_trip() {
        let records = vec![
            ModelRecord {
                id: "u1".into(),
                w_b: [0.1, -0.2, 0.3, 1e-9, 5.5, -0.25],
                w_p: [4.2, 0.0, 0.1, -0.1, 0.2, 0.3],
                effects: None,
            },
            ModelRecord {
                id: "u2".into(),
                w_b: [0.0; 6],
                w_p: [1.0; 6],
                effects: Some((0.7, 0.2)),
            },
        ];
        let mut buf = Vec::new();
        write_models(&mut buf, &records).unwrap();
        assert_eq!(read_models(buf.as_slice()).unwrap(), records);
    }

    #[test]
    fn model_file_errors() {
        let bad_header = "id,a,b\n";
        assert!(matches!(read_models(bad_header.as_bytes()), Err(Error::SchemaMismatch(_))));
        let bad_num = format!("{}\nu,x,0,0,0,0,0,0,0,0,0,0,0,,\n", MODEL_HEADER.join(","));
        assert!(matches!(
            read_models(bad_num.as_bytes()),
            Err(Error::UnparseableNumeric { row: 2, .. })
        ));
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let m = model(0.7, 0.3);
        let h = UserHistory::new(0);
        let norm = NormalizationSpec::generation();
        let g = env_baseline_features(&h, &norm);
        let t = env_treatment_features(&h, &norm);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| sample_quality(&m, &g, &t, 1, 0.5, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
    }
}
