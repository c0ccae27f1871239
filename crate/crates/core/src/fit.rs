//! Session ingestion and per-user MAP fitting of the zero-inflated Poisson
//! base model.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;
use std::path::Path;

use nalgebra::{SMatrix, SVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::env::sigmoid;
use crate::error::{Error, Result};
use crate::features::{
    brushing_quality, env_baseline_features, NormalizationSpec, TimeOfDay, UserHistory,
    ENV_BASELINE_DIM,
};

const PARAM_DIM: usize = 2 * ENV_BASELINE_DIM;
type Params = SVector<f64, PARAM_DIM>;

/// Sessions below which a fit is flagged as data-starved.
pub const SMALL_DATA_SESSIONS: usize = 20;

/// Maps the logical session fields onto CSV column names.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnMap {
    pub user_id: String,
    pub day: String,
    pub time_of_day: String,
    pub duration: String,
    pub pressure: String,
    /// Optional 0/1 weekend column; without it day 1 is taken to be a Monday.
    pub weekend: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            user_id: "user_id".into(),
            day: "day_index".into(),
            time_of_day: "time_of_day".into(),
            duration: "brushing_duration".into(),
            pressure: "pressure_duration".into(),
            weekend: None,
        }
    }
}

impl std::str::FromStr for ColumnMap {
    type Err = Error;

    /// Parse `key=column` pairs separated by commas, e.g.
    /// `user_id=uid,day=day,time_of_day=tod,duration=brush,pressure=press`.
    /// Unlisted keys keep their default column names.
    fn from_str(s: &str) -> Result<Self> {
        let mut map = Self::default();
        for pair in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, col) = pair.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("column map entry {pair:?} is not key=column"))
            })?;
            let col = col.trim().to_string();
            match key.trim() {
                "user_id" | "user" => map.user_id = col,
                "day" | "day_index" => map.day = col,
                "time_of_day" | "time" => map.time_of_day = col,
                "duration" | "brushing_duration" => map.duration = col,
                "pressure" | "pressure_duration" => map.pressure = col,
                "weekend" => map.weekend = Some(col),
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown column map key {other:?}; expected user_id, day, time_of_day, duration, pressure or weekend"
                    )))
                }
            }
        }
        Ok(map)
    }
}

/// One observed brushing session.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionRecord {
    pub user_id: String,
    pub day_index: u32,
    pub time_of_day: TimeOfDay,
    pub brushing_duration_s: f64,
    pub pressure_duration_s: f64,
    pub weekend: Option<bool>,
}

impl SessionRecord {
    pub fn quality(&self) -> f64 {
        brushing_quality(self.brushing_duration_s, self.pressure_duration_s)
            .expect("durations validated on load")
    }
}

fn parse_time_of_day(raw: &str) -> Option<TimeOfDay> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "0" | "morning" | "am" | "m" => Some(TimeOfDay::Morning),
        "1" | "evening" | "pm" | "e" => Some(TimeOfDay::Evening),
        _ => None,
    }
}

/// Sessions grouped by user id (sorted), each user's sessions sorted by day and time.
pub type SessionsByUser = BTreeMap<String, Vec<SessionRecord>>;

pub fn load_sessions(path: &Path, columns: &ColumnMap) -> Result<SessionsByUser> {
    let file = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    read_sessions(file, columns)
}

pub fn read_sessions<R: Read>(input: R, columns: &ColumnMap) -> Result<SessionsByUser> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = rdr.headers()?.clone();
    let index = |name: &str| -> Result<usize> {
        header.iter().position(|h| h == name).ok_or_else(|| {
            Error::SchemaMismatch(format!(
                "column {name:?} not found; header is {}",
                header.iter().collect::<Vec<_>>().join(",")
            ))
        })
    };
    let i_user = index(&columns.user_id)?;
    let i_day = index(&columns.day)?;
    let i_tod = index(&columns.time_of_day)?;
    let i_dur = index(&columns.duration)?;
    let i_press = index(&columns.pressure)?;
    let i_weekend = columns.weekend.as_deref().map(index).transpose()?;

    let mut seen = HashSet::new();
    let mut out = SessionsByUser::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        // Header is line 1.
        let line = i + 2;
        let get = |k: usize, name: &str| -> Result<&str> {
            match row.get(k) {
                Some(v) if !v.is_empty() => Ok(v),
                _ => Err(Error::InvalidRow {
                    row: line,
                    message: format!("missing value for column {name:?}"),
                }),
            }
        };
        let number = |k: usize, name: &str| -> Result<f64> {
            let raw = get(k, name)?;
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::UnparseableNumeric {
                    row: line,
                    field: name.to_string(),
                    value: raw.to_string(),
                })
        };

        let user_id = get(i_user, &columns.user_id)?.to_string();
        let day = number(i_day, &columns.day)?;
        if day < 1.0 || day.fract() != 0.0 {
            return Err(Error::InvalidRow {
                row: line,
                message: format!("day index {day} must be a positive integer"),
            });
        }
        let day_index = day as u32;
        let tod_raw = get(i_tod, &columns.time_of_day)?;
        let time_of_day = parse_time_of_day(tod_raw).ok_or_else(|| Error::InvalidRow {
            row: line,
            message: format!("time of day {tod_raw:?} is not morning/evening"),
        })?;
        let brushing_duration_s = number(i_dur, &columns.duration)?;
        let pressure_duration_s = number(i_press, &columns.pressure)?;
        if brushing_duration_s < 0.0 || pressure_duration_s < 0.0 {
            return Err(Error::InvalidRow {
                row: line,
                message: "durations must be non-negative".into(),
            });
        }
        let weekend = match i_weekend {
            Some(k) => {
                let name = columns.weekend.as_deref().unwrap_or("weekend");
                Some(number(k, name)? != 0.0)
            }
            None => None,
        };

        if !seen.insert((user_id.clone(), day_index, time_of_day)) {
            return Err(Error::DuplicateRecord {
                row: line,
                user_id,
                day: day_index,
                time_of_day: time_of_day.as_str(),
            });
        }
        out.entry(user_id.clone()).or_default().push(SessionRecord {
            user_id,
            day_index,
            time_of_day,
            brushing_duration_s,
            pressure_duration_s,
            weekend,
        });
    }
    for sessions in out.values_mut() {
        sessions.sort_by_key(|s| (s.day_index, s.time_of_day.indicator() as u8));
    }
    Ok(out)
}

/// Baseline features and integer quality for one observed session.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitObservation {
    pub g: [f64; ENV_BASELINE_DIM],
    pub q: f64,
}

/// Replay a user's sessions in time order and build one observation per
/// session. Day in study is normalized by the user's own study length;
/// decision times without a session count as zero quality in the history
/// but contribute no observation.
pub fn user_observations(sessions: &[SessionRecord]) -> Vec<FitObservation> {
    let Some(last_day) = sessions.iter().map(|s| s.day_index).max() else {
        return Vec::new();
    };
    let norm = NormalizationSpec::for_study_length(last_day);
    let by_slot: BTreeMap<(u32, u8), &SessionRecord> = sessions
        .iter()
        .map(|s| ((s.day_index, s.time_of_day.indicator() as u8), s))
        .collect();

    let mut history = UserHistory::new(0);
    let mut out = Vec::with_capacity(sessions.len());
    for day in 1..=last_day {
        for slot in 0..2u8 {
            let q = match by_slot.get(&(day, slot)) {
                Some(s) => {
                    let q = s.quality().round();
                    let mut g = env_baseline_features(&history, &norm);
                    if let Some(weekend) = s.weekend {
                        g[3] = if weekend { 1.0 } else { 0.0 };
                    }
                    out.push(FitObservation { g, q });
                    q
                }
                None => 0.0,
            };
            history.push(q, 0).expect("rounded quality stays in range");
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// Log posterior and its gradient with respect to `[w_b, w_p]`.
fn log_posterior_and_grad(
    w_b: &[f64],
    w_p: &[f64],
    obs: &[FitObservation],
    want_grad: bool,
) -> (f64, Params) {
    let mut value = -0.5 * (dot(w_b, w_b) + dot(w_p, w_p));
    let mut grad = Params::zeros();
    if want_grad {
        for d in 0..ENV_BASELINE_DIM {
            grad[d] = -w_b[d];
            grad[ENV_BASELINE_DIM + d] = -w_p[d];
        }
    }
    for o in obs {
        let eta_b = dot(&o.g, w_b);
        let eta_p = dot(&o.g, w_p);
        let lambda = eta_p.exp();
        let p = sigmoid(eta_b);
        let log_p = -softplus(-eta_b);
        let log_1mp = -softplus(eta_b);
        let (ll, d_eta_b, d_eta_p) = if o.q == 0.0 {
            let structural = log_p;
            let sampled = log_1mp - lambda;
            let ll = log_add_exp(structural, sampled);
            // Posterior weight of the structural zero.
            let r = (structural - ll).exp();
            (ll, r - p, -(1.0 - r) * lambda)
        } else {
            let ll = log_1mp - lambda + o.q * eta_p - ln_gamma(o.q + 1.0);
            (ll, -p, o.q - lambda)
        };
        value += ll;
        if want_grad {
            for d in 0..ENV_BASELINE_DIM {
                grad[d] += d_eta_b * o.g[d];
                grad[ENV_BASELINE_DIM + d] += d_eta_p * o.g[d];
            }
        }
    }
    (value, grad)
}

/// `sum log L(q | g, w_b, w_p) - |w_b|^2 / 2 - |w_p|^2 / 2`, dropping the
/// Gaussian normalizing constant.
pub fn zip_log_posterior(
    w_b: &[f64; ENV_BASELINE_DIM],
    w_p: &[f64; ENV_BASELINE_DIM],
    obs: &[FitObservation],
) -> Result<f64> {
    let (v, _) = log_posterior_and_grad(w_b, w_p, obs, false);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain(format!("log posterior evaluated to {v}")))
    }
}

/// Gradient of [`zip_log_posterior`], ordered `[d/dw_b, d/dw_p]`.
pub fn zip_log_posterior_grad(
    w_b: &[f64; ENV_BASELINE_DIM],
    w_p: &[f64; ENV_BASELINE_DIM],
    obs: &[FitObservation],
) -> Result<[f64; PARAM_DIM]> {
    let (v, g) = log_posterior_and_grad(w_b, w_p, obs, true);
    if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("log posterior evaluated to {v}")));
    }
    let mut out = [0.0; PARAM_DIM];
    out.copy_from_slice(g.as_slice());
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    /// Relative change in log posterior that counts as converged.
    pub convergence_tol: f64,
    /// Standard deviation of random restart initializations.
    pub init_scale: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            restarts: 50,
            max_iterations: 1000,
            convergence_tol: 1e-6,
            init_scale: 1.0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0
            || self.max_iterations == 0
            || !(self.convergence_tol > 0.0)
            || !(self.init_scale > 0.0)
        {
            return Err(Error::InvalidArgument(format!(
                "fit config values must all be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOutcome {
    pub w_b: [f64; ENV_BASELINE_DIM],
    pub w_p: [f64; ENV_BASELINE_DIM],
    pub log_posterior: f64,
    /// Index of the restart that produced the returned weights (0 = zero init).
    pub best_restart: usize,
    pub converged_restarts: usize,
    pub small_data: bool,
}

struct Ascent {
    x: Params,
    value: f64,
    converged: bool,
}

/// Maximize the log posterior from `x0` by BFGS with Armijo backtracking.
fn ascend(obs: &[FitObservation], x0: Params, config: &FitConfig) -> Ascent {
    // Minimize the negated log posterior; non-finite values are rejected by the line search.
    let eval = |x: &Params| -> Option<(f64, Params)> {
        let (v, g) = log_posterior_and_grad(
            &x.as_slice()[..ENV_BASELINE_DIM],
            &x.as_slice()[ENV_BASELINE_DIM..],
            obs,
            true,
        );
        (v.is_finite() && g.iter().all(|c| c.is_finite())).then_some((-v, -g))
    };

    let Some((mut fx, mut gx)) = eval(&x0) else {
        return Ascent {
            x: x0,
            value: f64::NEG_INFINITY,
            converged: false,
        };
    };
    let mut x = x0;
    let mut h_inv = SMatrix::<f64, PARAM_DIM, PARAM_DIM>::identity();
    let mut fresh = true;

    for _ in 0..config.max_iterations {
        if gx.amax() < 1e-9 {
            return Ascent { x, value: -fx, converged: true };
        }
        let mut dir = -(h_inv * gx);
        let mut slope = gx.dot(&dir);
        if !(slope < 0.0) {
            h_inv = SMatrix::identity();
            fresh = true;
            dir = -gx;
            slope = gx.dot(&dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = x + dir * step;
            if let Some((ft, gt)) = eval(&trial) {
                if ft <= fx + 1e-4 * step * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            if fresh {
                // Steepest descent cannot make progress either.
                let converged = gx.amax() < 1e-5 * fx.abs().max(1.0);
                return Ascent { x, value: -fx, converged };
            }
            h_inv = SMatrix::identity();
            fresh = true;
            continue;
        };

        let s = x_new - x;
        let y = g_new - gx;
        let sy = s.dot(&y);
        let rel_change = (fx - f_new).abs() / fx.abs().max(1.0);
        x = x_new;
        fx = f_new;
        gx = g_new;

        if sy > 1e-12 {
            if fresh {
                h_inv *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let i = SMatrix::<f64, PARAM_DIM, PARAM_DIM>::identity();
            let left = i - s * y.transpose() * rho;
            h_inv = left * h_inv * left.transpose() + s * s.transpose() * rho;
            fresh = false;
        }
        if rel_change < config.convergence_tol {
            return Ascent { x, value: -fx, converged: true };
        }
    }
    Ascent {
        x,
        value: -fx,
        converged: false,
    }
}

/// MAP fit of one user's zero-inflated Poisson model.
///
/// Restart 0 starts from the zero vector, the remaining ones from
/// `N(0, init_scale^2 I)`. The best log posterior over all restarts wins,
/// ties going to the lowest restart index; at least one restart must converge.
pub fn fit_user_model<R: Rng + ?Sized>(
    obs: &[FitObservation],
    config: &FitConfig,
    rng: &mut R,
) -> Result<FitOutcome> {
    config.validate()?;
    if obs.is_empty() {
        return Err(Error::InsufficientData("no sessions to fit".into()));
    }
    let small_data = obs.len() < SMALL_DATA_SESSIONS;
    if small_data {
        log::warn!(
            "fitting on only {} sessions (fewer than {SMALL_DATA_SESSIONS}); estimates lean on the prior",
            obs.len()
        );
    }

    let mut best: Option<(usize, Ascent)> = None;
    let mut converged = 0;
    let mut worst_failure = String::new();
    for restart in 0..config.restarts {
        let x0 = if restart == 0 {
            Params::zeros()
        } else {
            Params::from_fn(|_, _| {
                let z: f64 = StandardNormal.sample(rng);
                z * config.init_scale
            })
        };
        let run = ascend(obs, x0, config);
        if run.converged {
            converged += 1;
        } else if worst_failure.is_empty() {
            worst_failure = format!("restart {restart} stopped at log posterior {}", run.value);
        }
        if best.as_ref().is_none_or(|(_, b)| run.value > b.value) {
            best = Some((restart, run));
        }
    }
    let (best_restart, best) = best.expect("at least one restart");
    if converged == 0 || !best.value.is_finite() {
        return Err(Error::FitFailure {
            restarts: config.restarts,
            diagnostics: format!(
                "no restart converged within {} iterations; best log posterior {}; {worst_failure}",
                config.max_iterations, best.value
            ),
        });
    }
    let mut w_b = [0.0; ENV_BASELINE_DIM];
    let mut w_p = [0.0; ENV_BASELINE_DIM];
    w_b.copy_from_slice(&best.x.as_slice()[..ENV_BASELINE_DIM]);
    w_p.copy_from_slice(&best.x.as_slice()[ENV_BASELINE_DIM..]);
    Ok(FitOutcome {
        w_b,
        w_p,
        log_posterior: best.value,
        best_restart,
        converged_restarts: converged,
        small_data,
    })
}
