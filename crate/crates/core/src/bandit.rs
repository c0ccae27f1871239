//! Action-centered Bayesian linear regression with posterior sampling.
//!
//! The reward model is `R = m'a0 + pi f'a1 + (A - pi) f'b + eps` with a joint
//! Gaussian prior on `theta = [a0 (5), a1 (4), b (4)]` and known noise
//! variance. Posteriors are recomputed from the full pooled history.

use std::io::{Read, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{SMatrix, SVector};
use rand::Rng;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::features::{ADVANTAGE_DIM, ALG_BASELINE_DIM};

pub const THETA_DIM: usize = ALG_BASELINE_DIM + 2 * ADVANTAGE_DIM;
const BETA_OFFSET: usize = ALG_BASELINE_DIM + ADVANTAGE_DIM;

pub type ThetaVector = SVector<f64, THETA_DIM>;
pub type ThetaMatrix = SMatrix<f64, THETA_DIM, THETA_DIM>;

static NEGATIVE_VARIANCE_CLAMPS: AtomicU64 = AtomicU64::new(0);

/// Number of times a numerically negative advantage variance was clamped to zero.
pub fn negative_variance_clamps() -> u64 {
    NEGATIVE_VARIANCE_CLAMPS.load(Ordering::Relaxed)
}

/// Gaussian prior on `theta` plus the fixed noise variance.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorSpec {
    pub mu: ThetaVector,
    pub sigma: ThetaMatrix,
    pub sigma2: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self::informative()
    }
}

impl PriorSpec {
    /// Prior informed by the earlier no-intervention study. The `a1` block
    /// shares the `b` prior.
    pub fn informative() -> Self {
        let sd_beta = 29.624;
        Self::from_blocks(
            [0.0, 4.925, 0.0, 0.0, 82.209],
            [29.090, 30.186, 29.624, 12.989, 46.240].map(|s: f64| s * s),
            [0.0; ADVANTAGE_DIM],
            SMatrix::<f64, ADVANTAGE_DIM, ADVANTAGE_DIM>::identity() * (sd_beta * sd_beta),
            3396.449,
        )
        .expect("informative prior is positive definite")
    }

    pub fn from_blocks(
        mu_alpha0: [f64; ALG_BASELINE_DIM],
        var_alpha0: [f64; ALG_BASELINE_DIM],
        mu_beta: [f64; ADVANTAGE_DIM],
        sigma_beta: SMatrix<f64, ADVANTAGE_DIM, ADVANTAGE_DIM>,
        sigma2: f64,
    ) -> Result<Self> {
        let mut mu = ThetaVector::zeros();
        let mut sigma = ThetaMatrix::zeros();
        for i in 0..ALG_BASELINE_DIM {
            mu[i] = mu_alpha0[i];
            sigma[(i, i)] = var_alpha0[i];
        }
        for offset in [ALG_BASELINE_DIM, BETA_OFFSET] {
            for i in 0..ADVANTAGE_DIM {
                mu[offset + i] = mu_beta[i];
                for j in 0..ADVANTAGE_DIM {
                    sigma[(offset + i, offset + j)] = sigma_beta[(i, j)];
                }
            }
        }
        let prior = Self { mu, sigma, sigma2 };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be positive, got {}",
                self.sigma2
            )));
        }
        if (self.sigma - self.sigma.transpose()).amax() > 1e-10 {
            return Err(Error::InvalidArgument("prior covariance is not symmetric".into()));
        }
        if self.sigma.cholesky().is_none() {
            return Err(Error::InvalidArgument(
                "prior covariance is not positive definite".into(),
            ));
        }
        Ok(())
    }
}

/// Gaussian posterior over `theta`. Immutable once published; shared
/// read-only across users between weekly updates.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorState {
    pub mu: ThetaVector,
    pub sigma: ThetaMatrix,
    pub sigma2: f64,
}

impl PosteriorState {
    pub fn from_prior(prior: &PriorSpec) -> Self {
        Self {
            mu: prior.mu,
            sigma: prior.sigma,
            sigma2: prior.sigma2,
        }
    }

    pub fn beta_mean(&self) -> SVector<f64, ADVANTAGE_DIM> {
        self.mu.fixed_rows::<ADVANTAGE_DIM>(BETA_OFFSET).into_owned()
    }

    pub fn beta_cov(&self) -> SMatrix<f64, ADVANTAGE_DIM, ADVANTAGE_DIM> {
        self.sigma
            .fixed_view::<ADVANTAGE_DIM, ADVANTAGE_DIM>(BETA_OFFSET, BETA_OFFSET)
            .into_owned()
    }
}

/// One bandit decision and the reward it produced.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionRecord {
    pub user_id: usize,
    /// User-local decision index, starting at 1.
    pub decision_index: u32,
    /// Global study slot (0-based) at which the decision was made.
    pub slot: u32,
    pub m: [f64; ALG_BASELINE_DIM],
    pub f: [f64; ADVANTAGE_DIM],
    /// Posterior probability of a positive advantage before clipping.
    pub pi_tilde: f64,
    /// Clipped probability that governed the action draw.
    pub pi: f64,
    pub action: u8,
    pub quality: f64,
    pub cost: f64,
    pub surrogate_reward: f64,
}

impl DecisionRecord {
    pub fn phi(&self) -> ThetaVector {
        joint_feature(&self.m, &self.f, self.pi, self.action)
    }
}

/// `[m, pi f, (action - pi) f]`.
pub fn joint_feature(
    m: &[f64; ALG_BASELINE_DIM],
    f: &[f64; ADVANTAGE_DIM],
    pi: f64,
    action: u8,
) -> ThetaVector {
    let centered = action as f64 - pi;
    let mut phi = ThetaVector::zeros();
    for (i, v) in m.iter().enumerate() {
        phi[i] = *v;
    }
    for (i, v) in f.iter().enumerate() {
        phi[ALG_BASELINE_DIM + i] = pi * v;
        phi[BETA_OFFSET + i] = centered * v;
    }
    phi
}

/// Conjugate posterior given every pooled record so far.
///
/// `Sigma = (Phi'Phi / s2 + Sigma0^-1)^-1`, `mu = Sigma (Phi'R / s2 + Sigma0^-1 mu0)`.
/// An empty batch returns the prior unchanged.
pub fn posterior_update(prior: &PriorSpec, batch: &[DecisionRecord]) -> Result<PosteriorState> {
    if batch.is_empty() {
        return Ok(PosteriorState::from_prior(prior));
    }
    let mut gram = ThetaMatrix::zeros();
    let mut xty = ThetaVector::zeros();
    for r in batch {
        let phi = r.phi();
        gram.ger(1.0, &phi, &phi, 1.0);
        xty.axpy(r.surrogate_reward, &phi, 1.0);
    }
    posterior_from_sufficient_stats(prior, &gram, &xty)
}

/// Posterior from accumulated `Phi'Phi` and `Phi'R`.
pub fn posterior_from_sufficient_stats(
    prior: &PriorSpec,
    gram: &ThetaMatrix,
    xty: &ThetaVector,
) -> Result<PosteriorState> {
    let prior_chol = prior
        .sigma
        .cholesky()
        .ok_or_else(|| Error::Decomposition("prior covariance is not positive definite".into()))?;
    let prior_precision = prior_chol.inverse();
    let mut precision = gram / prior.sigma2 + prior_precision;
    precision = (precision + precision.transpose()) * 0.5;
    let rhs = xty / prior.sigma2 + prior_chol.solve(&prior.mu);
    let chol = precision
        .cholesky()
        .ok_or_else(|| Error::Decomposition("posterior precision is not positive definite".into()))?;
    let sigma = chol.inverse();
    let sigma = (sigma + sigma.transpose()) * 0.5;
    let mu = chol.solve(&rhs);
    Ok(PosteriorState {
        mu,
        sigma,
        sigma2: prior.sigma2,
    })
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Posterior probability that `f' beta > 0`.
pub fn prob_positive_advantage(post: &PosteriorState, f: &[f64; ADVANTAGE_DIM]) -> f64 {
    let f = SVector::<f64, ADVANTAGE_DIM>::from_column_slice(f);
    let mean = f.dot(&post.beta_mean());
    let mut var = (f.transpose() * post.beta_cov() * f)[(0, 0)];
    if var < 0.0 {
        NEGATIVE_VARIANCE_CLAMPS.fetch_add(1, Ordering::Relaxed);
        var = 0.0;
    }
    if var == 0.0 {
        return if mean == 0.0 {
            0.5
        } else if mean > 0.0 {
            1.0
        } else {
            0.0
        };
    }
    normal_cdf(mean / var.sqrt())
}

/// Bounds applied to action-selection probabilities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClipBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for ClipBounds {
    fn default() -> Self {
        Self { min: 0.1, max: 0.9 }
    }
}

impl ClipBounds {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(0.0 < min && min <= max && max < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "clip bounds need 0 < min <= max < 1, got ({min}, {max})"
            )));
        }
        Ok(Self { min, max })
    }
}

pub fn clip(pi: f64, bounds: ClipBounds) -> f64 {
    bounds.max.min(pi.max(bounds.min))
}

/// Bernoulli(pi) action.
pub fn select_action<R: Rng + ?Sized>(pi: f64, rng: &mut R) -> u8 {
    u8::from(rng.random::<f64>() < pi)
}

/// Write a posterior snapshot: a `sigma2` line, a `mu` line, then one `sigma`
/// line per covariance row.
pub fn write_posterior<W: Write>(out: W, post: &PosteriorState) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    w.write_record(["sigma2".to_string(), post.sigma2.to_string()])?;
    let mut row = vec!["mu".to_string()];
    row.extend(post.mu.iter().map(|v| v.to_string()));
    w.write_record(&row)?;
    for i in 0..THETA_DIM {
        let mut row = vec!["sigma".to_string()];
        row.extend(post.sigma.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<posterior>", e))?;
    Ok(())
}

pub fn read_posterior<R: Read>(input: R) -> Result<PosteriorState> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let rows: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    let parse = |row: usize, k: usize| -> Result<f64> {
        let raw = rows[row].get(k).unwrap_or("");
        raw.parse().map_err(|_| Error::UnparseableNumeric {
            row: row + 1,
            field: rows[row].get(0).unwrap_or("").to_string(),
            value: raw.to_string(),
        })
    };
    if rows.len() != THETA_DIM + 2
        || &rows[0][0] != "sigma2"
        || &rows[1][0] != "mu"
        || rows[2..].iter().any(|r| &r[0] != "sigma" || r.len() != THETA_DIM + 1)
        || rows[1].len() != THETA_DIM + 1
    {
        return Err(Error::SchemaMismatch(
            "posterior file needs sigma2, mu and 13 sigma rows".into(),
        ));
    }
    let sigma2 = parse(0, 1)?;
    let mut mu = ThetaVector::zeros();
    let mut sigma = ThetaMatrix::zeros();
    for i in 0..THETA_DIM {
        mu[i] = parse(1, i + 1)?;
        for j in 0..THETA_DIM {
            sigma[(i, j)] = parse(2 + i, j + 1)?;
        }
    }
    Ok(PosteriorState { mu, sigma, sigma2 })
}

pub const DECISION_LOG_HEADER: [&str; 18] = [
    "user", "t", "slot", "m0", "m1", "m2", "m3", "m4", "f0", "f1", "f2", "f3", "pi_tilde", "pi",
    "action", "quality", "cost", "reward",
];

/// Write decision records as CSV, one row per decision.
pub fn write_decision_log<W: Write>(out: W, records: &[DecisionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DECISION_LOG_HEADER)?;
    for r in records {
        let mut row = vec![
            r.user_id.to_string(),
            r.decision_index.to_string(),
            r.slot.to_string(),
        ];
        row.extend(r.m.iter().chain(&r.f).map(|v| v.to_string()));
        row.extend([
            r.pi_tilde.to_string(),
            r.pi.to_string(),
            r.action.to_string(),
            r.quality.to_string(),
            r.cost.to_string(),
            r.surrogate_reward.to_string(),
        ]);
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<decision log>", e))?;
    Ok(())
}

pub fn read_decision_log<R: Read>(input: R) -> Result<Vec<DecisionRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    if rdr.headers()?.iter().collect::<Vec<_>>() != DECISION_LOG_HEADER {
        return Err(Error::SchemaMismatch("unexpected decision log header".into()));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let field = |k: usize| -> Result<f64> {
            row[k].parse().map_err(|_| Error::UnparseableNumeric {
                row: line,
                field: DECISION_LOG_HEADER[k].to_string(),
                value: row[k].to_string(),
            })
        };
        let mut m = [0.0; ALG_BASELINE_DIM];
        let mut f = [0.0; ADVANTAGE_DIM];
        for (k, v) in m.iter_mut().enumerate() {
            *v = field(3 + k)?;
        }
        for (k, v) in f.iter_mut().enumerate() {
            *v = field(8 + k)?;
        }
        out.push(DecisionRecord {
            user_id: field(0)? as usize,
            decision_index: field(1)? as u32,
            slot: field(2)? as u32,
            m,
            f,
            pi_tilde: field(12)?,
            pi: field(13)?,
            action: field(14)? as u8,
            quality: field(15)?,
            cost: field(16)?,
            surrogate_reward: field(17)?,
        });
    }
    Ok(out)
}
