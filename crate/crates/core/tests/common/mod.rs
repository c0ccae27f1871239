//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the crate's numerical code paths.

#![allow(dead_code, clippy::needless_range_loop)]

use std::io::Write;
use std::path::Path;

use brushbandit::bandit::DecisionRecord;
use brushbandit::fit::FitObservation;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

pub type Dense = Vec<Vec<f64>>;

pub fn dense_identity(n: usize) -> Dense {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &Dense) -> Dense {
    let n = a.len();
    let mut m: Dense = a
        .iter()
        .zip(dense_identity(n))
        .map(|(row, id)| row.iter().copied().chain(id).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        assert!(p.abs() > 1e-300, "singular matrix in oracle");
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let factor = m[r][col];
                if factor != 0.0 {
                    for c in 0..2 * n {
                        m[r][c] -= factor * m[col][c];
                    }
                }
            }
        }
    }
    m.into_iter().map(|row| row[n..].to_vec()).collect()
}

pub fn mat_vec(a: &Dense, x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum())
        .collect()
}

/// Lower Cholesky factor by the textbook column recurrence.
pub fn cholesky_lower(a: &Dense) -> Option<Dense> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if d <= 0.0 {
            return None;
        }
        l[j][j] = d.sqrt();
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / l[j][j];
        }
    }
    Some(l)
}

/// `[m, pi f, (a - pi) f]` written out by hand.
pub fn phi_oracle(r: &DecisionRecord) -> Vec<f64> {
    let mut v: Vec<f64> = r.m.to_vec();
    v.extend(r.f.iter().map(|x| r.pi * x));
    v.extend(r.f.iter().map(|x| (r.action as f64 - r.pi) * x));
    v
}

/// Posterior mean and covariance from the normal equations, all dense.
pub fn posterior_oracle(
    mu0: &[f64],
    sigma0: &Dense,
    sigma2: f64,
    records: &[DecisionRecord],
) -> (Vec<f64>, Dense) {
    let n = mu0.len();
    let prec0 = gauss_jordan_inverse(sigma0);
    let mut a = prec0.clone();
    let mut rhs = mat_vec(&prec0, mu0);
    for r in records {
        let phi = phi_oracle(r);
        for i in 0..n {
            rhs[i] += phi[i] * r.surrogate_reward / sigma2;
            for j in 0..n {
                a[i][j] += phi[i] * phi[j] / sigma2;
            }
        }
    }
    let sigma = gauss_jordan_inverse(&a);
    let mu = mat_vec(&sigma, &rhs);
    (mu, sigma)
}

pub fn random_record(rng: &mut ChaCha8Rng, user_id: usize, t: u32) -> DecisionRecord {
    let b = rng.random_range(-1.0..1.2);
    let abar = rng.random_range(0.0..1.0);
    let weekend = if rng.random_bool(2.0 / 7.0) { 1.0 } else { 0.0 };
    let tod = (t % 2) as f64;
    let pi = rng.random_range(0.1..0.9);
    let action = u8::from(rng.random_bool(pi));
    let quality = rng.random_range(0.0..180.0f64).round();
    let cost = if action == 1 { 100.0 * f64::from(rng.random_bool(0.2)) } else { 0.0 };
    DecisionRecord {
        user_id,
        decision_index: t,
        slot: t - 1,
        m: [1.0, tod, b, abar, weekend],
        f: [1.0, tod, b, abar],
        pi_tilde: pi,
        pi,
        action,
        quality,
        cost,
        surrogate_reward: quality - cost,
    }
}

pub fn sigmoid_ref(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn ln_factorial(q: u32) -> f64 {
    (2..=q).map(|k| (k as f64).ln()).sum()
}

/// Random baseline feature vector covering the plausible range of each entry.
pub fn random_g(rng: &mut ChaCha8Rng) -> [f64; 6] {
    [
        1.0,
        f64::from(rng.random_bool(0.5)),
        rng.random_range(-0.9..1.2),
        f64::from(rng.random_bool(2.0 / 7.0)),
        rng.random_range(0.0..1.0),
        rng.random_range(-1.0..1.0),
    ]
}

/// Sessions drawn from the zero-inflated Poisson with known weights.
pub fn zip_sessions(
    rng: &mut ChaCha8Rng,
    w_b: &[f64; 6],
    w_p: &[f64; 6],
    n: usize,
) -> Vec<FitObservation> {
    (0..n)
        .map(|_| {
            let g = random_g(rng);
            let eta_b: f64 = g.iter().zip(w_b).map(|(a, b)| a * b).sum();
            let eta_p: f64 = g.iter().zip(w_p).map(|(a, b)| a * b).sum();
            let zero = rng.random_bool(sigmoid_ref(eta_b));
            let count: f64 = Poisson::new(eta_p.exp()).unwrap().sample(rng);
            FitObservation {
                g,
                q: if zero { 0.0 } else { count },
            }
        })
        .collect()
}

pub fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Session CSV for `users` users over `days` days, with a few missing slots.
pub fn write_session_csv(path: &Path, rng: &mut ChaCha8Rng, users: usize, days: u32) {
    let mut f = std::fs::File::create(path).unwrap();
    writeln!(
        f,
        "user_id,day_index,time_of_day,brushing_duration,pressure_duration"
    )
    .unwrap();
    for u in 0..users {
        let level = 60.0 + 15.0 * u as f64;
        for day in 1..=days {
            for tod in ["morning", "evening"] {
                if rng.random_bool(0.05) {
                    continue;
                }
                let duration = if rng.random_bool(0.25) {
                    0.0
                } else {
                    (level + 25.0 * std_normal(rng)).max(0.0)
                };
                let pressure = (5.0 * std_normal(rng)).abs();
                writeln!(f, "user{u},{day},{tod},{duration:.1},{pressure:.1}").unwrap();
            }
        }
    }
}
