mod common;

use brushbandit::env::*;
use brushbandit::features::CostParams;
use brushbandit::Error;
use common::sigmoid_ref;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Standard normal CDF by composite Simpson integration of the density.
fn normal_cdf_simpson(x: f64) -> f64 {
    let lo = -12.0;
    let n = 20_000;
    let h = (x - lo) / n as f64;
    let pdf = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = pdf(lo) + pdf(x);
    for i in 1..n {
        let z = lo + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(z);
    }
    s * h / 3.0
}

fn truncated_mean(mu: f64, sigma: f64) -> f64 {
    let alpha = -mu / sigma;
    let pdf = (-0.5 * alpha * alpha).exp() / (2.0 * std::f64::consts::PI).sqrt();
    mu + sigma * pdf / (1.0 - normal_cdf_simpson(alpha))
}

#[test]
fn truncated_normal_mean_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let stats = PopulationEffectStats::default();
    let n = 100_000;
    let (mut sb, mut sn) = (0.0, 0.0);
    for _ in 0..n {
        let (b, d) = impute_effect_sizes(&stats, &mut rng).unwrap();
        assert!(b >= 0.0 && d >= 0.0);
        sb += b;
        sn += d;
    }
    assert!((sb / n as f64 - truncated_mean(0.743, 0.177)).abs() < 0.01);
    assert!((sn / n as f64 - truncated_mean(0.227, 0.109)).abs() < 0.01);
}

#[test]
fn zero_sd_is_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let stats = PopulationEffectStats {
        sigma_b: 0.0,
        sigma_n: 0.0,
        ..PopulationEffectStats::default()
    };
    for _ in 0..10 {
        assert_eq!(impute_effect_sizes(&stats, &mut rng).unwrap(), (0.743, 0.227));
    }
}

#[test]
fn unit_rate_mean() {
    let w_b = [0.4, -0.2, 0.1, 0.0, 0.3, 0.2];
    let model = UserEnvModel::new(w_b, [0.0; 6], 0.5, 0.5).unwrap();
    let g = [1.0, 1.0, -0.5, 0.0, 0.5, 0.1];
    let h = [1.0, 1.0, -0.5, 0.0, 0.1];
    let p = model.zip_params(&g, &h, 0, 1.0).unwrap();
    assert_eq!(p.lambda, 1.0);
    let eta: f64 = g.iter().zip(&w_b).map(|(a, b)| a * b).sum();
    assert!((p.mean() - (1.0 - sigmoid_ref(eta))).abs() < 1e-15);
}

#[test]
fn negative_treatment_sum_means_no_effect() {
    let model = UserEnvModel::new([0.1; 6], [3.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.8, 0.3).unwrap();
    let g = [1.0, 0.0, -0.9, 0.0, 0.5, -1.0];
    let h = [1.0, 0.0, -0.9, 0.0, -1.0];
    assert!(h.iter().sum::<f64>() < 0.0);
    assert_eq!(
        model.zip_params(&g, &h, 1, 1.0).unwrap(),
        model.zip_params(&g, &h, 0, 1.0).unwrap()
    );
}

#[test]
fn fully_shrunk_effects_do_nothing() {
    let mut model = UserEnvModel::new([0.1; 6], [3.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.8, 0.3).unwrap();
    model.habituation =
        habituation_step(model.habituation, 0.0, 0.9, &CostParams::default(), 5);
    assert_eq!(model.habituation.shrink_power(), 1);
    let g = [1.0, 1.0, 0.5, 0.0, 0.5, 0.0];
    let h = [1.0, 1.0, 0.5, 0.0, 0.0];
    assert_eq!(
        model.zip_params(&g, &h, 1, 0.0).unwrap(),
        model.zip_params(&g, &h, 0, 0.0).unwrap()
    );
    assert_ne!(
        model.zip_params(&g, &h, 1, 0.5).unwrap(),
        model.zip_params(&g, &h, 0, 0.5).unwrap()
    );
}

#[test]
fn overflowing_rate_is_degenerate() {
    let model = UserEnvModel::new([0.0; 6], [800.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.0, 0.0).unwrap();
    let err = model
        .zip_params(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0, 0.0], 0, 1.0)
        .unwrap_err();
    assert!(matches!(err, Error::ModelDegenerate(_)));
}

#[test]
fn recovery_after_failed_recheck() {
    let p = CostParams::default();
    let mut s = HabituationState::new();
    s = habituation_step(s, 0.0, 0.9, &p, 10);
    assert_eq!(s.shrink_power(), 1);
    for t in 11..24 {
        s = habituation_step(s, 0.0, 0.9, &p, t);
        assert_eq!(s.shrink_power(), 1, "no evaluation between checks");
    }
    s = habituation_step(s, 0.0, 0.1, &p, 24);
    assert_eq!(s.shrink_power(), 0);
    assert_eq!(s.last_check(), None);
    assert!(s.ever_triggered());
    // Watched every step again after recovery.
    s = habituation_step(s, 0.0, 0.9, &p, 25);
    assert_eq!(s.shrink_power(), 1);
}

#[test]
fn population_stats_examples() {
    // Per-user mean |w| of 0.5 and 0.9 across the five slopes.
    let wb1 = [9.0, 0.5, -0.5, 0.5, -0.5, 0.5];
    let wb2 = [-3.0, 0.9, 0.9, -0.9, 0.9, 0.9];
    let wp = [1.0, 0.2, 0.2, 0.2, 0.2, 0.2];
    let s = population_effect_stats(&[(wb1, wp), (wb2, wp)]).unwrap();
    assert!((s.delta_b_mean - 0.7).abs() < 1e-12);
    let sample_sd = ((0.2f64.powi(2) + 0.2f64.powi(2)) / 1.0).sqrt();
    assert!((s.sigma_b - sample_sd).abs() < 1e-12);
    assert!(s.sigma_n.abs() < 1e-12);
    assert!((s.delta_n_mean - 0.2).abs() < 1e-12);

    assert!(matches!(
        population_effect_stats(&[(wb1, wp)]),
        Err(Error::InsufficientData(_))
    ));
}

#[test]
fn model_file_round_trip() {
    let records = vec![
        ModelRecord {
            id: "u1".into(),
            w_b: [0.1, -0.2, 0.3, -0.4, 0.5, -0.6],
            w_p: [4.0, 0.01, 0.02, 0.03, 0.04, 1.0 / 3.0],
            effects: Some((0.7, 0.2)),
        },
        ModelRecord {
            id: "u2".into(),
            w_b: [0.0; 6],
            w_p: [3.0; 6],
            effects: None,
        },
    ];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("models.csv");
    write_models_file(&path, &records).unwrap();
    assert_eq!(read_models_file(&path).unwrap(), records);
    assert!(matches!(
        read_models_file(&dir.path().join("missing.csv")),
        Err(Error::FileNotFound(_))
    ));
}

proptest! {
    #[test]
    fn action_never_hurts(
        wb in proptest::array::uniform6(-1.0..1.0f64),
        wp in proptest::array::uniform6(-0.5..0.5f64),
        db in 0.0..1.5f64, dn in 0.0..0.6f64,
        tod in 0u8..=1, prior in -1.0..1.3f64, weekend in 0u8..=1, prop in 0.0..=1.0f64, day in -1.0..=1.0f64,
    ) {
        let model = UserEnvModel::new(wb, wp, db, dn).unwrap();
        let g = [1.0, tod as f64, prior, weekend as f64, prop, day];
        let h = [1.0, tod as f64, prior, weekend as f64, day];
        let off = model.zip_params(&g, &h, 0, 1.0).unwrap();
        let on = model.zip_params(&g, &h, 1, 1.0).unwrap();
        prop_assert!(1.0 - on.p_zero >= 1.0 - off.p_zero);
        prop_assert!(on.lambda >= off.lambda);
    }

    #[test]
    fn shrinkage_changes_at_most_once_per_period(
        seq in proptest::collection::vec((0.0..=180.0f64, 0.0..=1.0f64), 140)
    ) {
        let p = CostParams::default();
        let mut s = HabituationState::new();
        let mut last_change: Option<u32> = None;
        for (i, (b, a)) in seq.iter().enumerate() {
            let t = i as u32 + 1;
            let next = habituation_step(s, *b, *a, &p, t);
            if next.shrink_power() > s.shrink_power() {
                if let Some(prev) = last_change {
                    prop_assert!(t - prev >= HABITUATION_PERIOD);
                }
                prop_assert_eq!(next.shrink_power(), s.shrink_power() + 1);
                last_change = Some(t);
            }
            if !next.ever_triggered() {
                prop_assert_eq!(next.shrink_power(), 0);
            }
            prop_assert_eq!(next.multiplier(0.5), 0.5f64.powi(next.shrink_power() as i32));
            s = next;
        }
    }
}
