use std::f64::consts::PI;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;

fn annual(t: usize, amp: f64) -> f64 {
    amp * (2.0 * PI * t as f64 / 12.0).sin()
}

fn trend(t: usize) -> f64 {
    100.0 + 0.08 * t as f64 + 2e-4 * (t as f64).powi(2)
}

fn variance(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

#[test]
fn embed_by_hand() {
    let m = embed(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
    assert_eq!(m, DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 3.0, 4.0]));
    assert!(matches!(embed(&[1.0, 2.0, 3.0], 2), Err(Error::TooShort { .. })));
}

#[test]
fn trajectory_is_hankel() {
    let x: Vec<f64> = (0..60).map(|t| (t as f64 * 0.7).sin() + t as f64).collect();
    let m = embed(&x, 24).unwrap();
    for i in 1..m.nrows() {
        for j in 0..m.ncols() - 1 {
            assert_eq!(m[(i, j)], m[(i - 1, j + 1)]);
        }
    }
}

#[test]
fn constant_series_is_rank_one() {
    let triples = decompose(&embed(&[3.5; 48], 12).unwrap()).unwrap();
    let s = &triples.singular_values;
    assert!(s[1] < 1e-10 * s[0]);
}

#[test]
fn svd_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..100).map(|_| rng.random_range(-5.0..5.0)).collect();
    let m = embed(&x, 30).unwrap();
    let triples = decompose(&m).unwrap();
    let s = &triples.singular_values;
    assert!(s.windows(2).all(|w| w[0] >= w[1]));
    let energy: f64 = s.iter().map(|v| v * v).sum();
    assert!((energy - m.norm_squared()).abs() < 1e-9 * m.norm_squared());
    assert!((triples.recompose() - &m).norm() < 1e-10 * m.norm());

    // The fast diagonal average agrees with forming each elementary matrix.
    for i in [0, 7, 29] {
        let fast = triples.component(i);
        let slow = hankelize(&triples.elementary(i));
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn sinusoid_is_a_pair() {
    let x: Vec<f64> = (0..240).map(|t| annual(t, 1.0)).collect();
    let s = decompose(&embed(&x, 60).unwrap()).unwrap().singular_values;
    assert!(s[1] > 0.5 * s[0]);
    assert!(s[2] < 1e-8 * s[0]);
}

#[test]
fn rank_one_matrix() {
    let u = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
    let v = DMatrix::from_row_slice(1, 4, &[1.0, -1.0, 0.5, 2.0]);
    let s = decompose(&(u * v)).unwrap().singular_values;
    assert!(s[1] < 1e-10 * s[0] && s[2] < 1e-10 * s[0]);
}

#[test]
fn hankelize_by_hand() {
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 5.0]);
    assert_eq!(hankelize(&m), vec![1.0, 3.0, 5.0]);
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 5.0]);
    assert_eq!(hankelize(&m), vec![1.0, 3.0, 5.0]);
}

#[test]
fn hankelize_fixed_point_and_linearity() {
    let x: Vec<f64> = (0..50).map(|t| (t as f64).sqrt()).collect();
    let h = hankelize(&embed(&x, 20).unwrap());
    for (a, b) in h.iter().zip(&x) {
        assert!((a - b).abs() < 1e-14);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = DMatrix::from_fn(5, 9, |_, _| rng.random_range(-1.0..1.0));
    let b = DMatrix::from_fn(5, 9, |_, _| rng.random_range(-1.0..1.0));
    let sum = hankelize(&(&a + &b));
    let parts: Vec<f64> = hankelize(&a).iter().zip(hankelize(&b)).map(|(x, y)| x + y).collect();
    for (s, p) in sum.iter().zip(&parts) {
        assert!((s - p).abs() < 1e-14);
    }
}

#[test]
fn band_arithmetic() {
    let c = SsaConfig::default();
    assert_eq!(classify_frequency(Some(0.0), &c), Group::Trend);
    assert_eq!(classify_frequency(Some(1.0 / 121.0), &c), Group::Trend);
    assert_eq!(classify_frequency(Some(1.0 / 120.0), &c), Group::Residual);
    assert_eq!(classify_frequency(Some(1.0 / 24.0), &c), Group::Residual);
    for k in 1..=6 {
        assert_eq!(classify_frequency(Some(k as f64 / 12.0), &c), Group::Seasonal);
        assert_eq!(classify_frequency(Some(k as f64 / 12.0 + 0.0039), &c), Group::Seasonal);
        assert_eq!(classify_frequency(Some(k as f64 / 12.0 - 0.0041), &c), Group::Residual);
    }
    assert_eq!(classify_frequency(None, &c), Group::Residual);
}

#[test]
fn two_year_cycle_is_residual() {
    let x: Vec<f64> = (0..372).map(|t| (2.0 * PI * t as f64 / 24.0).cos()).collect();
    let d = decompose_series(&x, &SsaConfig::default()).unwrap();
    assert!(variance(&d.residual) > 0.99 * variance(&x));
}

#[test]
fn pure_harmonics_land_in_seasonal() {
    for p in [12.0, 6.0, 4.0] {
        let x: Vec<f64> = (0..372).map(|t| 3.0 * (2.0 * PI * t as f64 / p).sin()).collect();
        let d = decompose_series(&x, &SsaConfig::default()).unwrap();
        assert!(
            variance(&d.seasonal) >= 0.99 * variance(&x),
            "period {p}: {} of {}",
            variance(&d.seasonal),
            variance(&x)
        );
    }
}

#[test]
fn groups_sum_to_original() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = (0..372)
        .map(|t| trend(t) + annual(t, 20.0) + 3.0 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let d = decompose_series(&x, &SsaConfig::default()).unwrap();
    assert!(rel_err(&d.reconstructed(), &x) < 1e-8);
    assert_eq!(d.eigentriples.len(), 120);
    assert!(d
        .eigentriples
        .windows(2)
        .all(|w| w[0].singular_value >= w[1].singular_value));
}

/// Offset noise series; with a bare machine-epsilon tolerance the SVD of the
/// thirteenth one reconstructed to only ~1e-4.
#[test]
fn exact_on_offset_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let level = rng.random_range(-100.0..100.0);
        let x: Vec<f64> = (0..372)
            .map(|_| level + 10.0 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let d = decompose_series(&x, &SsaConfig::default()).unwrap();
        assert!(rel_err(&d.reconstructed(), &x) < 1e-12);
    }
}

#[test]
fn trend_recovery_on_noisy_signal() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 372;
    let true_trend: Vec<f64> = (0..n).map(trend).collect();
    let x: Vec<f64> = (0..n)
        .map(|t| true_trend[t] + annual(t, 20.0) + 2.0 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let d = decompose_series(&x, &SsaConfig::default()).unwrap();
    let interior = 12..n - 12;
    let rmse = (interior
        .clone()
        .map(|t| (d.trend[t] - true_trend[t]).powi(2))
        .sum::<f64>()
        / interior.len() as f64)
        .sqrt();
    let range = true_trend[n - 1] - true_trend[0];
    assert!(rmse < 0.05 * range, "rmse {rmse}, range {range}");
}

fn mass_of(rows: &[Vec<f64>]) -> MassSeries {
    let n = rows[0].len();
    MassSeries::new(
        (0..rows.len()).collect(),
        n,
        MonthCalendar::new(1850, 1),
        rows.concat(),
    )
    .unwrap()
}

#[test]
fn noise_free_anomalies_vanish() {
    let x: Vec<f64> = (0..372).map(|t| trend(t) + annual(t, 20.0)).collect();
    let a = ssa_anomalies(&mass_of(&[x]), &SsaConfig::default()).unwrap();
    assert_eq!(a.method, Method::Ssa);
    assert_eq!(a.valid, 0..372);
    let worst = a.values.row(0)[12..360].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst <= 1e-6 * 20.0, "{worst}");
}

#[test]
fn injected_suppression_is_most_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut x: Vec<f64> = (0..372)
        .map(|t| trend(t) + annual(t, 20.0) + 1.0 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    for v in &mut x[200..203] {
        *v *= 0.6;
    }
    let a = ssa_anomalies(&mass_of(&[x]), &SsaConfig::default()).unwrap();
    let row = a.values.row(0);
    let mut order: Vec<usize> = (0..372).collect();
    order.sort_by(|&i, &j| row[i].total_cmp(&row[j]));
    let mut lowest = order[..3].to_vec();
    lowest.sort_unstable();
    assert_eq!(lowest, vec![200, 201, 202]);
}

#[test]
fn residual_is_centred() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x: Vec<f64> = (0..372)
        .map(|t| trend(t) + annual(t, 20.0) + 3.0 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let a = ssa_anomalies(&mass_of(&[x]), &SsaConfig::default()).unwrap();
    let r = a.values.row(0);
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    assert!(mean.abs() < 0.02 * variance(r).sqrt(), "mean {mean}");
}

#[test]
fn short_series_suggests_smaller_window() {
    let err = ssa_anomalies(&mass_of(&[vec![1.0; 200]]), &SsaConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Config(ref m) if m.contains("window_len <= 100")), "{err}");
    assert_eq!(err.class(), crate::ErrorClass::Config);
}

#[test]
fn config_bounds() {
    assert!(SsaConfig::default().validate().is_ok());
    for bad in [
        SsaConfig {
            window_len: 11,
            ..Default::default()
        },
        SsaConfig {
            trend_cutoff: 119.0,
            ..Default::default()
        },
        SsaConfig {
            seasonal_tolerance: 0.0,
            ..Default::default()
        },
    ] {
        assert!(bad.validate().is_err());
    }
}

#[test]
fn non_finite_input_is_numerical() {
    let mut x = vec![1.0; 300];
    x[17] = f64::NAN;
    let err = ssa_anomalies(&mass_of(&[vec![1.0; 300], x]), &SsaConfig::default()).unwrap_err();
    assert!(matches!(err, Error::NonFinite(ref m) if m.starts_with("cell 1")), "{err}");
}

#[test]
fn decomposition_csv_layout() {
    let x: Vec<f64> = (0..48).map(|t| trend(t) + annual(t, 5.0)).collect();
    let config = SsaConfig {
        window_len: 12,
        ..Default::default()
    };
    let d = decompose_series(&x, &config).unwrap();
    let mut buf = Vec::new();
    write_decomposition_csv(&mut buf, &x, &d, MonthCalendar::new(1850, 1)).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "month,original,trend,seasonal,residual");
    assert_eq!(lines.len(), 49);
    assert!(lines[1].starts_with("1850-01,"));
    assert!(lines[48].starts_with("1853-12,"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn decomposition_is_exact_and_a_partition(
        seed in any::<u64>(),
        n in 80usize..160,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..150.0)).collect();
        let config = SsaConfig { window_len: 24, ..Default::default() };
        let d = decompose_series(&x, &config).unwrap();
        prop_assert!(rel_err(&d.reconstructed(), &x) < 1e-8);
        prop_assert_eq!(d.eigentriples.len(), 24);
        for e in &d.eigentriples {
            let expected = classify_frequency(e.frequency, &config);
            prop_assert_eq!(e.group, expected);
        }
    }

    #[test]
    fn grouping_ignores_positive_scaling(seed in any::<u64>(), k in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..96)
            .map(|t| 50.0 + 0.2 * t as f64 + annual(t, 10.0) + rng.random_range(-2.0..2.0))
            .collect();
        let scaled: Vec<f64> = x.iter().map(|v| v * k).collect();
        let config = SsaConfig { window_len: 24, ..Default::default() };
        let a = decompose_series(&x, &config).unwrap();
        let b = decompose_series(&scaled, &config).unwrap();
        let ga: Vec<Group> = a.eigentriples.iter().map(|e| e.group).collect();
        let gb: Vec<Group> = b.eigentriples.iter().map(|e| e.group).collect();
        prop_assert_eq!(ga, gb);
    }
}
