//! End-to-end runs through the public API on small synthetic grids.

use std::f64::consts::PI;

use gpp_extremes::anomaly::Method;
use gpp_extremes::compare::{compare_methods, threshold_table};
use gpp_extremes::extremes::{cumulative_totals, extremes_report, Flag, Sign, ThresholdMode};
use gpp_extremes::grid::synth::{synth_generate, InjectedEvent, SynthSpec};
use gpp_extremes::grid::{flux_to_mass, MassSeries, MonthCalendar, Period, RegionMask};
use gpp_extremes::ssa::{ssa_anomalies, SsaConfig};
use gpp_extremes::vae::{
    load_checkpoint, normalize, reconstruct, save_checkpoint, train, vae_anomalies, TrainConfig,
    VaeArchitecture,
};

fn spec(events: Vec<InjectedEvent>) -> SynthSpec {
    SynthSpec {
        n_lat: 3,
        n_lon: 3,
        n_months: 372,
        start_year: 1850,
        start_month: 1,
        cell_area: 1e10.into(),
        land_frac: 1.0.into(),
        base: 4e-3.into(),
        trend_linear: 1e-5.into(),
        trend_quadratic: 0.0.into(),
        annual_amplitude: 1.5e-3.into(),
        noise_std: 2e-4.into(),
        events,
    }
}

fn small_arch() -> VaeArchitecture {
    VaeArchitecture {
        hidden: vec![32, 16],
        latent_dim: 3,
        ..VaeArchitecture::default()
    }
}

#[test]
fn both_engines_flag_a_strong_suppression() {
    let event = InjectedEvent {
        cell: 4,
        start: 150,
        months: 3,
        factor: 0.1,
    };
    let (grid, truth) = synth_generate(&spec(vec![event]), 21).unwrap();
    let mask = RegionMask::whole_grid("R", &grid);
    let mass = flux_to_mass(&grid, &mask).unwrap();
    let period = Period::new(1850, 1880);

    let ssa = ssa_anomalies(&mass, &SsaConfig::default()).unwrap();
    let (windows, norm) = normalize(&mass).unwrap();
    let config = TrainConfig {
        max_epochs: 60,
        seed: 2,
        ..TrainConfig::default()
    };
    let (model, _) = train(&windows, norm, &small_arch(), &config).unwrap();
    let vae = vae_anomalies(&mass, &reconstruct(&model, &mass).unwrap()).unwrap();

    let rs = extremes_report(&ssa, "R", period, ThresholdMode::TwoSided).unwrap();
    let rv = extremes_report(&vae, "R", period, ThresholdMode::TwoSided).unwrap();
    for r in [&rs, &rv] {
        assert_eq!(r.flags.n_valid_months(), 348);
        for s in &truth.samples {
            let k = s.month - r.flags.valid.start;
            assert_eq!(r.flags.row(s.cell)[k], Flag::Negative, "{:?}", r.thresholds.method);
        }
    }

    let stats = compare_methods(&rv, &rs).unwrap();
    assert!((0.0..=1.0).contains(&stats.jaccard_negative));
    assert!(stats.correlation_negative > 0.0);
    assert_eq!(stats.cumulative_vae, cumulative_totals(&rv));
    let table = threshold_table(&[stats]);
    assert_eq!(table.rows.len(), 1);
    assert_eq!(table.rows[0].vae_ggc, rv.thresholds.q_neg);
}

#[test]
fn checkpointed_model_reproduces_anomalies() {
    let (grid, _) = synth_generate(&spec(vec![]), 5).unwrap();
    let mass = flux_to_mass(&grid, &RegionMask::whole_grid("R", &grid)).unwrap();
    let (windows, norm) = normalize(&mass).unwrap();
    let config = TrainConfig {
        max_epochs: 5,
        seed: 9,
        ..TrainConfig::default()
    };
    let (model, report) = train(&windows, norm, &small_arch(), &config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m");
    save_checkpoint(&model, &path, 9, report.best_epoch).unwrap();
    let (loaded, manifest) = load_checkpoint(&path).unwrap();
    assert_eq!(manifest.seed, 9);
    let a = vae_anomalies(&mass, &reconstruct(&model, &mass).unwrap()).unwrap();
    let b = vae_anomalies(&mass, &reconstruct(&loaded, &mass).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.method, Method::Vae);
}

#[test]
fn vae_learns_the_annual_cycle() {
    let (n_cells, n_months) = (6, 240);
    let values: Vec<f64> = (0..n_cells)
        .flat_map(|c| {
            (0..n_months).map(move |t| {
                300.0 + (50.0 + 5.0 * c as f64) * (2.0 * PI * t as f64 / 12.0).cos()
            })
        })
        .collect();
    let mass = MassSeries::new(
        (0..n_cells).collect(),
        n_months,
        MonthCalendar::new(1900, 1),
        values,
    )
    .unwrap();
    let (windows, norm) = normalize(&mass).unwrap();
    let config = TrainConfig {
        max_epochs: 200,
        seed: 4,
        ..TrainConfig::default()
    };
    let (_, report) = train(&windows, norm, &VaeArchitecture::default(), &config).unwrap();
    assert!(
        report.best_validation_mse < 0.01,
        "best validation mse {}",
        report.best_validation_mse
    );
    assert!(report.history.len() <= 200);
}

#[test]
fn absolute_mode_uses_one_threshold() {
    let (grid, _) = synth_generate(&spec(vec![]), 8).unwrap();
    let mass = flux_to_mass(&grid, &RegionMask::whole_grid("R", &grid)).unwrap();
    let ssa = ssa_anomalies(&mass, &SsaConfig::default()).unwrap();
    let r = extremes_report(&ssa, "R", Period::new(1850, 1880), ThresholdMode::Absolute).unwrap();
    assert_eq!(r.thresholds.q_neg, r.thresholds.q_pos);
    let total = r.flags.count(Sign::Negative) + r.flags.count(Sign::Positive);
    let n = r.flags.flags.len() as f64;
    assert!((total as f64 / n - 0.05).abs() <= 1.0 / n + 1e-12);
}
