mod common;

use popest_core::meanmodel::{DesignSpec, ModelSpec};
use popest_core::mle::{self, FitOptions, FittedModel, FittedStratum};
use popest_core::uncertainty::{self, plugin_interval, BootstrapConfig};
use popest_core::{CountFamily, Dataset, Error, RecordKey};

fn fixture() -> (Dataset, FittedModel) {
    let data = common::synthetic_dataset(80, 31, CountFamily::ZTNB2, 0.7, 0.8, Some(2.5));
    let fit = mle::fit(&data, &ModelSpec::new(CountFamily::ZTNB2, DesignSpec::intercept_only()), &FitOptions::default()).unwrap();
    (data, fit)
}

/// A fit reduced to one stratum with N = 100 and alpha = 0.5.
fn single_country(var_alpha: f64) -> FittedModel {
    let (_, mut fit) = fixture();
    fit.strata = vec![FittedStratum {
        key: RecordKey::new("Q1", "A", &[]),
        m: 10,
        mu_hat: 10.0,
        xi_term: 10.0,
        registered: 100,
        x_alpha: vec![1.0],
    }];
    fit.params.alpha = vec![0.5];
    let mut cov = vec![vec![0.0; 3]; 3];
    cov[0][0] = var_alpha;
    fit.covariance = Some(cov);
    fit
}

#[test]
fn plugin_zero_width() {
    let iv = plugin_interval(&single_country(0.0), 0.95).unwrap();
    assert!((iv.lower - 10.0).abs() < 1e-12 && (iv.upper - 10.0).abs() < 1e-12);
}

#[test]
fn plugin_direct_powers() {
    let se = 0.1 / 1.959_963_984_540_054;
    let iv = plugin_interval(&single_country(se * se), 0.95).unwrap();
    assert!((iv.lower - 100f64.powf(0.4)).abs() < 1e-9, "{iv:?}");
    assert!((iv.upper - 100f64.powf(0.6)).abs() < 1e-9, "{iv:?}");
}

#[test]
fn plugin_monotone_in_level() {
    let (_, fit) = fixture();
    let mut prev = plugin_interval(&fit, 0.5).unwrap();
    for level in [0.8, 0.9, 0.95, 0.99] {
        let iv = plugin_interval(&fit, level).unwrap();
        assert!(iv.lower <= prev.lower && iv.upper >= prev.upper);
        prev = iv;
    }
    let mut no_cov = fit.clone();
    no_cov.covariance = None;
    assert!(matches!(plugin_interval(&no_cov, 0.95), Err(Error::Interval(_))));
}

#[test]
fn intervals_contain_point_estimate() {
    let (data, fit) = fixture();
    let r = uncertainty::parametric_bootstrap(&data, &fit, 500, 17).unwrap();
    assert_eq!(r.draws.len() + r.failures, 500);
    for (name, iv) in &r.intervals {
        assert!(iv.contains(fit.xi_hat), "{name}: {iv:?} vs {}", fit.xi_hat);
    }
    assert!(!r.unreliable);
}

#[test]
fn bootstrap_is_order_free_and_repeatable() {
    let (data, fit) = fixture();
    let a = uncertainty::parametric_bootstrap(&data, &fit, 30, 5).unwrap();
    let b = uncertainty::parametric_bootstrap(&data, &fit, 30, 5).unwrap();
    assert_eq!(a, b);
    // replicate i depends only on (seed, i)
    let longer = uncertainty::parametric_bootstrap(&data, &fit, 40, 5).unwrap();
    assert_eq!(&longer.draws[..30], &a.draws[..]);
    let other = uncertainty::parametric_bootstrap(&data, &fit, 30, 6).unwrap();
    assert_ne!(other.draws, a.draws);
}

#[test]
fn bootstrap_preconditions() {
    let (data, fit) = fixture();
    assert!(matches!(
        uncertainty::parametric_bootstrap_with(&data, &fit, &BootstrapConfig::new(0, 1)),
        Err(Error::Spec(_))
    ));
    let mut no_cov = fit.clone();
    no_cov.covariance = None;
    assert!(matches!(uncertainty::parametric_bootstrap(&data, &no_cov, 5, 1), Err(Error::Interval(_))));
}

#[test]
fn few_draws_skip_spin_with_note() {
    let (data, fit) = fixture();
    let r = uncertainty::parametric_bootstrap(&data, &fit, 3, 1).unwrap();
    assert!(r.intervals.contains_key("percentile"));
    assert!(!r.intervals.contains_key("spin"));
    assert!(r.interval_notes.contains_key("spin"));
}
