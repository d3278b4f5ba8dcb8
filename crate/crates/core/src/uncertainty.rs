//! Interval estimates for the target population and its bootstrap MSE.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataio::Dataset;
use crate::distributions::{self, EtaPoint};
use crate::error::{Error, Result};
use crate::meanmodel::{LikelihoodKernel, ParamVector, Problem};
use crate::mle::{self, FitOptions, FittedModel, LinearizedPoint};

/// Maximum redraws of an MVN parameter draw with `phi <= 0`.
pub const MAX_REDRAWS: usize = 100;
/// Replicate failure share above which the bootstrap is flagged unreliable.
pub const UNRELIABLE_SHARE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level <= 1.0 {
        Ok(())
    } else {
        Err(Error::Interval(format!("level must be in (0, 1], got {level}")))
    }
}

fn sorted_finite(samples: &[f64], min: usize) -> Result<Vec<f64>> {
    if samples.len() < min {
        return Err(Error::Interval(format!(
            "need at least {min} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Interval("samples must be finite".into()));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Linear-interpolation quantile on sorted data (position `h = (n-1)p + 1`).
fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn percentile_interval(samples: &[f64], level: f64) -> Result<Interval> {
    check_level(level)?;
    let v = sorted_finite(samples, 2)?;
    let tail = (1.0 - level) / 2.0;
    Ok(Interval {
        lower: quantile_sorted(&v, tail),
        upper: quantile_sorted(&v, 1.0 - tail),
    })
}

/// Shortest window of `ceil(level n)` order statistics; ties go to the lower window.
pub fn spin_interval(samples: &[f64], level: f64) -> Result<Interval> {
    check_level(level)?;
    let v = sorted_finite(samples, 10)?;
    let n = v.len();
    // guard against level*n landing a hair above an integer
    let w = ((level * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let mut best = 0;
    for i in 1..=n - w {
        if v[i + w - 1] - v[i] < v[best + w - 1] - v[best] {
            best = i;
        }
    }
    Ok(Interval {
        lower: v[best],
        upper: v[best + w - 1],
    })
}

/// `xi` evaluated at Wald bounds of every alpha coefficient.
pub fn plugin_interval(fit: &FittedModel, level: f64) -> Result<Interval> {
    check_level(level)?;
    let se = fit
        .standard_errors()
        .ok_or_else(|| Error::Interval("covariance unavailable".into()))?;
    let z = if level >= 1.0 {
        f64::INFINITY
    } else {
        Normal::standard().inverse_cdf(0.5 + level / 2.0)
    };
    let p = fit.params.alpha.len();
    let bound = |sign: f64| -> Vec<f64> {
        (0..p)
            .map(|j| {
                let half = if se[j] == 0.0 { 0.0 } else { z * se[j] };
                fit.params.alpha[j] + sign * half
            })
            .collect()
    };
    let (lo, hi) = (bound(-1.0), bound(1.0));
    Ok(Interval {
        lower: xi_at(fit, &lo),
        upper: xi_at(fit, &hi),
    })
}

/// `sum N^(x'alpha)` over the fitted strata at a different alpha.
fn xi_at(fit: &FittedModel, alpha: &[f64]) -> f64 {
    let mut total = 0.0;
    for s in &fit.strata {
        let e: f64 = s.x_alpha.iter().zip(alpha).map(|(a, b)| a * b).sum();
        total += (e * (s.registered as f64).ln()).exp();
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapDraw {
    pub index: usize,
    pub xi_star: f64,
    pub xi_hat_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    pub level: f64,
    pub xi_hat: f64,
    pub mse: f64,
    pub sqrt_mse: f64,
    /// `sqrt(mse) / mean(xi*)`
    pub rmse: f64,
    pub intervals: BTreeMap<String, Interval>,
    /// Why an interval method is missing, keyed by method.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub interval_notes: BTreeMap<String, String>,
    pub failures: usize,
    /// MVN redraws caused by `phi* <= 0`.
    pub redraws: usize,
    pub unreliable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub draws_path: Option<String>,
    #[serde(skip)]
    pub draws: Vec<BootstrapDraw>,
}

impl BootstrapResult {
    pub fn xi_stars(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.xi_star).collect()
    }

    pub fn write_draws_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["replicate", "xi_star", "xi_hat_star"])?;
        for d in &self.draws {
            w.write_record([d.index.to_string(), d.xi_star.to_string(), d.xi_hat_star.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Moments and intervals from completed draws; `xi_hat` is the point estimate.
pub fn summarize_draws(
    draws: Vec<BootstrapDraw>,
    b: usize,
    seed: u64,
    level: f64,
    xi_hat: f64,
    plugin: Option<Interval>,
) -> BootstrapResult {
    let k = draws.len();
    let (mse, mean_star) = if k == 0 {
        (f64::NAN, f64::NAN)
    } else {
        (
            draws.iter().map(|d| (d.xi_hat_star - d.xi_star).powi(2)).sum::<f64>() / k as f64,
            draws.iter().map(|d| d.xi_star).sum::<f64>() / k as f64,
        )
    };
    let sqrt_mse = mse.sqrt();
    let stars: Vec<f64> = draws.iter().map(|d| d.xi_star).collect();
    let mut intervals = BTreeMap::new();
    let mut interval_notes = BTreeMap::new();
    if let Some(p) = plugin {
        intervals.insert("plugin".to_string(), p);
    }
    for (name, res) in [
        ("percentile", percentile_interval(&stars, level)),
        ("spin", spin_interval(&stars, level)),
    ] {
        match res {
            Ok(iv) => {
                intervals.insert(name.to_string(), iv);
            }
            Err(e) => {
                interval_notes.insert(name.to_string(), e.to_string());
            }
        }
    }
    let failures = b - k;
    BootstrapResult {
        b,
        seed,
        level,
        xi_hat,
        mse,
        sqrt_mse,
        rmse: sqrt_mse / mean_star,
        intervals,
        interval_notes,
        failures,
        redraws: 0,
        unreliable: failures as f64 > UNRELIABLE_SHARE * b as f64,
        draws_path: None,
        draws,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
    pub fit: FitOptions,
}

impl BootstrapConfig {
    pub fn new(replicates: usize, seed: u64) -> Self {
        Self {
            replicates,
            seed,
            level: 0.95,
            fit: FitOptions::default(),
        }
    }
}

/// Symmetric square root `V diag(sqrt(max(l, 0))) V'` of a covariance.
fn symmetric_sqrt(cov: &DMatrix<f64>) -> DMatrix<f64> {
    if cov.iter().all(|&v| v == 0.0) {
        return cov.clone();
    }
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

struct Replicate {
    draw: Option<BootstrapDraw>,
    redraws: usize,
}

fn run_replicate(
    problem: &Problem,
    kernel: LikelihoodKernel,
    fit: &FittedModel,
    root: &DMatrix<f64>,
    config: &BootstrapConfig,
    index: usize,
) -> Replicate {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let (p, q) = (problem.n_alpha(), problem.n_beta());
    let has_phi = fit.params.phi.is_some();
    let center = fit.params.stacked();
    let dim = center.len();

    let mut redraws = 0;
    let mut eta = None;
    for _ in 0..=MAX_REDRAWS {
        let z = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
        let cand = ParamVector::from_stacked(&(&center + root * z), p, q, has_phi);
        if cand.phi.is_none_or(|phi| phi > 0.0) {
            eta = Some(cand);
            break;
        }
        redraws += 1;
    }
    let fail = |redraws| Replicate { draw: None, redraws };
    let Some(eta) = eta else { return fail(redraws) };

    let xi_star = problem.xi(&eta.alpha);
    let mut counts = Vec::with_capacity(problem.len());
    for mu in problem.means(&eta) {
        match distributions::sample(fit.model.family, EtaPoint { mu, phi: eta.phi }, &mut rng) {
            Ok(m) => counts.push(m),
            Err(_) => return fail(redraws),
        }
    }
    let star = problem.with_counts(&counts);
    let converged = |start: &ParamVector| {
        mle::fit_problem(&star, kernel, start, &config.fit)
            .ok()
            .filter(|o| o.convergence.converged())
    };
    let opt = converged(&fit.params).or_else(|| {
        let points: Vec<LinearizedPoint> = star
            .counts()
            .zip(star.log_covariates())
            .filter(|(m, _)| *m > 0)
            .map(|(m, (ln_n, ln_rate))| LinearizedPoint {
                response: (m as f64).ln() - ln_n,
                log_population: ln_n,
                log_rate: ln_rate,
            })
            .collect();
        let init = mle::init_from_points(&points).ok()?;
        converged(&mle::start_from_init(&init, p, q, has_phi))
    });
    match opt {
        Some(o) => Replicate {
            draw: Some(BootstrapDraw {
                index,
                xi_star,
                xi_hat_star: star.xi(&o.params.alpha),
            }),
            redraws,
        },
        None => fail(redraws),
    }
}

/// Parametric bootstrap at level 0.95.
pub fn parametric_bootstrap(data: &Dataset, fit: &FittedModel, b: usize, seed: u64) -> Result<BootstrapResult> {
    parametric_bootstrap_with(data, fit, &BootstrapConfig::new(b, seed))
}

/// Each replicate draws `eta* ~ MVN(eta_hat, Cov)`, simulates counts from the
/// fitted family at `eta*`, and refits from `eta_hat`. Replicate `b` uses
/// stream `b` of the seeded generator, so output does not depend on threads.
pub fn parametric_bootstrap_with(data: &Dataset, fit: &FittedModel, config: &BootstrapConfig) -> Result<BootstrapResult> {
    if config.replicates == 0 {
        return Err(Error::Spec("bootstrap needs B >= 1".into()));
    }
    check_level(config.level)?;
    if !fit.converged() {
        return Err(Error::Numerical("bootstrap requires a converged fit".into()));
    }
    let cov = fit
        .covariance_matrix()
        .ok_or_else(|| Error::Interval("covariance unavailable; bootstrap disabled".into()))?;
    let problem = Problem::new(data, &fit.model.design)?;
    if problem.len() != fit.strata.len() {
        return Err(Error::Spec("data does not match the fitted model".into()));
    }
    let kernel = LikelihoodKernel::Exact(fit.model.family);
    let root = symmetric_sqrt(&cov);
    let reps: Vec<Replicate> = (0..config.replicates)
        .into_par_iter()
        .map(|i| run_replicate(&problem, kernel, fit, &root, config, i))
        .collect();
    let redraws = reps.iter().map(|r| r.redraws).sum();
    let draws = reps.into_iter().filter_map(|r| r.draw).collect();
    let plugin = plugin_interval(fit, config.level).ok();
    let mut result = summarize_draws(draws, config.replicates, config.seed, config.level, fit.xi_hat, plugin);
    result.redraws = redraws;
    Ok(result)
}
