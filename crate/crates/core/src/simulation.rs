//! Monte-Carlo comparison of likelihood variants under zero removal.
//!
//! Counts are drawn from the untruncated NB2 law at the true intercept-only
//! parameters, strata with `m = 0` are removed, and each variant is fitted to
//! what remains. Bias is summarised per parameter as relative bias (RB) and
//! relative root mean squared error (RRMSE), both in percent of the truth.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::{self, CountFamily, EtaPoint};
use crate::error::{Error, Result};
use crate::meanmodel::{LikelihoodKernel, ParamVector, Problem};
use crate::mle::{self, FitOptions, InitialValues, LinearizedPoint};

/// Generator settings for [`synthetic_population_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PopulationSpec {
    /// `N` of stratum 0.
    pub dominant: u64,
    /// Log-uniform range of the other `N`.
    pub size_range: (f64, f64),
    /// Log-uniform range of `n / N`.
    pub rate_range: (f64, f64),
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            dominant: 170_000,
            size_range: (1e2, 5e4),
            rate_range: (0.01, 0.5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Variant {
    /// NB2 with the log-Gamma terms replaced by the Stirling-reduced form.
    #[serde(rename = "zhang-approx")]
    ZhangApprox,
    /// NB2 written with explicit log-Gamma calls.
    #[serde(rename = "exact-gamma")]
    ExactGamma,
    /// NB2 closed-form log-pmf.
    #[serde(rename = "nb2-closed")]
    Nb2Closed,
    /// Zero-truncated NB2.
    #[serde(rename = "zt-nb2")]
    ZtNb2,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::ZhangApprox,
        Variant::ExactGamma,
        Variant::Nb2Closed,
        Variant::ZtNb2,
    ];

    pub fn token(&self) -> &'static str {
        match self {
            Variant::ZhangApprox => "zhang-approx",
            Variant::ExactGamma => "exact-gamma",
            Variant::Nb2Closed => "nb2-closed",
            Variant::ZtNb2 => "zt-nb2",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.token() == token.trim())
    }

    pub fn kernel(&self) -> LikelihoodKernel {
        match self {
            Variant::ZhangApprox => LikelihoodKernel::ZhangApprox,
            Variant::ExactGamma => LikelihoodKernel::LgammaForm,
            Variant::Nb2Closed => LikelihoodKernel::Exact(CountFamily::NB2),
            Variant::ZtNb2 => LikelihoodKernel::Exact(CountFamily::ZTNB2),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameter {
    Alpha,
    Beta,
    Phi,
    Xi,
}

impl Parameter {
    pub const ALL: [Parameter; 4] = [Parameter::Alpha, Parameter::Beta, Parameter::Phi, Parameter::Xi];

    pub fn token(&self) -> &'static str {
        match self {
            Parameter::Alpha => "alpha",
            Parameter::Beta => "beta",
            Parameter::Phi => "phi",
            Parameter::Xi => "xi",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimDesign {
    pub alpha_true: f64,
    pub beta_true: f64,
    pub phi_true: f64,
    pub replicates: usize,
    pub seed: u64,
    /// `(N, n)` per stratum.
    pub population: Vec<(u64, u64)>,
    pub variants: Vec<Variant>,
    /// Keep strata with `m = 0` for the untruncated arms.
    pub keep_zeros: bool,
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::Spec("simulation needs at least 2 replicates".into()));
        }
        if !(self.phi_true.is_finite() && self.phi_true > 0.0) {
            return Err(Error::Parameter(format!("phi must be positive, got {}", self.phi_true)));
        }
        if self.population.is_empty() {
            return Err(Error::Spec("empty population".into()));
        }
        if let Some(&(big_n, n)) = self.population.iter().find(|&&(big_n, n)| !(n > 0 && n < big_n)) {
            return Err(Error::Domain(format!("stratum (N={big_n}, n={n}) needs 0 < n < N")));
        }
        if self.variants.is_empty() {
            return Err(Error::Spec("no variants selected".into()));
        }
        Ok(())
    }

    pub fn true_xi(&self) -> f64 {
        self.population
            .iter()
            .map(|&(big_n, _)| (big_n as f64).powf(self.alpha_true))
            .sum()
    }

    pub fn truth(&self, parameter: Parameter) -> f64 {
        match parameter {
            Parameter::Alpha => self.alpha_true,
            Parameter::Beta => self.beta_true,
            Parameter::Phi => self.phi_true,
            Parameter::Xi => self.true_xi(),
        }
    }

    pub fn means(&self) -> Vec<f64> {
        self.population
            .iter()
            .map(|&(big_n, n)| {
                let big_n = big_n as f64;
                big_n.powf(self.alpha_true) * (n as f64 / big_n).powf(self.beta_true)
            })
            .collect()
    }
}

/// Stand-in `(N, n)` pairs under the default [`PopulationSpec`].
pub fn synthetic_population(count: usize, seed: u64) -> Vec<(u64, u64)> {
    synthetic_population_with(count, seed, &PopulationSpec::default())
}

/// Stratum 0 is the dominant one, the rest have `N` log-uniform over
/// `size_range`; `n = round(N r)` with `r` log-uniform over `rate_range`,
/// clamped to `1 <= n < N`.
pub fn synthetic_population_with(count: usize, seed: u64, spec: &PopulationSpec) -> Vec<(u64, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log_uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
        (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
    };
    (0..count)
        .map(|i| {
            let big_n = if i == 0 {
                spec.dominant
            } else {
                (log_uniform(&mut rng, spec.size_range).round() as u64).max(2)
            };
            let rate = log_uniform(&mut rng, spec.rate_range);
            let n = ((big_n as f64 * rate).round() as u64).clamp(1, big_n - 1);
            (big_n, n)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VariantEstimate {
    pub alpha: f64,
    pub beta: f64,
    pub phi: f64,
    pub xi: f64,
    pub loglik: f64,
}

impl VariantEstimate {
    pub fn get(&self, parameter: Parameter) -> f64 {
        match parameter {
            Parameter::Alpha => self.alpha,
            Parameter::Beta => self.beta,
            Parameter::Phi => self.phi,
            Parameter::Xi => self.xi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateOutcome {
    pub index: usize,
    /// Strata left after removing zero counts.
    pub retained: usize,
    /// One entry per design variant; `None` when the fit failed.
    pub estimates: Vec<Option<VariantEstimate>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationCell {
    pub variant: Variant,
    pub parameter: Parameter,
    pub rb_percent: f64,
    pub rrmse_percent: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub cells: Vec<SimulationCell>,
    /// Variants with more than 20% failed replicates.
    pub flagged: Vec<Variant>,
    #[serde(skip)]
    pub replicates: Vec<ReplicateOutcome>,
}

impl SimulationReport {
    pub fn cell(&self, variant: Variant, parameter: Parameter) -> Option<&SimulationCell> {
        self.cells
            .iter()
            .find(|c| c.variant == variant && c.parameter == parameter)
    }

    /// Relative bias in percent; panics if the cell is absent.
    pub fn rb(&self, variant: Variant, parameter: Parameter) -> f64 {
        self.cell(variant, parameter).expect("variant in report").rb_percent
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["variant", "parameter", "rb_percent", "rrmse_percent", "failures"])?;
        for c in &self.cells {
            w.write_record([
                c.variant.token().to_string(),
                c.parameter.token().to_string(),
                format!("{:.6}", c.rb_percent),
                format!("{:.6}", c.rrmse_percent),
                c.failures.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `(RB, RRMSE)` in percent of `truth`.
pub fn relative_bias_rmse(truth: f64, estimates: &[f64]) -> (f64, f64) {
    if estimates.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let b = estimates.len() as f64;
    let rb = estimates.iter().map(|e| (e - truth) / truth).sum::<f64>() / b;
    let ms = estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / b;
    (rb * 100.0, ms.sqrt() / truth.abs() * 100.0)
}

/// Aggregates per-replicate estimates into the report.
pub fn summarize(design: &SimDesign, replicates: Vec<ReplicateOutcome>) -> SimulationReport {
    let mut cells = Vec::new();
    let mut flagged = Vec::new();
    for (vi, &variant) in design.variants.iter().enumerate() {
        let ok: Vec<&VariantEstimate> = replicates.iter().filter_map(|r| r.estimates[vi].as_ref()).collect();
        let failures = replicates.len() - ok.len();
        if failures as f64 > 0.2 * replicates.len() as f64 {
            flagged.push(variant);
        }
        for parameter in Parameter::ALL {
            let values: Vec<f64> = ok.iter().map(|e| e.get(parameter)).collect();
            let (rb_percent, rrmse_percent) = relative_bias_rmse(design.truth(parameter), &values);
            cells.push(SimulationCell {
                variant,
                parameter,
                rb_percent,
                rrmse_percent,
                failures,
            });
        }
    }
    SimulationReport {
        cells,
        flagged,
        replicates,
    }
}

fn replicate_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn start_values(triples: &[(u64, u64, u64)]) -> InitialValues {
    let points: Vec<LinearizedPoint> = triples
        .iter()
        .filter(|t| t.0 > 0)
        .map(|&(m, n, big_n)| {
            let ln_n = (big_n as f64).ln();
            LinearizedPoint {
                response: (m as f64).ln() - ln_n,
                log_population: ln_n,
                log_rate: (n as f64).ln() - ln_n,
            }
        })
        .collect();
    mle::init_from_points(&points)
        .unwrap_or(InitialValues::FALLBACK)
}

fn fit_variant(
    variant: Variant,
    triples: &[(u64, u64, u64)],
    population: &[(u64, u64)],
    options: &FitOptions,
) -> Option<VariantEstimate> {
    let kept: Vec<(u64, u64, u64)> = triples
        .iter()
        .copied()
        .filter(|t| t.0 >= variant.kernel().min_support())
        .collect();
    if kept.len() < 3 {
        return None;
    }
    let problem = Problem::intercept_only(&kept).ok()?;
    let init = start_values(&kept);
    let start = ParamVector::new(vec![init.alpha0], vec![init.beta0], Some(init.phi0));
    let opt = mle::fit_problem(&problem, variant.kernel(), &start, options).ok()?;
    if !opt.convergence.converged() {
        return None;
    }
    let alpha = opt.params.alpha[0];
    let xi = population.iter().map(|&(big_n, _)| (big_n as f64).powf(alpha)).sum();
    Some(VariantEstimate {
        alpha,
        beta: opt.params.beta[0],
        phi: opt.params.phi.expect("NB2 variants carry a dispersion"),
        xi,
        loglik: opt.loglik,
    })
}

/// Draws one replicate's counts, one per stratum, from the untruncated NB2.
pub fn draw_counts(design: &SimDesign, index: usize) -> Result<Vec<u64>> {
    let mut rng = replicate_rng(design.seed, index);
    design
        .means()
        .into_iter()
        .map(|mu| distributions::sample(CountFamily::NB2, EtaPoint::nb2(mu, design.phi_true), &mut rng))
        .collect()
}

fn run_replicate(design: &SimDesign, index: usize, options: &FitOptions) -> Result<ReplicateOutcome> {
    let counts = draw_counts(design, index)?;
    let triples: Vec<(u64, u64, u64)> = design
        .population
        .iter()
        .zip(&counts)
        .filter(|(_, &m)| design.keep_zeros || m > 0)
        .map(|(&(big_n, n), &m)| (m, n, big_n))
        .collect();
    let estimates = design
        .variants
        .iter()
        .map(|&v| fit_variant(v, &triples, &design.population, options))
        .collect();
    Ok(ReplicateOutcome {
        index,
        retained: triples.len(),
        estimates,
    })
}

/// Runs all replicates in parallel; results depend only on the design.
///
/// `xi_hat` sums `N^alpha_hat` over the whole population, including strata
/// whose zero counts were removed before fitting.
pub fn run_simulation(design: &SimDesign) -> Result<SimulationReport> {
    design.validate()?;
    // tight enough that the two exact arms land on the same optimum to 1e-6;
    // stalled line searches still stop on the Newton decrement
    let options = FitOptions {
        grad_tol: 1e-9,
        ..FitOptions::default()
    };
    let replicates = (0..design.replicates)
        .into_par_iter()
        .map(|b| run_replicate(design, b, &options))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(design, replicates))
}
