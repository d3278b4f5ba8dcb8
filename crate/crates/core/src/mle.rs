//! Maximum-likelihood estimation with Newton-Raphson.
//!
//! Starting values come from least squares on the linearised relation
//! `log(m/N) = (alpha - 1) log N + beta log(n/N) + e`. The dispersion is
//! optimised as `log phi` and reported on its natural scale.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dataio::{Dataset, RecordKey, StratumRecord};
use crate::error::{Error, Result};
use crate::meanmodel::{CovariateTerm, LikelihoodKernel, ModelSpec, ParamVector, Problem};

pub const PHI_MIN: f64 = 1e-6;
pub const PHI_MAX: f64 = 1e6;

/// One observation of the linearised model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizedPoint {
    /// `log(m / N)`
    pub response: f64,
    /// `log N`
    pub log_population: f64,
    /// `log(n / N)`
    pub log_rate: f64,
}

impl LinearizedPoint {
    pub fn from_record(r: &StratumRecord) -> Result<Self> {
        if r.apprehended == 0 || r.police == 0 || r.registered == 0 {
            return Err(Error::Domain(format!(
                "record {} needs m, n, N > 0 for the linearised model",
                r.key()
            )));
        }
        let ln_n = (r.registered as f64).ln();
        Ok(Self {
            response: (r.apprehended as f64).ln() - ln_n,
            log_population: ln_n,
            log_rate: (r.police as f64).ln() - ln_n,
        })
    }
}

/// No-intercept least-squares fit of the linearised model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearizedFit {
    /// Coefficient of `log N`, i.e. `alpha - 1`.
    pub alpha_minus_one: f64,
    /// Coefficient of `log(n/N)`, i.e. `beta`.
    pub beta: f64,
    /// Residual sum of squares over `n_obs - 2`.
    pub residual_variance: f64,
    pub n_obs: usize,
}

/// Points are put in a canonical order first, so the result does not depend
/// on record order.
pub fn linearized_regression(points: &[LinearizedPoint]) -> Result<LinearizedFit> {
    let mut points = points.to_vec();
    points.sort_by(|a, b| {
        a.response
            .total_cmp(&b.response)
            .then(a.log_population.total_cmp(&b.log_population))
            .then(a.log_rate.total_cmp(&b.log_rate))
    });
    let n = points.len();
    if n < 3 {
        return Err(Error::Init(format!(
            "linearised model needs at least 3 records, got {n}"
        )));
    }
    let x = DMatrix::from_fn(n, 2, |i, j| {
        if j == 0 {
            points[i].log_population
        } else {
            points[i].log_rate
        }
    });
    let y = DVector::from_iterator(n, points.iter().map(|p| p.response));
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = r.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if scale == 0.0 || r[(0, 0)].abs() <= 1e-12 * scale || r[(1, 1)].abs() <= 1e-12 * scale {
        return Err(Error::Init("rank-deficient linearised design".into()));
    }
    let qty = qr.q().transpose() * &y;
    let b1 = qty[1] / r[(1, 1)];
    let b0 = (qty[0] - r[(0, 1)] * b1) / r[(0, 0)];
    let resid = &y - &x * DVector::from_vec(vec![b0, b1]);
    let rss = resid.norm_squared();
    Ok(LinearizedFit {
        alpha_minus_one: b0,
        beta: b1,
        residual_variance: rss / (n - 2) as f64,
        n_obs: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialValues {
    pub alpha0: f64,
    pub beta0: f64,
    pub phi0: f64,
}

impl InitialValues {
    pub const FALLBACK: Self = Self {
        alpha0: 0.5,
        beta0: 0.5,
        phi0: 1.0,
    };
}

/// [`linearized_init`] on precomputed points.
pub fn init_from_points(points: &[LinearizedPoint]) -> Result<InitialValues> {
    let fit = linearized_regression(points)?;
    let phi0 = if fit.residual_variance > 0.0 {
        (1.0 / fit.residual_variance).clamp(PHI_MIN, PHI_MAX)
    } else {
        PHI_MAX
    };
    Ok(InitialValues {
        alpha0: 1.0 + fit.alpha_minus_one,
        beta0: fit.beta,
        phi0,
    })
}

/// Starting values from the linearised model; `phi0` is the inverse
/// residual variance, clamped to `[1e-6, 1e6]`.
pub fn linearized_init(data: &Dataset) -> Result<InitialValues> {
    let points = data
        .records
        .iter()
        .map(LinearizedPoint::from_record)
        .collect::<Result<Vec<_>>>()?;
    init_from_points(&points)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub max_halvings: usize,
    /// A stalled line search counts as converged when the Newton decrement
    /// `g'(-H)^-1 g / 2` is below this times `max(1, |loglik|)`.
    pub decrement_tol: f64,
    /// Starting point; defaults to the linearised initialisation.
    pub start: Option<ParamVector>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-6,
            max_halvings: 30,
            decrement_tol: 1e-10,
            start: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Convergence {
    pub status: FitStatus,
    pub iterations: usize,
    /// Max-norm of the score on the optimisation scale (`log phi`).
    pub gradient_norm: f64,
    /// Iterations that fell back to a scaled gradient step.
    pub gradient_steps: usize,
    /// Log-likelihood after each accepted iteration, starting point first.
    #[serde(skip)]
    pub loglik_path: Vec<f64>,
}

impl Convergence {
    pub fn converged(&self) -> bool {
        self.status == FitStatus::Converged
    }
}

/// Result of a Newton-Raphson run on a [`Problem`].
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub params: ParamVector,
    pub loglik: f64,
    /// Natural-scale covariance, `None` when `-H` is not positive definite.
    pub covariance: Option<DMatrix<f64>>,
    pub convergence: Convergence,
}

fn ln_phi_bounds() -> (f64, f64) {
    (PHI_MIN.ln(), PHI_MAX.ln())
}

fn to_internal(params: &ParamVector) -> DVector<f64> {
    let mut v = params.stacked();
    if let Some(phi) = params.phi {
        let k = v.len() - 1;
        v[k] = phi.clamp(PHI_MIN, PHI_MAX).ln();
    }
    v
}

fn from_internal(theta: &DVector<f64>, p: usize, q: usize, has_phi: bool) -> ParamVector {
    let mut params = ParamVector::from_stacked(theta, p, q, has_phi);
    if let Some(phi) = params.phi.as_mut() {
        *phi = phi.exp();
    }
    params
}

struct InternalEval {
    loglik: f64,
    gradient: DVector<f64>,
    hessian: DMatrix<f64>,
}

/// Score and Hessian on the `(alpha, beta, log phi)` scale.
fn evaluate_internal(
    problem: &Problem,
    kernel: LikelihoodKernel,
    params: &ParamVector,
) -> Result<InternalEval> {
    let eval = problem.evaluate(kernel, params)?;
    let mut g = eval.gradient;
    let mut h = eval.hessian;
    if let Some(phi) = params.phi {
        let k = g.len() - 1;
        let g_phi = g[k];
        for a in 0..k {
            h[(a, k)] *= phi;
            h[(k, a)] *= phi;
        }
        h[(k, k)] = h[(k, k)] * phi * phi + g_phi * phi;
        g[k] = g_phi * phi;
    }
    Ok(InternalEval {
        loglik: eval.loglik,
        gradient: g,
        hessian: h,
    })
}

/// Max-norm of the gradient, ignoring a `log phi` component that pushes
/// against its box bound.
fn projected_norm(theta: &DVector<f64>, g: &DVector<f64>, has_phi: bool) -> f64 {
    let (lo, hi) = ln_phi_bounds();
    let k = g.len();
    g.iter()
        .enumerate()
        .map(|(i, &v)| {
            if has_phi && i == k - 1 && ((theta[i] >= hi && v > 0.0) || (theta[i] <= lo && v < 0.0)) {
                0.0
            } else {
                v.abs()
            }
        })
        .fold(0.0, f64::max)
}

pub fn fit_problem(
    problem: &Problem,
    kernel: LikelihoodKernel,
    start: &ParamVector,
    options: &FitOptions,
) -> Result<Optimum> {
    let (p, q) = (problem.n_alpha(), problem.n_beta());
    let has_phi = kernel.has_dispersion();
    if start.alpha.len() != p || start.beta.len() != q || start.phi.is_some() != has_phi {
        return Err(Error::Parameter("starting point does not match the model".into()));
    }
    let (lo, hi) = ln_phi_bounds();
    let mut theta = to_internal(start);
    let mut params = from_internal(&theta, p, q, has_phi);
    let mut current = evaluate_internal(problem, kernel, &params)?;
    let mut path = vec![current.loglik];
    let mut gradient_steps = 0;
    let mut status = FitStatus::MaxIterations;
    let mut iterations = 0;

    while iterations < options.max_iter {
        if projected_norm(&theta, &current.gradient, has_phi) < options.grad_tol {
            status = FitStatus::Converged;
            break;
        }
        let neg_h = -&current.hessian;
        let mut decrement = None;
        let step = match neg_h.clone().cholesky() {
            Some(chol) => {
                let s = chol.solve(&current.gradient);
                decrement = Some(0.5 * current.gradient.dot(&s));
                s
            }
            None => {
                gradient_steps += 1;
                let scale = current
                    .hessian
                    .diagonal()
                    .iter()
                    .fold(0.0_f64, |a, v| a.max(v.abs()));
                if scale > 0.0 {
                    &current.gradient / scale
                } else {
                    current.gradient.clone()
                }
            }
        };

        let mut accepted = None;
        let mut t = 1.0;
        for _ in 0..=options.max_halvings {
            let mut cand = &theta + &step * t;
            if has_phi {
                let k = cand.len() - 1;
                cand[k] = cand[k].clamp(lo, hi);
            }
            let cand_params = from_internal(&cand, p, q, has_phi);
            if let Ok(ll) = problem.loglik(kernel, &cand_params) {
                if ll > current.loglik {
                    accepted = Some((cand, cand_params));
                    break;
                }
            }
            t *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((cand, cand_params)) => {
                match evaluate_internal(problem, kernel, &cand_params) {
                    Ok(eval) => {
                        theta = cand;
                        params = cand_params;
                        current = eval;
                        path.push(current.loglik);
                    }
                    Err(_) => {
                        status = FitStatus::LineSearchFailed;
                        break;
                    }
                }
            }
            None => {
                // No representable ascent left: accept when the predicted
                // Newton gain is at the rounding level of the log-likelihood.
                let noise = options.decrement_tol * current.loglik.abs().max(1.0);
                let within_noise = decrement.is_some_and(|d| d <= noise);
                if within_noise {
                    // the quadratic model is reliable here, so one full Newton
                    // step removes what the rounded comparison could not see
                    let mut cand = &theta + &step;
                    if has_phi {
                        let k = cand.len() - 1;
                        cand[k] = cand[k].clamp(lo, hi);
                    }
                    let cand_params = from_internal(&cand, p, q, has_phi);
                    if let Ok(eval) = evaluate_internal(problem, kernel, &cand_params) {
                        if eval.loglik >= current.loglik - noise {
                            theta = cand;
                            params = cand_params;
                            current = eval;
                            path.push(current.loglik);
                        }
                    }
                }
                status = if within_noise
                    || projected_norm(&theta, &current.gradient, has_phi) < options.grad_tol
                {
                    FitStatus::Converged
                } else {
                    FitStatus::LineSearchFailed
                };
                break;
            }
        }
    }
    if status == FitStatus::MaxIterations
        && projected_norm(&theta, &current.gradient, has_phi) < options.grad_tol
    {
        status = FitStatus::Converged;
    }

    // Delta method: Cov(phi) = J Cov(log phi) J with J = diag(1, .., phi).
    let covariance = (-&current.hessian).cholesky().map(|chol| {
        let mut cov = chol.inverse();
        if let Some(phi) = params.phi {
            let k = cov.nrows() - 1;
            for a in 0..k {
                cov[(a, k)] *= phi;
                cov[(k, a)] *= phi;
            }
            cov[(k, k)] *= phi * phi;
        }
        (&cov + cov.transpose()) * 0.5
    });

    Ok(Optimum {
        loglik: current.loglik,
        convergence: Convergence {
            status,
            iterations,
            gradient_norm: projected_norm(&theta, &current.gradient, has_phi),
            gradient_steps,
            loglik_path: path,
        },
        params,
        covariance,
    })
}

/// Starting point from initial values with zero non-intercept coefficients.
pub fn start_from_init(init: &InitialValues, n_alpha: usize, n_beta: usize, has_phi: bool) -> ParamVector {
    let mut alpha = vec![0.0; n_alpha];
    let mut beta = vec![0.0; n_beta];
    alpha[0] = init.alpha0;
    beta[0] = init.beta0;
    ParamVector::new(alpha, beta, has_phi.then_some(init.phi0))
}

/// Per-stratum fitted quantities kept for decomposition and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedStratum {
    pub key: RecordKey,
    pub m: u64,
    pub mu_hat: f64,
    /// `N^(x'alpha_hat)`
    pub xi_term: f64,
    /// `N`
    pub registered: u64,
    /// Alpha design row.
    pub x_alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedModel {
    pub model: ModelSpec,
    pub params: ParamVector,
    /// Square roots of the covariance diagonal.
    pub se: Option<Vec<f64>>,
    /// Covariance over stacked `(alpha, beta, phi)`.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub loglik: f64,
    pub k: usize,
    pub n_obs: usize,
    pub aic: f64,
    pub bic: f64,
    /// `sum (m - mu_hat)^2 / 1000`
    pub ssq: f64,
    pub xi_hat: f64,
    /// Partial sums of `xi_hat` keyed by grouping name, then label.
    pub xi_by_group: BTreeMap<String, BTreeMap<String, f64>>,
    pub convergence: Convergence,
    /// Set when the linearised initialisation failed and fixed starts were used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_note: Option<String>,
    #[serde(skip)]
    pub strata: Vec<FittedStratum>,
    #[serde(skip)]
    pub domain_names: Vec<String>,
    #[serde(skip)]
    pub pseudo_country_label: String,
}

impl FittedModel {
    pub fn converged(&self) -> bool {
        self.convergence.converged()
    }

    pub fn covariance_matrix(&self) -> Option<DMatrix<f64>> {
        self.covariance.as_ref().map(|rows| {
            let n = rows.len();
            DMatrix::from_fn(n, n, |i, j| rows[i][j])
        })
    }

    /// Standard errors, the square root of the covariance diagonal.
    pub fn standard_errors(&self) -> Option<Vec<f64>> {
        self.covariance
            .as_ref()
            .map(|c| (0..c.len()).map(|i| c[i][i].max(0.0).sqrt()).collect())
    }
}

/// `(aic, bic)` with `aic = -2 loglik + 2k` and `bic = -2 loglik + k log(n_obs)`.
pub fn information_criteria(loglik: f64, k: usize, n_obs: usize) -> (f64, f64) {
    let k = k as f64;
    (-2.0 * loglik + 2.0 * k, -2.0 * loglik + k * (n_obs.max(1) as f64).ln())
}

/// Fits the model to `data` by Newton-Raphson on the exact log-likelihood.
pub fn fit(data: &Dataset, spec: &ModelSpec, options: &FitOptions) -> Result<FittedModel> {
    let problem = Problem::new(data, &spec.design)?;
    if problem.is_empty() {
        return Err(Error::Spec("no records to fit".into()));
    }
    let has_phi = spec.family.has_dispersion();
    let (start, init_note) = match &options.start {
        Some(s) => (s.clone(), None),
        None => {
            let (init, note) = match linearized_init(data) {
                Ok(init) => (init, None),
                Err(e) => (
                    InitialValues::FALLBACK,
                    Some(format!("{e}; using alpha0=0.5, beta0=0.5, phi0=1")),
                ),
            };
            (
                start_from_init(&init, spec.design.n_alpha(), spec.design.n_beta(), has_phi),
                note,
            )
        }
    };
    let opt = fit_problem(&problem, LikelihoodKernel::Exact(spec.family), &start, options)?;
    Ok(assemble(data, spec, &problem, opt, init_note))
}

fn assemble(
    data: &Dataset,
    spec: &ModelSpec,
    problem: &Problem,
    opt: Optimum,
    init_note: Option<String>,
) -> FittedModel {
    let means = problem.means(&opt.params);
    let xi_terms = problem.xi_terms(&opt.params.alpha);
    let x_rows = problem.alpha_rows();
    let strata: Vec<FittedStratum> = data
        .records
        .iter()
        .zip(means.iter().zip(&xi_terms))
        .zip(x_rows)
        .map(|((r, (&mu_hat, &xi_term)), x_alpha)| FittedStratum {
            key: r.key(),
            m: r.apprehended,
            mu_hat,
            xi_term,
            registered: r.registered,
            x_alpha,
        })
        .collect();
    let ssq = strata
        .iter()
        .map(|s| (s.m as f64 - s.mu_hat).powi(2))
        .sum::<f64>()
        / 1000.0;
    let k = spec.n_params();
    let n_obs = problem.len();
    let (aic, bic) = information_criteria(opt.loglik, k, n_obs);
    let xi_hat = problem.xi(&opt.params.alpha);
    let covariance = opt.covariance.as_ref().map(|c| {
        (0..c.nrows())
            .map(|i| (0..c.ncols()).map(|j| c[(i, j)]).collect())
            .collect()
    });

    let se = covariance
        .as_ref()
        .map(|c: &Vec<Vec<f64>>| (0..c.len()).map(|i| c[i][i].max(0.0).sqrt()).collect());
    let mut fitted = FittedModel {
        model: spec.clone(),
        params: opt.params,
        se,
        covariance,
        loglik: opt.loglik,
        k,
        n_obs,
        aic,
        bic,
        ssq,
        xi_hat,
        xi_by_group: BTreeMap::new(),
        convergence: opt.convergence,
        init_note,
        strata,
        domain_names: data.domain_names.clone(),
        pseudo_country_label: data.pseudo_country_label.clone(),
    };
    let mut groupings: Vec<Grouping> = data
        .domain_names
        .iter()
        .map(|d| Grouping::Domain(d.clone()))
        .collect();
    for term in &spec.design.alpha {
        if let CovariateTerm::Country(label) = term {
            groupings.push(Grouping::CountryFlag(label.clone()));
        }
    }
    for g in groupings {
        if let Ok(parts) = xi_decompose(&fitted, &g) {
            fitted.xi_by_group.insert(g.name(), parts);
        }
    }
    fitted
}

/// How to partition `xi_hat`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Grouping {
    /// One group per country label.
    Country,
    /// The named country versus everything else (`rest`).
    CountryFlag(String),
    /// One group per level of a domain variable.
    Domain(String),
    /// Single group `all`.
    Constant,
}

impl Grouping {
    pub fn name(&self) -> String {
        match self {
            Grouping::Country => "country".into(),
            Grouping::CountryFlag(label) => format!("country:{label}"),
            Grouping::Domain(var) => var.clone(),
            Grouping::Constant => "all".into(),
        }
    }
}

/// Partial sums of `N^(x'alpha_hat)` over the groups; they add up to `xi_hat`.
pub fn xi_decompose(fit: &FittedModel, by: &Grouping) -> Result<BTreeMap<String, f64>> {
    let domain_idx = match by {
        Grouping::Domain(var) => Some(
            fit.domain_names
                .iter()
                .position(|d| d == var)
                .ok_or_else(|| Error::Spec(format!("unknown grouping variable `{var}`")))?,
        ),
        _ => None,
    };
    let mut out = BTreeMap::new();
    for s in &fit.strata {
        let label = match by {
            Grouping::Country => s.key.country.clone(),
            Grouping::CountryFlag(c) => {
                if s.key.country == *c {
                    c.clone()
                } else {
                    "rest".to_string()
                }
            }
            Grouping::Domain(_) => s.key.domain[domain_idx.expect("resolved above")].clone(),
            Grouping::Constant => "all".to_string(),
        };
        *out.entry(label).or_insert(0.0) += s.xi_term;
    }
    Ok(out)
}
