//! Power-link mean model.
//!
//! For stratum `i`,
//!
//! ```text
//! log mu_i = (x_i' alpha) log N_i + (z_i' beta) log(n_i / N_i)
//! ```
//!
//! so every alpha coefficient enters through the column `x_ij log N_i` and
//! every beta coefficient through `z_ij log(n_i / N_i)`. Derivatives of the
//! per-stratum log-likelihood terms with respect to `log mu` are chained
//! through these stacked columns.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, StratumRecord};
use crate::distributions::{self, CountFamily, EtaPoint, TermDerivatives};
use crate::error::{Error, Result};

/// One column of a design matrix; serialized in its parse syntax.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum CovariateTerm {
    Intercept,
    /// 1 for records of this country.
    Country(String),
    /// 1 for records whose domain variable equals `level`.
    Domain { variable: String, level: String },
}

impl CovariateTerm {
    /// `intercept`, `country:<label>` or `<variable>:<level>`.
    pub fn parse(token: &str) -> Result<Self> {
        let token = token.trim();
        if token.eq_ignore_ascii_case("intercept") {
            return Ok(Self::Intercept);
        }
        match token.split_once(':') {
            Some(("country", label)) if !label.is_empty() => Ok(Self::Country(label.to_string())),
            Some((variable, level)) if !variable.is_empty() && !level.is_empty() => {
                Ok(Self::Domain {
                    variable: variable.to_string(),
                    level: level.to_string(),
                })
            }
            _ => Err(Error::Spec(format!(
                "covariate `{token}` must be `intercept`, `country:<label>` or `<variable>:<level>`"
            ))),
        }
    }

    pub fn parse_list(list: &str) -> Result<Vec<Self>> {
        list.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(Self::parse)
            .collect()
    }

    fn value(&self, record: &StratumRecord, data: &Dataset) -> Result<f64> {
        let hit = match self {
            Self::Intercept => true,
            Self::Country(label) => record.country == *label,
            Self::Domain { variable, level } => {
                let idx = data.domain_index(variable).ok_or_else(|| {
                    Error::Spec(format!("unknown domain variable `{variable}`"))
                })?;
                record.domain[idx] == *level
            }
        };
        Ok(if hit { 1.0 } else { 0.0 })
    }
}

impl From<CovariateTerm> for String {
    fn from(t: CovariateTerm) -> Self {
        t.to_string()
    }
}

impl TryFrom<String> for CovariateTerm {
    type Error = Error;

    fn try_from(token: String) -> Result<Self> {
        CovariateTerm::parse(&token)
    }
}

impl fmt::Display for CovariateTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Intercept => write!(f, "intercept"),
            Self::Country(label) => write!(f, "country:{label}"),
            Self::Domain { variable, level } => write!(f, "{variable}:{level}"),
        }
    }
}

/// Covariates for the alpha and beta exponents. Both lists start with the
/// intercept and contain no duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub alpha: Vec<CovariateTerm>,
    pub beta: Vec<CovariateTerm>,
}

impl Default for DesignSpec {
    fn default() -> Self {
        Self::intercept_only()
    }
}

impl DesignSpec {
    pub fn intercept_only() -> Self {
        Self {
            alpha: vec![CovariateTerm::Intercept],
            beta: vec![CovariateTerm::Intercept],
        }
    }

    /// Normalises both lists so the intercept comes first; duplicates are an error.
    pub fn new(alpha: Vec<CovariateTerm>, beta: Vec<CovariateTerm>) -> Result<Self> {
        Ok(Self {
            alpha: normalise_terms(alpha, "alpha")?,
            beta: normalise_terms(beta, "beta")?,
        })
    }

    pub fn n_alpha(&self) -> usize {
        self.alpha.len()
    }

    pub fn n_beta(&self) -> usize {
        self.beta.len()
    }
}

fn normalise_terms(terms: Vec<CovariateTerm>, which: &str) -> Result<Vec<CovariateTerm>> {
    let mut out = vec![CovariateTerm::Intercept];
    let mut seen_intercept = false;
    for t in terms {
        let duplicate = if t == CovariateTerm::Intercept {
            std::mem::replace(&mut seen_intercept, true)
        } else {
            out.contains(&t)
        };
        if duplicate {
            return Err(Error::Spec(format!("duplicate {which} covariate `{t}`")));
        }
        if t != CovariateTerm::Intercept {
            out.push(t);
        }
    }
    Ok(out)
}

/// Count family plus design.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: CountFamily,
    pub design: DesignSpec,
}

impl ModelSpec {
    pub fn new(family: CountFamily, design: DesignSpec) -> Self {
        Self { family, design }
    }

    /// Total number of free parameters.
    pub fn n_params(&self) -> usize {
        self.design.n_alpha() + self.design.n_beta() + usize::from(self.family.has_dispersion())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
}

impl ParamVector {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>, phi: Option<f64>) -> Self {
        Self { alpha, beta, phi }
    }

    pub fn len(&self) -> usize {
        self.alpha.len() + self.beta.len() + usize::from(self.phi.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stacked(&self) -> DVector<f64> {
        let mut v: Vec<f64> = self.alpha.iter().chain(&self.beta).copied().collect();
        v.extend(self.phi);
        DVector::from_vec(v)
    }

    pub fn from_stacked(v: &DVector<f64>, n_alpha: usize, n_beta: usize, has_phi: bool) -> Self {
        let alpha = v.rows(0, n_alpha).iter().copied().collect();
        let beta = v.rows(n_alpha, n_beta).iter().copied().collect();
        let phi = has_phi.then(|| v[n_alpha + n_beta]);
        Self { alpha, beta, phi }
    }

    fn check(&self, model: &ModelSpec) -> Result<()> {
        if self.alpha.len() != model.design.n_alpha() || self.beta.len() != model.design.n_beta() {
            return Err(Error::Parameter(format!(
                "expected {} alpha and {} beta coefficients, got {} and {}",
                model.design.n_alpha(),
                model.design.n_beta(),
                self.alpha.len(),
                self.beta.len()
            )));
        }
        if self.phi.is_some() != model.family.has_dispersion() {
            return Err(Error::Parameter(format!(
                "dispersion must be {} for family {}",
                if model.family.has_dispersion() { "present" } else { "absent" },
                model.family.token()
            )));
        }
        Ok(())
    }
}

/// Design matrices with one row per record.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
    /// `row_index[r]` is the record index of matrix row `r`.
    pub row_index: Vec<usize>,
    pub warnings: Vec<String>,
}

pub fn build_design(data: &Dataset, design: &DesignSpec) -> Result<Design> {
    let rows = data.records.len();
    let mut warnings = Vec::new();
    let fill = |terms: &[CovariateTerm], warnings: &mut Vec<String>| -> Result<DMatrix<f64>> {
        let mut mat = DMatrix::zeros(rows, terms.len());
        for (j, term) in terms.iter().enumerate() {
            for (i, r) in data.records.iter().enumerate() {
                mat[(i, j)] = term.value(r, data)?;
            }
            if rows > 0 && mat.column(j).iter().all(|&v| v == 0.0) {
                warnings.push(format!("covariate `{term}` matches no record"));
            }
        }
        Ok(mat)
    };
    let x = fill(&check_duplicates(&design.alpha)?, &mut warnings)?;
    let z = fill(&check_duplicates(&design.beta)?, &mut warnings)?;
    Ok(Design {
        x,
        z,
        row_index: (0..rows).collect(),
        warnings,
    })
}

fn check_duplicates(terms: &[CovariateTerm]) -> Result<Vec<CovariateTerm>> {
    for (i, t) in terms.iter().enumerate() {
        if terms[..i].contains(t) {
            return Err(Error::Spec(format!("duplicate covariate `{t}`")));
        }
    }
    Ok(terms.to_vec())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn log_parts(record: &StratumRecord) -> Result<(f64, f64)> {
    let big_n = record.registered as f64;
    let n = record.police as f64;
    if !(record.registered > 0 && record.police > 0 && record.police < record.registered) {
        return Err(Error::Domain(format!(
            "record {} needs N > 0 and 0 < n/N < 1 (n={}, N={})",
            record.key(),
            record.police,
            record.registered
        )));
    }
    Ok((big_n.ln(), (n / big_n).ln()))
}

/// `N^(x'alpha) * (n/N)^(z'beta)`.
pub fn mu(record: &StratumRecord, x_row: &[f64], z_row: &[f64], params: &ParamVector) -> Result<f64> {
    let (ln_n, ln_rate) = log_parts(record)?;
    Ok((dot(x_row, &params.alpha) * ln_n + dot(z_row, &params.beta) * ln_rate).exp())
}

/// Which per-stratum log-likelihood term is summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LikelihoodKernel {
    /// Exact log-density of a count family.
    Exact(CountFamily),
    /// NB2 with both log-Gamma terms replaced by the truncated Stirling series.
    ZhangApprox,
    /// NB2 written with explicit log-Gamma functions (no `log m!` constant).
    LgammaForm,
}

impl LikelihoodKernel {
    pub fn has_dispersion(&self) -> bool {
        match self {
            Self::Exact(f) => f.has_dispersion(),
            Self::ZhangApprox | Self::LgammaForm => true,
        }
    }

    pub fn min_support(&self) -> u64 {
        match self {
            Self::Exact(f) => f.truncation.min_support(),
            Self::ZhangApprox | Self::LgammaForm => 0,
        }
    }

    fn term(&self, mu: f64, phi: Option<f64>, m: u64) -> Result<TermDerivatives> {
        match *self {
            Self::Exact(f) => distributions::log_pmf_derivatives(f, EtaPoint { mu, phi }, m),
            Self::ZhangApprox => distributions::zhang_approx_derivatives(mu, need_phi(phi)?, m),
            Self::LgammaForm => distributions::lgamma_form_derivatives(mu, need_phi(phi)?, m),
        }
    }

    fn value(&self, mu: f64, phi: Option<f64>, m: u64) -> Result<f64> {
        match *self {
            Self::Exact(f) => distributions::log_pmf(f, EtaPoint { mu, phi }, m),
            Self::ZhangApprox => distributions::zhang_approx_loglik_term(mu, need_phi(phi)?, m),
            Self::LgammaForm => Ok(distributions::lgamma_form_derivatives(mu, need_phi(phi)?, m)?.value),
        }
    }
}

fn need_phi(phi: Option<f64>) -> Result<f64> {
    phi.ok_or_else(|| Error::Parameter("NB2 kernels require a dispersion".into()))
}

/// Log-likelihood value, natural-scale score and Hessian over `(alpha, beta, phi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loglik: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct Row {
    m: u64,
    ln_n: f64,
    ln_rate: f64,
    x: Vec<f64>,
    z: Vec<f64>,
    label: String,
}

/// Record-level quantities precomputed for repeated likelihood evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    rows: Vec<Row>,
    /// Rows sorted by label; sums run in this order so results do not
    /// depend on record order.
    order: Vec<usize>,
    n_alpha: usize,
    n_beta: usize,
}

impl Problem {
    pub fn new(data: &Dataset, design: &DesignSpec) -> Result<Self> {
        let mats = build_design(data, design)?;
        let mut rows = Vec::with_capacity(data.records.len());
        for (r, &i) in mats.row_index.iter().enumerate() {
            let rec = &data.records[i];
            let (ln_n, ln_rate) = log_parts(rec)?;
            rows.push(Row {
                m: rec.apprehended,
                ln_n,
                ln_rate,
                x: mats.x.row(r).iter().copied().collect(),
                z: mats.z.row(r).iter().copied().collect(),
                label: rec.key().to_string(),
            });
        }
        Ok(Self::from_rows(rows, design.n_alpha(), design.n_beta()))
    }

    /// Intercept-only problem from `(m, n, N)` triples.
    pub fn intercept_only(triples: &[(u64, u64, u64)]) -> Result<Self> {
        let mut rows = Vec::with_capacity(triples.len());
        for (i, &(m, n, big_n)) in triples.iter().enumerate() {
            if !(big_n > 0 && n > 0 && n < big_n) {
                return Err(Error::Domain(format!(
                    "stratum {i} needs N > 0 and 0 < n/N < 1 (n={n}, N={big_n})"
                )));
            }
            let ln_n = (big_n as f64).ln();
            rows.push(Row {
                m,
                ln_n,
                ln_rate: (n as f64).ln() - ln_n,
                x: vec![1.0],
                z: vec![1.0],
                label: format!("stratum {i}"),
            });
        }
        Ok(Self::from_rows(rows, 1, 1))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_alpha(&self) -> usize {
        self.n_alpha
    }

    pub fn n_beta(&self) -> usize {
        self.n_beta
    }

    pub fn counts(&self) -> impl Iterator<Item = u64> + '_ {
        self.rows.iter().map(|r| r.m)
    }

    /// Same strata with replaced counts.
    pub fn with_counts(&self, counts: &[u64]) -> Self {
        assert_eq!(counts.len(), self.rows.len(), "one count per stratum");
        let mut out = self.clone();
        for (row, &m) in out.rows.iter_mut().zip(counts) {
            row.m = m;
        }
        out
    }

    /// Keeps the strata for which `keep` is true.
    pub fn subset(&self, keep: impl Fn(usize) -> bool) -> Self {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, r)| r.clone())
            .collect();
        Self::from_rows(rows, self.n_alpha, self.n_beta)
    }

    fn from_rows(rows: Vec<Row>, n_alpha: usize, n_beta: usize) -> Self {
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| rows[a].label.cmp(&rows[b].label));
        Self {
            rows,
            order,
            n_alpha,
            n_beta,
        }
    }

    /// `sum N^(x'alpha)`, summed in canonical order.
    pub fn xi(&self, alpha: &[f64]) -> f64 {
        let terms = self.xi_terms(alpha);
        self.order.iter().map(|&i| terms[i]).sum()
    }

    fn log_mu(&self, row: &Row, params: &ParamVector) -> f64 {
        dot(&row.x, &params.alpha) * row.ln_n + dot(&row.z, &params.beta) * row.ln_rate
    }

    /// Fitted means, one per stratum.
    pub fn means(&self, params: &ParamVector) -> Vec<f64> {
        self.rows.iter().map(|r| self.log_mu(r, params).exp()).collect()
    }

    /// `N^(x'alpha)` per stratum.
    pub fn xi_terms(&self, alpha: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| (dot(&r.x, alpha) * r.ln_n).exp())
            .collect()
    }

    /// Alpha design rows, one per stratum.
    pub fn alpha_rows(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.x.clone()).collect()
    }

    /// `log N`, `log(n/N)` per stratum.
    pub fn log_covariates(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.ln_n, r.ln_rate)).collect()
    }

    fn check_params(&self, kernel: LikelihoodKernel, params: &ParamVector) -> Result<()> {
        if params.alpha.len() != self.n_alpha || params.beta.len() != self.n_beta {
            return Err(Error::Parameter("parameter length does not match the design".into()));
        }
        if params.phi.is_some() != kernel.has_dispersion() {
            return Err(Error::Parameter("dispersion presence does not match the family".into()));
        }
        Ok(())
    }

    pub fn loglik(&self, kernel: LikelihoodKernel, params: &ParamVector) -> Result<f64> {
        self.check_params(kernel, params)?;
        let mut total = 0.0;
        for row in self.order.iter().map(|&i| &self.rows[i]) {
            let mu = self.log_mu(row, params).exp();
            let v = kernel
                .value(mu, params.phi, row.m)
                .map_err(|e| annotate(e, &row.label))?;
            if !v.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite log-likelihood term {v} at {}",
                    row.label
                )));
            }
            total += v;
        }
        Ok(total)
    }

    pub fn evaluate(&self, kernel: LikelihoodKernel, params: &ParamVector) -> Result<Evaluation> {
        self.check_params(kernel, params)?;
        let (p, q) = (self.n_alpha, self.n_beta);
        let has_phi = kernel.has_dispersion();
        let dim = p + q + usize::from(has_phi);
        let mut loglik = 0.0;
        let mut gradient = DVector::<f64>::zeros(dim);
        let mut hessian = DMatrix::<f64>::zeros(dim, dim);
        let mut c = vec![0.0; p + q];

        for row in self.order.iter().map(|&i| &self.rows[i]) {
            let mu = self.log_mu(row, params).exp();
            let d = kernel
                .term(mu, params.phi, row.m)
                .map_err(|e| annotate(e, &row.label))?;
            for (j, xj) in row.x.iter().enumerate() {
                c[j] = xj * row.ln_n;
            }
            for (j, zj) in row.z.iter().enumerate() {
                c[p + j] = zj * row.ln_rate;
            }
            loglik += d.value;
            for a in 0..p + q {
                gradient[a] += d.d_log_mu * c[a];
                for b in 0..=a {
                    hessian[(a, b)] += d.d2_log_mu * c[a] * c[b];
                }
            }
            if has_phi {
                let k = p + q;
                gradient[k] += d.d_phi;
                for a in 0..k {
                    hessian[(k, a)] += d.d2_log_mu_phi * c[a];
                }
                hessian[(k, k)] += d.d2_phi;
            }
        }
        for a in 0..dim {
            for b in 0..a {
                hessian[(b, a)] = hessian[(a, b)];
            }
        }
        if !loglik.is_finite()
            || gradient.iter().any(|v| !v.is_finite())
            || hessian.iter().any(|v| !v.is_finite())
        {
            return Err(Error::Numerical(
                "non-finite log-likelihood, score or Hessian entry".into(),
            ));
        }
        Ok(Evaluation {
            loglik,
            gradient,
            hessian,
        })
    }
}

fn annotate(e: Error, label: &str) -> Error {
    match e {
        Error::Parameter(msg) => Error::Numerical(format!("{msg} at {label}")),
        Error::OutsideSupport { value, min } => Error::Domain(format!(
            "count {value} at {label} is outside the support (minimum {min})"
        )),
        other => other,
    }
}

pub fn loglik(data: &Dataset, model: &ModelSpec, params: &ParamVector) -> Result<f64> {
    params.check(model)?;
    Problem::new(data, &model.design)?.loglik(LikelihoodKernel::Exact(model.family), params)
}

pub fn score_and_hessian(
    data: &Dataset,
    model: &ModelSpec,
    params: &ParamVector,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    params.check(model)?;
    let eval = Problem::new(data, &model.design)?.evaluate(LikelihoodKernel::Exact(model.family), params)?;
    Ok((eval.gradient, eval.hessian))
}
