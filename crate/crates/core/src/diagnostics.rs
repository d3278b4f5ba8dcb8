//! Residuals and checks of the linearised power relationship.

use serde::Serialize;

use crate::dataio::{Dataset, RecordKey};
use crate::error::{Error, Result};
use crate::mle::{self, FittedModel, LinearizedFit, LinearizedPoint};

/// Below this `kappa = 1/phi` the residual uses its series expansion.
const KAPPA_SERIES: f64 = 1e-8;

/// Anscombe residual of an NB2 fit with `kappa = 1/phi`; pass
/// `phi = f64::INFINITY` for the Poisson limit.
pub fn anscombe_residual(m: u64, mu_hat: f64, phi_hat: f64) -> Result<f64> {
    if !(mu_hat.is_finite() && mu_hat > 0.0) {
        return Err(Error::Parameter(format!("mean must be positive, got {mu_hat}")));
    }
    if phi_hat.is_nan() || phi_hat <= 0.0 {
        return Err(Error::Parameter(format!("dispersion must be positive, got {phi_hat}")));
    }
    let mf = m as f64;
    let kappa = 1.0 / phi_hat;
    let gamma_part = if kappa < KAPPA_SERIES {
        // (3/k)((1+km)^(2/3) - (1+kmu)^(2/3)) expanded to second order in k
        2.0 * (mf - mu_hat) - kappa / 3.0 * (mf * mf - mu_hat * mu_hat)
            + 4.0 / 27.0 * kappa * kappa * (mf.powi(3) - mu_hat.powi(3))
    } else {
        3.0 / kappa * ((1.0 + kappa * mf).powf(2.0 / 3.0) - (1.0 + kappa * mu_hat).powf(2.0 / 3.0))
    };
    let numerator = gamma_part + 3.0 * (mf.powf(2.0 / 3.0) - mu_hat.powf(2.0 / 3.0));
    Ok(numerator / (2.0 * (mu_hat + kappa * mu_hat * mu_hat).powf(1.0 / 6.0)))
}

/// Pearson correlation; zero when either variable is constant.
fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    let scale_x = x.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
    let scale_y = y.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
    if sxx <= 1e-24 * scale_x * scale_x * n || syy <= 1e-24 * scale_y * scale_y * n {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupCheck {
    /// `overall` or the domain variable.
    pub grouping: String,
    pub label: String,
    pub n_records: usize,
    /// Correlation of `log(m/N)` with `log N`.
    pub rho_log_population: f64,
    /// Correlation of `log(m/N)` with `log(n/N)`.
    pub rho_log_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<LinearizedFit>,
    /// Set when the first correlation is >= 0 or the second <= 0.
    pub assumption_flag: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearizedCheck {
    pub overall: GroupCheck,
    pub groups: Vec<GroupCheck>,
    /// Groups skipped for having fewer than 3 records.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<String>,
}

fn check_group(grouping: &str, label: &str, mut points: Vec<LinearizedPoint>) -> GroupCheck {
    // canonical order keeps sums independent of record order
    points.sort_by(|a, b| {
        a.response
            .total_cmp(&b.response)
            .then(a.log_population.total_cmp(&b.log_population))
            .then(a.log_rate.total_cmp(&b.log_rate))
    });
    let y: Vec<f64> = points.iter().map(|p| p.response).collect();
    let ln_n: Vec<f64> = points.iter().map(|p| p.log_population).collect();
    let ln_r: Vec<f64> = points.iter().map(|p| p.log_rate).collect();
    let mut notes = Vec::new();
    let mut corr = |x: &[f64], what: &str| {
        pearson(&y, x).unwrap_or_else(|| {
            notes.push(format!("zero variance in log(m/N) or {what}; correlation set to 0"));
            0.0
        })
    };
    let rho_log_population = corr(&ln_n, "log N");
    let rho_log_rate = corr(&ln_r, "log(n/N)");
    let coefficients = match mle::linearized_regression(&points) {
        Ok(c) => Some(c),
        Err(e) => {
            notes.push(e.to_string());
            None
        }
    };
    GroupCheck {
        grouping: grouping.to_string(),
        label: label.to_string(),
        n_records: points.len(),
        rho_log_population,
        rho_log_rate,
        coefficients,
        assumption_flag: rho_log_population >= 0.0 || rho_log_rate <= 0.0,
        notes,
    }
}

/// Correlations and least-squares coefficients of the linearised model,
/// overall and per level of each domain variable.
pub fn linearized_check(data: &Dataset) -> Result<LinearizedCheck> {
    let points = data
        .records
        .iter()
        .map(LinearizedPoint::from_record)
        .collect::<Result<Vec<_>>>()?;
    let overall = check_group("overall", "all", points.clone());
    let mut groups = Vec::new();
    let mut skipped = Vec::new();
    for (d, name) in data.domain_names.iter().enumerate() {
        let mut levels: Vec<&str> = data.records.iter().map(|r| r.domain[d].as_str()).collect();
        levels.sort_unstable();
        levels.dedup();
        for level in levels {
            let pts: Vec<LinearizedPoint> = data
                .records
                .iter()
                .zip(&points)
                .filter(|(r, _)| r.domain[d] == level)
                .map(|(_, p)| *p)
                .collect();
            if pts.len() < 3 {
                skipped.push(format!("{name}:{level} has {} records", pts.len()));
                continue;
            }
            groups.push(check_group(name, level, pts));
        }
    }
    Ok(LinearizedCheck {
        overall,
        groups,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRow {
    pub key: RecordKey,
    pub m: u64,
    pub mu_hat: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstFit {
    pub key: RecordKey,
    pub m: u64,
    pub mu_hat: f64,
    /// `m - mu_hat`
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub residuals: Vec<ResidualRow>,
    pub worst_fit: Vec<WorstFit>,
    pub linearized: LinearizedCheck,
}

impl DiagnosticsReport {
    pub fn write_residuals_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["key", "m", "mu_hat", "residual"])?;
        for r in &self.residuals {
            w.write_record([r.key.to_string(), r.m.to_string(), r.mu_hat.to_string(), r.residual.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Residuals, the `k` strata with the largest `|m - mu_hat|`, and the
/// linearised check on `data`.
pub fn diagnostics_report(data: &Dataset, fit: &FittedModel, k: usize) -> Result<DiagnosticsReport> {
    let phi = fit.params.phi.unwrap_or(f64::INFINITY);
    let residuals = fit
        .strata
        .iter()
        .map(|s| {
            Ok(ResidualRow {
                key: s.key.clone(),
                m: s.m,
                mu_hat: s.mu_hat,
                residual: anscombe_residual(s.m, s.mu_hat, phi)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut worst: Vec<WorstFit> = fit
        .strata
        .iter()
        .map(|s| WorstFit {
            key: s.key.clone(),
            m: s.m,
            mu_hat: s.mu_hat,
            delta: s.m as f64 - s.mu_hat,
        })
        .collect();
    worst.sort_by(|a, b| b.delta.abs().total_cmp(&a.delta.abs()));
    worst.truncate(k);
    Ok(DiagnosticsReport {
        residuals,
        worst_fit: worst,
        linearized: linearized_check(data)?,
    })
}
