//! Count-distribution kernel.
//!
//! Poisson and NB2 (mean `mu`, dispersion `phi`, variance `mu + mu^2/phi`),
//! each optionally zero-truncated or zero-one-truncated. Besides log-densities
//! the module provides per-observation derivatives with respect to `log mu`
//! and `phi`; [`crate::meanmodel`] chains these through the power-link mean.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::special::{digamma_diff, ln_gamma, ln_rising, trigamma_diff};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Poisson,
    #[serde(rename = "NB2")]
    NegBin2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Truncation {
    None,
    Zero,
    ZeroOne,
}

impl Truncation {
    /// Smallest count in the support.
    pub fn min_support(self) -> u64 {
        match self {
            Truncation::None => 0,
            Truncation::Zero => 1,
            Truncation::ZeroOne => 2,
        }
    }
}

/// Serialized as its token, e.g. `ztnb2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct CountFamily {
    pub family: Family,
    pub truncation: Truncation,
}

impl CountFamily {
    pub const PO: Self = Self::new(Family::Poisson, Truncation::None);
    pub const ZTPO: Self = Self::new(Family::Poisson, Truncation::Zero);
    pub const ZOTPO: Self = Self::new(Family::Poisson, Truncation::ZeroOne);
    pub const NB2: Self = Self::new(Family::NegBin2, Truncation::None);
    pub const ZTNB2: Self = Self::new(Family::NegBin2, Truncation::Zero);
    pub const ZOTNB2: Self = Self::new(Family::NegBin2, Truncation::ZeroOne);

    pub const ALL: [Self; 6] = [
        Self::PO,
        Self::ZTPO,
        Self::ZOTPO,
        Self::NB2,
        Self::ZTNB2,
        Self::ZOTNB2,
    ];

    pub const fn new(family: Family, truncation: Truncation) -> Self {
        Self { family, truncation }
    }

    pub fn has_dispersion(&self) -> bool {
        self.family == Family::NegBin2
    }

    /// Short token: `po`, `ztpo`, `zotpo`, `nb2`, `ztnb2`, `zotnb2`.
    pub fn token(&self) -> &'static str {
        match (self.family, self.truncation) {
            (Family::Poisson, Truncation::None) => "po",
            (Family::Poisson, Truncation::Zero) => "ztpo",
            (Family::Poisson, Truncation::ZeroOne) => "zotpo",
            (Family::NegBin2, Truncation::None) => "nb2",
            (Family::NegBin2, Truncation::Zero) => "ztnb2",
            (Family::NegBin2, Truncation::ZeroOne) => "zotnb2",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.token() == token)
    }
}

/// Distribution parameters at one stratum.
impl From<CountFamily> for String {
    fn from(f: CountFamily) -> Self {
        f.token().to_string()
    }
}

impl TryFrom<String> for CountFamily {
    type Error = String;

    fn try_from(token: String) -> std::result::Result<Self, Self::Error> {
        CountFamily::from_token(&token).ok_or_else(|| format!("unknown family `{token}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaPoint {
    pub mu: f64,
    pub phi: Option<f64>,
}

impl EtaPoint {
    pub fn poisson(mu: f64) -> Self {
        Self { mu, phi: None }
    }

    pub fn nb2(mu: f64, phi: f64) -> Self {
        Self { mu, phi: Some(phi) }
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if mu.is_finite() && mu > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("mean must be positive and finite, got {mu}")))
    }
}

fn check_phi(phi: f64) -> Result<()> {
    if phi.is_finite() && phi > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("dispersion must be positive and finite, got {phi}")))
    }
}

fn resolve(family: CountFamily, eta: EtaPoint) -> Result<f64> {
    check_mu(eta.mu)?;
    match (family.family, eta.phi) {
        (Family::NegBin2, Some(phi)) => {
            check_phi(phi)?;
            Ok(phi)
        }
        (Family::NegBin2, None) => Err(Error::Parameter("NB2 requires a dispersion".into())),
        (Family::Poisson, None) => Ok(f64::NAN),
        (Family::Poisson, Some(_)) => Err(Error::Parameter(
            "Poisson has no dispersion parameter".into(),
        )),
    }
}

fn poisson_ln(mu: f64, m: u64) -> f64 {
    let mf = m as f64;
    let log_term = if m == 0 { 0.0 } else { mf * mu.ln() };
    log_term - mu - ln_gamma(mf + 1.0)
}

fn nb2_ln(mu: f64, phi: f64, m: u64) -> f64 {
    let mf = m as f64;
    let log_term = if m == 0 {
        0.0
    } else {
        mf * (mu.ln() - (mu + phi).ln())
    };
    ln_rising(phi, m) - ln_gamma(mf + 1.0) + log_term - phi * (mu / phi).ln_1p()
}

fn untruncated_ln(family: Family, mu: f64, phi: f64, m: u64) -> f64 {
    match family {
        Family::Poisson => poisson_ln(mu, m),
        Family::NegBin2 => nb2_ln(mu, phi, m),
    }
}

/// `log P(M >= k)` for the untruncated law, `k` = 1 or 2.
fn ln_upper_mass(family: Family, mu: f64, phi: f64, truncation: Truncation) -> f64 {
    match (family, truncation) {
        (_, Truncation::None) => 0.0,
        (Family::Poisson, Truncation::Zero) => (-(-mu).exp_m1()).ln(),
        (Family::NegBin2, Truncation::Zero) => (-(-phi * (mu / phi).ln_1p()).exp_m1()).ln(),
        (Family::Poisson, Truncation::ZeroOne) => {
            if mu < 0.1 {
                // e^{-mu} * sum_{k>=2} mu^k / k!
                let mut term = mu * mu / 2.0;
                let mut sum = 0.0_f64;
                let mut k = 2.0;
                while term > 1e-18 * sum.max(f64::MIN_POSITIVE) && k < 60.0 {
                    sum += term;
                    k += 1.0;
                    term *= mu / k;
                }
                sum.ln() - mu
            } else {
                let s = -(-mu).exp_m1() - mu * (-mu).exp();
                s.ln()
            }
        }
        (Family::NegBin2, Truncation::ZeroOne) => {
            let ln_f0 = -phi * (mu / phi).ln_1p();
            let f1 = (ln_f0 + (phi * mu / (mu + phi)).ln()).exp();
            (-ln_f0.exp_m1() - f1).ln()
        }
    }
}

/// `log f(m; eta)` for the chosen family and truncation.
pub fn log_pmf(family: CountFamily, eta: EtaPoint, m: u64) -> Result<f64> {
    let phi = resolve(family, eta)?;
    let min = family.truncation.min_support();
    if m < min {
        return Err(Error::OutsideSupport { value: m, min });
    }
    let base = untruncated_ln(family.family, eta.mu, phi, m);
    Ok(base - ln_upper_mass(family.family, eta.mu, phi, family.truncation))
}

pub fn pmf(family: CountFamily, eta: EtaPoint, m: u64) -> Result<f64> {
    log_pmf(family, eta, m).map(f64::exp)
}

/// Value and derivatives of one log-likelihood term with respect to
/// `log mu` and `phi`. Dispersion entries are zero for Poisson.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TermDerivatives {
    pub value: f64,
    pub d_log_mu: f64,
    pub d_phi: f64,
    pub d2_log_mu: f64,
    pub d2_log_mu_phi: f64,
    pub d2_phi: f64,
}

fn untruncated_derivs(family: Family, mu: f64, phi: f64, m: u64) -> TermDerivatives {
    let mf = m as f64;
    match family {
        Family::Poisson => TermDerivatives {
            value: poisson_ln(mu, m),
            d_log_mu: mf - mu,
            d2_log_mu: -mu,
            ..Default::default()
        },
        Family::NegBin2 => {
            let s = mu + phi;
            TermDerivatives {
                value: nb2_ln(mu, phi, m),
                d_log_mu: phi * (mf - mu) / s,
                d2_log_mu: -(mf + phi) * phi * mu / (s * s),
                d2_log_mu_phi: mu * (mf - mu) / (s * s),
                d_phi: digamma_diff(phi, m) - (mu / phi).ln_1p() + (mu - mf) / s,
                d2_phi: trigamma_diff(phi, m) + mu / (phi * s) - (mu - mf) / (s * s),
            }
        }
    }
}

fn derivs_unchecked(family: CountFamily, mu: f64, phi: f64, m: u64) -> TermDerivatives {
    let mut d = untruncated_derivs(family.family, mu, phi, m);
    if family.truncation == Truncation::None {
        return d;
    }
    // log S with S = 1 - sum_{j<k} f_j; dS = -sum f_j dl_j,
    // d2S = -sum f_j (d2l_j + dl_j dl_j^T).
    let ln_s = ln_upper_mass(family.family, mu, phi, family.truncation);
    let (mut g_t, mut g_p) = (0.0, 0.0);
    let (mut h_tt, mut h_tp, mut h_pp) = (0.0, 0.0, 0.0);
    for j in 0..family.truncation.min_support() {
        let dj = untruncated_derivs(family.family, mu, phi, j);
        let r = (dj.value - ln_s).exp();
        g_t -= r * dj.d_log_mu;
        g_p -= r * dj.d_phi;
        h_tt -= r * (dj.d2_log_mu + dj.d_log_mu * dj.d_log_mu);
        h_tp -= r * (dj.d2_log_mu_phi + dj.d_log_mu * dj.d_phi);
        h_pp -= r * (dj.d2_phi + dj.d_phi * dj.d_phi);
    }
    h_tt -= g_t * g_t;
    h_tp -= g_t * g_p;
    h_pp -= g_p * g_p;

    d.value -= ln_s;
    d.d_log_mu -= g_t;
    d.d2_log_mu -= h_tt;
    if family.has_dispersion() {
        d.d_phi -= g_p;
        d.d2_log_mu_phi -= h_tp;
        d.d2_phi -= h_pp;
    }
    d
}

/// Derivatives of [`log_pmf`] with respect to `log mu` and `phi`.
pub fn log_pmf_derivatives(family: CountFamily, eta: EtaPoint, m: u64) -> Result<TermDerivatives> {
    let phi = resolve(family, eta)?;
    let min = family.truncation.min_support();
    if m < min {
        return Err(Error::OutsideSupport { value: m, min });
    }
    Ok(derivs_unchecked(family, eta.mu, phi, m))
}

/// The per-stratum term obtained by replacing both log-Gamma functions of the
/// NB2 likelihood with the truncated Stirling series `(z-1/2)log z - z + log(2pi)/2`
/// and dropping constants:
/// `m log mu - (m+phi) log(mu+phi) + (m+phi-1/2) log(m+phi) + log(phi)/2`.
pub fn zhang_approx_loglik_term(mu: f64, phi: f64, m: u64) -> Result<f64> {
    check_mu(mu)?;
    check_phi(phi)?;
    Ok(zhang_derivs(mu, phi, m).value)
}

pub fn zhang_approx_derivatives(mu: f64, phi: f64, m: u64) -> Result<TermDerivatives> {
    check_mu(mu)?;
    check_phi(phi)?;
    Ok(zhang_derivs(mu, phi, m))
}

fn zhang_derivs(mu: f64, phi: f64, m: u64) -> TermDerivatives {
    let mf = m as f64;
    let s = mu + phi;
    let q = mf + phi;
    let log_term = if m == 0 { 0.0 } else { mf * mu.ln() };
    TermDerivatives {
        value: log_term - q * s.ln() + (q - 0.5) * q.ln() + 0.5 * phi.ln(),
        d_log_mu: phi * (mf - mu) / s,
        d2_log_mu: -q * phi * mu / (s * s),
        d2_log_mu_phi: mu * (mf - mu) / (s * s),
        d_phi: -s.ln() - q / s + q.ln() + (q - 0.5) / q + 0.5 / phi,
        d2_phi: -(2.0 * mu + phi - mf) / (s * s) + (q + 0.5) / (q * q) - 0.5 / (phi * phi),
    }
}

/// NB2 term written with explicit log-Gamma functions and without the
/// `log m!` constant:
/// `m log mu - (m+phi) log(mu+phi) + lnΓ(m+phi) + phi log phi - lnΓ(phi)`.
pub fn lgamma_form_derivatives(mu: f64, phi: f64, m: u64) -> Result<TermDerivatives> {
    check_mu(mu)?;
    check_phi(phi)?;
    let mf = m as f64;
    let q = mf + phi;
    let log_term = if m == 0 { 0.0 } else { mf * mu.ln() };
    let value = log_term - q * (mu + phi).ln() + ln_gamma(q) + phi * phi.ln() - ln_gamma(phi);
    let mut d = untruncated_derivs(Family::NegBin2, mu, phi, m);
    d.value = value;
    Ok(d)
}

/// Poisson-Gamma mixture probability evaluated by adaptive quadrature:
/// `∫ Poisson(m; mu u) Gamma(u; shape phi, rate phi) du`.
pub fn mixture_pmf_oracle(mu: f64, phi: f64, m: u64) -> Result<f64> {
    check_mu(mu)?;
    check_phi(phi)?;
    let mf = m as f64;
    // Gamma log-density regrouped as phi*(log u - (u - 1)) - log u plus a
    // constant, which keeps the terms small when phi is large.
    let ln_const = phi * phi.ln() - phi - ln_gamma(phi) - ln_gamma(mf + 1.0);
    let ln_integrand = move |u: f64| -> f64 {
        if u <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let w = u - 1.0;
        let pois = if m == 0 { 0.0 } else { mf * (mu * u).ln() } - mu * u;
        ln_const + pois + phi * (w.ln_1p() - w) - u.ln()
    };

    // The integrand is proportional to a Gamma(m + phi, mu + phi) kernel; use
    // its location and scale only to place breakpoints.
    let shape = mf + phi;
    let rate = mu + phi;
    let centre = shape / rate;
    let sd = shape.sqrt() / rate;
    let lower = (centre - 60.0 * sd).max(0.0);
    let upper = centre + 60.0 * sd + 60.0 / rate;
    let mut knots = vec![lower, upper];
    for k in [-16.0, -8.0, -4.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
        let x = centre + k * sd;
        if x > lower && x < upper {
            knots.push(x);
        }
    }
    knots.sort_by(f64::total_cmp);
    knots.dedup();

    let abs_tol = 1e-16;
    let rel_tol = 1e-11;
    let max_intervals = 4000;
    let result = if lower == 0.0 {
        // u = s^p removes the u^(phi-1) singularity at the origin.
        let p = (1.0 / phi).ceil().max(1.0);
        let s_knots: Vec<f64> = knots.iter().map(|&u| u.powf(1.0 / p)).collect();
        quadrature::integrate(
            |s: f64| {
                // Kronrod nodes never touch the endpoints.
                if s <= 0.0 {
                    return 0.0;
                }
                let u = s.powf(p);
                (ln_integrand(u) + p.ln() + (p - 1.0) * s.ln()).exp()
            },
            &s_knots,
            abs_tol,
            rel_tol,
            max_intervals,
        )
    } else {
        quadrature::integrate(
            |u| ln_integrand(u).exp(),
            &knots,
            abs_tol,
            rel_tol,
            max_intervals,
        )
    };
    result.map(|r| r.value).map_err(|nc| {
        Error::Numerical(format!(
            "mixture quadrature did not converge for mu={mu}, phi={phi}, m={m}: \
             estimate {} with error {} over {} intervals (tolerance {})",
            nc.estimate.value, nc.estimate.error, nc.estimate.intervals, nc.abs_tol
        ))
    })
}

const MAX_REJECTIONS: u64 = 1_000_000;

fn sample_untruncated<R: Rng + ?Sized>(family: Family, mu: f64, phi: f64, rng: &mut R) -> Result<u64> {
    let lambda = match family {
        Family::Poisson => mu,
        Family::NegBin2 => {
            let gamma = Gamma::new(phi, 1.0 / phi)
                .map_err(|e| Error::Sampling(format!("gamma mixing law: {e}")))?;
            mu * gamma.sample(rng)
        }
    };
    if lambda <= 0.0 {
        return Ok(0);
    }
    let poisson = Poisson::new(lambda)
        .map_err(|e| Error::Sampling(format!("poisson rate {lambda}: {e}")))?;
    Ok(poisson.sample(rng) as u64)
}

/// One draw from the (possibly truncated) family; truncated laws are sampled
/// by rejecting out-of-support draws of the untruncated law.
pub fn sample<R: Rng + ?Sized>(family: CountFamily, eta: EtaPoint, rng: &mut R) -> Result<u64> {
    let phi = resolve(family, eta)?;
    let min = family.truncation.min_support();
    for _ in 0..MAX_REJECTIONS {
        let draw = sample_untruncated(family.family, eta.mu, phi, rng)?;
        if draw >= min {
            return Ok(draw);
        }
    }
    Err(Error::Sampling(format!(
        "no draw >= {min} after {MAX_REJECTIONS} attempts (mu={})",
        eta.mu
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn unit_mean_poisson() {
        let v = log_pmf(CountFamily::PO, EtaPoint::poisson(1.0), 1).unwrap();
        assert!(close(v, -1.0, 1e-15));
    }

    #[test]
    fn zero_truncated_poisson_at_ln2() {
        let mu = std::f64::consts::LN_2;
        let f = pmf(CountFamily::ZTPO, EtaPoint::poisson(mu), 1).unwrap();
        assert!(close(f, mu, 1e-15));
    }

    #[test]
    fn nb2_unit_dispersion_is_geometric() {
        let eta = EtaPoint::nb2(1.0, 1.0);
        for (m, want) in [(0, 0.5), (1, 0.25), (2, 0.125)] {
            assert!(close(pmf(CountFamily::NB2, eta, m).unwrap(), want, 1e-14));
        }
        for (m, want) in [(1, 0.5), (2, 0.25)] {
            assert!(close(pmf(CountFamily::ZTNB2, eta, m).unwrap(), want, 1e-14));
        }
        assert!(close(pmf(CountFamily::ZOTNB2, eta, 2).unwrap(), 0.5, 1e-14));
    }

    #[test]
    fn support_and_parameter_errors() {
        assert!(matches!(
            log_pmf(CountFamily::ZTPO, EtaPoint::poisson(1.0), 0),
            Err(Error::OutsideSupport { value: 0, min: 1 })
        ));
        assert!(matches!(
            log_pmf(CountFamily::ZOTNB2, EtaPoint::nb2(1.0, 1.0), 1),
            Err(Error::OutsideSupport { value: 1, min: 2 })
        ));
        assert!(log_pmf(CountFamily::PO, EtaPoint::poisson(0.0), 1).is_err());
        assert!(log_pmf(CountFamily::NB2, EtaPoint::nb2(1.0, -1.0), 1).is_err());
        assert!(log_pmf(CountFamily::NB2, EtaPoint::poisson(1.0), 1).is_err());
        assert!(log_pmf(CountFamily::PO, EtaPoint::nb2(1.0, 1.0), 1).is_err());
    }

    #[test]
    fn nb2_matches_sum_form() {
        // sum_{v=0}^{m-1} log(v+phi) - log m! - (m+phi) log(1+mu/phi) + m log(mu/phi)
        for &(mu, phi, m) in &[(2.5, 1.5, 3u64), (0.7, 4.0, 10), (30.0, 0.8, 41)] {
            let mf = m as f64;
            let sum: f64 = (0..m).map(|v| (v as f64 + phi).ln()).sum();
            let want = sum - ln_gamma(mf + 1.0) - (mf + phi) * (1.0 + mu / phi).ln()
                + mf * (mu / phi).ln();
            let got = log_pmf(CountFamily::NB2, EtaPoint::nb2(mu, phi), m).unwrap();
            assert!(close(got, want, 1e-11), "{got} vs {want}");
        }
    }

    #[test]
    fn stable_truncation_for_tiny_mean() {
        // log(1 - e^{-mu}) with mu = 1e-8 is log(mu) - mu/2 + O(mu^2).
        let mu = 1e-8_f64;
        let got = ln_upper_mass(Family::Poisson, mu, f64::NAN, Truncation::Zero);
        let want = mu.ln() - mu / 2.0 + mu * mu / 24.0;
        assert!(((got - want) / want).abs() < 1e-12);
        // NB2: 1 - (1+mu/phi)^-phi = 1 - exp(-phi log1p(mu/phi)).
        let phi = 2.0;
        let x = phi * (mu / phi).ln_1p();
        let want = (x - x * x / 2.0 + x * x * x / 6.0).ln();
        let got = ln_upper_mass(Family::NegBin2, mu, phi, Truncation::Zero);
        assert!(((got - want) / want).abs() < 1e-12);
    }

    #[test]
    fn zhang_term_values() {
        let v = zhang_approx_loglik_term(1.0, 1.0, 1).unwrap();
        assert!(close(v, -0.5 * 2f64.ln(), 1e-15));
        assert!(zhang_approx_loglik_term(1.0, 0.0, 1).is_err());
        // Differs from exact NB2 (plus the log m! constant and log(2pi)) by the
        // Stirling remainders, which are nonzero.
        let (mu, phi, m) = (3.2, 1.7, 4u64);
        let exact = log_pmf(CountFamily::NB2, EtaPoint::nb2(mu, phi), m).unwrap()
            + ln_gamma(m as f64 + 1.0);
        let approx = zhang_approx_loglik_term(mu, phi, m).unwrap();
        assert!((exact - approx).abs() > 1e-3);
    }

    #[test]
    fn oracle_special_cases() {
        let v = mixture_pmf_oracle(1.0, 1.0, 0).unwrap();
        assert!(close(v, 0.5, 1e-12));
        let v = mixture_pmf_oracle(2.5, 1.5, 3).unwrap();
        let closed = pmf(CountFamily::NB2, EtaPoint::nb2(2.5, 1.5), 3).unwrap();
        assert!(close(v, closed, 1e-8));
        let v = mixture_pmf_oracle(1.0, 1e6, 1).unwrap();
        assert!(close(v, (-1f64).exp(), 1e-4));
    }

    #[test]
    fn sampler_is_deterministic() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| sample(CountFamily::ZTNB2, EtaPoint::nb2(3.0, 2.0), &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
        assert_ne!(draw(7), draw(8));
    }

    #[test]
    fn ztpo_frequency_of_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let eta = EtaPoint::poisson(std::f64::consts::LN_2);
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| sample(CountFamily::ZTPO, eta, &mut rng).unwrap() == 1)
            .count();
        assert!(close(ones as f64 / n as f64, std::f64::consts::LN_2, 0.01));
    }

    #[test]
    fn nb2_empirical_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let eta = EtaPoint::nb2(1.0, 1.0);
        let n = 100_000;
        let total: u64 = (0..n)
            .map(|_| sample(CountFamily::NB2, eta, &mut rng).unwrap())
            .sum();
        assert!(close(total as f64 / n as f64, 1.0, 0.02));
    }

    #[test]
    fn token_round_trip() {
        for f in CountFamily::ALL {
            assert_eq!(CountFamily::from_token(f.token()), Some(f));
        }
        assert_eq!(CountFamily::from_token("zinb"), None);
    }
}
