//! Special functions needed by the count likelihoods.

pub use statrs::function::gamma::ln_gamma;

/// Counts at or below this use exact finite sums for Gamma-ratio terms.
const SUM_FORM_LIMIT: u64 = 64;

/// `ln Γ(x + m) − ln Γ(x)` for integer `m`.
pub fn ln_rising(x: f64, m: u64) -> f64 {
    if m == 0 {
        return 0.0;
    }
    if m <= SUM_FORM_LIMIT {
        (0..m).map(|v| (v as f64 + x).ln()).sum()
    } else {
        ln_gamma(x + m as f64) - ln_gamma(x)
    }
}

/// `ψ(x + m) − ψ(x)`.
pub fn digamma_diff(x: f64, m: u64) -> f64 {
    if m <= SUM_FORM_LIMIT {
        (0..m).map(|v| 1.0 / (v as f64 + x)).sum()
    } else {
        digamma(x + m as f64) - digamma(x)
    }
}

/// `ψ'(x + m) − ψ'(x)`.
pub fn trigamma_diff(x: f64, m: u64) -> f64 {
    if m <= SUM_FORM_LIMIT {
        -(0..m)
            .map(|v| {
                let y = v as f64 + x;
                1.0 / (y * y)
            })
            .sum::<f64>()
    } else {
        trigamma(x + m as f64) - trigamma(x)
    }
}

pub fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli asymptotic series.
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
    acc + x.ln() - 0.5 * inv - series
}

pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        + 0.5 * inv2
        + inv
            * inv2
            * (1.0 / 6.0
                - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0))));
    acc + series
}
