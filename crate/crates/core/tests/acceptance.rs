//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::time::Instant;

use popest_core::distributions::{self, log_pmf, mixture_pmf_oracle, pmf, CountFamily, EtaPoint};
use popest_core::meanmodel::{CovariateTerm, DesignSpec, LikelihoodKernel, ModelSpec, ParamVector, Problem};
use popest_core::mle::{self, information_criteria, xi_decompose, FitOptions, Grouping, LinearizedPoint};
use popest_core::simulation::{self, Parameter, SimDesign, Variant};
use popest_core::uncertainty::{self, percentile_interval, spin_interval, BootstrapConfig};
use popest_core::{Dataset, StratumRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn information_criteria_rows() -> Outcome {
    let (a1, _) = information_criteria(-267.1, 3, 100);
    let (a2, _) = information_criteria(-733.1, 2, 100);
    let pass = (a1 - 540.2).abs() < 1e-9 && (a2 - 1470.2).abs() <= 0.2 && (a2 - 1470.3).abs() <= 0.2;
    outcome(pass, format!("AIC(-267.1, 3) = {a1:.4}; AIC(-733.1, 2) = {a2:.4}"))
}

fn distribution_kernel() -> Outcome {
    let grid = [0.5, 1.0, 2.5, 10.0];
    let mut worst_norm = 0.0_f64;
    let mut worst_trunc = 0.0_f64;
    let mut worst_oracle = 0.0_f64;
    for fam in CountFamily::ALL {
        for &mu in &grid {
            for &phi in &grid {
                let eta = EtaPoint {
                    mu,
                    phi: fam.has_dispersion().then_some(phi),
                };
                let min = fam.truncation.min_support();
                // tail below 1e-10: sum far past the mean
                let total: f64 = (min..2000).map(|m| pmf(fam, eta, m).unwrap()).sum();
                worst_norm = worst_norm.max((total - 1.0).abs());
                if fam.truncation != popest_core::Truncation::None {
                    let base = CountFamily::new(fam.family, popest_core::Truncation::None);
                    let below: f64 = (0..min).map(|j| pmf(base, eta, j).unwrap()).sum();
                    for m in min..40 {
                        let want = pmf(base, eta, m).unwrap() / (1.0 - below);
                        worst_trunc = worst_trunc.max((pmf(fam, eta, m).unwrap() - want).abs());
                    }
                }
            }
        }
    }
    for &mu in &grid {
        for &phi in &grid {
            for m in 0..=20 {
                let closed = log_pmf(CountFamily::NB2, EtaPoint::nb2(mu, phi), m).unwrap().exp();
                let oracle = mixture_pmf_oracle(mu, phi, m).unwrap();
                worst_oracle = worst_oracle.max((closed - oracle).abs());
            }
        }
    }
    outcome(
        worst_norm < 1e-8 && worst_trunc < 1e-12 && worst_oracle < 1e-8,
        format!(
            "max |sum-1| = {worst_norm:.2e}, truncation identity {worst_trunc:.2e}, oracle gap {worst_oracle:.2e}"
        ),
    )
}

fn random_problem(rng: &mut ChaCha8Rng, fam: CountFamily) -> (Problem, ParamVector) {
    let strata = rng.random_range(3..9);
    let design = DesignSpec::new(
        vec![CovariateTerm::Intercept, CovariateTerm::Country("A".into())],
        vec![CovariateTerm::Intercept, CovariateTerm::parse("sex:M").unwrap()],
    )
    .unwrap();
    let params = ParamVector::new(
        vec![rng.random_range(0.3..0.9), rng.random_range(-0.2..0.2)],
        vec![rng.random_range(0.2..1.0), rng.random_range(-0.2..0.2)],
        fam.has_dispersion().then(|| rng.random_range(0.3..20.0_f64)),
    );
    let records = (0..strata)
        .map(|i| {
            let big_n: u64 = rng.random_range(20..5000);
            let rate: f64 = rng.random_range(0.01..0.5);
            let n = ((big_n as f64 * rate).round() as u64).clamp(1, big_n - 1);
            let country = if i % 3 == 0 { "A" } else { "B" };
            let sex = if i % 2 == 0 { "M" } else { "F" };
            StratumRecord::new("Q1", country, vec![sex.into(), format!("g{i}")], 0, n, big_n)
        })
        .collect();
    let mut data = Dataset::new(vec!["sex".into(), "group".into()], records).unwrap();
    let problem = Problem::new(&data, &design).unwrap();
    for (rec, mu) in data.records.iter_mut().zip(problem.means(&params)) {
        rec.apprehended = distributions::sample(fam, EtaPoint { mu, phi: params.phi }, rng).unwrap();
    }
    (Problem::new(&data, &design).unwrap(), params)
}

fn derivative_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_g, mut worst_h) = (0.0_f64, 0.0_f64);
    let mut worst_family = "";
    for fam in CountFamily::ALL {
        let kernel = LikelihoodKernel::Exact(fam);
        for _ in 0..50 {
            let (problem, params) = random_problem(&mut rng, fam);
            let (p, q) = (problem.n_alpha(), problem.n_beta());
            let eval = problem.evaluate(kernel, &params).unwrap();
            let theta = params.stacked();
            let dim = theta.len();
            let (mut fd_g, mut fd_h) = (vec![0.0; dim], vec![vec![0.0; dim]; dim]);
            // fourth-order central differences
            for i in 0..dim {
                let h = 1e-4 * theta[i].abs().max(1.0);
                let at = |d: f64| {
                    let mut t = theta.clone();
                    t[i] += d;
                    ParamVector::from_stacked(&t, p, q, fam.has_dispersion())
                };
                let pts = [at(2.0 * h), at(h), at(-h), at(-2.0 * h)];
                let ll: Vec<f64> = pts.iter().map(|x| problem.loglik(kernel, x).unwrap()).collect();
                fd_g[i] = (-ll[0] + 8.0 * ll[1] - 8.0 * ll[2] + ll[3]) / (12.0 * h);
                let g: Vec<_> = pts.iter().map(|x| problem.evaluate(kernel, x).unwrap().gradient).collect();
                for j in 0..dim {
                    fd_h[i][j] = (-g[0][j] + 8.0 * g[1][j] - 8.0 * g[2][j] + g[3][j]) / (12.0 * h);
                }
            }
            let g_scale = eval.gradient.amax().max(1.0);
            let h_scale = eval.hessian.amax().max(1.0);
            for i in 0..dim {
                let e = (fd_g[i] - eval.gradient[i]).abs() / g_scale;
                if e > worst_g {
                    worst_g = e;
                    worst_family = fam.token();
                }
                for (j, fd) in fd_h[i].iter().enumerate() {
                    worst_h = worst_h.max((fd - eval.hessian[(i, j)]).abs() / h_scale);
                }
            }
        }
    }
    outcome(
        worst_g < 1e-6 && worst_h < 1e-5,
        format!("300 instances; max relative error score {worst_g:.2e} ({worst_family}), Hessian {worst_h:.2e}"),
    )
}

fn estimator_recovery() -> Outcome {
    let design = SimDesign {
        alpha_true: 0.7,
        beta_true: 0.8,
        phi_true: 2.5,
        replicates: 200,
        seed: 7,
        population: simulation::synthetic_population(80, 7),
        variants: vec![Variant::ZtNb2],
        keep_zeros: false,
    };
    let mean_m = design.means().iter().sum::<f64>() / 80.0;
    let report = simulation::run_simulation(&design).unwrap();
    let rb_a = report.rb(Variant::ZtNb2, Parameter::Alpha);
    let rb_b = report.rb(Variant::ZtNb2, Parameter::Beta);
    let failures = report.cell(Variant::ZtNb2, Parameter::Alpha).unwrap().failures;
    outcome(
        mean_m >= 5.0 && rb_a.abs() < 1.0 && rb_b.abs() < 1.5,
        format!("mean m {mean_m:.1}; RB(alpha) = {rb_a:.3}%, RB(beta) = {rb_b:.3}%, failures {failures}"),
    )
}

fn stirling_bias() -> Outcome {
    let design = SimDesign {
        alpha_true: 0.7,
        beta_true: 0.8,
        phi_true: 2.5,
        replicates: 500,
        seed: 1,
        population: simulation::synthetic_population(80, 1),
        variants: Variant::ALL.to_vec(),
        keep_zeros: false,
    };
    let r = simulation::run_simulation(&design).unwrap();
    let rb = |v, p| r.rb(v, p);
    let exact = [Variant::ExactGamma, Variant::Nb2Closed];
    let untruncated_alpha = exact.iter().all(|&v| rb(v, Parameter::Alpha) <= -2.0);
    let untruncated_xi = exact.iter().all(|&v| rb(v, Parameter::Xi) <= -8.0);
    let zhang_worse = [Parameter::Alpha, Parameter::Beta].iter().all(|&p| {
        exact
            .iter()
            .all(|&v| rb(Variant::ZhangApprox, p).abs() >= rb(v, p).abs())
    });
    let zt = rb(Variant::ZtNb2, Parameter::Alpha).abs() < 1.0 && rb(Variant::ZtNb2, Parameter::Xi) > 0.0;
    let parts = [
        ("untruncated RB(alpha)<=-2", untruncated_alpha),
        ("untruncated RB(xi)<=-8", untruncated_xi),
        ("zhang at least as biased", zhang_worse),
        ("zt-nb2 |RB(alpha)|<1 and RB(xi)>0", zt),
    ];
    let failed: Vec<&str> = parts.iter().filter(|p| !p.1).map(|p| p.0).collect();
    let table = Variant::ALL
        .iter()
        .map(|&v| {
            format!(
                "{v} a={:.2} b={:.2} xi={:.2}",
                rb(v, Parameter::Alpha),
                rb(v, Parameter::Beta),
                rb(v, Parameter::Xi)
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    let detail = if failed.is_empty() {
        table
    } else {
        format!("{table} | not met: {}", failed.join(", "))
    };
    outcome(failed.is_empty(), detail)
}

fn bootstrap_fixture() -> (Dataset, popest_core::FittedModel) {
    let data = common::synthetic_dataset(80, 11, CountFamily::ZTNB2, 0.7, 0.8, Some(2.5));
    let spec = ModelSpec::new(CountFamily::ZTNB2, DesignSpec::intercept_only());
    let fit = mle::fit(&data, &spec, &FitOptions::default()).unwrap();
    (data, fit)
}

fn run_in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

fn bootstrap_pipeline() -> Outcome {
    let (data, fit) = bootstrap_fixture();
    let config = BootstrapConfig::new(500, 42);
    let render = |threads| {
        run_in_pool(threads, || {
            let r = uncertainty::parametric_bootstrap_with(&data, &fit, &config).unwrap();
            let mut csv = Vec::new();
            r.write_draws_csv(&mut csv).unwrap();
            (serde_json::to_vec(&r).unwrap(), csv, r)
        })
    };
    let (json1, csv1, r1) = render(1);
    let (json4, csv4, _) = render(4);
    let deterministic = json1 == json4 && csv1 == csv4;

    let mut zero = fit.clone();
    let dim = zero.params.len();
    zero.covariance = Some(vec![vec![0.0; dim]; dim]);
    let z = uncertainty::parametric_bootstrap(&data, &zero, 20, 3).unwrap();
    let degenerate = ["plugin", "percentile", "spin"].iter().all(|k| {
        let iv = z.intervals[*k];
        (iv.lower - fit.xi_hat).abs() <= 1e-9 * fit.xi_hat && (iv.upper - fit.xi_hat).abs() <= 1e-9 * fit.xi_hat
    });

    let stars = r1.xi_stars();
    let spin = spin_interval(&stars, 0.95).unwrap();
    let pct = percentile_interval(&stars, 0.95).unwrap();
    let mean = stars.iter().sum::<f64>() / stars.len() as f64;
    let sd = (stars.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (stars.len() - 1) as f64).sqrt();
    let skew = stars.iter().map(|x| ((x - mean) / sd).powi(3)).sum::<f64>() / stars.len() as f64;
    let narrower = skew > 0.0 && spin.width() < pct.width();
    outcome(
        deterministic && degenerate && narrower,
        format!(
            "bytes equal across 1/4 threads: {deterministic}; zero-cov degenerate: {degenerate}; \
             xi* skewness {skew:.2}, SPIN width {:.1} < percentile width {:.1}: {narrower}; failures {}",
            spin.width(),
            pct.width(),
            r1.failures
        ),
    )
}

fn linearized_check() -> Outcome {
    let (a1, b) = (-0.4109, 0.5694);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let points: Vec<LinearizedPoint> = (0..60)
        .map(|_| {
            let ln_n = rng.random_range(2.0_f64..12.0);
            let ln_r = rng.random_range(-5.0_f64..-0.5);
            LinearizedPoint {
                response: a1 * ln_n + b * ln_r,
                log_population: ln_n,
                log_rate: ln_r,
            }
        })
        .collect();
    let fit = mle::linearized_regression(&points).unwrap();
    let err = (fit.alpha_minus_one - a1).abs().max((fit.beta - b).abs());
    outcome(
        err < 1e-10,
        format!(
            "recovered ({:.12}, {:.12}), max error {err:.1e}",
            fit.alpha_minus_one, fit.beta
        ),
    )
}

fn non_reproducibility() -> Outcome {
    // Published totals are only checked for their internal arithmetic.
    let published: [(&[u32], u32); 2] = [(&[13_586, 867], 14_453), (&[6_492, 7_961], 14_453)];
    let table_sums = published.iter().all(|(parts, total)| parts.iter().sum::<u32>() == *total);

    let data = common::synthetic_dataset(80, 21, CountFamily::ZTNB2, 0.7, 0.8, Some(2.5));
    let spec = ModelSpec::new(
        CountFamily::ZTNB2,
        DesignSpec::new(
            vec![CovariateTerm::Intercept, CovariateTerm::Country("Ukraine".into())],
            vec![CovariateTerm::Intercept],
        )
        .unwrap(),
    );
    let fit = mle::fit(&data, &spec, &FitOptions::default()).unwrap();
    let mut worst = 0.0_f64;
    for g in [
        Grouping::CountryFlag("Ukraine".into()),
        Grouping::Domain("sex".into()),
        Grouping::Country,
        Grouping::Constant,
    ] {
        let parts = xi_decompose(&fit, &g).unwrap();
        worst = worst.max((parts.values().sum::<f64>() - fit.xi_hat).abs() / fit.xi_hat);
    }
    let boot = uncertainty::parametric_bootstrap(&data, &fit, 100, 9).unwrap();
    let mean = boot.draws.iter().map(|d| d.xi_star).sum::<f64>() / boot.draws.len() as f64;
    let rmse_gap = (boot.rmse - boot.mse.sqrt() / mean).abs();
    outcome(
        table_sums && fit.converged() && worst < 1e-10 && rmse_gap < 1e-12,
        format!(
            "published partition arithmetic holds: {table_sums}; synthetic partitions max rel gap {worst:.1e}; \
             |rmse - sqrt(mse)/mean xi*| = {rmse_gap:.1e}"
        ),
    )
}

fn main() {
    type Check = (&'static str, fn() -> Outcome);
    let criteria: [Check; 8] = [
        ("information criteria arithmetic", information_criteria_rows),
        ("distribution kernel", distribution_kernel),
        ("derivative correctness", derivative_correctness),
        ("estimator recovery (zt-nb2, B=200)", estimator_recovery),
        ("Stirling-bias direction (phi=2.5, B=500)", stirling_bias),
        ("bootstrap pipeline (B=500)", bootstrap_pipeline),
        ("linearized check", linearized_check),
        ("partition and rmse relationships", non_reproducibility),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        if !o.pass {
            failures += 1;
        }
        println!(
            "criterion {}: {} {name} [{:.1}s] {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
