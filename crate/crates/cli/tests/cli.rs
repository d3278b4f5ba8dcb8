use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use popest_core::simulation::{self, SimDesign, Variant};

fn popest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_popest")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Synthetic ztNB2-style data: 60 strata, the first one labelled Ukraine.
fn fixture(dir: &Path, periods: &[&str]) -> PathBuf {
    let design = SimDesign {
        alpha_true: 0.7,
        beta_true: 0.8,
        phi_true: 2.5,
        replicates: 2,
        seed: 9,
        population: simulation::synthetic_population(60, 9),
        variants: vec![Variant::ZtNb2],
        keep_zeros: false,
    };
    let mut csv = String::from("period,country,sex,m,n,N\n");
    for (p, period) in periods.iter().enumerate() {
        let counts = simulation::draw_counts(&design, p).unwrap();
        for (i, (&(big_n, n), m)) in design.population.iter().zip(counts).enumerate() {
            let country = if i == 0 { "Ukraine".to_string() } else { format!("C{i:02}") };
            let sex = if i % 2 == 0 { "M" } else { "F" };
            csv.push_str(&format!("{period},{country},{sex},{m},{n},{big_n}\n"));
        }
    }
    let path = dir.join("data.csv");
    fs::write(&path, csv).unwrap();
    path
}

#[test]
fn fit_counts_parameters_with_country_term() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path(), &["2019Q1"]);
    let out = popest(&["fit", "--data", data.to_str().unwrap(), "--dist", "ztnb2", "--alpha-cov", "intercept,country:Ukraine"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["k"], 4);
    assert_eq!(v["params"]["alpha"].as_array().unwrap().len(), 2);
    assert!(v["params"]["phi"].is_number());
    assert!(v["xi_by_group"]["country:Ukraine"].is_object());
}

#[test]
fn poisson_report_has_no_dispersion() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path(), &["2019Q1"]);
    let out = popest(&["fit", "--data", data.to_str().unwrap(), "--dist", "po", "--allow-nonconverged"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["k"], 2);
    assert!(v["params"].get("phi").is_none_or(|p| p.is_null()));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path(), &["2019Q1"]);
    let d = data.to_str().unwrap();
    assert_eq!(popest(&["fit", "--data", d, "--dist", "gamma"]).status.code(), Some(2));
    assert_eq!(popest(&["boot", "--data", d, "-B", "0"]).status.code(), Some(2));
    assert_eq!(popest(&["simulate", "-B", "2"]).status.code(), Some(2));
    assert_eq!(popest(&["fit", "--data", d, "--schema", "N=pesel"]).status.code(), Some(2));
    assert_eq!(popest(&["fit", "--data", "/nonexistent.csv"]).status.code(), Some(2));
}

#[test]
fn several_periods_need_a_choice() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path(), &["2019Q1", "2019Q2"]);
    let d = data.to_str().unwrap();
    assert_eq!(popest(&["fit", "--data", d]).status.code(), Some(2));
    stdout(&popest(&["fit", "--data", d, "--period", "2019Q2"]));
}

#[test]
fn boot_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path(), &["2019Q1"]);
    let d = data.to_str().unwrap();
    let draws = dir.path().join("draws.csv");
    let args = ["boot", "--data", d, "-B", "2", "--seed", "1", "--draws", draws.to_str().unwrap()];
    let a = stdout(&popest(&args));
    let first_draws = fs::read(&draws).unwrap();
    let b = stdout(&popest(&args));
    assert_eq!(a, b);
    assert_eq!(first_draws, fs::read(&draws).unwrap());
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["B"], 2);
    assert!(v["intervals"]["plugin"].is_object());
    assert_eq!(fs::read_to_string(&draws).unwrap().lines().count(), 3);

    let single = Command::new(env!("CARGO_BIN_EXE_popest")).args(args).env("POPEST_THREADS", "1").output().unwrap();
    assert_eq!(stdout(&single), a);
}

#[test]
fn compare_grid_sorted_by_bic() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path(), &["2019Q1"]);
    let out = popest(&[
        "compare",
        "--data",
        data.to_str().unwrap(),
        "--dists",
        "po,ztpo,nb2,ztnb2",
        "--alpha-covs",
        "intercept;intercept,country:Ukraine",
    ]);
    let text = stdout(&out);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let bic = headers.iter().position(|h| h == "bic").unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 8);
    let bics: Vec<f64> = rows.iter().map(|r| r[bic].parse().unwrap()).collect();
    assert!(bics.windows(2).all(|w| w[0] <= w[1]), "{bics:?}");
}

#[test]
fn compare_keeps_failed_cells() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path(), &["2019Q1"]);
    // an indicator for an absent level makes the alpha design singular
    let out = popest(&["compare", "--data", data.to_str().unwrap(), "--dists", "ztnb2", "--alpha-covs", "intercept;intercept,sex:X"]);
    let text = stdout(&out);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let status = rdr.headers().unwrap().iter().position(|h| h == "status").unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][status], "ok");
    assert_ne!(&rows[1][status], "ok");
}

#[test]
fn diagnose_writes_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path(), &["2019Q1"]);
    let res = dir.path().join("res.csv");
    let out = popest(&["diagnose", "--data", data.to_str().unwrap(), "--top-k", "3", "--residuals-csv", res.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["worst_fit"].as_array().unwrap().len(), 3);
    let lines = fs::read_to_string(&res).unwrap();
    assert!(lines.starts_with("key,m,mu_hat,residual\n"));
}

#[test]
fn simulate_single_variant() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("sim.csv");
    let args = ["simulate", "--phi", "2.5", "-B", "5", "--strata", "40", "--variants", "zt-nb2", "--output", out_path.to_str().unwrap()];
    stdout(&popest(&args));
    let text = fs::read_to_string(&out_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "variant,parameter,rb_percent,rrmse_percent,failures");
    assert_eq!(lines.len(), 5);
    assert!(lines[1..].iter().all(|l| l.starts_with("zt-nb2,")));
    stdout(&popest(&args));
    assert_eq!(fs::read_to_string(&out_path).unwrap(), text);
}
