#![allow(dead_code)]

use popest_core::distributions::{self, CountFamily, EtaPoint};
use popest_core::simulation::synthetic_population;
use popest_core::{Dataset, StratumRecord};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Intercept-only data drawn from `family` on the synthetic population.
/// Stratum 0 is labelled `Ukraine`; sex alternates M/F. Zero counts are dropped.
pub fn synthetic_dataset(
    strata: usize,
    seed: u64,
    family: CountFamily,
    alpha: f64,
    beta: f64,
    phi: Option<f64>,
) -> Dataset {
    let pop = synthetic_population(strata, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let records = pop
        .iter()
        .enumerate()
        .filter_map(|(i, &(big_n, n))| {
            let nf = big_n as f64;
            let mu = nf.powf(alpha) * (n as f64 / nf).powf(beta);
            let m = distributions::sample(family, EtaPoint { mu, phi }, &mut rng).unwrap();
            let country = if i == 0 { "Ukraine".to_string() } else { format!("C{i:02}") };
            let sex = if i % 2 == 0 { "M" } else { "F" };
            (m > 0).then(|| StratumRecord::new("2019Q1", country, vec![sex.into()], m, n, big_n))
        })
        .collect();
    Dataset::new(vec!["sex".into()], records).unwrap()
}
