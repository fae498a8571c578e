#![allow(dead_code)]

use dateiv::population::{Individual, Population};
use dateiv::scenarios::{generate_random, GenerateConstraints};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Arm conditionals by a hand-written sweep over (assign, indiv, take, cure).
///
/// Shares no code with the library: the joint is written out as the product
/// P(A) P(I) P(T | A, I) P(C | T, I) with the parameters plugged in directly.
pub fn brute_force_conditionals(params: &[[f64; 4]], p_assign: f64) -> [f64; 4] {
    let n = params.len() as f64;
    let mut cure = [0.0f64; 2];
    let mut take = [0.0f64; 2];
    let mut arm = [0.0f64; 2];
    for a in 0..2 {
        let pa = if a == 1 { p_assign } else { 1.0 - p_assign };
        for p in params {
            let [tau0, tau1, kappa0, kappa1] = *p;
            let tau = if a == 1 { tau1 } else { tau0 };
            for t in 0..2 {
                let pt = if t == 1 { tau } else { 1.0 - tau };
                let kappa = if t == 1 { kappa1 } else { kappa0 };
                for c in 0..2 {
                    let pc = if c == 1 { kappa } else { 1.0 - kappa };
                    let joint = pa * (1.0 / n) * pt * pc;
                    arm[a] += joint;
                    if t == 1 {
                        take[a] += joint;
                    }
                    if c == 1 {
                        cure[a] += joint;
                    }
                }
            }
        }
    }
    [
        cure[1] / arm[1],
        cure[0] / arm[0],
        take[1] / arm[1],
        take[0] / arm[0],
    ]
}

/// DATE straight from its definition, with plain summation.
pub fn brute_force_date(params: &[[f64; 4]]) -> Option<f64> {
    let compliers: Vec<_> = params.iter().filter(|p| p[1] - p[0] > 0.0).collect();
    if compliers.is_empty() {
        return None;
    }
    let total: f64 = compliers.iter().map(|p| p[1] - p[0]).sum();
    Some(
        compliers
            .iter()
            .map(|p| (p[1] - p[0]) / total * (p[3] - p[2]))
            .sum(),
    )
}

pub fn params(pop: &Population<f64>) -> Vec<[f64; 4]> {
    pop.individuals()
        .iter()
        .map(|i| [*i.tau0(), *i.tau1(), *i.kappa0(), *i.kappa1()])
        .collect()
}

pub fn population(members: &[[f64; 4]]) -> Population<f64> {
    Population::new(
        members
            .iter()
            .enumerate()
            .map(|(i, p)| Individual::new((i + 1).to_string(), p[0], p[1], p[2], p[3]).unwrap())
            .collect(),
    )
    .unwrap()
}

/// Population `k` of a seeded suite: size drawn from 1..=50, no defiers,
/// at least one strict complier.
pub fn valid_population(suite_seed: u64, k: u64) -> Population<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(suite_seed);
    rng.set_stream(k);
    let n = rng.random_range(1..=50);
    generate_random(
        n,
        rng.random(),
        GenerateConstraints {
            no_defiers: true,
            force_complier: true,
            deterministic: false,
        },
    )
    .unwrap()
}

/// Deterministic, monotone population containing a classic complier.
pub fn deterministic_population(suite_seed: u64, k: u64) -> Population<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(suite_seed);
    rng.set_stream(k);
    let n = rng.random_range(1..=50);
    generate_random(
        n,
        rng.random(),
        GenerateConstraints {
            no_defiers: true,
            force_complier: true,
            deterministic: true,
        },
    )
    .unwrap()
}
