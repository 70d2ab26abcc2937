#![allow(dead_code)]

use multichan_core::{GameSpec, RateKind};
use rand::Rng;

/// Nonincreasing interference table starting at 1.
pub fn random_interference<R: Rng + ?Sized>(num_users: usize, rng: &mut R) -> Vec<f64> {
    let mut g = vec![1.0];
    for _ in 1..num_users {
        let prev = *g.last().unwrap();
        g.push(prev * rng.gen_range(0.05..1.0));
    }
    g
}

/// Random instance with per-channel interference and means in `(0.05, 1]`.
pub fn random_spec<R: Rng + ?Sized>(
    num_users: usize,
    num_channels: usize,
    rng: &mut R,
) -> GameSpec {
    let means = (0..num_channels)
        .map(|_| rng.gen_range(0.05..=1.0))
        .collect();
    let tables = (0..num_channels)
        .map(|_| random_interference(num_users, rng))
        .collect();
    GameSpec::new(num_users, means, tables, RateKind::Bernoulli).unwrap()
}

/// Random constant-rate instance with strictly decreasing, pairwise distinct
/// payoffs on every channel.
pub fn random_case3_spec<R: Rng + ?Sized>(
    num_users: usize,
    num_channels: usize,
    rng: &mut R,
) -> GameSpec {
    loop {
        let means: Vec<f64> = (0..num_channels)
            .map(|_| rng.gen_range(0.1..=1.0))
            .collect();
        let tables: Vec<Vec<f64>> = (0..num_channels)
            .map(|_| {
                let mut g = vec![1.0];
                for _ in 1..num_users {
                    let prev = *g.last().unwrap();
                    g.push(prev * rng.gen_range(0.1..0.95));
                }
                g
            })
            .collect();
        let spec = GameSpec::new(num_users, means, tables, RateKind::Constant)
            .unwrap()
            .into_case3()
            .unwrap();
        let mut values: Vec<f64> = spec.value_table().concat();
        values.sort_by(f64::total_cmp);
        let distinct = values.windows(2).all(|w| w[1] - w[0] > 1e-9);
        let unique = multichan_core::game::socially_optimal(&spec)
            .unwrap()
            .is_unique();
        if distinct && unique {
            return spec;
        }
    }
}

pub fn reference_spec() -> GameSpec {
    GameSpec::with_shared_interference(2, vec![1.0, 0.6], vec![1.0, 0.7], RateKind::Bernoulli)
        .unwrap()
}
