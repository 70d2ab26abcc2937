//! The one-shot congestion game with per-resource payoff `mu_j g_j(n)`:
//! utilities, Rosenthal's potential, pure Nash equilibria and better-reply
//! paths.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{count_users, socially_optimal, ActionProfile, Allocation, GameSpec};

/// A deviation must beat the current utility by more than this to count.
pub const IMPROVEMENT_THRESHOLD: f64 = 1e-12;

/// Default cap on `N^M` for exhaustive profile scans.
pub const DEFAULT_PROFILE_CAP: u128 = 1_000_000;

pub fn expected_utility(spec: &GameSpec, profile: &ActionProfile, user: usize) -> f64 {
    let c = profile.0[user];
    spec.value(c, count_users(profile, c))
}

/// Utility `user` would get after moving alone to `channel`.
pub fn deviation_utility(
    spec: &GameSpec,
    profile: &ActionProfile,
    user: usize,
    channel: usize,
) -> f64 {
    if profile.0[user] == channel {
        return expected_utility(spec, profile, user);
    }
    spec.value(channel, count_users(profile, channel) + 1)
}

/// `sum_j sum_{l=1}^{K_j} mu_j g_j(l)`.
pub fn rosenthal_potential(spec: &GameSpec, profile: &ActionProfile) -> f64 {
    let occ = profile.occupancy(spec.num_channels());
    occ.0
        .iter()
        .enumerate()
        .map(|(j, &k)| (1..=k).map(|l| spec.value(j, l)).sum::<f64>())
        .sum()
}

/// Channels that would strictly improve `user`'s utility.
pub fn improving_moves(spec: &GameSpec, profile: &ActionProfile, user: usize) -> Vec<usize> {
    let current = expected_utility(spec, profile, user);
    (0..spec.num_channels())
        .filter(|&c| c != profile.0[user])
        .filter(|&c| deviation_utility(spec, profile, user, c) > current + IMPROVEMENT_THRESHOLD)
        .collect()
}

pub fn is_pne(spec: &GameSpec, profile: &ActionProfile) -> bool {
    (0..profile.num_users()).all(|i| improving_moves(spec, profile, i).is_empty())
}

#[derive(Clone, Debug, Serialize)]
pub struct EquilibriumReport {
    pub pne_profiles: Vec<ActionProfile>,
    pub pne_occupancies: Vec<Allocation>,
    pub potential_values: Vec<f64>,
    pub contains_optimum: bool,
    pub optimum: Allocation,
}

/// Number of profiles `N^M`, or `None` on overflow.
pub fn profile_count(num_users: usize, num_channels: usize) -> Option<u128> {
    (num_channels as u128).checked_pow(u32::try_from(num_users).ok()?)
}

/// Iterates every profile in base-`N` order, user 0 most significant.
pub fn all_profiles(
    num_users: usize,
    num_channels: usize,
    cap: u128,
) -> Result<impl Iterator<Item = ActionProfile>> {
    let count = profile_count(num_users, num_channels).unwrap_or(u128::MAX);
    if count > cap {
        return Err(Error::TooLarge { count, cap });
    }
    Ok((0..count).map(move |idx| ActionProfile::from_index(idx, num_users, num_channels)))
}

pub fn enumerate_pne(spec: &GameSpec) -> Result<EquilibriumReport> {
    enumerate_pne_with_cap(spec, DEFAULT_PROFILE_CAP)
}

pub fn enumerate_pne_with_cap(spec: &GameSpec, cap: u128) -> Result<EquilibriumReport> {
    let mut pne_profiles = Vec::new();
    let mut potential_values = Vec::new();
    let mut pne_occupancies: Vec<Allocation> = Vec::new();
    for profile in all_profiles(spec.num_users(), spec.num_channels(), cap)? {
        if is_pne(spec, &profile) {
            let occ = profile.occupancy(spec.num_channels());
            if !pne_occupancies.contains(&occ) {
                pne_occupancies.push(occ);
            }
            potential_values.push(rosenthal_potential(spec, &profile));
            pne_profiles.push(profile);
        }
    }
    let optimum = socially_optimal(spec)?.k_star;
    let contains_optimum = pne_occupancies.contains(&optimum);
    Ok(EquilibriumReport {
        pne_profiles,
        pne_occupancies,
        potential_values,
        contains_optimum,
        optimum,
    })
}

/// Asynchronous better-reply dynamics from `start`.
///
/// Each round visits users in a fresh random order; the first user with an
/// improving move switches to a uniformly chosen improving channel. The path
/// includes `start` and ends at a PNE. Every move raises the potential by more
/// than [`IMPROVEMENT_THRESHOLD`], so the path is finite.
pub fn best_response_path<R: Rng + ?Sized>(
    spec: &GameSpec,
    start: &ActionProfile,
    rng: &mut R,
) -> Vec<ActionProfile> {
    let mut path = vec![start.clone()];
    let mut current = start.clone();
    let mut order: Vec<usize> = (0..current.num_users()).collect();
    loop {
        order.shuffle(rng);
        let step = order.iter().find_map(|&i| {
            let moves = improving_moves(spec, &current, i);
            moves.choose(rng).map(|&c| (i, c))
        });
        match step {
            Some((user, channel)) => {
                current.0[user] = channel;
                path.push(current.clone());
            }
            None => return path,
        }
    }
}
