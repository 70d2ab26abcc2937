//! Environment model: users, channels, rate processes and interference
//! functions, plus the exact socially-optimal allocation oracle.
//!
//! Channels and users are 0-based everywhere in the API. Interference tables
//! are indexed by occupancy `n` in `1..=M`; `g(0)` is never evaluated and an
//! empty channel contributes nothing to welfare.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floating-point ties closer than this are treated as equal.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Default cap on the number of allocations the exact oracle will enumerate.
pub const DEFAULT_ALLOCATION_CAP: u128 = 5_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateKind {
    /// `r_j(t) ~ Bernoulli(mu_j)`.
    Bernoulli,
    /// Uniform on `[max(0, 2mu-1), min(1, 2mu)]`, which has mean `mu` and stays in `[0, 1]`.
    UniformWithMean,
    /// `r_j(t) = mu_j` for every `t`.
    Constant,
}

impl fmt::Display for RateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RateKind::Bernoulli => "bernoulli",
            RateKind::UniformWithMean => "uniform-with-mean",
            RateKind::Constant => "constant",
        };
        f.write_str(s)
    }
}

/// Interference function presets. Each is normalized so that `g(1) = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum InterferencePreset {
    /// Any collision destroys the transmission.
    Collision,
    /// `g(n) = 1/n`.
    FairSharing,
    /// `g(n) = log2(1 + sinr(n)) / log2(1 + snr)` with
    /// `sinr(n) = P / (N0 + (n-1) P)`.
    Snr { power: f64, noise: f64 },
}

impl InterferencePreset {
    pub fn table(&self, num_users: usize) -> Vec<f64> {
        (1..=num_users)
            .map(|n| match *self {
                InterferencePreset::Collision => {
                    if n == 1 {
                        1.0
                    } else {
                        0.0
                    }
                }
                InterferencePreset::FairSharing => 1.0 / n as f64,
                InterferencePreset::Snr { power, noise } => {
                    let sinr = power / (noise + (n as f64 - 1.0) * power);
                    (1.0 + sinr).log2() / (1.0 + power / noise).log2()
                }
            })
            .collect()
    }
}

/// One channel's interference, either an explicit table over `1..=M` or a preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InterferenceConfig {
    Table(Vec<f64>),
    Preset(InterferencePreset),
}

/// Serialized form of [`GameSpec`]. Presets are expanded into tables on load.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSpecConfig {
    pub num_users: usize,
    pub num_channels: usize,
    pub means: Vec<f64>,
    pub interference: Vec<InterferenceConfig>,
    pub rate_kind: RateKind,
    #[serde(default)]
    pub case3: bool,
}

/// The full environment: `M` users, `N` channels, per-channel mean rates and
/// interference tables, and the rate process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GameSpecConfig", into = "GameSpecConfig")]
pub struct GameSpec {
    num_users: usize,
    num_channels: usize,
    means: Vec<f64>,
    interference: Vec<Vec<f64>>,
    rate_kind: RateKind,
    case3: bool,
}

impl TryFrom<GameSpecConfig> for GameSpec {
    type Error = Error;

    fn try_from(cfg: GameSpecConfig) -> Result<Self> {
        let tables = cfg
            .interference
            .iter()
            .map(|c| match c {
                InterferenceConfig::Table(t) => t.clone(),
                InterferenceConfig::Preset(p) => p.table(cfg.num_users),
            })
            .collect();
        let spec = GameSpec::new(cfg.num_users, cfg.means, tables, cfg.rate_kind)?;
        if cfg.case3 {
            spec.into_case3()
        } else {
            Ok(spec)
        }
    }
}

impl From<GameSpec> for GameSpecConfig {
    fn from(spec: GameSpec) -> Self {
        GameSpecConfig {
            num_users: spec.num_users,
            num_channels: spec.num_channels,
            means: spec.means,
            interference: spec
                .interference
                .into_iter()
                .map(InterferenceConfig::Table)
                .collect(),
            rate_kind: spec.rate_kind,
            case3: spec.case3,
        }
    }
}

impl GameSpec {
    /// `interference[j][n - 1]` is `g_j(n)`.
    pub fn new(
        num_users: usize,
        means: Vec<f64>,
        interference: Vec<Vec<f64>>,
        rate_kind: RateKind,
    ) -> Result<Self> {
        let num_channels = means.len();
        if num_users == 0 {
            return Err(Error::InvalidSpec("need at least one user".into()));
        }
        if num_channels == 0 {
            return Err(Error::InvalidSpec("need at least one channel".into()));
        }
        if interference.len() != num_channels {
            return Err(Error::InvalidSpec(format!(
                "{} interference tables for {} channels",
                interference.len(),
                num_channels
            )));
        }
        for (j, &mu) in means.iter().enumerate() {
            if !(0.0..=1.0).contains(&mu) {
                return Err(Error::InvalidSpec(format!(
                    "mean of channel {j} is {mu}, outside [0, 1]"
                )));
            }
        }
        for (j, table) in interference.iter().enumerate() {
            if table.len() != num_users {
                return Err(Error::InvalidSpec(format!(
                    "interference table of channel {j} has {} entries, expected {num_users}",
                    table.len()
                )));
            }
            if let Some(bad) = table.iter().find(|g| !(0.0..=1.0).contains(*g)) {
                return Err(Error::InvalidSpec(format!(
                    "interference value {bad} on channel {j} outside [0, 1]"
                )));
            }
        }
        Ok(GameSpec {
            num_users,
            num_channels,
            means,
            interference,
            rate_kind,
            case3: false,
        })
    }

    /// Same interference function on every channel.
    pub fn with_shared_interference(
        num_users: usize,
        means: Vec<f64>,
        table: Vec<f64>,
        rate_kind: RateKind,
    ) -> Result<Self> {
        let tables = vec![table; means.len()];
        Self::new(num_users, means, tables, rate_kind)
    }

    /// Flags the spec as a constant-rate instance with strictly decreasing
    /// interference, validating the extra conditions. The per-channel payoffs
    /// `mu_j g_j(1) > ... > mu_j g_j(M)` must be distinct so that a learner can
    /// recover the whole table by ordering observed values.
    pub fn into_case3(mut self) -> Result<Self> {
        if self.rate_kind != RateKind::Constant {
            return Err(Error::InvalidSpec(
                "case-3 specs need constant rates".into(),
            ));
        }
        for j in 0..self.num_channels {
            if self.means[j] <= 0.0 {
                return Err(Error::InvalidSpec(format!(
                    "case-3 spec has zero rate on channel {j}"
                )));
            }
            for n in 1..self.num_users {
                if self.interference[j][n] >= self.interference[j][n - 1]
                    || self.value(j, n + 1) >= self.value(j, n)
                {
                    return Err(Error::InvalidSpec(format!(
                        "case-3 spec needs strictly decreasing payoffs on channel {j} \
                         (occupancy {n} -> {})",
                        n + 1
                    )));
                }
            }
        }
        self.case3 = true;
        Ok(self)
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn rate_kind(&self) -> RateKind {
        self.rate_kind
    }

    pub fn is_case3(&self) -> bool {
        self.case3
    }

    /// `g_j(n)` for `n` in `1..=M`.
    pub fn interference(&self, channel: usize, occupancy: usize) -> f64 {
        debug_assert!(occupancy >= 1 && occupancy <= self.num_users);
        self.interference[channel][occupancy - 1]
    }

    pub fn interference_table(&self, channel: usize) -> &[f64] {
        &self.interference[channel]
    }

    /// Mean per-user payoff `v_j(n) = mu_j g_j(n)` on channel `j` with `n` occupants.
    pub fn value(&self, channel: usize, occupancy: usize) -> f64 {
        self.means[channel] * self.interference(channel, occupancy)
    }

    /// The full table `v_j(n)`, `[channel][n - 1]`.
    pub fn value_table(&self) -> Vec<Vec<f64>> {
        (0..self.num_channels)
            .map(|j| (1..=self.num_users).map(|n| self.value(j, n)).collect())
            .collect()
    }

    /// Builds a constant-rate spec whose value table equals `values`. Used by
    /// learners that reconstruct `v_j(n)` from observations.
    pub fn from_value_table(values: Vec<Vec<f64>>) -> Result<Self> {
        let num_users = values.first().map_or(0, Vec::len);
        let means = vec![1.0; values.len()];
        GameSpec::new(num_users, means, values, RateKind::Constant)
    }
}

/// Occupancy vector `k = (k_1..k_N)` with `sum k_j = M`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Allocation(pub Vec<usize>);

impl Allocation {
    pub fn counts(&self) -> &[usize] {
        &self.0
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// Number of channels with at least one user.
    pub fn support(&self) -> usize {
        self.0.iter().filter(|&&k| k > 0).count()
    }
}

impl fmt::Display for Allocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}")?;
        }
        f.write_str(")")
    }
}

/// Per-user channel choices `sigma_i`, 0-based.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionProfile(pub Vec<usize>);

impl ActionProfile {
    pub fn choices(&self) -> &[usize] {
        &self.0
    }

    pub fn num_users(&self) -> usize {
        self.0.len()
    }

    pub fn occupancy(&self, num_channels: usize) -> Allocation {
        let mut counts = vec![0; num_channels];
        for &c in &self.0 {
            counts[c] += 1;
        }
        Allocation(counts)
    }

    /// Decodes `index` as a base-`N` number, user 0 most significant.
    pub fn from_index(mut index: u128, num_users: usize, num_channels: usize) -> Self {
        let mut choices = vec![0; num_users];
        for slot in choices.iter_mut().rev() {
            *slot = (index % num_channels as u128) as usize;
            index /= num_channels as u128;
        }
        ActionProfile(choices)
    }
}

impl fmt::Display for ActionProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // 1-based on output, matching the usual channel numbering.
        f.write_str("(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", c + 1)?;
        }
        f.write_str(")")
    }
}

pub fn count_users(profile: &ActionProfile, channel: usize) -> usize {
    profile.0.iter().filter(|&&c| c == channel).count()
}

/// Draws one rate per channel for the current round.
pub fn sample_rates<R: Rng + ?Sized>(spec: &GameSpec, rng: &mut R) -> Vec<f64> {
    spec.means
        .iter()
        .map(|&mu| match spec.rate_kind {
            RateKind::Constant => mu,
            RateKind::Bernoulli => {
                if rng.gen::<f64>() < mu {
                    1.0
                } else {
                    0.0
                }
            }
            RateKind::UniformWithMean => {
                let lo = (2.0 * mu - 1.0).max(0.0);
                let hi = (2.0 * mu).min(1.0);
                lo + (hi - lo) * rng.gen::<f64>()
            }
        })
        .collect()
}

/// `h_i = r_{sigma_i} g_{sigma_i}(K_{sigma_i})` for every user.
pub fn realized_payoffs(spec: &GameSpec, profile: &ActionProfile, rates: &[f64]) -> Vec<f64> {
    let occ = profile.occupancy(spec.num_channels);
    profile
        .0
        .iter()
        .map(|&c| rates[c] * spec.interference(c, occ.0[c]))
        .collect()
}

/// `C(M + N - 1, N - 1)`, or `None` on overflow.
pub fn allocation_count(num_users: usize, num_channels: usize) -> Option<u128> {
    binomial(num_users + num_channels - 1, num_channels - 1)
}

/// Exact binomial coefficient in integer arithmetic, `None` on overflow.
pub fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step.
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// All compositions of `M` into `N` nonnegative parts, starting from
/// `(M, 0, ..., 0)` and ending at `(0, ..., 0, M)`.
pub fn enumerate_allocations(
    num_users: usize,
    num_channels: usize,
    cap: u128,
) -> Result<Vec<Allocation>> {
    if num_users == 0 || num_channels == 0 {
        return Err(Error::InvalidParam(
            "allocations need at least one user and one channel".into(),
        ));
    }
    let count = allocation_count(num_users, num_channels).unwrap_or(u128::MAX);
    if count > cap {
        return Err(Error::TooLarge { count, cap });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut current = vec![0; num_channels];
    fill_compositions(num_users, 0, &mut current, &mut out);
    Ok(out)
}

fn fill_compositions(
    remaining: usize,
    channel: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<Allocation>,
) {
    if channel + 1 == current.len() {
        current[channel] = remaining;
        out.push(Allocation(current.clone()));
        return;
    }
    for k in (0..=remaining).rev() {
        current[channel] = k;
        fill_compositions(remaining - k, channel + 1, current, out);
    }
}

/// `sum_j k_j v_j(k_j)` over occupied channels, for an arbitrary value table
/// indexed `[channel][n - 1]`.
pub fn table_welfare(values: &[Vec<f64>], allocation: &Allocation) -> f64 {
    allocation
        .0
        .iter()
        .enumerate()
        .filter(|(_, &k)| k > 0)
        .map(|(j, &k)| k as f64 * values[j][k - 1])
        .sum()
}

/// `sum_j mu_j k_j g_j(k_j)`.
pub fn social_welfare(spec: &GameSpec, allocation: &Allocation) -> f64 {
    allocation
        .0
        .iter()
        .enumerate()
        .filter(|(_, &k)| k > 0)
        .map(|(j, &k)| k as f64 * spec.value(j, k))
        .sum()
}

/// `sum_i mu_{sigma_i} g_{sigma_i}(K_{sigma_i})`, the per-user form of welfare.
pub fn profile_welfare(spec: &GameSpec, profile: &ActionProfile) -> f64 {
    let occ = profile.occupancy(spec.num_channels);
    profile.0.iter().map(|&c| spec.value(c, occ.0[c])).sum()
}

/// Index of the first allocation attaining the maximum of `welfare`.
/// Later candidates must beat the incumbent strictly, which makes the
/// enumeration order the tie-breaker.
pub fn argmax_allocation<F>(allocations: &[Allocation], mut welfare: F) -> (usize, f64)
where
    F: FnMut(&Allocation) -> f64,
{
    let mut best = (0, f64::NEG_INFINITY);
    for (idx, k) in allocations.iter().enumerate() {
        let w = welfare(k);
        if w > best.1 {
            best = (idx, w);
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimalSolution {
    pub k_star: Allocation,
    pub v_star: f64,
    /// `v*_j = v_j(k*_j)` on channels occupied in `k*`, `None` elsewhere.
    pub v_star_per_channel: Vec<Option<f64>>,
    pub support: usize,
    /// Certified stability margin; zero when the optimum is tied.
    pub margin: f64,
    /// Other allocations within [`TIE_TOLERANCE`] of `v_star`.
    pub ties: Vec<Allocation>,
}

impl OptimalSolution {
    pub fn is_unique(&self) -> bool {
        self.ties.is_empty()
    }
}

/// Exhaustive argmax of social welfare over all allocations.
pub fn socially_optimal(spec: &GameSpec) -> Result<OptimalSolution> {
    socially_optimal_with_cap(spec, DEFAULT_ALLOCATION_CAP)
}

pub fn socially_optimal_with_cap(spec: &GameSpec, cap: u128) -> Result<OptimalSolution> {
    let allocations = enumerate_allocations(spec.num_users, spec.num_channels, cap)?;
    let welfare: Vec<f64> = allocations
        .iter()
        .map(|k| social_welfare(spec, k))
        .collect();
    let (best_idx, v_star) = argmax_allocation(&allocations, |k| social_welfare(spec, k));

    let mut ties = Vec::new();
    let mut min_gap = f64::INFINITY;
    for (idx, (k, &w)) in allocations.iter().zip(&welfare).enumerate() {
        if idx == best_idx {
            continue;
        }
        let gap = v_star - w;
        if gap <= TIE_TOLERANCE {
            ties.push(k.clone());
        } else {
            min_gap = min_gap.min(gap);
        }
    }

    let k_star = allocations[best_idx].clone();
    let margin = if ties.is_empty() {
        margin_from_gap(min_gap, spec.num_users)
    } else {
        0.0
    };
    let v_star_per_channel = k_star
        .0
        .iter()
        .enumerate()
        .map(|(j, &k)| (k > 0).then(|| spec.value(j, k)))
        .collect();
    Ok(OptimalSolution {
        support: k_star.support(),
        k_star,
        v_star,
        v_star_per_channel,
        margin,
        ties,
    })
}

fn margin_from_gap(min_gap: f64, num_users: usize) -> f64 {
    // A single candidate (N = 1) has no competitor; any perturbation keeps it.
    if min_gap.is_infinite() {
        f64::INFINITY
    } else {
        min_gap / (2.0 * num_users as f64)
    }
}

/// Certified lower bound on the sup-norm perturbation of the value table that
/// keeps `k*` the unique argmax.
///
/// Any table within `eps` moves the welfare of every allocation by at most
/// `M * eps`, so a welfare gap larger than `2 M eps` cannot close.
pub fn stability_margin(spec: &GameSpec) -> Result<f64> {
    let sol = socially_optimal(spec)?;
    if !sol.is_unique() {
        return Err(Error::NonUniqueOptimum {
            ties: sol.ties.len() + 1,
        });
    }
    Ok(sol.margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn reference_spec() -> GameSpec {
        GameSpec::with_shared_interference(2, vec![1.0, 0.6], vec![1.0, 0.7], RateKind::Bernoulli)
            .unwrap()
    }

    #[test]
    fn counts_users_per_channel() {
        assert_eq!(count_users(&ActionProfile(vec![0, 0]), 0), 2);
        assert_eq!(count_users(&ActionProfile(vec![0, 1, 0]), 1), 1);
        assert_eq!(count_users(&ActionProfile(vec![1, 1]), 0), 0);
    }

    #[test]
    fn constant_and_degenerate_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec =
            GameSpec::with_shared_interference(1, vec![0.3, 0.9], vec![1.0], RateKind::Constant)
                .unwrap();
        for _ in 0..10 {
            assert_eq!(sample_rates(&spec, &mut rng), vec![0.3, 0.9]);
        }
        let spec = GameSpec::with_shared_interference(1, vec![1.0], vec![1.0], RateKind::Bernoulli)
            .unwrap();
        for _ in 0..100 {
            assert_eq!(sample_rates(&spec, &mut rng), vec![1.0]);
        }
    }

    #[test]
    fn bernoulli_sample_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = GameSpec::with_shared_interference(1, vec![0.5], vec![1.0], RateKind::Bernoulli)
            .unwrap();
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| sample_rates(&spec, &mut rng)[0])
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
    }

    #[test]
    fn uniform_with_mean_stays_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = GameSpec::with_shared_interference(
            1,
            vec![0.2, 0.5, 0.85],
            vec![1.0],
            RateKind::UniformWithMean,
        )
        .unwrap();
        let n = 200_000;
        let mut sums = [0.0; 3];
        for _ in 0..n {
            let r = sample_rates(&spec, &mut rng);
            for (s, x) in sums.iter_mut().zip(&r) {
                assert!((0.0..=1.0).contains(x));
                *s += x;
            }
        }
        for (s, mu) in sums.iter().zip([0.2, 0.5, 0.85]) {
            assert!((s / n as f64 - mu).abs() < 0.005);
        }
    }

    #[test]
    fn realized_payoff_examples() {
        let spec = GameSpec::with_shared_interference(
            2,
            vec![1.0, 1.0],
            vec![1.0, 0.5],
            RateKind::Constant,
        )
        .unwrap();
        let p = realized_payoffs(&spec, &ActionProfile(vec![0, 0]), &[1.0, 0.3]);
        assert_eq!(p, vec![0.5, 0.5]);

        let spec = GameSpec::new(
            1,
            vec![0.5, 0.5],
            vec![vec![1.0], vec![1.0]],
            RateKind::Constant,
        )
        .unwrap();
        assert_eq!(
            realized_payoffs(&spec, &ActionProfile(vec![1]), &[0.1, 0.8]),
            vec![0.8]
        );

        let spec = GameSpec::new(
            2,
            vec![0.5, 0.5],
            vec![vec![1.0, 0.5], vec![0.9, 0.5]],
            RateKind::Constant,
        )
        .unwrap();
        let p = realized_payoffs(&spec, &ActionProfile(vec![0, 1]), &[0.6, 0.4]);
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.36).abs() < 1e-15);
    }

    #[test]
    fn allocation_enumeration_order_and_count() {
        let a = enumerate_allocations(2, 2, DEFAULT_ALLOCATION_CAP).unwrap();
        assert_eq!(
            a,
            vec![
                Allocation(vec![2, 0]),
                Allocation(vec![1, 1]),
                Allocation(vec![0, 2])
            ]
        );
        assert_eq!(
            enumerate_allocations(3, 2, DEFAULT_ALLOCATION_CAP)
                .unwrap()
                .len(),
            4
        );
        let units = enumerate_allocations(1, 5, DEFAULT_ALLOCATION_CAP).unwrap();
        assert_eq!(units.len(), 5);
        assert!(units.iter().all(|k| k.total() == 1 && k.support() == 1));
        for (m, n) in [(4, 3), (5, 4), (3, 6)] {
            let all = enumerate_allocations(m, n, DEFAULT_ALLOCATION_CAP).unwrap();
            assert_eq!(all.len() as u128, allocation_count(m, n).unwrap());
            assert!(
                all.windows(2).all(|w| w[0] > w[1]),
                "strictly descending lex order"
            );
        }
    }

    #[test]
    fn allocation_cap_is_enforced() {
        let err = enumerate_allocations(30, 30, 1000).unwrap_err();
        assert!(matches!(err, Error::TooLarge { cap: 1000, .. }));
    }

    #[test]
    fn welfare_examples() {
        let spec = reference_spec();
        assert!((social_welfare(&spec, &Allocation(vec![1, 1])) - 1.6).abs() < 1e-15);
        assert!((social_welfare(&spec, &Allocation(vec![2, 0])) - 1.4).abs() < 1e-15);
        let zero = GameSpec::with_shared_interference(
            2,
            vec![0.0, 0.6],
            vec![1.0, 0.7],
            RateKind::Constant,
        )
        .unwrap();
        assert_eq!(social_welfare(&zero, &Allocation(vec![2, 0])), 0.0);
    }

    #[test]
    fn optimum_of_reference_spec() {
        let sol = socially_optimal(&reference_spec()).unwrap();
        assert_eq!(sol.k_star, Allocation(vec![1, 1]));
        assert!((sol.v_star - 1.6).abs() < 1e-15);
        assert_eq!(sol.v_star_per_channel, vec![Some(1.0), Some(0.6)]);
        assert_eq!(sol.support, 2);
        assert!(sol.is_unique());
        // gaps {0.2, 0.76}, M = 2
        assert!((sol.margin - 0.05).abs() < 1e-12);
    }

    #[test]
    fn optimum_shares_a_channel() {
        let spec = GameSpec::with_shared_interference(
            2,
            vec![1.0, 0.1],
            vec![1.0, 0.9],
            RateKind::Constant,
        )
        .unwrap();
        let sol = socially_optimal(&spec).unwrap();
        assert_eq!(sol.k_star, Allocation(vec![2, 0]));
        assert!((sol.v_star - 1.8).abs() < 1e-15);
        assert_eq!(sol.v_star_per_channel, vec![Some(0.9), None]);
        assert_eq!(sol.support, 1);
    }

    #[test]
    fn single_user_optimum_and_margin() {
        let spec = GameSpec::new(
            1,
            vec![0.5, 0.9, 0.7],
            vec![vec![1.0], vec![0.5], vec![1.0]],
            RateKind::Constant,
        )
        .unwrap();
        let sol = socially_optimal(&spec).unwrap();
        assert_eq!(sol.k_star, Allocation(vec![0, 0, 1]));
        // best two: 0.7 and 0.5
        assert!((stability_margin(&spec).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn ties_are_reported_and_margin_refused() {
        let spec = GameSpec::with_shared_interference(
            2,
            vec![1.0, 1.0],
            vec![1.0, 0.6],
            RateKind::Constant,
        )
        .unwrap();
        let sol = socially_optimal(&spec).unwrap();
        // (1,1) is the unique optimum here; make a genuine tie instead.
        assert!(sol.is_unique());
        let spec = GameSpec::with_shared_interference(
            2,
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            RateKind::Constant,
        )
        .unwrap();
        let sol = socially_optimal(&spec).unwrap();
        assert_eq!(sol.k_star, Allocation(vec![2, 0]));
        assert_eq!(sol.ties.len(), 2);
        assert_eq!(sol.margin, 0.0);
        assert!(matches!(
            stability_margin(&spec),
            Err(Error::NonUniqueOptimum { ties: 3 })
        ));
    }

    #[test]
    fn case3_validation() {
        let ok = GameSpec::with_shared_interference(
            2,
            vec![0.9, 0.4],
            vec![1.0, 0.6],
            RateKind::Constant,
        )
        .unwrap()
        .into_case3();
        assert!(ok.is_ok());
        let flat = GameSpec::with_shared_interference(
            2,
            vec![0.9, 0.4],
            vec![1.0, 1.0],
            RateKind::Constant,
        )
        .unwrap()
        .into_case3();
        assert!(flat.is_err());
        let random = GameSpec::with_shared_interference(
            2,
            vec![0.9, 0.4],
            vec![1.0, 0.6],
            RateKind::Bernoulli,
        )
        .unwrap()
        .into_case3();
        assert!(random.is_err());
        let zero = GameSpec::with_shared_interference(
            2,
            vec![0.9, 0.0],
            vec![1.0, 0.6],
            RateKind::Constant,
        )
        .unwrap()
        .into_case3();
        assert!(zero.is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(GameSpec::new(0, vec![0.5], vec![vec![]], RateKind::Constant).is_err());
        assert!(GameSpec::new(1, vec![], vec![], RateKind::Constant).is_err());
        assert!(GameSpec::new(1, vec![1.5], vec![vec![1.0]], RateKind::Constant).is_err());
        assert!(GameSpec::new(2, vec![0.5], vec![vec![1.0]], RateKind::Constant).is_err());
        assert!(GameSpec::new(1, vec![0.5], vec![vec![1.2]], RateKind::Constant).is_err());
    }

    #[test]
    fn presets() {
        assert_eq!(InterferencePreset::Collision.table(3), vec![1.0, 0.0, 0.0]);
        assert_eq!(InterferencePreset::FairSharing.table(2), vec![1.0, 0.5]);
        let snr = InterferencePreset::Snr {
            power: 10.0,
            noise: 1.0,
        }
        .table(4);
        assert!((snr[0] - 1.0).abs() < 1e-15);
        assert!(snr.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn toml_round_trip_and_presets() {
        let text = r#"
            num_users = 3
            num_channels = 2
            means = [0.9, 0.5]
            rate_kind = "uniform-with-mean"
            interference = [[1.0, 0.6, 0.3], { preset = "fair-sharing" }]
        "#;
        let spec: GameSpec = toml::from_str(text).unwrap();
        assert_eq!(spec.interference_table(1), &[1.0, 0.5, 1.0 / 3.0]);
        let back: GameSpec = toml::from_str(&toml::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);

        let bad = text.replace("0.9, 0.5", "0.9, 1.5");
        assert!(toml::from_str::<GameSpec>(&bad).is_err());
    }
}
