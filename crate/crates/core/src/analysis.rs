//! Regret curves, growth-exponent fits, and the bound quantities used in the
//! sublinear-regret argument for RLA.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::binomial;
use crate::learners::explore_probability;

/// A step counts as optimal when its expected welfare is within this of `v*`.
pub const OPTIMAL_TOLERANCE: f64 = 1e-12;

/// Time-indexed record of one run. Step `t` (1-based) is stored at index `t - 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunTrace {
    pub seed: u64,
    pub spec_id: String,
    pub num_users: usize,
    pub num_channels: usize,
    /// Row-major `[step][channel]` occupancy counts.
    pub occupancies: Vec<usize>,
    pub realized_welfare: Vec<f64>,
    pub expected_welfare: Vec<f64>,
    /// Row-major `[step][user]` exploration flags.
    pub explore_flags: Vec<bool>,
}

impl RunTrace {
    pub fn new(
        seed: u64,
        spec_id: impl Into<String>,
        num_users: usize,
        num_channels: usize,
    ) -> Self {
        RunTrace {
            seed,
            spec_id: spec_id.into(),
            num_users,
            num_channels,
            occupancies: Vec::new(),
            realized_welfare: Vec::new(),
            expected_welfare: Vec::new(),
            explore_flags: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.realized_welfare.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realized_welfare.is_empty()
    }

    /// Occupancy vector of step index `idx` (0-based).
    pub fn occupancy(&self, idx: usize) -> &[usize] {
        &self.occupancies[idx * self.num_channels..(idx + 1) * self.num_channels]
    }

    pub fn explorers(&self, idx: usize) -> usize {
        self.explore_flags[idx * self.num_users..(idx + 1) * self.num_users]
            .iter()
            .filter(|&&f| f)
            .count()
    }

    pub fn push(&mut self, occupancy: &[usize], realized: f64, expected: f64, explored: &[bool]) {
        self.occupancies.extend_from_slice(occupancy);
        self.realized_welfare.push(realized);
        self.expected_welfare.push(expected);
        self.explore_flags.extend_from_slice(explored);
    }

    pub fn is_optimal_step(&self, idx: usize, v_star: f64) -> bool {
        self.expected_welfare[idx] >= v_star - OPTIMAL_TOLERANCE
    }

    /// Fraction of steps `t` with `from < t <= n` that played an optimal allocation.
    pub fn fraction_optimal_after(&self, v_star: f64, from: usize) -> f64 {
        let n = self.len();
        if from >= n {
            return 0.0;
        }
        let hits = (from..n)
            .filter(|&idx| self.is_optimal_step(idx, v_star))
            .count();
        hits as f64 / (n - from) as f64
    }

    /// First step `t` from which every later step is optimal, if the run ends optimal.
    pub fn hold_time(&self, v_star: f64) -> Option<usize> {
        let mut t = None;
        for idx in (0..self.len()).rev() {
            if self.is_optimal_step(idx, v_star) {
                t = Some(idx + 1);
            } else {
                break;
            }
        }
        t
    }
}

/// Cumulative regret and fraction-optimal, indexed by step `t - 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegretCurve {
    pub regret_expected: Vec<f64>,
    pub regret_realized: Vec<f64>,
    pub frac_optimal: Vec<f64>,
}

impl RegretCurve {
    pub fn horizon(&self) -> usize {
        self.regret_expected.len()
    }
}

/// Prefix sums of `v* - welfare` for both the expected and the realized
/// welfare columns, plus the running fraction of optimal steps.
pub fn regret(trace: &RunTrace, v_star: f64) -> RegretCurve {
    let n = trace.len();
    let mut curve = RegretCurve {
        regret_expected: Vec::with_capacity(n),
        regret_realized: Vec::with_capacity(n),
        frac_optimal: Vec::with_capacity(n),
    };
    let (mut re, mut rr, mut hits) = (0.0, 0.0, 0usize);
    for idx in 0..n {
        re += v_star - trace.expected_welfare[idx];
        rr += v_star - trace.realized_welfare[idx];
        if trace.is_optimal_step(idx, v_star) {
            hits += 1;
        }
        curve.regret_expected.push(re);
        curve.regret_realized.push(rr);
        curve.frac_optimal.push(hits as f64 / (idx + 1) as f64);
    }
    curve
}

/// Least-squares slope of `ln value` against `ln t` over points with
/// `t >= window_start`.
pub fn exponent_fit(times: &[f64], values: &[f64], window_start: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= window_start)
        .map(|(&t, &v)| (t, v))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InvalidParam(
            "exponent fit needs at least two points in the window".into(),
        ));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::InvalidParam(format!(
            "nonpositive value {v} at t = {t}; exponent fit undefined"
        )));
    }
    let xs: Vec<f64> = pts.iter().map(|(t, _)| t.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, v)| v.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParam(
            "exponent fit needs distinct times".into(),
        ));
    }
    Ok(sxy / sxx)
}

/// `exp(-2 n eps^2)`, the lower-tail bound for the mean of independent
/// heterogeneous Bernoulli variables.
pub fn hoeffding_bound(n: u64, eps: f64) -> f64 {
    (-2.0 * n as f64 * eps * eps).exp()
}

/// Empirical `P(mean(X) - mean(q) <= -eps)` for independent `X_i ~ Bernoulli(q_i)`.
pub fn bernoulli_lower_tail<R: Rng + ?Sized>(
    qs: &[f64],
    eps: f64,
    trials: usize,
    rng: &mut R,
) -> f64 {
    let n = qs.len() as f64;
    let qbar = qs.iter().sum::<f64>() / n;
    let hits = (0..trials)
        .filter(|_| {
            let xbar = qs.iter().filter(|&&q| rng.gen::<f64>() < q).count() as f64 / n;
            xbar - qbar <= -eps
        })
        .count();
    hits as f64 / trials as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerSumBounds {
    pub lower: f64,
    pub sum: f64,
    pub upper: f64,
}

/// `sum_{t=1}^n t^-p` with its integral bounds
/// `((n+1)^(1-p) - 1)/(1-p) < sum < 1 + (n^(1-p) - 1)/(1-p)`.
pub fn power_sum_bounds(n: u64, p: f64) -> Result<PowerSumBounds> {
    if !(p > 0.0) || p == 1.0 {
        return Err(Error::InvalidParam(format!(
            "power-sum bounds need p > 0 and p != 1, got {p}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParam("power-sum bounds need n >= 1".into()));
    }
    let q = 1.0 - p;
    let nf = n as f64;
    // smallest terms first
    let sum = (1..=n).rev().map(|t| (t as f64).powf(-p)).sum();
    Ok(PowerSumBounds {
        lower: ((nf + 1.0).powf(q) - 1.0) / q,
        sum,
        upper: 1.0 + (nf.powf(q) - 1.0) / q,
    })
}

/// `p_l` as an exact reduced fraction:
/// `C(M-1, l-1) C(M+N-l-2, N-2) / C(M+N-1, N-1)`.
pub fn occupancy_weight_exact(
    num_users: usize,
    num_channels: usize,
    l: usize,
) -> Result<(u128, u128)> {
    if num_channels < 2 {
        return Err(Error::InvalidParam("occupancy weight needs N >= 2".into()));
    }
    if l == 0 || l > num_users {
        return Err(Error::InvalidParam(format!(
            "occupancy {l} outside 1..={num_users}"
        )));
    }
    let overflow = || Error::InvalidParam("binomial overflow".into());
    let a = binomial(num_users - 1, l - 1).ok_or_else(overflow)?;
    let b = binomial(num_users + num_channels - l - 2, num_channels - 2).ok_or_else(overflow)?;
    let num = a.checked_mul(b).ok_or_else(overflow)?;
    let den = binomial(num_users + num_channels - 1, num_channels - 1).ok_or_else(overflow)?;
    let g = gcd(num, den);
    Ok((num / g, den / g))
}

pub fn occupancy_weight(num_users: usize, num_channels: usize, l: usize) -> Result<f64> {
    let (num, den) = occupancy_weight_exact(num_users, num_channels, l)?;
    Ok(num as f64 / den as f64)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// Probability that a given user picks a given channel and sees `l` users
/// there when all `M` users choose uniformly among `N` channels.
pub fn uniform_occupancy_probability(num_users: usize, num_channels: usize, l: usize) -> f64 {
    let q = 1.0 / num_channels as f64;
    let c = binomial(num_users - 1, l - 1).map_or(f64::NAN, |c| c as f64);
    q * c * q.powi(l as i32 - 1) * (1.0 - q).powi((num_users - l) as i32)
}

/// Monte Carlo estimate of the same probability.
pub fn empirical_occupancy_distribution<R: Rng + ?Sized>(
    num_users: usize,
    num_channels: usize,
    samples: usize,
    rng: &mut R,
) -> Vec<f64> {
    let mut counts = vec![0usize; num_users];
    for _ in 0..samples {
        let mine = rng.gen_range(0..num_channels);
        if mine != 0 {
            continue;
        }
        let others = (1..num_users)
            .filter(|_| rng.gen_range(0..num_channels) == 0)
            .count();
        counts[others] += 1;
    }
    counts.iter().map(|&c| c as f64 / samples as f64).collect()
}

/// `s^-(1/2 - gamma)`, the exploration rate used inside the counting argument.
/// The algorithm itself explores at `t^-(1/(2M) - gamma/M)`.
pub fn proof_exploration_rate(s: u64, gamma: f64) -> f64 {
    (s.max(1) as f64).powf(-(0.5 - gamma))
}

/// Parameters of the threshold time after which every arm has enough
/// samples with high probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TauParams {
    pub num_users: usize,
    pub num_channels: usize,
    pub eps: f64,
    pub gamma: f64,
    pub gamma_prime: f64,
    pub a: f64,
}

/// Default upper limit for the threshold search.
pub const DEFAULT_TAU_CAP: f64 = 1e30;
const BACKWARD_SCAN_LIMIT: u128 = 100_000_000;

/// The smallest `t` such that, for every `s >= t` and every `l` in `1..=M`,
///
/// `p_l ((s+1)^(1/2+gamma) - 1) / (s (1/2+gamma)) - a ln s / (s eps^2) >= s^(-1/2+gamma')`.
///
/// Multiplying by `s^(1/2-gamma')` gives a function that is increasing for
/// `s >= max(b/(gamma-gamma'), e^(1/b))`, `b = 1/2+gamma'`, so the answer is
/// found by a doubling/bisection search beyond that point and a backward
/// scan below it. Evaluation is in `f64`; for large answers the result is
/// exact only to `f64` resolution.
pub fn tau_threshold(params: TauParams, cap: f64) -> Result<u128> {
    let TauParams {
        num_users,
        num_channels,
        eps,
        gamma,
        gamma_prime,
        a,
    } = params;
    if !(gamma_prime > 0.0 && gamma_prime < gamma) {
        return Err(Error::InvalidParam(format!(
            "need 0 < gamma' < gamma, got gamma' = {gamma_prime}, gamma = {gamma}"
        )));
    }
    if gamma >= 0.5 {
        return Err(Error::InvalidParam("need gamma < 1/2".into()));
    }
    if !(eps > 0.0) || !(a > 0.0) {
        return Err(Error::InvalidParam("need eps > 0 and a > 0".into()));
    }
    let p_min = (1..=num_users)
        .map(|l| occupancy_weight(num_users, num_channels, l))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);

    let growth = 0.5 + gamma;
    let b = 0.5 + gamma_prime;
    let c = a / (eps * eps);
    let scaled = |t: f64| {
        let lead = p_min * ((t + 1.0).powf(growth) - 1.0) / growth * t.powf(-b);
        lead - c * t.ln() * t.powf(-b) - 1.0
    };
    let holds = |t: u128| scaled(t as f64) >= 0.0;

    let t0 = (b / (gamma - gamma_prime))
        .max((1.0 / b).exp())
        .ceil()
        .max(1.0);
    if t0 > cap {
        return Err(Error::SearchCap { cap });
    }
    let t0 = t0 as u128;
    if holds(t0) {
        if t0 > BACKWARD_SCAN_LIMIT {
            return Err(Error::SearchCap {
                cap: BACKWARD_SCAN_LIMIT as f64,
            });
        }
        let last_fail = (1..t0).rev().find(|&t| !holds(t));
        return Ok(last_fail.map_or(1, |t| t + 1));
    }
    let mut lo = t0;
    let mut hi = t0.max(2);
    while !holds(hi) {
        lo = hi;
        hi = hi.checked_mul(2).ok_or(Error::SearchCap { cap })?;
        if hi as f64 > cap {
            return Err(Error::SearchCap { cap });
        }
    }
    // invariant: !holds(lo), holds(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `C(M + z* - 1, z* - 1) - 1`: expected failed rounds before users
/// randomizing over the optimal support land on the optimal allocation.
pub fn settle_expectation(num_users: usize, support: usize) -> Result<u128> {
    if support == 0 {
        return Err(Error::InvalidParam("support must be at least 1".into()));
    }
    binomial(num_users + support - 1, support - 1)
        .map(|c| c - 1)
        .ok_or_else(|| Error::InvalidParam("binomial overflow".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BadStepBudget {
    /// `sum_{t=1}^n (1 - (1 - rho_t)^M)`: expected rounds with at least one explorer.
    pub exact: f64,
    /// `M` times the upper power-sum bound on `sum rho_t`.
    pub bound: f64,
}

pub fn bad_step_budget(n: u64, num_users: usize, gamma: f64) -> Result<BadStepBudget> {
    let m = num_users as f64;
    let p = 1.0 / (2.0 * m) - gamma / m;
    let bounds = power_sum_bounds(n, p)?;
    let exact = (1..=n)
        .rev()
        .map(|t| 1.0 - (1.0 - explore_probability(t, num_users, gamma)).powi(num_users as i32))
        .sum();
    Ok(BadStepBudget {
        exact,
        bound: m * bounds.upper,
    })
}
