use rand::Rng;

use crate::error::{Error, Result};
use crate::game::{argmax_allocation, enumerate_allocations, Allocation, DEFAULT_ALLOCATION_CAP};

/// Randomized learning over `(channel, occupancy)` arms.
///
/// Each user keeps a sample mean per arm, re-solves the allocation problem on
/// its own estimates after every observation, and either explores uniformly
/// (probability `t^-(1/(2M) - gamma/M)`) or settles onto the channels used by
/// its estimated optimum.
#[derive(Clone, Debug)]
pub struct RlaState {
    num_users: usize,
    num_channels: usize,
    gamma: f64,
    /// `[channel * M + (occupancy - 1)]`
    sample_means: Vec<f64>,
    counts: Vec<u64>,
    allocations: Vec<Allocation>,
    k_hat: Allocation,
    support: Vec<usize>,
    last_channel: Option<usize>,
    last_occupancy: Option<usize>,
    pending: bool,
    explored: bool,
}

impl RlaState {
    pub fn new(num_users: usize, num_channels: usize, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 0.5) {
            return Err(Error::InvalidParam(format!(
                "gamma_rla must lie in (0, 1/2), got {gamma}"
            )));
        }
        let allocations = enumerate_allocations(num_users, num_channels, DEFAULT_ALLOCATION_CAP)?;
        let mut state = RlaState {
            num_users,
            num_channels,
            gamma,
            sample_means: vec![0.0; num_users * num_channels],
            counts: vec![0; num_users * num_channels],
            k_hat: allocations[0].clone(),
            allocations,
            support: Vec::new(),
            last_channel: None,
            last_occupancy: None,
            pending: false,
            explored: false,
        };
        state.reestimate();
        Ok(state)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn num_arms(&self) -> usize {
        self.sample_means.len()
    }

    fn arm(&self, channel: usize, occupancy: usize) -> usize {
        channel * self.num_users + occupancy - 1
    }

    pub fn sample_mean(&self, channel: usize, occupancy: usize) -> f64 {
        self.sample_means[self.arm(channel, occupancy)]
    }

    pub fn count(&self, channel: usize, occupancy: usize) -> u64 {
        self.counts[self.arm(channel, occupancy)]
    }

    /// Current estimate of the optimal allocation.
    pub fn estimate(&self) -> &Allocation {
        &self.k_hat
    }

    /// Channels used in the current estimate.
    pub fn estimated_support(&self) -> &[usize] {
        &self.support
    }

    pub fn explored_last(&self) -> bool {
        self.explored
    }

    pub fn explore_probability(&self, t: u64) -> f64 {
        explore_probability(t, self.num_users, self.gamma)
    }

    /// Chooses the channel for round `t` (1-based).
    pub fn act<R: Rng + ?Sized>(&mut self, t: u64, rng: &mut R) -> usize {
        let explore = rng.gen::<f64>() < self.explore_probability(t);
        let choice = match (explore, self.last_channel, self.last_occupancy) {
            (false, Some(c), Some(l)) => {
                if self.k_hat.0[c] > 0 && l == self.k_hat.0[c] {
                    c
                } else {
                    self.support[rng.gen_range(0..self.support.len())]
                }
            }
            _ => rng.gen_range(0..self.num_channels),
        };
        self.explored = explore || self.last_channel.is_none();
        self.last_channel = Some(choice);
        self.last_occupancy = None;
        self.pending = true;
        choice
    }

    /// Feeds the outcome of the last action: the payoff and the number of
    /// users seen on the chosen channel.
    pub fn observe(&mut self, payoff: f64, occupancy: Option<usize>) -> Result<()> {
        if !self.pending {
            return Err(Error::Protocol("rla observed before acting".into()));
        }
        let occupancy =
            occupancy.ok_or_else(|| Error::Protocol("rla needs the observed occupancy".into()))?;
        let channel = self.last_channel.expect("pending implies an action");
        self.record(channel, occupancy, payoff)?;
        self.last_occupancy = Some(occupancy);
        self.pending = false;
        Ok(())
    }

    /// Adds one observation of arm `(channel, occupancy)` and re-solves the
    /// allocation problem on the updated means.
    pub fn record(&mut self, channel: usize, occupancy: usize, payoff: f64) -> Result<()> {
        if channel >= self.num_channels {
            return Err(Error::Protocol(format!("channel {channel} out of range")));
        }
        if occupancy == 0 || occupancy > self.num_users {
            return Err(Error::Protocol(format!(
                "occupancy {occupancy} outside 1..={}",
                self.num_users
            )));
        }
        if !(0.0..=1.0).contains(&payoff) {
            return Err(Error::Protocol(format!("payoff {payoff} outside [0, 1]")));
        }
        let arm = self.arm(channel, occupancy);
        let n = self.counts[arm] as f64;
        self.counts[arm] += 1;
        self.sample_means[arm] = (n * self.sample_means[arm] + payoff) / (n + 1.0);
        self.reestimate();
        Ok(())
    }

    fn reestimate(&mut self) {
        let m = self.num_users;
        let means = &self.sample_means;
        let (idx, _) = argmax_allocation(&self.allocations, |k| {
            k.0.iter()
                .enumerate()
                .filter(|(_, &kj)| kj > 0)
                .map(|(j, &kj)| kj as f64 * means[j * m + kj - 1])
                .sum()
        });
        self.k_hat = self.allocations[idx].clone();
        self.support = (0..self.num_channels)
            .filter(|&j| self.k_hat.0[j] > 0)
            .collect();
    }
}

/// `t^-(1/(2M) - gamma/M)`; equals 1 at `t = 1`.
pub fn explore_probability(t: u64, num_users: usize, gamma: f64) -> f64 {
    let m = num_users as f64;
    let exponent = 1.0 / (2.0 * m) - gamma / m;
    (t.max(1) as f64).powf(-exponent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exploration_schedule() {
        assert_eq!(explore_probability(1, 2, 0.02), 1.0);
        let p = explore_probability(16, 2, 0.02);
        assert!((p - 16f64.powf(-0.24)).abs() < 1e-15);
        assert!((p - 0.514).abs() < 1e-3);
    }

    #[test]
    fn fresh_state() {
        let s = RlaState::new(2, 3, 0.02).unwrap();
        assert_eq!(s.num_arms(), 6);
        assert!((0..3).all(|j| (1..=2).all(|k| s.count(j, k) == 0 && s.sample_mean(j, k) == 0.0)));
        assert_eq!(s.estimate(), &Allocation(vec![2, 0, 0]));
        assert_eq!(s.estimated_support(), &[0]);
    }

    #[test]
    fn first_round_explores() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = RlaState::new(2, 2, 0.02).unwrap();
        s.act(1, &mut rng);
        assert!(s.explored_last());
    }

    #[test]
    fn exploit_repeats_matching_channel() {
        let mut s = RlaState::new(2, 2, 0.02).unwrap();
        // Teach the true table of the reference instance.
        for _ in 0..5 {
            s.record(0, 1, 1.0).unwrap();
            s.record(0, 2, 0.7).unwrap();
            s.record(1, 1, 0.6).unwrap();
            s.record(1, 2, 0.42).unwrap();
        }
        assert_eq!(s.estimate(), &Allocation(vec![1, 1]));
        s.last_channel = Some(1);
        s.last_occupancy = Some(1);
        // At huge t exploration is negligible; the rng never fires it here.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let c = s.act(u64::MAX / 2, &mut rng);
            assert_eq!(c, 1);
            assert!(!s.explored_last());
            s.observe(0.6, Some(1)).unwrap();
        }
    }

    #[test]
    fn mismatched_occupancy_resamples_support() {
        let mut s = RlaState::new(2, 3, 0.02).unwrap();
        for _ in 0..3 {
            s.record(0, 1, 1.0).unwrap();
            s.record(0, 2, 0.1).unwrap();
            s.record(1, 1, 0.9).unwrap();
            s.record(1, 2, 0.1).unwrap();
            s.record(2, 1, 0.1).unwrap();
            s.record(2, 2, 0.05).unwrap();
        }
        assert_eq!(s.estimate(), &Allocation(vec![1, 1, 0]));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut seen = [0usize; 3];
        for _ in 0..400 {
            s.last_channel = Some(0);
            s.last_occupancy = Some(2);
            seen[s.act(u64::MAX / 2, &mut rng)] += 1;
        }
        assert_eq!(seen[2], 0);
        assert!(seen[0] > 150 && seen[1] > 150);
    }

    #[test]
    fn sample_means_are_arithmetic_means() {
        let mut s = RlaState::new(3, 2, 0.1).unwrap();
        let payoffs = [0.2, 0.9, 0.4, 0.35];
        for &h in &payoffs {
            s.record(1, 2, h).unwrap();
        }
        assert_eq!(s.count(1, 2), 4);
        let mean = payoffs.iter().sum::<f64>() / 4.0;
        assert!((s.sample_mean(1, 2) - mean).abs() < 1e-15);
    }

    #[test]
    fn protocol_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = RlaState::new(2, 2, 0.02).unwrap();
        assert!(s.observe(0.5, Some(1)).is_err());
        s.act(1, &mut rng);
        assert!(s.observe(0.5, None).is_err());
        assert!(s.observe(0.5, Some(3)).is_err());
        assert!(s.observe(0.5, Some(0)).is_err());
        assert!(s.observe(1.5, Some(1)).is_err());
        assert!(s.observe(0.5, Some(2)).is_ok());
        assert!(RlaState::new(2, 2, 0.0).is_err());
        assert!(RlaState::new(2, 2, 0.5).is_err());
    }
}
