use rand::Rng;

use crate::error::{Error, Result};
use crate::game::{socially_optimal, Allocation, GameSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RsPhase {
    Learning,
    Exploiting,
}

/// Random selection for constant rates and strictly decreasing interference.
///
/// While learning, the user plays uniformly and collects the distinct payoffs
/// seen on each channel. With `M` distinct values per channel, their
/// decreasing order is exactly `v_j(1) > ... > v_j(M)`, so the whole table is
/// known and the optimum can be solved locally. From then on the user stays
/// put while its payoff meets the optimal per-channel payoff and re-randomizes
/// otherwise.
#[derive(Clone, Debug)]
pub struct RsState {
    num_users: usize,
    num_channels: usize,
    phase: RsPhase,
    /// Distinct payoffs per channel, sorted decreasing.
    observed: Vec<Vec<f64>>,
    distinct: usize,
    optimum: Option<Allocation>,
    /// `v*_j` on channels occupied in the optimum, `+inf` elsewhere.
    thresholds: Vec<f64>,
    last_channel: Option<usize>,
    stay: bool,
}

impl RsState {
    pub fn new(num_users: usize, num_channels: usize) -> Result<Self> {
        if num_users == 0 || num_channels == 0 {
            return Err(Error::InvalidParam(
                "rs needs at least one user and one channel".into(),
            ));
        }
        Ok(RsState {
            num_users,
            num_channels,
            phase: RsPhase::Learning,
            observed: vec![Vec::with_capacity(num_users); num_channels],
            distinct: 0,
            optimum: None,
            thresholds: Vec::new(),
            last_channel: None,
            stay: false,
        })
    }

    pub fn phase(&self) -> RsPhase {
        self.phase
    }

    pub fn distinct_count(&self) -> usize {
        self.distinct
    }

    pub fn observed_payoffs(&self, channel: usize) -> &[f64] {
        &self.observed[channel]
    }

    /// Learned optimum, once exploiting.
    pub fn learned_optimum(&self) -> Option<&Allocation> {
        self.optimum.as_ref()
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Reconstructed `v_j(n)` table, `[channel][n - 1]`, once complete.
    pub fn learned_table(&self) -> Option<&[Vec<f64>]> {
        (self.phase == RsPhase::Exploiting).then_some(self.observed.as_slice())
    }

    pub fn act<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        let choice = match (self.phase, self.last_channel) {
            (RsPhase::Exploiting, Some(c)) if self.stay => c,
            _ => rng.gen_range(0..self.num_channels),
        };
        self.last_channel = Some(choice);
        choice
    }

    pub fn observe(&mut self, payoff: f64) -> Result<()> {
        let channel = self
            .last_channel
            .ok_or_else(|| Error::Protocol("rs observed before acting".into()))?;
        match self.phase {
            RsPhase::Learning => {
                self.insert(channel, payoff)?;
                if self.distinct == self.num_users * self.num_channels {
                    self.enter_exploiting()?;
                }
            }
            RsPhase::Exploiting => {
                self.stay = payoff >= self.thresholds[channel];
            }
        }
        Ok(())
    }

    fn insert(&mut self, channel: usize, payoff: f64) -> Result<()> {
        let set = &mut self.observed[channel];
        // Sorted decreasing: find the first element not greater than payoff.
        let pos = set.partition_point(|&x| x > payoff);
        if set.get(pos) == Some(&payoff) {
            return Ok(());
        }
        if set.len() == self.num_users {
            return Err(Error::Protocol(format!(
                "more than {} distinct payoffs on channel {channel}; \
                 rates are not constant or interference is not strictly decreasing",
                self.num_users
            )));
        }
        set.insert(pos, payoff);
        self.distinct += 1;
        Ok(())
    }

    fn enter_exploiting(&mut self) -> Result<()> {
        let table = GameSpec::from_value_table(self.observed.clone())?;
        let sol = socially_optimal(&table)?;
        self.thresholds = sol
            .v_star_per_channel
            .iter()
            .map(|v| v.unwrap_or(f64::INFINITY))
            .collect();
        self.optimum = Some(sol.k_star);
        self.phase = RsPhase::Exploiting;
        self.stay = false;
        Ok(())
    }
}
