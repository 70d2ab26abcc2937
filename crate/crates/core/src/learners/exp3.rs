use rand::Rng;

use crate::error::{Error, Result};

/// Weights are rescaled by their maximum once it exceeds this value. The
/// induced distribution is invariant under a common scaling of the weights.
const RENORMALIZE_ABOVE: f64 = 1e100;

/// Per-user Exp3 with exploration floor `gamma / N`.
#[derive(Clone, Debug)]
pub struct Exp3State {
    weights: Vec<f64>,
    gamma: f64,
    probs: Vec<f64>,
    last: Option<usize>,
}

impl Exp3State {
    pub fn new(num_channels: usize, gamma: f64) -> Result<Self> {
        if num_channels == 0 {
            return Err(Error::InvalidParam(
                "exp3 needs at least one channel".into(),
            ));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidParam(format!(
                "gamma_exp3 must lie in (0, 1), got {gamma}"
            )));
        }
        let mut state = Exp3State {
            weights: vec![1.0; num_channels],
            gamma,
            probs: vec![0.0; num_channels],
            last: None,
        };
        state.refresh_probabilities();
        Ok(state)
    }

    /// A state whose distribution equals `probs`. Each entry must exceed
    /// `gamma / N` so that a positive weight vector exists.
    pub fn with_probabilities(probs: &[f64], gamma: f64) -> Result<Self> {
        let mut state = Self::new(probs.len(), gamma)?;
        let floor = gamma / probs.len() as f64;
        if probs.iter().any(|&p| p <= floor) {
            return Err(Error::InvalidParam(format!(
                "every probability must exceed the exploration floor {floor}"
            )));
        }
        state.weights = probs.iter().map(|&p| p - floor).collect();
        state.refresh_probabilities();
        Ok(state)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn last_choice(&self) -> Option<usize> {
        self.last
    }

    fn refresh_probabilities(&mut self) {
        let n = self.weights.len() as f64;
        let total: f64 = self.weights.iter().sum();
        for (p, w) in self.probs.iter_mut().zip(&self.weights) {
            *p = (1.0 - self.gamma) * w / total + self.gamma / n;
        }
    }

    pub fn act<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        self.refresh_probabilities();
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut choice = self.probs.len() - 1;
        for (j, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                choice = j;
                break;
            }
        }
        self.last = Some(choice);
        choice
    }

    /// `w_c <- w_c * exp(gamma * payoff / (p_c * N))` with `p` from the round
    /// in which `chosen` was sampled.
    pub fn update(&mut self, chosen: usize, payoff: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&payoff) {
            return Err(Error::Protocol(format!(
                "exp3 payoff {payoff} outside [0, 1]"
            )));
        }
        if chosen >= self.weights.len() {
            return Err(Error::Protocol(format!("channel {chosen} out of range")));
        }
        let n = self.weights.len() as f64;
        let p = self.probs[chosen];
        self.weights[chosen] *= (self.gamma * payoff / (p * n)).exp();

        let max = self.weights.iter().cloned().fold(0.0, f64::max);
        if max > RENORMALIZE_ABOVE {
            for w in &mut self.weights {
                *w /= max;
            }
        }
        self.refresh_probabilities();
        Ok(())
    }

    /// Applies the payoff to the channel returned by the last [`act`](Self::act).
    pub fn observe(&mut self, payoff: f64) -> Result<()> {
        let chosen = self
            .last
            .ok_or_else(|| Error::Protocol("exp3 observed before acting".into()))?;
        self.update(chosen, payoff)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fresh_state_is_uniform() {
        for gamma in [0.01, 0.5, 0.99] {
            let s = Exp3State::new(3, gamma).unwrap();
            for p in s.probabilities() {
                assert!((p - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn near_full_exploration_is_uniform() {
        let mut s = Exp3State::new(2, 1.0 - 1e-12).unwrap();
        s.weights = vec![1e6, 1.0];
        s.refresh_probabilities();
        assert!((s.probabilities()[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn probability_formula() {
        // gamma = 0 is outside the admissible range, so evaluate the
        // formula at a negligible gamma instead.
        let mut s = Exp3State::new(2, 1e-15).unwrap();
        s.weights = vec![std::f64::consts::E, 1.0];
        s.refresh_probabilities();
        let e = std::f64::consts::E;
        assert!((s.probabilities()[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((s.probabilities()[0] - 0.731).abs() < 1e-3);
    }

    #[test]
    fn zero_payoff_leaves_weights() {
        let mut s = Exp3State::new(3, 0.1).unwrap();
        s.update(1, 0.0).unwrap();
        assert_eq!(s.weights(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn multiplier_matches_formula() {
        let mut s = Exp3State::new(2, 0.1).unwrap();
        assert_eq!(s.probabilities()[0], 0.5);
        s.update(0, 1.0).unwrap();
        assert!((s.weights()[0] - 0.1f64.exp()).abs() < 1e-15);
        assert!((s.weights()[0] - 1.10517).abs() < 1e-5);
        assert_eq!(s.weights()[1], 1.0);
    }

    #[test]
    fn payoffs_add_in_the_exponent_at_fixed_probability() {
        let (a, b) = (0.3, 0.6);
        let mut twice = Exp3State::new(2, 0.2).unwrap();
        let p = twice.probabilities()[0];
        twice.update(0, a).unwrap();
        // hold p fixed for the second step
        twice.probs[0] = p;
        twice.update(0, b).unwrap();
        let mut once = Exp3State::new(2, 0.2).unwrap();
        once.weights[0] *= (0.2 * (a + b) / (p * 2.0)).exp();
        assert!((twice.weights()[0] - once.weights()[0]).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_payoff_and_params() {
        let mut s = Exp3State::new(2, 0.1).unwrap();
        assert!(s.update(0, 1.5).is_err());
        assert!(s.update(0, -0.1).is_err());
        assert!(s.observe(0.5).is_err());
        assert!(Exp3State::new(2, 0.0).is_err());
        assert!(Exp3State::new(2, 1.0).is_err());
        assert!(Exp3State::new(0, 0.1).is_err());
    }

    #[test]
    fn renormalization_preserves_distribution() {
        let mut s = Exp3State::new(2, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5000 {
            let c = s.act(&mut rng);
            s.update(c, if c == 0 { 1.0 } else { 0.0 }).unwrap();
            // A losing weight may underflow to zero after rescaling; its
            // probability then sits exactly at the floor.
            assert!(s.weights().iter().all(|w| w.is_finite() && *w >= 0.0));
            assert!(s.weights().iter().any(|w| *w > 0.0));
            let total: f64 = s.probabilities().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(s.probabilities().iter().all(|&p| p >= 0.25 - 1e-15));
        }
        assert!(s.weights().iter().cloned().fold(0.0, f64::max) <= RENORMALIZE_ABOVE);
        assert!(s.probabilities()[0] > 0.74);
    }

    #[test]
    fn matching_initial_probabilities() {
        let s = Exp3State::with_probabilities(&[0.2, 0.3, 0.5], 0.01).unwrap();
        for (p, q) in s.probabilities().iter().zip([0.2, 0.3, 0.5]) {
            assert!((p - q).abs() < 1e-15);
        }
        assert!(Exp3State::with_probabilities(&[0.001, 0.999], 0.1).is_err());
    }
}
