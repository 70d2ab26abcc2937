//! Per-user online learners behind one agent interface.
//!
//! A round is: every agent [`Agent::act`]s, the environment resolves
//! occupancies and payoffs, and every agent [`Agent::observe`]s its own
//! [`Feedback`]. Agents never see each other's state.

mod exp3;
mod rla;
mod rs;

pub use exp3::Exp3State;
pub use rla::{explore_probability, RlaState};
pub use rs::{RsPhase, RsState};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a user observes after playing a channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Feedback {
    pub payoff: f64,
    /// Users on the chosen channel; only delivered when occupancy is observable.
    pub occupancy: Option<usize>,
}

/// Learner selection and parameters, as written in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AgentParams {
    Exp3 { gamma_exp3: f64 },
    Rla { gamma_rla: f64 },
    Rs,
}

impl AgentParams {
    pub fn name(&self) -> &'static str {
        match self {
            AgentParams::Exp3 { .. } => "exp3",
            AgentParams::Rla { .. } => "rla",
            AgentParams::Rs => "rs",
        }
    }
}

/// The part of the environment a user is allowed to know.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VisibleInfo {
    pub num_channels: usize,
    pub num_users: Option<usize>,
}

#[derive(Clone, Debug)]
pub enum Agent {
    Exp3(Exp3State),
    Rla(RlaState),
    Rs(RsState),
}

pub fn make_agent(params: &AgentParams, info: VisibleInfo) -> Result<Agent> {
    let need_users = || {
        info.num_users.ok_or_else(|| {
            Error::InvalidParam(format!("{} needs the number of users", params.name()))
        })
    };
    Ok(match *params {
        AgentParams::Exp3 { gamma_exp3 } => {
            Agent::Exp3(Exp3State::new(info.num_channels, gamma_exp3)?)
        }
        AgentParams::Rla { gamma_rla } => {
            Agent::Rla(RlaState::new(need_users()?, info.num_channels, gamma_rla)?)
        }
        AgentParams::Rs => Agent::Rs(RsState::new(need_users()?, info.num_channels)?),
    })
}

impl Agent {
    /// Channel to play in round `t` (1-based).
    pub fn act<R: Rng + ?Sized>(&mut self, t: u64, rng: &mut R) -> usize {
        match self {
            Agent::Exp3(s) => s.act(rng),
            Agent::Rla(s) => s.act(t, rng),
            Agent::Rs(s) => s.act(rng),
        }
    }

    pub fn observe(&mut self, feedback: &Feedback) -> Result<()> {
        match self {
            Agent::Exp3(s) => s.observe(feedback.payoff),
            Agent::Rla(s) => s.observe(feedback.payoff, feedback.occupancy),
            Agent::Rs(s) => s.observe(feedback.payoff),
        }
    }

    /// Whether the last action was an exploration draw. Only RLA separates
    /// exploration from exploitation; the others always report `false`.
    pub fn explored(&self) -> bool {
        match self {
            Agent::Rla(s) => s.explored_last(),
            _ => false,
        }
    }
}
