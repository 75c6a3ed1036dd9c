use serde::{Deserialize, Serialize};

use super::{one_hot, DecPomdp, DecPomdpSpec, Transition};
use crate::error::{Error, Result};

/// One-shot two-agent coordination game: both agents pick an action, the
/// team receives `payoff[u1][u2]` and the episode ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwitchGameConfig {
    pub payoff: Vec<Vec<f64>>,
}

impl Default for SwitchGameConfig {
    fn default() -> Self {
        Self {
            payoff: vec![vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 4.0]],
        }
    }
}

#[derive(Clone, Debug)]
pub struct SwitchGame {
    payoff: Vec<Vec<f64>>,
    best: f64,
    gamma: f64,
}

/// The game has a single state; `Done` marks the absorbing post-step state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SwitchState {
    Start,
    Done,
}

impl SwitchGame {
    pub const N_AGENTS: usize = 2;

    pub fn new(config: SwitchGameConfig) -> Result<Self> {
        let m = config.payoff.len();
        if m < 2 || config.payoff.iter().any(|row| row.len() != m) {
            return Err(Error::Config(format!(
                "switch payoff must be square with m >= 2, got {m} rows"
            )));
        }
        if config.payoff.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("switch payoff has non-finite entries".into()));
        }
        let best = config
            .payoff
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            payoff: config.payoff,
            best,
            gamma: 0.99,
        })
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn payoff(&self, i: usize, j: usize) -> f64 {
        self.payoff[i][j]
    }

    pub fn n_actions(&self) -> usize {
        self.payoff.len()
    }

    /// Number of joint actions attaining the maximum payoff.
    pub fn optimal_count(&self) -> usize {
        self.payoff.iter().flatten().filter(|&&v| v == self.best).count()
    }
}

impl DecPomdp for SwitchGame {
    type State = SwitchState;

    fn spec(&self) -> DecPomdpSpec {
        DecPomdpSpec {
            n_agents: Self::N_AGENTS,
            n_actions: self.payoff.len(),
            state_width: 1,
            obs_width: Self::N_AGENTS,
            horizon: 1,
            gamma: self.gamma,
        }
    }

    fn initial_distribution(&self) -> Vec<(f64, SwitchState)> {
        vec![(1.0, SwitchState::Start)]
    }

    fn state_vector(&self, s: &SwitchState) -> Vec<f64> {
        match s {
            SwitchState::Start => vec![1.0],
            SwitchState::Done => vec![0.0],
        }
    }

    fn observations(&self, _s: &SwitchState) -> Vec<Vec<f64>> {
        (0..Self::N_AGENTS).map(|a| one_hot(a, Self::N_AGENTS)).collect()
    }

    fn masks(&self, _s: &SwitchState) -> Vec<Vec<bool>> {
        vec![vec![true; self.payoff.len()]; Self::N_AGENTS]
    }

    fn transitions(&self, _s: &SwitchState, joint: &[usize]) -> Vec<Transition<SwitchState>> {
        let r = self.payoff[joint[0]][joint[1]];
        vec![Transition {
            prob: 1.0,
            next: SwitchState::Done,
            reward: r,
            terminal: true,
            win: r == self.best,
        }]
    }

    fn max_branching(&self) -> usize {
        1
    }

    fn reward_range(&self) -> (f64, f64) {
        let lo = self.payoff.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        (lo, self.best)
    }
}
