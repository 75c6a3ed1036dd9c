//! Dec-POMDP abstraction, two desk-scale environments and an exact
//! enumeration oracle for tiny instances.

mod capture;
mod oracle;
mod switch;

use std::fmt::Debug;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use capture::{CaptureGrid, CaptureGridConfig, CaptureState, PreyPolicy, STAY};
pub use oracle::{
    exact_action_values, exact_state_values, ActionValue, AgentTrace, FnPolicy, HistoryPolicy, Successor,
    UniformPolicy, ValueEntry, ValueTable, ENUMERATION_LIMIT,
};
pub use switch::{SwitchGame, SwitchGameConfig, SwitchState};

/// Sizes and discount of a Dec-POMDP instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecPomdpSpec {
    pub n_agents: usize,
    pub n_actions: usize,
    pub state_width: usize,
    pub obs_width: usize,
    pub horizon: usize,
    pub gamma: f64,
}

impl DecPomdpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 1 || self.n_actions < 2 || self.horizon < 1 {
            return Err(Error::Config(format!(
                "need n >= 1, m >= 2, T >= 1 (got n={}, m={}, T={})",
                self.n_agents, self.n_actions, self.horizon
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        Ok(())
    }
}

/// One outcome of a joint action.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<S> {
    pub prob: f64,
    pub next: S,
    pub reward: f64,
    pub terminal: bool,
    pub win: bool,
}

/// A Dec-POMDP with an explicit, enumerable model.
pub trait DecPomdp {
    type State: Clone + Debug;

    fn spec(&self) -> DecPomdpSpec;

    /// The full initial-state distribution.
    fn initial_distribution(&self) -> Vec<(f64, Self::State)>;

    fn sample_initial(&self, rng: &mut ChaCha8Rng) -> Self::State {
        let dist = self.initial_distribution();
        let idx = sample_index(dist.iter().map(|(p, _)| *p), rng);
        dist[idx].1.clone()
    }

    /// Centralised state descriptor `s_t`.
    fn state_vector(&self, s: &Self::State) -> Vec<f64>;

    /// Per-agent observations `z^a`.
    fn observations(&self, s: &Self::State) -> Vec<Vec<f64>>;

    /// Per-agent availability masks.
    fn masks(&self, s: &Self::State) -> Vec<Vec<bool>>;

    /// Every outcome of `joint` in `s`, probabilities summing to one.
    fn transitions(&self, s: &Self::State, joint: &[usize]) -> Vec<Transition<Self::State>>;

    fn sample_transition(&self, s: &Self::State, joint: &[usize], rng: &mut ChaCha8Rng) -> Transition<Self::State> {
        let mut ts = self.transitions(s, joint);
        let idx = sample_index(ts.iter().map(|t| t.prob), rng);
        ts.swap_remove(idx)
    }

    /// Upper bound on `transitions(..).len()`.
    fn max_branching(&self) -> usize;

    /// Inclusive bounds on any single reward.
    fn reward_range(&self) -> (f64, f64);
}

fn sample_index(probs: impl Iterator<Item = f64>, rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// What an agent team sees at the start of a step.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub state: Vec<f64>,
    pub obs: Vec<Vec<f64>>,
    pub masks: Vec<Vec<bool>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub state: Vec<f64>,
    pub obs: Vec<Vec<f64>>,
    pub masks: Vec<Vec<bool>>,
    pub reward: f64,
    pub terminal: bool,
    pub win: bool,
}

/// Object-safe stepping interface used by rollouts.
pub trait Environment: Send {
    fn spec(&self) -> DecPomdpSpec;
    fn reset(&mut self, seed: u64) -> Observation;
    fn step(&mut self, joint: &[usize]) -> Result<StepResult>;
    fn describe(&self) -> String;
}

/// Drives a [`DecPomdp`] model with a seeded random stream.
pub struct EnvRunner<M: DecPomdp> {
    model: M,
    state: Option<M::State>,
    rng: ChaCha8Rng,
    done: bool,
}

impl<M: DecPomdp> EnvRunner<M> {
    pub fn new(model: M) -> Self {
        Self {
            model,
            state: None,
            rng: ChaCha8Rng::seed_from_u64(0),
            done: true,
        }
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn state(&self) -> Option<&M::State> {
        self.state.as_ref()
    }

    fn observe(&self, s: &M::State) -> Observation {
        Observation {
            state: self.model.state_vector(s),
            obs: self.model.observations(s),
            masks: self.model.masks(s),
        }
    }
}

impl<M> Environment for EnvRunner<M>
where
    M: DecPomdp + Send + Debug,
    M::State: Send,
{
    fn spec(&self) -> DecPomdpSpec {
        self.model.spec()
    }

    fn reset(&mut self, seed: u64) -> Observation {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let s = self.model.sample_initial(&mut self.rng);
        let o = self.observe(&s);
        self.state = Some(s);
        self.done = false;
        o
    }

    fn step(&mut self, joint: &[usize]) -> Result<StepResult> {
        if self.done {
            return Err(Error::StepAfterTerminal);
        }
        let s = self.state.as_ref().expect("reset before step");
        let spec = self.model.spec();
        if joint.len() != spec.n_agents {
            return Err(Error::invalid(format!(
                "joint action has {} entries for {} agents",
                joint.len(),
                spec.n_agents
            )));
        }
        let masks = self.model.masks(s);
        for (agent, (&u, mask)) in joint.iter().zip(&masks).enumerate() {
            if u >= spec.n_actions || !mask[u] {
                return Err(Error::MaskedAction { agent, action: u });
            }
        }
        let t = self.model.sample_transition(s, joint, &mut self.rng);
        let o = self.observe(&t.next);
        self.state = Some(t.next);
        self.done = t.terminal;
        Ok(StepResult {
            state: o.state,
            obs: o.obs,
            masks: o.masks,
            reward: t.reward,
            terminal: t.terminal,
            win: t.win,
        })
    }

    fn describe(&self) -> String {
        format!("{:?}", self.model)
    }
}

/// Environment selection as it appears in run configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnvConfig {
    Switch(SwitchGameConfig),
    Capture(CaptureGridConfig),
}

impl EnvConfig {
    pub fn build(&self) -> Result<Box<dyn Environment>> {
        Ok(match self {
            EnvConfig::Switch(c) => Box::new(EnvRunner::new(SwitchGame::new(c.clone())?)),
            EnvConfig::Capture(c) => Box::new(EnvRunner::new(CaptureGrid::new(c.clone())?)),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::Switch(_) => "switch",
            EnvConfig::Capture(_) => "capture",
        }
    }
}

/// Length-`width` vector with a single 1 at `index`.
pub fn one_hot(index: usize, width: usize) -> Vec<f64> {
    let mut v = vec![0.0; width];
    v[index] = 1.0;
    v
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::Capture(CaptureGridConfig::default())
    }
}
