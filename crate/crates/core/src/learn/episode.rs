use crate::error::{Error, Result};
use crate::policy::ActionDistribution;

/// One recorded trajectory, including the behaviour policy's distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub states: Vec<Vec<f64>>,
    /// `[t][agent]` observation vectors.
    pub obs: Vec<Vec<Vec<f64>>>,
    pub masks: Vec<Vec<Vec<bool>>>,
    pub actions: Vec<Vec<usize>>,
    pub rewards: Vec<f64>,
    /// `[t][agent]` distribution the actions were drawn from.
    pub dists: Vec<Vec<ActionDistribution>>,
    /// ε in force at each step.
    pub epsilons: Vec<f64>,
    pub generation: u64,
    pub terminal: bool,
    pub win: bool,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn n_agents(&self) -> usize {
        self.actions.first().map_or(0, Vec::len)
    }

    /// Undiscounted return.
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// Checks that every per-step sequence has the same length.
    pub fn validate(&self) -> Result<()> {
        let t = self.len();
        let lens = [
            ("states", self.states.len()),
            ("obs", self.obs.len()),
            ("masks", self.masks.len()),
            ("actions", self.actions.len()),
            ("dists", self.dists.len()),
        ];
        for (name, len) in lens {
            if len != t {
                return Err(Error::Format(format!(
                    "episode field `{name}` has {len} steps, rewards have {t}"
                )));
            }
        }
        if !self.epsilons.is_empty() && self.epsilons.len() != t {
            return Err(Error::Format(format!(
                "episode has {} epsilons for {t} steps",
                self.epsilons.len()
            )));
        }
        Ok(())
    }
}

/// Episodes trained on together, padded to the longest.
#[derive(Clone, Copy, Debug)]
pub struct Batch<'a> {
    pub episodes: &'a [Episode],
}

impl<'a> Batch<'a> {
    pub fn new(episodes: &'a [Episode]) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let n = episodes[0].n_agents();
        for e in episodes {
            e.validate()?;
            if e.is_empty() || e.n_agents() != n {
                return Err(Error::Format(
                    "batch episodes must be non-empty with equal agent counts".into(),
                ));
            }
        }
        Ok(Self { episodes })
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.episodes.iter().map(Episode::len).max().unwrap_or(0)
    }

    pub fn n_agents(&self) -> usize {
        self.episodes[0].n_agents()
    }

    /// Padding mask: whether episode `e` has a step `t`.
    pub fn valid(&self, e: usize, t: usize) -> bool {
        t < self.episodes[e].len()
    }

    pub fn valid_steps(&self) -> usize {
        self.episodes.iter().map(Episode::len).sum()
    }
}

#[cfg(test)]
impl Episode {
    pub(crate) fn truncate_for_test(&mut self, len: usize) {
        self.states.truncate(len);
        self.obs.truncate(len);
        self.masks.truncate(len);
        self.actions.truncate(len);
        self.rewards.truncate(len);
        self.dists.truncate(len);
        self.epsilons.truncate(len);
    }
}
