//! Semi-on-policy training: a rolling buffer of recent episodes, KL-based
//! eligibility and the training loop that ties rollouts to updates.
//!
//! Every iteration refills the buffer to `b` episodes with the current
//! policy, trains critic then actor on the whole buffer and evicts:
//!
//! * `off`: everything (plain on-policy training),
//! * `permissive`: the oldest episode,
//! * `strict`: the oldest episode plus every episode on which the updated
//!   policy's KL to the generating policy exceeds the threshold.
//!
//! With `b = 1` all three coincide.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::ParamSet;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::learn::{Episode, Learner, TrainStats};
use crate::policy::{
    epsilon_at, evaluate_policy_on_episode, rollout, ActionDistribution, Actor, EpsilonSchedule, PolicySnapshot,
    SelectMode, SnapshotForm,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SopMode {
    Off,
    Permissive,
    Strict,
}

/// Episodes oldest first, each with the policy that generated it.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: Vec<Episode>,
    snapshots: Vec<PolicySnapshot>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("buffer capacity must be at least 1".into()));
        }
        Ok(Self {
            capacity,
            episodes: Vec::with_capacity(capacity),
            snapshots: Vec::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.episodes.len() >= self.capacity
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }

    pub fn snapshots(&self) -> &[PolicySnapshot] {
        &self.snapshots
    }

    pub fn generations(&self) -> Vec<u64> {
        self.episodes.iter().map(|e| e.generation).collect()
    }

    /// Appends a newer episode. Generations must increase.
    pub fn push(&mut self, episode: Episode, snapshot: PolicySnapshot) -> Result<()> {
        if self.is_full() {
            return Err(Error::invalid("replay buffer is full"));
        }
        if snapshot.generation != episode.generation {
            return Err(Error::invalid("snapshot and episode generations differ"));
        }
        if let Some(last) = self.episodes.last() {
            if episode.generation <= last.generation {
                return Err(Error::invalid(format!(
                    "generation {} is not newer than {}",
                    episode.generation, last.generation
                )));
            }
        }
        self.episodes.push(episode);
        self.snapshots.push(snapshot);
        Ok(())
    }

    pub fn clear(&mut self) {
        self.episodes.clear();
        self.snapshots.clear();
    }

    /// Removes the episodes at the given positions, keeping survivors in order.
    pub fn evict(&mut self, positions: &[usize]) {
        let mut i = 0;
        self.episodes.retain(|_| {
            i += 1;
            !positions.contains(&(i - 1))
        });
        let mut j = 0;
        self.snapshots.retain(|_| {
            j += 1;
            !positions.contains(&(j - 1))
        });
    }
}

/// `Σ p log(p/q)`, with `0·log(0/q) = 0` and `+∞` where `p > 0 = q`.
/// Rounding can push the sum of a near-identical pair below zero; the
/// result is clamped at 0.
pub fn kl_exact(p: &ActionDistribution, q: &ActionDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::shape("kl_exact", format!("{} vs {} entries", p.len(), q.len())));
    }
    let mut kl = 0.0;
    for (&pi, &qi) in p.probs.iter().zip(&q.probs) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Ok(f64::INFINITY);
            }
            kl += pi * (pi / qi).ln();
        }
    }
    Ok(kl.max(0.0))
}

/// `r - 1 - ln r` with `r = q/p`; its expectation under `x ~ p` is
/// `KL(p‖q)`, and each term is nonnegative.
pub fn kl_estimator_term(p_prob: f64, q_prob: f64) -> Result<f64> {
    if !(p_prob > 0.0 && q_prob > 0.0) {
        return Err(Error::invalid(format!(
            "estimator needs positive probabilities, got p = {p_prob}, q = {q_prob}"
        )));
    }
    let r = q_prob / p_prob;
    Ok((r - 1.0 - r.ln()).max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlKind {
    /// Closed form `KL(current ‖ stored)` per state.
    Exact,
    /// The estimator averaged over every action under the current policy;
    /// equals `Exact` up to rounding.
    FullSupport,
    /// The estimator at the stored actions. These were drawn from the stored
    /// policy, so this estimates `KL(stored ‖ current)`.
    Sampled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KlReport {
    pub kind: KlKind,
    pub per_episode_max: Vec<f64>,
    pub overall_max: f64,
    /// Mean over every buffered (step, agent).
    pub mean: f64,
}

fn state_kl(kind: KlKind, current: &ActionDistribution, stored: &ActionDistribution, taken: usize) -> Result<f64> {
    match kind {
        KlKind::Exact => kl_exact(current, stored),
        KlKind::FullSupport => {
            let mut total = 0.0;
            for (&c, &s) in current.probs.iter().zip(&stored.probs) {
                if c > 0.0 {
                    if s <= 0.0 {
                        return Ok(f64::INFINITY);
                    }
                    total += c * kl_estimator_term(c, s)?;
                }
            }
            Ok(total)
        }
        KlKind::Sampled => kl_estimator_term(stored.probs[taken], current.probs[taken]),
    }
}

/// Divergence between the current policy and each episode's generating
/// policy over all recorded histories.
pub fn max_buffer_kl(actor: &Actor, params: &ParamSet, buffer: &ReplayBuffer, kind: KlKind) -> Result<KlReport> {
    let current = actor.evaluate_episodes(params, buffer.episodes())?;
    let mut per_episode_max = Vec::with_capacity(buffer.len());
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((ep, snap), cur) in buffer.episodes().iter().zip(buffer.snapshots()).zip(&current) {
        let stored = evaluate_policy_on_episode(actor, snap, ep)?;
        let mut worst = 0.0f64;
        for t in 0..ep.len() {
            for a in 0..ep.n_agents() {
                let kl = state_kl(kind, &cur[t][a], &stored[t][a], ep.actions[t][a])?;
                worst = worst.max(kl);
                sum += kl;
                count += 1;
            }
        }
        per_episode_max.push(worst);
    }
    Ok(KlReport {
        kind,
        overall_max: per_episode_max.iter().copied().fold(0.0, f64::max),
        mean: if count > 0 { sum / count as f64 } else { 0.0 },
        per_episode_max,
    })
}

/// Buffer positions strict mode evicts: the oldest plus every episode whose
/// maximum KL exceeds `threshold`.
pub fn strict_evictions(report: &KlReport, threshold: f64) -> Vec<usize> {
    report
        .per_episode_max
        .iter()
        .enumerate()
        .filter(|&(i, &kl)| i == 0 || kl > threshold)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SopConfig {
    pub mode: SopMode,
    pub batch_size: usize,
    pub kl_threshold: f64,
    pub epsilon: EpsilonSchedule,
}

impl SopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.kl_threshold >= 0.0) {
            return Err(Error::Config(format!(
                "kl threshold {} must be >= 0",
                self.kl_threshold
            )));
        }
        self.epsilon.validate()
    }
}

/// Training state: learner, buffer, environment and seeded streams.
pub struct SopTrainer {
    pub learner: Learner,
    pub buffer: ReplayBuffer,
    pub config: SopConfig,
    env: Box<dyn Environment>,
    env_seeds: ChaCha8Rng,
    actions: ChaCha8Rng,
    pub env_steps: u64,
    pub episodes: u64,
    pub iterations: u64,
    next_generation: u64,
    pub last_stats: Option<TrainStats>,
    pub last_kl: Option<KlReport>,
}

/// Independent stream `stream` of the run seeded by `seed`.
pub fn seeded_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub const STREAM_ENV: u64 = 0;
pub const STREAM_ACTIONS: u64 = 1;
pub const STREAM_INIT: u64 = 2;
pub const STREAM_EVAL: u64 = 3;
pub const STREAM_EVAL_TIES: u64 = 4;

impl SopTrainer {
    pub fn new(learner: Learner, env: Box<dyn Environment>, config: SopConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            learner,
            buffer: ReplayBuffer::new(config.batch_size)?,
            config,
            env,
            env_seeds: seeded_stream(seed, STREAM_ENV),
            actions: seeded_stream(seed, STREAM_ACTIONS),
            env_steps: 0,
            episodes: 0,
            iterations: 0,
            next_generation: 0,
            last_stats: None,
            last_kl: None,
        })
    }

    pub fn epsilon(&self) -> f64 {
        epsilon_at(self.env_steps, &self.config.epsilon)
    }

    /// Rolls out one episode with the current policy and appends it. On an
    /// environment error the buffer and counters are unchanged.
    pub fn collect_episode(&mut self) -> Result<&Episode> {
        let start = self.env_steps;
        let schedule = self.config.epsilon;
        let seed = self.env_seeds.next_u64();
        let mut ep = rollout(
            &self.learner.actor,
            &self.learner.actor_params,
            self.env.as_mut(),
            seed,
            |t| epsilon_at(start + t as u64, &schedule),
            SelectMode::Sample,
            &mut self.actions,
        )?;
        ep.generation = self.next_generation;
        let snapshot = PolicySnapshot {
            generation: self.next_generation,
            form: SnapshotForm::Recorded,
        };
        self.env_steps += ep.len() as u64;
        self.episodes += 1;
        self.next_generation += 1;
        self.buffer.push(ep, snapshot)?;
        Ok(self.buffer.episodes().last().unwrap())
    }

    /// Tops the buffer up to capacity; returns how many episodes were added.
    pub fn fill(&mut self) -> Result<usize> {
        let mut added = 0;
        while !self.buffer.is_full() {
            self.collect_episode()?;
            added += 1;
        }
        Ok(added)
    }

    /// One critic-then-actor update on the whole buffer.
    pub fn train(&mut self) -> Result<TrainStats> {
        let stats = self.learner.train(self.buffer.episodes())?;
        self.iterations += 1;
        self.last_stats = Some(stats);
        Ok(stats)
    }

    /// Applies the mode's eviction rule against the current (post-update)
    /// policy. Returns the evicted generations.
    pub fn evict(&mut self) -> Result<Vec<u64>> {
        let report = max_buffer_kl(
            &self.learner.actor,
            &self.learner.actor_params,
            &self.buffer,
            KlKind::Exact,
        )?;
        let positions: Vec<usize> = match self.config.mode {
            SopMode::Off => (0..self.buffer.len()).collect(),
            SopMode::Permissive => vec![0],
            SopMode::Strict => strict_evictions(&report, self.config.kl_threshold),
        };
        let gens = self.buffer.generations();
        let evicted = positions.iter().map(|&i| gens[i]).collect();
        self.buffer.evict(&positions);
        self.last_kl = Some(report);
        Ok(evicted)
    }

    /// Train on the full buffer, drop the oldest episode, add one fresh one.
    pub fn permissive_iteration(&mut self) -> Result<()> {
        if !self.buffer.is_full() {
            return Err(Error::invalid("permissive iteration needs a full buffer"));
        }
        self.train()?;
        self.buffer.evict(&[0]);
        self.collect_episode()?;
        Ok(())
    }

    /// Refill, train, then evict the oldest and every episode whose KL to
    /// the updated policy exceeds the threshold.
    pub fn strict_iteration(&mut self) -> Result<Vec<u64>> {
        self.fill()?;
        self.train()?;
        let report = max_buffer_kl(
            &self.learner.actor,
            &self.learner.actor_params,
            &self.buffer,
            KlKind::Exact,
        )?;
        let positions = strict_evictions(&report, self.config.kl_threshold);
        let gens = self.buffer.generations();
        self.buffer.evict(&positions);
        self.last_kl = Some(report);
        Ok(positions.iter().map(|&i| gens[i]).collect())
    }

    /// Mode-driven iteration: refill, train, evict.
    pub fn iteration(&mut self) -> Result<Vec<u64>> {
        self.fill()?;
        self.train()?;
        self.evict()
    }
}
