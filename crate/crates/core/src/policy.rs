//! Shared-parameter recurrent actor, ε-floor exploration and re-evaluation
//! of stored or current policies on recorded episodes.
//!
//! Per step, agent `a` feeds `[z^a | one_hot(u^a_{t-1}) | one_hot(a)]`
//! through `linear → ReLU → GRU → linear` to get logits. Logits of
//! unavailable actions are dropped by a masked softmax, and the result is
//! mixed with the uniform distribution over available actions at weight ε.
//! Rollouts, training and re-evaluation all run the same graph code, and
//! every op is row-independent, so a distribution recomputed later in a
//! larger batch matches the one recorded at acting time bit for bit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{BoundParams, Graph, GruCell, Mlp, ParamSet, Tensor, Var};
use crate::env::{one_hot, DecPomdpSpec, Environment};
use crate::error::{Error, Result};
use crate::learn::Episode;

pub const DEFAULT_HIDDEN: usize = 64;

/// Linear ε schedule, clamped at `end` after `anneal_steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 0.5,
            end: 0.01,
            anneal_steps: 100_000,
        }
    }
}

impl EpsilonSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.start >= self.end && self.end >= 0.0 && self.start <= 1.0) {
            return Err(Error::Config(format!(
                "epsilon schedule needs 1 >= start >= end >= 0, got {} -> {}",
                self.start, self.end
            )));
        }
        Ok(())
    }
}

pub fn epsilon_at(t: u64, schedule: &EpsilonSchedule) -> f64 {
    if t >= schedule.anneal_steps {
        return schedule.end;
    }
    let frac = t as f64 / schedule.anneal_steps as f64;
    schedule.start + (schedule.end - schedule.start) * frac
}

/// A categorical distribution over one agent's actions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution {
    pub probs: Vec<f64>,
}

impl ActionDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid(format!("invalid probabilities {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("probabilities sum to {total}")));
        }
        Ok(Self { probs })
    }

    /// Uniform over available actions.
    pub fn uniform(mask: &[bool]) -> Result<Self> {
        let k = mask.iter().filter(|&&m| m).count();
        if k == 0 {
            return Err(Error::invalid("every action is masked"));
        }
        Ok(Self {
            probs: mask.iter().map(|&m| if m { 1.0 / k as f64 } else { 0.0 }).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index of the largest probability, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectMode {
    Sample,
    Greedy,
}

/// Draws an action. Greedy selection breaks exact ties uniformly at random
/// and touches `rng` only when there is a tie.
pub fn select_action<R: Rng + ?Sized>(dist: &ActionDistribution, mode: SelectMode, rng: &mut R) -> usize {
    match mode {
        SelectMode::Greedy => {
            let best = dist.probs[dist.argmax()];
            let ties: Vec<usize> = (0..dist.len()).filter(|&i| dist.probs[i] == best).collect();
            if ties.len() == 1 {
                ties[0]
            } else {
                ties[rng.gen_range(0..ties.len())]
            }
        }
        SelectMode::Sample => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut last = 0;
            for (i, &p) in dist.probs.iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                acc += p;
                last = i;
                if u < acc {
                    return i;
                }
            }
            last
        }
    }
}

fn check_masks(masks: &[Vec<bool>], m: usize) -> Result<()> {
    for (row, mask) in masks.iter().enumerate() {
        if mask.len() != m {
            return Err(Error::shape(
                "policy",
                format!("mask row {row} has {} entries for {m} actions", mask.len()),
            ));
        }
        if !mask.iter().any(|&x| x) {
            return Err(Error::invalid(format!("mask row {row} has no available action")));
        }
    }
    Ok(())
}

/// Masked softmax followed by the ε-floor, one row per distribution.
pub fn distribution_graph(g: &mut Graph, logits: Var, masks: &[Vec<bool>], eps: &[f64]) -> Var {
    let flat: Vec<bool> = masks.iter().flatten().copied().collect();
    let probs = g.masked_softmax(logits, flat.clone());
    g.mix_uniform(probs, &flat, eps.to_vec())
}

/// ε-floored distributions from precomputed logits.
pub fn distributions_from_logits(
    logits: &[Vec<f64>],
    masks: &[Vec<bool>],
    eps: f64,
) -> Result<Vec<ActionDistribution>> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::invalid(format!("epsilon {eps} outside [0, 1]")));
    }
    let m = logits.first().map_or(0, Vec::len);
    if logits.len() != masks.len() {
        return Err(Error::shape("policy", "one mask per logit row"));
    }
    check_masks(masks, m)?;
    let mut g = Graph::new();
    let l = g.constant(Tensor::stack_rows(logits)?);
    let d = distribution_graph(&mut g, l, masks, &vec![eps; logits.len()]);
    let t = g.value(d);
    Ok((0..t.rows())
        .map(|i| ActionDistribution {
            probs: t.row(i).to_vec(),
        })
        .collect())
}

/// The decentralised actor shared by every agent.
#[derive(Clone, Debug, PartialEq)]
pub struct Actor {
    n_agents: usize,
    n_actions: usize,
    obs_width: usize,
    fc1: Mlp,
    gru: GruCell,
    fc2: Mlp,
}

impl Actor {
    pub fn new(spec: &DecPomdpSpec, hidden: usize) -> Result<Self> {
        spec.validate()?;
        let input = spec.obs_width + spec.n_actions + spec.n_agents;
        Ok(Self {
            n_agents: spec.n_agents,
            n_actions: spec.n_actions,
            obs_width: spec.obs_width,
            fc1: Mlp::new("actor.fc1", vec![input, hidden])?,
            gru: GruCell::new("actor.gru", hidden, hidden)?,
            fc2: Mlp::new("actor.fc2", vec![hidden, spec.n_actions])?,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn input_width(&self) -> usize {
        self.fc1.input_width()
    }

    pub fn hidden_width(&self) -> usize {
        self.gru.hidden()
    }

    /// The input embedding layer, followed by a ReLU.
    pub fn embedding(&self) -> &Mlp {
        &self.fc1
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamSet {
        let mut p = ParamSet::new();
        self.fc1.init(&mut p, rng);
        self.gru.init(&mut p, rng);
        self.fc2.init(&mut p, rng);
        p
    }

    /// All-zero parameters: uniform over available actions everywhere.
    pub fn zero_params(&self) -> ParamSet {
        let mut p = ParamSet::new();
        self.fc1.init_zeros(&mut p);
        self.gru.init_zeros(&mut p);
        self.fc2.init_zeros(&mut p);
        p
    }

    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        self.fc1.check_params(params)?;
        self.fc2.check_params(params)?;
        let mut zero = ParamSet::new();
        self.gru.init_zeros(&mut zero);
        for (name, t) in zero.iter() {
            if params.get(name)?.shape() != t.shape() {
                return Err(Error::shape("actor", format!("`{name}` has the wrong shape")));
            }
        }
        Ok(())
    }

    pub fn input_row(&self, obs: &[f64], prev_action: Option<usize>, agent: usize) -> Result<Vec<f64>> {
        if obs.len() != self.obs_width || agent >= self.n_agents {
            return Err(Error::shape(
                "actor_input",
                format!(
                    "obs width {} (expected {}), agent {agent} of {}",
                    obs.len(),
                    self.obs_width,
                    self.n_agents
                ),
            ));
        }
        let mut row = Vec::with_capacity(self.input_width());
        row.extend_from_slice(obs);
        match prev_action {
            Some(u) if u < self.n_actions => row.extend(one_hot(u, self.n_actions)),
            Some(u) => return Err(Error::invalid(format!("previous action {u} out of range"))),
            None => row.extend(std::iter::repeat_n(0.0, self.n_actions)),
        }
        row.extend(one_hot(agent, self.n_agents));
        Ok(row)
    }

    /// One recurrent step for a stack of rows: returns `(logits, h')`.
    pub fn step(&self, g: &mut Graph, p: &BoundParams, x: Var, h: Var) -> Result<(Var, Var)> {
        let e = self.fc1.forward(g, p, x)?;
        let e = g.relu(e);
        let h = self.gru.step(g, p, e, h)?;
        let logits = self.fc2.forward(g, p, h)?;
        Ok((logits, h))
    }

    /// Acting-time step without gradients; returns logits and new hidden
    /// states, one row per input.
    pub fn forward_rows(
        &self,
        params: &ParamSet,
        inputs: &[Vec<f64>],
        hidden: &[Vec<f64>],
    ) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let mut g = Graph::new();
        let p = g.bind_frozen(params);
        let x = g.constant(Tensor::stack_rows(inputs)?);
        let h = g.constant(Tensor::stack_rows(hidden)?);
        let (logits, h) = self.step(&mut g, &p, x, h)?;
        let rows = |v: Var| {
            let t = g.value(v);
            (0..t.rows()).map(|i| t.row(i).to_vec()).collect::<Vec<_>>()
        };
        Ok((rows(logits), rows(h)))
    }

    /// Unrolls the actor over episodes padded to the longest one. Returns,
    /// per timestep, the ε-floored distributions as a `[E·n, m]` node with
    /// row `e·n + a`. Padding rows see zero inputs, a full mask and ε = 1.
    pub fn unroll(&self, g: &mut Graph, p: &BoundParams, episodes: &[Episode]) -> Result<Vec<Var>> {
        let n = self.n_agents;
        let rows = episodes.len() * n;
        let max_len = episodes.iter().map(Episode::len).max().unwrap_or(0);
        for e in episodes {
            e.validate()?;
            if e.epsilons.len() != e.len() {
                return Err(Error::Format("episode has no stored epsilon trace".into()));
            }
            if e.n_agents() != n {
                return Err(Error::shape("actor_unroll", "episode agent count"));
            }
        }
        let mut h = g.constant(Tensor::zeros(&[rows, self.hidden_width()]));
        let mut out = Vec::with_capacity(max_len);
        for t in 0..max_len {
            let mut inputs = Vec::with_capacity(rows);
            let mut masks = Vec::with_capacity(rows);
            let mut eps = Vec::with_capacity(rows);
            for e in episodes {
                for a in 0..n {
                    if t < e.len() {
                        let prev = (t > 0).then(|| e.actions[t - 1][a]);
                        inputs.push(self.input_row(&e.obs[t][a], prev, a)?);
                        masks.push(e.masks[t][a].clone());
                        eps.push(e.epsilons[t]);
                    } else {
                        inputs.push(vec![0.0; self.input_width()]);
                        masks.push(vec![true; self.n_actions]);
                        eps.push(1.0);
                    }
                }
            }
            check_masks(&masks, self.n_actions)?;
            let x = g.constant(Tensor::stack_rows(&inputs)?);
            let (logits, h2) = self.step(g, p, x, h)?;
            out.push(distribution_graph(g, logits, &masks, &eps));
            h = h2;
        }
        Ok(out)
    }

    /// Distributions this policy assigns along each episode's recorded
    /// histories, at the recorded ε: `[episode][t][agent]`.
    pub fn evaluate_episodes(
        &self,
        params: &ParamSet,
        episodes: &[Episode],
    ) -> Result<Vec<Vec<Vec<ActionDistribution>>>> {
        let mut g = Graph::new();
        let p = g.bind_frozen(params);
        let steps = self.unroll(&mut g, &p, episodes)?;
        let n = self.n_agents;
        Ok(episodes
            .iter()
            .enumerate()
            .map(|(ei, e)| {
                (0..e.len())
                    .map(|t| {
                        let v = g.value(steps[t]);
                        (0..n)
                            .map(|a| ActionDistribution {
                                probs: v.row(ei * n + a).to_vec(),
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect())
    }
}

/// One agent's private action-observation history with the recurrent state
/// after the inputs consumed so far.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentHistory {
    agent: usize,
    inputs: Vec<Vec<f64>>,
    hidden: Vec<f64>,
    consumed: usize,
    logits: Option<Vec<f64>>,
}

impl AgentHistory {
    pub fn new(actor: &Actor, agent: usize) -> Self {
        Self {
            agent,
            inputs: Vec::new(),
            hidden: vec![0.0; actor.hidden_width()],
            consumed: 0,
            logits: None,
        }
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn hidden(&self) -> &[f64] {
        &self.hidden
    }

    /// Appends the step-`t` observation and the agent's action at `t-1`.
    pub fn push(&mut self, actor: &Actor, obs: &[f64], prev_action: Option<usize>) -> Result<()> {
        self.inputs.push(actor.input_row(obs, prev_action, self.agent)?);
        Ok(())
    }
}

/// `π^a(·|τ^a)` at the latest step of `history`.
pub fn policy_distribution(
    actor: &Actor,
    params: &ParamSet,
    history: &mut AgentHistory,
    mask: &[bool],
    epsilon: f64,
) -> Result<ActionDistribution> {
    if history.is_empty() {
        return Err(Error::invalid("history has no observations"));
    }
    while history.consumed < history.inputs.len() {
        let x = history.inputs[history.consumed].clone();
        let (logits, h) = actor.forward_rows(params, &[x], std::slice::from_ref(&history.hidden))?;
        history.hidden = h.into_iter().next().unwrap();
        history.logits = logits.into_iter().next();
        history.consumed += 1;
    }
    let logits = history.logits.clone().expect("consumed at least one input");
    let mut d = distributions_from_logits(&[logits], &[mask.to_vec()], epsilon)?;
    Ok(d.remove(0))
}

#[derive(Clone, Debug, PartialEq)]
pub enum SnapshotForm {
    /// The distributions stored in the episode itself.
    Recorded,
    /// A frozen copy of actor parameters.
    Params(ParamSet),
}

/// The policy that generated an episode.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicySnapshot {
    pub generation: u64,
    pub form: SnapshotForm,
}

pub fn evaluate_policy_on_episode(
    actor: &Actor,
    snapshot: &PolicySnapshot,
    episode: &Episode,
) -> Result<Vec<Vec<ActionDistribution>>> {
    episode.validate()?;
    if episode.epsilons.len() != episode.len() {
        return Err(Error::Format("episode has no stored epsilon trace".into()));
    }
    match &snapshot.form {
        SnapshotForm::Recorded => Ok(episode.dists.clone()),
        SnapshotForm::Params(p) => Ok(actor.evaluate_episodes(p, std::slice::from_ref(episode))?.remove(0)),
    }
}

/// Plays one episode with `params`, recording everything later training
/// and KL checks need. `eps_at(t)` gives ε for step `t` of the episode.
pub fn rollout<R: Rng + ?Sized>(
    actor: &Actor,
    params: &ParamSet,
    env: &mut dyn Environment,
    env_seed: u64,
    eps_at: impl Fn(usize) -> f64,
    mode: SelectMode,
    rng: &mut R,
) -> Result<Episode> {
    let spec = env.spec();
    let n = spec.n_agents;
    if n != actor.n_agents || spec.n_actions != actor.n_actions {
        return Err(Error::shape("rollout", "actor and environment disagree on n or m"));
    }
    let first = env.reset(env_seed);
    let (mut state, mut obs, mut masks) = (first.state, first.obs, first.masks);
    let mut hidden = vec![vec![0.0; actor.hidden_width()]; n];
    let mut prev: Option<Vec<usize>> = None;
    let mut ep = Episode {
        states: Vec::new(),
        obs: Vec::new(),
        masks: Vec::new(),
        actions: Vec::new(),
        rewards: Vec::new(),
        dists: Vec::new(),
        epsilons: Vec::new(),
        generation: 0,
        terminal: false,
        win: false,
    };
    for t in 0.. {
        if t >= spec.horizon {
            return Err(Error::Format(format!(
                "environment ran past its horizon of {}",
                spec.horizon
            )));
        }
        let eps = eps_at(t);
        let inputs = (0..n)
            .map(|a| actor.input_row(&obs[a], prev.as_ref().map(|u| u[a]), a))
            .collect::<Result<Vec<_>>>()?;
        let (logits, h) = actor.forward_rows(params, &inputs, &hidden)?;
        hidden = h;
        let dists = distributions_from_logits(&logits, &masks, eps)?;
        let joint: Vec<usize> = dists.iter().map(|d| select_action(d, mode, rng)).collect();
        let step = env.step(&joint)?;

        ep.states.push(std::mem::replace(&mut state, step.state));
        ep.obs.push(std::mem::replace(&mut obs, step.obs));
        ep.masks.push(std::mem::replace(&mut masks, step.masks));
        ep.actions.push(joint.clone());
        ep.rewards.push(step.reward);
        ep.dists.push(dists);
        ep.epsilons.push(eps);
        prev = Some(joint);
        if step.terminal {
            ep.terminal = true;
            ep.win = step.win;
            break;
        }
    }
    Ok(ep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{CaptureGrid, CaptureGridConfig, DecPomdp, EnvRunner, SwitchGame, SwitchGameConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn capture_actor() -> (Actor, EnvRunner<CaptureGrid>) {
        let grid = CaptureGrid::new(CaptureGridConfig::default()).unwrap();
        let actor = Actor::new(&grid.spec(), 16).unwrap();
        (actor, EnvRunner::new(grid))
    }

    #[test]
    fn schedule_endpoints() {
        let s = EpsilonSchedule::default();
        assert_eq!(epsilon_at(0, &s), 0.5);
        assert!((epsilon_at(50_000, &s) - 0.255).abs() < 1e-15);
        assert_eq!(epsilon_at(100_000, &s), 0.01);
        assert_eq!(epsilon_at(1_000_000, &s), 0.01);
    }

    #[test]
    fn floor_and_mask() {
        let logits = vec![vec![3.0, -1.0, 0.5]];
        let mask = vec![vec![true, false, true]];
        let d = distributions_from_logits(&logits, &mask, 1.0).unwrap();
        assert_eq!(d[0].probs, vec![0.5, 0.0, 0.5]);
        let d = distributions_from_logits(&[vec![0.2; 3]], &mask, 0.0).unwrap();
        assert_eq!(d[0].probs, vec![0.5, 0.0, 0.5]);
        assert!(distributions_from_logits(&logits, &[vec![false; 3]], 0.1).is_err());
    }

    #[test]
    fn mixture_hand_value() {
        // softmax (0.9, 0.1) from logits (ln 9, 0)
        let d = distributions_from_logits(&[vec![9f64.ln(), 0.0]], &[vec![true, true]], 0.5).unwrap();
        assert!((d[0].probs[0] - 0.7).abs() < 1e-12);
        assert!((d[0].probs[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn greedy_and_degenerate_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = ActionDistribution::new(vec![0.1, 0.7, 0.2]).unwrap();
        assert_eq!(select_action(&d, SelectMode::Greedy, &mut rng), 1);
        let tie = ActionDistribution::new(vec![0.4, 0.0, 0.2, 0.4]).unwrap();
        let picks: Vec<usize> = (0..200)
            .map(|_| select_action(&tie, SelectMode::Greedy, &mut rng))
            .collect();
        assert!(picks.iter().all(|&u| u == 0 || u == 3));
        assert!(picks.contains(&0) && picks.contains(&3));
        let one = ActionDistribution::new(vec![0.0, 1.0]).unwrap();
        for _ in 0..1000 {
            assert_eq!(select_action(&one, SelectMode::Sample, &mut rng), 1);
        }
    }

    #[test]
    fn history_matches_batched_rollout() {
        let (actor, mut env) = capture_actor();
        let params = actor.init(&mut ChaCha8Rng::seed_from_u64(4));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ep = rollout(&actor, &params, &mut env, 11, |_| 0.2, SelectMode::Sample, &mut rng).unwrap();
        for a in 0..2 {
            let mut h = AgentHistory::new(&actor, a);
            for t in 0..ep.len() {
                let prev = (t > 0).then(|| ep.actions[t - 1][a]);
                h.push(&actor, &ep.obs[t][a], prev).unwrap();
                let d = policy_distribution(&actor, &params, &mut h, &ep.masks[t][a], 0.2).unwrap();
                assert_eq!(d, ep.dists[t][a]);
            }
            assert_eq!(h.len(), ep.len());
        }
    }

    #[test]
    fn frozen_snapshot_reproduces_recording() {
        let (actor, mut env) = capture_actor();
        let params = actor.init(&mut ChaCha8Rng::seed_from_u64(1));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let eps = |t: usize| 0.5 - 0.01 * t as f64;
        let eps_a: Vec<Episode> = (0..3)
            .map(|s| rollout(&actor, &params, &mut env, s, eps, SelectMode::Sample, &mut rng).unwrap())
            .collect();
        let snap = PolicySnapshot {
            generation: 0,
            form: SnapshotForm::Params(params.clone()),
        };
        for e in &eps_a {
            assert_eq!(evaluate_policy_on_episode(&actor, &snap, e).unwrap(), e.dists);
        }
        // batched over episodes of different lengths
        let all = actor.evaluate_episodes(&params, &eps_a).unwrap();
        for (e, d) in eps_a.iter().zip(all) {
            assert_eq!(d, e.dists);
        }
    }

    #[test]
    fn zero_snapshot_is_uniform_and_missing_eps_rejected() {
        let (actor, mut env) = capture_actor();
        let params = actor.init(&mut ChaCha8Rng::seed_from_u64(1));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut ep = rollout(&actor, &params, &mut env, 0, |_| 0.1, SelectMode::Sample, &mut rng).unwrap();
        let snap = PolicySnapshot {
            generation: 0,
            form: SnapshotForm::Params(actor.zero_params()),
        };
        let d = evaluate_policy_on_episode(&actor, &snap, &ep).unwrap();
        for (t, row) in d.iter().enumerate() {
            for (a, dist) in row.iter().enumerate() {
                let u = ActionDistribution::uniform(&ep.masks[t][a]).unwrap();
                for (x, y) in dist.probs.iter().zip(&u.probs) {
                    assert!((x - y).abs() < 1e-15);
                }
            }
        }
        ep.epsilons.clear();
        assert!(evaluate_policy_on_episode(&actor, &snap, &ep).is_err());
    }

    #[test]
    fn switch_rollout_records_one_step() {
        let game = SwitchGame::new(SwitchGameConfig::default()).unwrap();
        let actor = Actor::new(&game.spec(), 8).unwrap();
        let mut env = EnvRunner::new(game);
        let p = actor.init(&mut ChaCha8Rng::seed_from_u64(0));
        let ep = rollout(
            &actor,
            &p,
            &mut env,
            0,
            |_| 0.5,
            SelectMode::Sample,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert_eq!(ep.len(), 1);
        assert!(ep.terminal);
        assert_eq!(ep.epsilons, vec![0.5]);
    }
}
