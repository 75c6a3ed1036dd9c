use rand::Rng;
use serde::{Deserialize, Serialize};

use super::advantage::{centralv_advantage, coma_advantage, counterfactual_baseline};
use super::episode::{Batch, Episode};
use super::targets::td_lambda_targets;
use crate::autodiff::{BoundParams, Graph, OptimizerState, ParamSet, RmsProp, Tensor, Var};
use crate::critic::{CounterfactualQTable, Critic, CriticKind};
use crate::error::{Error, Result};
use crate::policy::{ActionDistribution, Actor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CriticSchedule {
    /// One optimiser step per timestep, last timestep first.
    Minibatch,
    /// One optimiser step on the loss summed over all timesteps.
    Wholebatch,
}

/// Delayed copy of the critic used for bootstrap values.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetNetState {
    pub params: ParamSet,
    /// Optimiser steps since the last sync.
    pub counter: u64,
    pub period: u64,
    pub syncs: u64,
}

impl TargetNetState {
    pub fn new(online: &ParamSet, period: u64) -> Self {
        Self {
            params: online.clone(),
            counter: 0,
            period,
            syncs: 0,
        }
    }

    /// Counts one critic optimiser step and syncs when due.
    pub fn tick(&mut self, online: &ParamSet) -> bool {
        self.counter += 1;
        target_sync(self, online)
    }
}

/// Copies `online` into the target once the counter reaches the period.
pub fn target_sync(state: &mut TargetNetState, online: &ParamSet) -> bool {
    if state.counter >= state.period {
        state.params = online.clone();
        state.counter = 0;
        state.syncs += 1;
        true
    } else {
        false
    }
}

/// Online critic parameters with their optimiser and target network.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticState {
    pub params: ParamSet,
    pub opt: OptimizerState,
    pub target: TargetNetState,
}

impl CriticState {
    pub fn new(params: ParamSet, target_period: u64) -> Self {
        Self {
            opt: OptimizerState::new(&params),
            target: TargetNetState::new(&params, target_period),
            params,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TdConfig {
    pub lambda: f64,
    pub gamma: f64,
}

/// Critic inputs at one timestep, with the output column to regress and
/// its target.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepEntries {
    pub rows: Vec<Vec<f64>>,
    pub column: Vec<usize>,
    pub targets: Vec<f64>,
}

/// Regression problem for one critic update: entries grouped by timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticTargets {
    pub steps: Vec<StepEntries>,
}

impl CriticTargets {
    pub fn entries(&self) -> usize {
        self.steps.iter().map(|s| s.rows.len()).sum()
    }
}

/// The critic entries of episode step `t`: `(input row, output column)`.
/// COMA has one per agent (its taken action), the others one per step.
pub fn critic_entries(critic: &Critic, ep: &Episode, t: usize) -> Result<Vec<(Vec<f64>, usize)>> {
    let layout = critic.layout();
    let prev = (t > 0).then(|| ep.actions[t - 1].as_slice());
    let joint = &ep.actions[t];
    Ok(match critic.kind() {
        CriticKind::CentralV => vec![(layout.centralv_row(&ep.states[t])?, 0)],
        CriticKind::ComaCc => vec![(layout.comacc_row(&ep.states[t], &ep.obs[t], prev, joint)?, 0)],
        CriticKind::Coma => (0..joint.len())
            .map(|a| Ok((layout.coma_row(&ep.states[t], &ep.obs[t][a], prev, joint, a)?, joint[a])))
            .collect::<Result<_>>()?,
    })
}

/// TD(λ) targets from the target network for every entry of the batch.
/// Episodes end at a terminal step or at the horizon, so nothing is
/// bootstrapped past the last step.
pub fn prepare_critic_targets(
    critic: &Critic,
    target_params: &ParamSet,
    batch: &Batch,
    td: TdConfig,
) -> Result<CriticTargets> {
    // entries[e][t] = list of (row, column)
    let mut entries = Vec::with_capacity(batch.len());
    let mut all_rows = Vec::new();
    for ep in batch.episodes {
        let per_t = (0..ep.len())
            .map(|t| critic_entries(critic, ep, t))
            .collect::<Result<Vec<_>>>()?;
        for step in &per_t {
            all_rows.extend(step.iter().map(|(r, _)| r.clone()));
        }
        entries.push(per_t);
    }
    let out = critic.evaluate(target_params, &all_rows)?;
    if !out.is_finite() {
        return Err(Error::NonFinite("target critic output".into()));
    }

    let mut steps = vec![StepEntries::default(); batch.max_len()];
    let mut row = 0;
    for (ep, per_t) in batch.episodes.iter().zip(entries) {
        let k = per_t[0].len();
        let mut values = vec![vec![0.0; ep.len()]; k];
        for (t, step) in per_t.iter().enumerate() {
            for (j, (_, col)) in step.iter().enumerate() {
                values[j][t] = out.row(row)[*col];
                row += 1;
            }
        }
        let ys = values
            .iter()
            .map(|v| td_lambda_targets(&ep.rewards, v, 0.0, td.lambda, td.gamma))
            .collect::<Result<Vec<_>>>()?;
        for (t, step) in per_t.into_iter().enumerate() {
            for (j, (r, col)) in step.into_iter().enumerate() {
                steps[t].rows.push(r);
                steps[t].column.push(col);
                steps[t].targets.push(ys[j][t]);
            }
        }
    }
    Ok(CriticTargets { steps })
}

/// `Σ (y - Q)²` over the entries of the selected timesteps.
pub fn critic_loss_graph(
    critic: &Critic,
    g: &mut Graph,
    p: &BoundParams,
    targets: &CriticTargets,
    steps: &[usize],
) -> Result<Var> {
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut ys = Vec::new();
    for &t in steps {
        let s = targets
            .steps
            .get(t)
            .ok_or_else(|| Error::invalid(format!("no critic entries at step {t}")))?;
        rows.extend(s.rows.iter().cloned());
        cols.extend_from_slice(&s.column);
        ys.extend_from_slice(&s.targets);
    }
    if rows.is_empty() {
        return Err(Error::invalid("critic loss over zero entries"));
    }
    let n = ys.len();
    let x = g.constant(Tensor::stack_rows(&rows)?);
    let out = critic.forward(g, p, x)?;
    let q = g.gather(out, cols);
    let y = g.constant(Tensor::matrix(n, 1, ys)?);
    let diff = g.sub(q, y);
    let sq = g.square(diff);
    Ok(g.sum(sq))
}

fn critic_step(
    critic: &Critic,
    state: &mut CriticState,
    optimizer: &RmsProp,
    targets: &CriticTargets,
    steps: &[usize],
) -> Result<f64> {
    let mut g = Graph::new();
    let p = g.bind(&state.params);
    let loss = critic_loss_graph(critic, &mut g, &p, targets, steps)?;
    let value = g.value(loss).item();
    if !value.is_finite() {
        return Err(Error::NonFinite("critic loss".into()));
    }
    let grads = g.backward(loss).params(&p);
    optimizer.step(&mut state.params, &grads, &mut state.opt)?;
    state.target.tick(&state.params);
    Ok(value)
}

/// Per-timestep critic training, `t = T..1`. Returns the mean squared
/// error, each timestep measured just before its own step.
pub fn critic_update_minibatch(
    critic: &Critic,
    state: &mut CriticState,
    optimizer: &RmsProp,
    batch: &Batch,
    td: TdConfig,
) -> Result<f64> {
    let targets = prepare_critic_targets(critic, &state.target.params, batch, td)?;
    let mut total = 0.0;
    for t in (0..targets.steps.len()).rev() {
        total += critic_step(critic, state, optimizer, &targets, &[t])?;
    }
    Ok(total / targets.entries() as f64)
}

/// Whole-batch critic training: one step on the summed loss. Returns the
/// pre-update mean squared error.
pub fn critic_update_wholebatch(
    critic: &Critic,
    state: &mut CriticState,
    optimizer: &RmsProp,
    batch: &Batch,
    td: TdConfig,
) -> Result<f64> {
    let targets = prepare_critic_targets(critic, &state.target.params, batch, td)?;
    let all: Vec<usize> = (0..targets.steps.len()).collect();
    let loss = critic_step(critic, state, optimizer, &targets, &all)?;
    Ok(loss / targets.entries() as f64)
}

/// Advantages `[episode][t][agent]` from the given critic parameters.
/// `dists` are the current policy's distributions on the batch (unused by
/// CentralV).
pub fn compute_advantages(
    critic: &Critic,
    critic_params: &ParamSet,
    batch: &Batch,
    dists: &[Vec<Vec<ActionDistribution>>],
    gamma_adv: f64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let layout = critic.layout();
    let n = batch.n_agents();
    let m = layout.n_actions;
    if critic.kind() != CriticKind::CentralV && dists.len() != batch.len() {
        return Err(Error::shape("compute_advantages", "one distribution set per episode"));
    }
    let mut rows = Vec::new();
    for (e, ep) in batch.episodes.iter().enumerate() {
        for t in 0..ep.len() {
            let prev = (t > 0).then(|| ep.actions[t - 1].as_slice());
            match critic.kind() {
                CriticKind::CentralV => rows.push(layout.centralv_row(&ep.states[t])?),
                CriticKind::ComaCc => {
                    rows.extend(layout.comacc_counterfactual_rows(&ep.states[t], &ep.obs[t], prev, &ep.actions[t])?)
                }
                CriticKind::Coma => {
                    for a in 0..n {
                        rows.push(layout.coma_row(&ep.states[t], &ep.obs[t][a], prev, &ep.actions[t], a)?);
                    }
                }
            }
            if critic.kind() != CriticKind::CentralV && dists[e].len() != ep.len() {
                return Err(Error::shape("compute_advantages", "distributions per step"));
            }
        }
    }
    let out = critic.evaluate(critic_params, &rows)?;
    let mut row = 0;
    let mut adv = Vec::with_capacity(batch.len());
    for (e, ep) in batch.episodes.iter().enumerate() {
        let mut per_ep = Vec::with_capacity(ep.len());
        match critic.kind() {
            CriticKind::CentralV => {
                let v: Vec<f64> = (0..ep.len()).map(|t| out.row(row + t)[0]).collect();
                row += ep.len();
                for t in 0..ep.len() {
                    let last = t + 1 == ep.len();
                    let v_next = if last { 0.0 } else { v[t + 1] };
                    let a = centralv_advantage(ep.rewards[t], v[t], v_next, gamma_adv, last);
                    per_ep.push(vec![a; n]);
                }
            }
            CriticKind::ComaCc => {
                for t in 0..ep.len() {
                    let table = CounterfactualQTable {
                        values: (0..n)
                            .map(|a| (0..m).map(|u| out.row(row + a * m + u)[0]).collect())
                            .collect(),
                        taken: ep.actions[t].clone(),
                    };
                    row += n * m;
                    per_ep.push(coma_advantage(&table, &dists[e][t])?);
                }
            }
            CriticKind::Coma => {
                for t in 0..ep.len() {
                    let mut a_t = Vec::with_capacity(n);
                    for a in 0..n {
                        let q = out.row(row);
                        row += 1;
                        let u = ep.actions[t][a];
                        a_t.push(q[u] - counterfactual_baseline(&dists[e][t][a], q)?);
                    }
                    per_ep.push(a_t);
                }
            }
        }
        adv.push(per_ep);
    }
    Ok(adv)
}

/// `-Σ log π(u^a_t | τ^a_t) · A^a_t` over valid steps and agents.
pub fn actor_loss_graph(
    actor: &Actor,
    g: &mut Graph,
    p: &BoundParams,
    episodes: &[Episode],
    advantages: &[Vec<Vec<f64>>],
) -> Result<Var> {
    let n = actor.n_agents();
    if advantages.len() != episodes.len()
        || episodes
            .iter()
            .zip(advantages)
            .any(|(e, a)| a.len() != e.len() || a.iter().any(|x| x.len() != n))
    {
        return Err(Error::shape("actor_loss", "advantages must be [episode][t][agent]"));
    }
    let probs = actor.unroll(g, p, episodes)?;
    let mut total: Option<Var> = None;
    for (t, &pt) in probs.iter().enumerate() {
        let mut idx = Vec::with_capacity(episodes.len() * n);
        let mut w = Vec::with_capacity(episodes.len() * n);
        for (e, ep) in episodes.iter().enumerate() {
            for a in 0..n {
                if t < ep.len() {
                    idx.push(ep.actions[t][a]);
                    w.push(-advantages[e][t][a]);
                } else {
                    idx.push(0);
                    w.push(0.0);
                }
            }
        }
        let taken = g.gather(pt, idx);
        let logp = g.ln(taken);
        let term = g.weighted_sum(logp, w);
        total = Some(match total {
            Some(acc) => g.add(acc, term),
            None => term,
        });
    }
    total.ok_or_else(|| Error::invalid("actor loss over zero steps"))
}

/// One optimiser step on the policy-gradient loss. Advantages are constants.
/// On a non-finite loss the parameters are left untouched.
pub fn policy_gradient_update(
    actor: &Actor,
    params: &mut ParamSet,
    opt: &mut OptimizerState,
    optimizer: &RmsProp,
    batch: &Batch,
    advantages: &[Vec<Vec<f64>>],
) -> Result<f64> {
    let mut g = Graph::new();
    let p = g.bind(params);
    let loss = actor_loss_graph(actor, &mut g, &p, batch.episodes, advantages)?;
    let value = g.value(loss).item();
    if !value.is_finite() {
        return Err(Error::NonFinite("policy loss".into()));
    }
    let grads = g.backward(loss).params(&p);
    optimizer.step(params, &grads, opt)?;
    Ok(value)
}

/// Hyperparameters of one critic-then-actor training iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnConfig {
    pub gamma: f64,
    pub lambda: f64,
    /// Use γ = 1 in the CentralV advantage (targets keep `gamma`).
    pub gamma_adv_one: bool,
    pub critic_schedule: CriticSchedule,
    pub target_period: u64,
    pub lr: f64,
    pub alpha: f64,
    pub eps: f64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        let opt = RmsProp::default();
        Self {
            gamma: 0.99,
            lambda: 0.8,
            gamma_adv_one: true,
            critic_schedule: CriticSchedule::Wholebatch,
            target_period: 200,
            lr: opt.lr,
            alpha: opt.alpha,
            eps: opt.eps,
        }
    }
}

impl LearnConfig {
    pub fn optimizer(&self) -> RmsProp {
        RmsProp {
            lr: self.lr,
            alpha: self.alpha,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer().validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if self.target_period == 0 {
            return Err(Error::Config("target period must be positive".into()));
        }
        Ok(())
    }

    pub fn td(&self) -> TdConfig {
        TdConfig {
            lambda: self.lambda,
            gamma: self.gamma,
        }
    }

    pub fn gamma_adv(&self) -> f64 {
        if self.gamma_adv_one {
            1.0
        } else {
            self.gamma
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainStats {
    pub critic_loss: f64,
    pub policy_loss: f64,
}

/// Actor and critic with their optimiser state.
#[derive(Clone, Debug)]
pub struct Learner {
    pub actor: Actor,
    pub critic: Critic,
    pub actor_params: ParamSet,
    pub actor_opt: OptimizerState,
    pub critic_state: CriticState,
    pub config: LearnConfig,
}

impl Learner {
    pub fn new<R: Rng + ?Sized>(actor: Actor, critic: Critic, config: LearnConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let actor_params = actor.init(rng);
        let critic_params = critic.init(rng);
        Ok(Self {
            actor_opt: OptimizerState::new(&actor_params),
            critic_state: CriticState::new(critic_params, config.target_period),
            actor,
            critic,
            actor_params,
            config,
        })
    }

    /// Critic first, then the actor, one update each, on all `episodes`.
    pub fn train(&mut self, episodes: &[Episode]) -> Result<TrainStats> {
        let batch = Batch::new(episodes)?;
        let optimizer = self.config.optimizer();
        let critic_loss = match self.config.critic_schedule {
            CriticSchedule::Minibatch => critic_update_minibatch(
                &self.critic,
                &mut self.critic_state,
                &optimizer,
                &batch,
                self.config.td(),
            )?,
            CriticSchedule::Wholebatch => critic_update_wholebatch(
                &self.critic,
                &mut self.critic_state,
                &optimizer,
                &batch,
                self.config.td(),
            )?,
        };
        let dists = match self.critic.kind() {
            CriticKind::CentralV => Vec::new(),
            _ => self.actor.evaluate_episodes(&self.actor_params, episodes)?,
        };
        let adv = compute_advantages(
            &self.critic,
            &self.critic_state.params,
            &batch,
            &dists,
            self.config.gamma_adv(),
        )?;
        let policy_loss = policy_gradient_update(
            &self.actor,
            &mut self.actor_params,
            &mut self.actor_opt,
            &optimizer,
            &batch,
            &adv,
        )?;
        Ok(TrainStats {
            critic_loss,
            policy_loss,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{CaptureGrid, CaptureGridConfig, DecPomdp, EnvRunner};
    use crate::policy::{rollout, SelectMode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(kind: CriticKind, episodes: usize) -> (Actor, Critic, ParamSet, ParamSet, Vec<Episode>) {
        let grid = CaptureGrid::new(CaptureGridConfig {
            horizon: 4,
            ..Default::default()
        })
        .unwrap();
        let spec = grid.spec();
        let actor = Actor::new(&spec, 8).unwrap();
        let critic = Critic::new(kind, &spec, &[16, 16]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ap = actor.init(&mut rng);
        let cp = critic.init(&mut rng);
        let mut env = EnvRunner::new(grid);
        let eps = (0..episodes as u64)
            .map(|s| rollout(&actor, &ap, &mut env, s, |_| 0.3, SelectMode::Sample, &mut rng).unwrap())
            .collect();
        (actor, critic, ap, cp, eps)
    }

    fn td() -> TdConfig {
        TdConfig {
            lambda: 0.8,
            gamma: 0.99,
        }
    }

    #[test]
    fn sync_only_when_due() {
        let a = ParamSet::new().with("x", Tensor::scalar(1.0));
        let b = ParamSet::new().with("x", Tensor::scalar(2.0));
        let mut s = TargetNetState::new(&a, 3);
        assert!(!s.tick(&b));
        assert!(!s.tick(&b));
        assert_eq!(s.params, a);
        assert!(s.tick(&b));
        assert_eq!(s.params, b);
        assert_eq!((s.counter, s.syncs), (0, 1));
    }

    #[test]
    fn single_step_schedules_agree() {
        let (_, critic, _, cp, mut eps) = setup(CriticKind::CentralV, 3);
        for e in &mut eps {
            e.truncate_for_test(1);
        }
        let batch = Batch::new(&eps).unwrap();
        let opt = RmsProp::default();
        let mut a = CriticState::new(cp.clone(), 200);
        let mut b = CriticState::new(cp, 200);
        critic_update_minibatch(&critic, &mut a, &opt, &batch, td()).unwrap();
        critic_update_wholebatch(&critic, &mut b, &opt, &batch, td()).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn two_step_schedules_differ() {
        let (_, critic, _, cp, eps) = setup(CriticKind::ComaCc, 3);
        assert!(eps.iter().all(|e| e.len() >= 2));
        let batch = Batch::new(&eps).unwrap();
        let opt = RmsProp::default();
        let mut a = CriticState::new(cp.clone(), 200);
        let mut b = CriticState::new(cp, 200);
        critic_update_minibatch(&critic, &mut a, &opt, &batch, td()).unwrap();
        critic_update_wholebatch(&critic, &mut b, &opt, &batch, td()).unwrap();
        assert_ne!(a.params, b.params);
        assert_eq!(a.target.counter, batch.max_len() as u64);
        assert_eq!(b.target.counter, 1);
    }

    #[test]
    fn perfect_critic_is_unchanged() {
        let (_, critic, _, _, mut eps) = setup(CriticKind::Coma, 2);
        for e in &mut eps {
            e.rewards.iter_mut().for_each(|r| *r = 0.0);
        }
        let batch = Batch::new(&eps).unwrap();
        let zero = critic.zero_params();
        let mut s = CriticState::new(zero.clone(), 200);
        let loss = critic_update_wholebatch(&critic, &mut s, &RmsProp::default(), &batch, td()).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(s.params, zero);
    }

    #[test]
    fn one_sync_after_period_iterations() {
        let (_, critic, _, cp, eps) = setup(CriticKind::CentralV, 1);
        let batch = Batch::new(&eps).unwrap();
        let mut s = CriticState::new(cp, 200);
        for _ in 0..200 {
            critic_update_wholebatch(&critic, &mut s, &RmsProp::default(), &batch, td()).unwrap();
        }
        assert_eq!(s.target.syncs, 1);
        assert_eq!(s.target.params, s.params);
    }

    #[test]
    fn zero_advantages_leave_actor_unchanged() {
        let (actor, _, ap, _, eps) = setup(CriticKind::CentralV, 2);
        let batch = Batch::new(&eps).unwrap();
        let adv: Vec<Vec<Vec<f64>>> = eps.iter().map(|e| vec![vec![0.0; 2]; e.len()]).collect();
        let mut p = ap.clone();
        let mut opt = OptimizerState::new(&p);
        policy_gradient_update(&actor, &mut p, &mut opt, &RmsProp::default(), &batch, &adv).unwrap();
        assert_eq!(p, ap);
    }

    #[test]
    fn positive_advantage_raises_taken_probability() {
        let (actor, _, ap, _, eps) = setup(CriticKind::CentralV, 1);
        let one = vec![eps[0].clone()];
        one[0].validate().unwrap();
        let batch = Batch::new(&one).unwrap();
        let mut adv = vec![vec![vec![0.0; 2]; one[0].len()]];
        adv[0][0][0] = 1.0;
        let before = actor.evaluate_episodes(&ap, &one).unwrap()[0][0][0].probs[one[0].actions[0][0]];
        let mut p = ap.clone();
        let mut opt = OptimizerState::new(&p);
        policy_gradient_update(&actor, &mut p, &mut opt, &RmsProp::default(), &batch, &adv).unwrap();
        let after = actor.evaluate_episodes(&p, &one).unwrap()[0][0][0].probs[one[0].actions[0][0]];
        assert!(after > before, "{before} -> {after}");
    }

    #[test]
    fn non_finite_advantage_rejected_untouched() {
        let (actor, _, ap, _, eps) = setup(CriticKind::CentralV, 1);
        let batch = Batch::new(&eps).unwrap();
        let mut adv = vec![vec![vec![0.0; 2]; eps[0].len()]];
        adv[0][0][1] = f64::NAN;
        let mut p = ap.clone();
        let mut opt = OptimizerState::new(&p);
        let r = policy_gradient_update(&actor, &mut p, &mut opt, &RmsProp::default(), &batch, &adv);
        assert!(matches!(r, Err(Error::NonFinite(_))));
        assert_eq!(p, ap);
    }

    #[test]
    fn centralv_advantages_broadcast() {
        let (_, critic, _, cp, eps) = setup(CriticKind::CentralV, 2);
        let batch = Batch::new(&eps).unwrap();
        let adv = compute_advantages(&critic, &cp, &batch, &[], 1.0).unwrap();
        for per_ep in adv {
            for a in per_ep {
                assert_eq!(a[0], a[1]);
            }
        }
    }
}
