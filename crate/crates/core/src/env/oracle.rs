//! Exact `V^π` and `Q^π` by exhaustive enumeration of policy and
//! transition randomness. Only for instances with a handful of states.

use super::DecPomdp;
use crate::error::{Error, Result};

/// Enumeration refuses instances whose path bound exceeds this.
pub const ENUMERATION_LIMIT: f64 = 1e7;

/// Private action-observation history of one agent: the observation at
/// every step so far and the actions taken before the latest one.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AgentTrace {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
}

/// A fixed decentralised policy conditioned on private histories.
pub trait HistoryPolicy {
    fn action_probs(&self, agent: usize, trace: &AgentTrace, mask: &[bool]) -> Vec<f64>;
}

/// Uniform over available actions.
pub struct UniformPolicy;

impl HistoryPolicy for UniformPolicy {
    fn action_probs(&self, _agent: usize, _trace: &AgentTrace, mask: &[bool]) -> Vec<f64> {
        let k = mask.iter().filter(|&&m| m).count() as f64;
        mask.iter().map(|&m| if m { 1.0 / k } else { 0.0 }).collect()
    }
}

/// Adapts a closure to [`HistoryPolicy`].
pub struct FnPolicy<F>(pub F);

impl<F> HistoryPolicy for FnPolicy<F>
where
    F: Fn(usize, &AgentTrace, &[bool]) -> Vec<f64>,
{
    fn action_probs(&self, agent: usize, trace: &AgentTrace, mask: &[bool]) -> Vec<f64> {
        (self.0)(agent, trace, mask)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Successor {
    pub prob: f64,
    pub reward: f64,
    pub terminal: bool,
    /// `V^π` of the successor history (0 when terminal).
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActionValue {
    pub joint: Vec<usize>,
    /// Probability the policy assigns to `joint` at this state.
    pub policy_prob: f64,
    pub q: f64,
    pub successors: Vec<Successor>,
}

/// Exact values at one initial state.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueEntry {
    pub prob: f64,
    pub state: Vec<f64>,
    pub value: f64,
    /// Filled by [`exact_action_values`]; one entry per available joint
    /// action, in lexicographic order.
    pub action_values: Vec<ActionValue>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable {
    pub gamma: f64,
    pub entries: Vec<ValueEntry>,
}

impl ValueTable {
    /// `E_{s_1}[V^π(s_1)]`.
    pub fn initial_value(&self) -> f64 {
        self.entries.iter().map(|e| e.prob * e.value).sum()
    }

    pub fn q(&self, entry: usize, joint: &[usize]) -> Option<f64> {
        self.entries
            .get(entry)?
            .action_values
            .iter()
            .find(|a| a.joint == joint)
            .map(|a| a.q)
    }
}

fn path_bound<M: DecPomdp>(model: &M) -> f64 {
    let spec = model.spec();
    let joint = (spec.n_actions as f64).powi(spec.n_agents as i32);
    let per_step = joint * model.max_branching() as f64;
    model.initial_distribution().len() as f64 * per_step.powi(spec.horizon as i32)
}

fn check_size<M: DecPomdp>(model: &M) -> Result<()> {
    let spec = model.spec();
    // cheap pre-check before materialising the initial distribution
    let joint = (spec.n_actions as f64).powi(spec.n_agents as i32);
    let lower = (joint * model.max_branching() as f64).powi(spec.horizon as i32);
    if lower > ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            paths: lower,
            limit: ENUMERATION_LIMIT,
        });
    }
    let paths = path_bound(model);
    if paths > ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            paths,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(())
}

/// Cartesian product of per-agent action lists.
fn joint_actions(per_agent: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for opts in per_agent {
        let mut next = Vec::with_capacity(out.len() * opts.len());
        for prefix in &out {
            for &u in opts {
                let mut j = prefix.clone();
                j.push(u);
                next.push(j);
            }
        }
        out = next;
    }
    out
}

struct Enumerator<'a, M: DecPomdp, P: HistoryPolicy + ?Sized> {
    model: &'a M,
    policy: &'a P,
    gamma: f64,
}

impl<M: DecPomdp, P: HistoryPolicy + ?Sized> Enumerator<'_, M, P> {
    fn policy_probs(&self, s: &M::State, traces: &[AgentTrace]) -> Vec<Vec<f64>> {
        let masks = self.model.masks(s);
        traces
            .iter()
            .zip(&masks)
            .enumerate()
            .map(|(a, (tr, m))| self.policy.action_probs(a, tr, m))
            .collect()
    }

    fn extend(traces: &[AgentTrace], joint: &[usize], obs: Vec<Vec<f64>>) -> Vec<AgentTrace> {
        traces
            .iter()
            .zip(joint)
            .zip(obs)
            .map(|((tr, &u), z)| {
                let mut t = tr.clone();
                t.actions.push(u);
                t.observations.push(z);
                t
            })
            .collect()
    }

    fn q_value(
        &self,
        s: &M::State,
        traces: &[AgentTrace],
        joint: &[usize],
        successors: Option<&mut Vec<Successor>>,
    ) -> f64 {
        let mut q = 0.0;
        let mut record = successors;
        for t in self.model.transitions(s, joint) {
            let v = if t.terminal {
                0.0
            } else {
                let next = Self::extend(traces, joint, self.model.observations(&t.next));
                self.state_value(&t.next, &next)
            };
            q += t.prob * (t.reward + self.gamma * v);
            if let Some(list) = record.as_deref_mut() {
                list.push(Successor {
                    prob: t.prob,
                    reward: t.reward,
                    terminal: t.terminal,
                    value: v,
                });
            }
        }
        q
    }

    fn state_value(&self, s: &M::State, traces: &[AgentTrace]) -> f64 {
        let probs = self.policy_probs(s, traces);
        let support: Vec<Vec<usize>> = probs
            .iter()
            .map(|p| (0..p.len()).filter(|&u| p[u] > 0.0).collect())
            .collect();
        joint_actions(&support)
            .into_iter()
            .map(|joint| {
                let pj: f64 = joint.iter().zip(&probs).map(|(&u, p)| p[u]).product();
                pj * self.q_value(s, traces, &joint, None)
            })
            .sum()
    }

    fn root(&self, prob: f64, s: &M::State, with_actions: bool) -> ValueEntry {
        let traces: Vec<AgentTrace> = self
            .model
            .observations(s)
            .into_iter()
            .map(|z| AgentTrace {
                observations: vec![z],
                actions: Vec::new(),
            })
            .collect();
        let state = self.model.state_vector(s);
        if !with_actions {
            return ValueEntry {
                prob,
                state,
                value: self.state_value(s, &traces),
                action_values: Vec::new(),
            };
        }
        let probs = self.policy_probs(s, &traces);
        let available: Vec<Vec<usize>> = self
            .model
            .masks(s)
            .iter()
            .map(|m| (0..m.len()).filter(|&u| m[u]).collect())
            .collect();
        let mut value = 0.0;
        let action_values = joint_actions(&available)
            .into_iter()
            .map(|joint| {
                let policy_prob: f64 = joint.iter().zip(&probs).map(|(&u, p)| p[u]).product();
                let mut successors = Vec::new();
                let q = self.q_value(s, &traces, &joint, Some(&mut successors));
                if policy_prob > 0.0 {
                    value += policy_prob * q;
                }
                ActionValue {
                    joint,
                    policy_prob,
                    q,
                    successors,
                }
            })
            .collect();
        ValueEntry {
            prob,
            state,
            value,
            action_values,
        }
    }
}

fn enumerate<M: DecPomdp, P: HistoryPolicy + ?Sized>(model: &M, policy: &P, with_actions: bool) -> Result<ValueTable> {
    model.spec().validate()?;
    check_size(model)?;
    let gamma = model.spec().gamma;
    let e = Enumerator { model, policy, gamma };
    let entries = model
        .initial_distribution()
        .iter()
        .map(|(p, s)| e.root(*p, s, with_actions))
        .collect();
    Ok(ValueTable { gamma, entries })
}

/// Exact `V^π(s_1)` for every initial state.
pub fn exact_state_values<M: DecPomdp, P: HistoryPolicy + ?Sized>(model: &M, policy: &P) -> Result<ValueTable> {
    enumerate(model, policy, false)
}

/// Exact `V^π(s_1)` and `Q^π(s_1, u)` for every initial state and every
/// available joint action, with the successor values each `Q` was built
/// from.
pub fn exact_action_values<M: DecPomdp, P: HistoryPolicy + ?Sized>(model: &M, policy: &P) -> Result<ValueTable> {
    enumerate(model, policy, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{CaptureGrid, CaptureGridConfig, PreyPolicy, SwitchGame, SwitchGameConfig};

    fn xor_game() -> SwitchGame {
        SwitchGame::new(SwitchGameConfig {
            payoff: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        })
        .unwrap()
    }

    #[test]
    fn uniform_switch_value_is_payoff_mean() {
        let t = exact_state_values(&xor_game(), &UniformPolicy).unwrap();
        assert_eq!(t.initial_value(), 0.5);
    }

    #[test]
    fn deterministic_policy_value_is_single_payoff() {
        let game = SwitchGame::new(SwitchGameConfig::default()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let pol = FnPolicy(move |a: usize, _: &AgentTrace, m: &[bool]| {
                    let pick = if a == 0 { i } else { j };
                    (0..m.len()).map(|u| if u == pick { 1.0 } else { 0.0 }).collect()
                });
                let t = exact_state_values(&game, &pol).unwrap();
                assert_eq!(t.initial_value(), game.payoff(i, j));
            }
        }
    }

    #[test]
    fn switch_action_values_are_payoffs() {
        let game = SwitchGame::new(SwitchGameConfig::default()).unwrap();
        let t = exact_action_values(&game, &UniformPolicy).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(t.q(0, &[i, j]), Some(game.payoff(i, j)));
            }
        }
        let e = &t.entries[0];
        let total: f64 = e.action_values.iter().map(|a| a.policy_prob * a.q).sum();
        assert!((total - e.value).abs() < 1e-12);
    }

    #[test]
    fn oversize_instance_rejected_with_report() {
        let g = CaptureGrid::new(CaptureGridConfig::default()).unwrap();
        match exact_state_values(&g, &UniformPolicy) {
            Err(Error::TooLarge { paths, .. }) => assert!(paths > ENUMERATION_LIMIT),
            other => panic!("expected TooLarge, got {other:?}"),
        }
    }

    #[test]
    fn capture_bellman_consistency() {
        let g = CaptureGrid::new(CaptureGridConfig {
            side: 3,
            horizon: 2,
            prey: PreyPolicy::Static,
            ..Default::default()
        })
        .unwrap();
        let t = exact_action_values(&g, &UniformPolicy).unwrap();
        for e in t.entries.iter().take(40) {
            let v: f64 = e.action_values.iter().map(|a| a.policy_prob * a.q).sum();
            assert!((v - e.value).abs() < 1e-12);
            for a in &e.action_values {
                let q: f64 = a
                    .successors
                    .iter()
                    .map(|s| s.prob * (s.reward + t.gamma * s.value))
                    .sum();
                assert!((q - a.q).abs() < 1e-12);
            }
        }
    }
}
