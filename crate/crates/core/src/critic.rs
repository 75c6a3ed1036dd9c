//! Centralised critics: the state-value critic `V(s)`, the original
//! per-agent COMA critic with `|U|` outputs, and the consistent COMA-CC
//! critic that scores a full joint action with a single output.
//!
//! Input layouts (field order is fixed):
//!
//! ```text
//! centralv : [ s ]
//! coma     : [ s | z^a | u_{t-1} (n·m) | u_t with agent a zeroed (n·m) | id (n) ]
//! coma-cc  : [ s | z^1 … z^n | u_{t-1} (n·m) | u_t (n·m) ]
//! ```
//!
//! Joint actions are per-agent one-hot blocks; `u_0` is all zeros.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{BoundParams, Graph, Mlp, ParamSet, Tensor, Var};
use crate::env::DecPomdpSpec;
use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN: [usize; 2] = [128, 128];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
pub enum CriticKind {
    #[serde(rename = "centralv")]
    #[value(name = "centralv")]
    CentralV,
    #[serde(rename = "coma")]
    #[value(name = "coma")]
    Coma,
    #[serde(rename = "coma-cc")]
    #[value(name = "coma-cc")]
    ComaCc,
}

impl CriticKind {
    pub fn name(self) -> &'static str {
        match self {
            CriticKind::CentralV => "centralv",
            CriticKind::Coma => "coma",
            CriticKind::ComaCc => "coma-cc",
        }
    }
}

/// Critic inputs needed for one full set of counterfactual baselines at a
/// single timestep.
pub fn count_critic_inputs(kind: CriticKind, n: usize, m: usize) -> usize {
    match kind {
        CriticKind::CentralV => 1,
        CriticKind::Coma => n,
        CriticKind::ComaCc => n * m,
    }
}

/// Structured form of one critic input row.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticInput {
    pub state: Vec<f64>,
    /// Empty for CentralV, `[z^a]` for COMA, `[z^1, …, z^n]` for COMA-CC.
    pub obs: Vec<Vec<f64>>,
    /// `None` at the first step.
    pub prev_joint: Option<Vec<usize>>,
    /// Current joint action; COMA has `None` in the evaluated agent's slot.
    pub joint: Vec<Option<usize>>,
    pub agent: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CriticInputLayout {
    pub kind: CriticKind,
    pub n_agents: usize,
    pub n_actions: usize,
    pub state_width: usize,
    pub obs_width: usize,
}

impl CriticInputLayout {
    pub fn new(kind: CriticKind, spec: &DecPomdpSpec) -> Self {
        Self {
            kind,
            n_agents: spec.n_agents,
            n_actions: spec.n_actions,
            state_width: spec.state_width,
            obs_width: spec.obs_width,
        }
    }

    pub fn fields(&self) -> Vec<(&'static str, usize)> {
        let (n, m) = (self.n_agents, self.n_actions);
        match self.kind {
            CriticKind::CentralV => vec![("state", self.state_width)],
            CriticKind::Coma => vec![
                ("state", self.state_width),
                ("obs", self.obs_width),
                ("prev_joint", n * m),
                ("joint", n * m),
                ("agent", n),
            ],
            CriticKind::ComaCc => vec![
                ("state", self.state_width),
                ("obs", n * self.obs_width),
                ("prev_joint", n * m),
                ("joint", n * m),
            ],
        }
    }

    pub fn width(&self) -> usize {
        self.fields().iter().map(|f| f.1).sum()
    }

    pub fn output_width(&self) -> usize {
        match self.kind {
            CriticKind::Coma => self.n_actions,
            _ => 1,
        }
    }

    fn push_joint(&self, row: &mut Vec<f64>, joint: impl Iterator<Item = Option<usize>>) -> Result<()> {
        let m = self.n_actions;
        let mut count = 0;
        for u in joint {
            let start = row.len();
            row.resize(start + m, 0.0);
            if let Some(u) = u {
                if u >= m {
                    return Err(Error::invalid(format!("action {u} out of range for m = {m}")));
                }
                row[start + u] = 1.0;
            }
            count += 1;
        }
        if count != self.n_agents {
            return Err(Error::shape(
                "critic_input",
                format!("joint action has {count} entries for {} agents", self.n_agents),
            ));
        }
        Ok(())
    }

    pub fn encode(&self, input: &CriticInput) -> Result<Vec<f64>> {
        if input.state.len() != self.state_width {
            return Err(Error::shape(
                "critic_input",
                format!("state width {} (expected {})", input.state.len(), self.state_width),
            ));
        }
        let want_obs = match self.kind {
            CriticKind::CentralV => 0,
            CriticKind::Coma => 1,
            CriticKind::ComaCc => self.n_agents,
        };
        if input.obs.len() != want_obs || input.obs.iter().any(|z| z.len() != self.obs_width) {
            return Err(Error::shape(
                "critic_input",
                format!("expected {want_obs} observations of width {}", self.obs_width),
            ));
        }
        let mut row = Vec::with_capacity(self.width());
        row.extend_from_slice(&input.state);
        if self.kind == CriticKind::CentralV {
            return Ok(row);
        }
        for z in &input.obs {
            row.extend_from_slice(z);
        }
        match &input.prev_joint {
            Some(p) => self.push_joint(&mut row, p.iter().map(|&u| Some(u)))?,
            None => self.push_joint(&mut row, std::iter::repeat_n(None, self.n_agents))?,
        }
        self.push_joint(&mut row, input.joint.iter().copied())?;
        if self.kind == CriticKind::Coma {
            let a = input
                .agent
                .filter(|&a| a < self.n_agents)
                .ok_or_else(|| Error::invalid("COMA input needs a valid agent id"))?;
            if input.joint[a].is_some() {
                return Err(Error::invalid(format!(
                    "COMA input must zero agent {a}'s current action"
                )));
            }
            let start = row.len();
            row.resize(start + self.n_agents, 0.0);
            row[start + a] = 1.0;
        }
        Ok(row)
    }

    fn read_one_hot(block: &[f64]) -> Result<Option<usize>> {
        let hot: Vec<usize> = (0..block.len()).filter(|&i| block[i] != 0.0).collect();
        match hot.as_slice() {
            [] => Ok(None),
            [i] if block[*i] == 1.0 => Ok(Some(*i)),
            _ => Err(Error::Format(format!("not a one-hot block: {block:?}"))),
        }
    }

    pub fn decode(&self, row: &[f64]) -> Result<CriticInput> {
        if row.len() != self.width() {
            return Err(Error::shape(
                "critic_input",
                format!("row width {} (expected {})", row.len(), self.width()),
            ));
        }
        let (n, m) = (self.n_agents, self.n_actions);
        let mut at = 0;
        let mut take = |w: usize| {
            let s = &row[at..at + w];
            at += w;
            s
        };
        let state = take(self.state_width).to_vec();
        let mut input = CriticInput {
            state,
            obs: Vec::new(),
            prev_joint: None,
            joint: Vec::new(),
            agent: None,
        };
        if self.kind == CriticKind::CentralV {
            return Ok(input);
        }
        let n_obs = if self.kind == CriticKind::Coma { 1 } else { n };
        input.obs = (0..n_obs).map(|_| take(self.obs_width).to_vec()).collect();
        let prev = take(n * m)
            .chunks(m)
            .map(Self::read_one_hot)
            .collect::<Result<Vec<_>>>()?;
        input.prev_joint = if prev.iter().all(Option::is_none) {
            None
        } else {
            Some(
                prev.into_iter()
                    .map(|u| u.ok_or_else(|| Error::Format("partially zero previous action".into())))
                    .collect::<Result<_>>()?,
            )
        };
        input.joint = take(n * m).chunks(m).map(Self::read_one_hot).collect::<Result<_>>()?;
        if self.kind == CriticKind::Coma {
            input.agent = Self::read_one_hot(take(n))?;
        }
        Ok(input)
    }

    pub fn centralv_row(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.encode(&CriticInput {
            state: state.to_vec(),
            obs: Vec::new(),
            prev_joint: None,
            joint: Vec::new(),
            agent: None,
        })
    }

    /// COMA input for agent `a`, with `a`'s current action zeroed.
    pub fn coma_row(
        &self,
        state: &[f64],
        obs_a: &[f64],
        prev: Option<&[usize]>,
        joint: &[usize],
        a: usize,
    ) -> Result<Vec<f64>> {
        let mut masked: Vec<Option<usize>> = joint.iter().map(|&u| Some(u)).collect();
        if a >= masked.len() {
            return Err(Error::invalid(format!("agent {a} out of range")));
        }
        masked[a] = None;
        self.encode(&CriticInput {
            state: state.to_vec(),
            obs: vec![obs_a.to_vec()],
            prev_joint: prev.map(<[usize]>::to_vec),
            joint: masked,
            agent: Some(a),
        })
    }

    pub fn comacc_row(
        &self,
        state: &[f64],
        obs: &[Vec<f64>],
        prev: Option<&[usize]>,
        joint: &[usize],
    ) -> Result<Vec<f64>> {
        self.encode(&CriticInput {
            state: state.to_vec(),
            obs: obs.to_vec(),
            prev_joint: prev.map(<[usize]>::to_vec),
            joint: joint.iter().map(|&u| Some(u)).collect(),
            agent: None,
        })
    }

    /// The `n·m` COMA-CC inputs for a counterfactual table, row `a·m + u`
    /// replacing agent `a`'s action with `u`.
    pub fn comacc_counterfactual_rows(
        &self,
        state: &[f64],
        obs: &[Vec<f64>],
        prev: Option<&[usize]>,
        joint: &[usize],
    ) -> Result<Vec<Vec<f64>>> {
        let base = self.comacc_row(state, obs, prev, joint)?;
        let (n, m) = (self.n_agents, self.n_actions);
        let joint_start = self.width() - n * m;
        let mut rows = Vec::with_capacity(n * m);
        for a in 0..n {
            for u in 0..m {
                let mut row = base.clone();
                let block = joint_start + a * m;
                row[block..block + m].iter_mut().for_each(|x| *x = 0.0);
                row[block + u] = 1.0;
                rows.push(row);
            }
        }
        Ok(rows)
    }
}

/// A centralised critic network.
#[derive(Clone, Debug, PartialEq)]
pub struct Critic {
    layout: CriticInputLayout,
    mlp: Mlp,
}

impl Critic {
    pub fn new(kind: CriticKind, spec: &DecPomdpSpec, hidden: &[usize]) -> Result<Self> {
        spec.validate()?;
        let layout = CriticInputLayout::new(kind, spec);
        let mut sizes = vec![layout.width()];
        sizes.extend_from_slice(hidden);
        sizes.push(layout.output_width());
        Ok(Self {
            layout,
            mlp: Mlp::new("critic", sizes)?,
        })
    }

    pub fn kind(&self) -> CriticKind {
        self.layout.kind
    }

    pub fn layout(&self) -> &CriticInputLayout {
        &self.layout
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamSet {
        let mut p = ParamSet::new();
        self.mlp.init(&mut p, rng);
        p
    }

    pub fn zero_params(&self) -> ParamSet {
        let mut p = ParamSet::new();
        self.mlp.init_zeros(&mut p);
        p
    }

    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        self.mlp.check_params(params)
    }

    pub fn forward(&self, g: &mut Graph, p: &BoundParams, x: Var) -> Result<Var> {
        self.mlp.forward(g, p, x)
    }

    /// Evaluates stacked input rows without gradients.
    pub fn evaluate(&self, params: &ParamSet, rows: &[Vec<f64>]) -> Result<Tensor> {
        if rows.iter().any(|r| r.len() != self.layout.width()) {
            return Err(Error::shape(
                "critic",
                format!("input rows must have width {}", self.layout.width()),
            ));
        }
        let mut g = Graph::new();
        let p = g.bind_frozen(params);
        let x = g.constant(Tensor::stack_rows(rows)?);
        let y = self.forward(&mut g, &p, x)?;
        Ok(g.value(y).clone())
    }

    fn expect(&self, kind: CriticKind) -> Result<()> {
        if self.kind() != kind {
            return Err(Error::invalid(format!(
                "operation needs a {} critic, this one is {}",
                kind.name(),
                self.kind().name()
            )));
        }
        Ok(())
    }
}

/// Counterfactual values for every agent and every alternative own action.
#[derive(Clone, Debug, PartialEq)]
pub struct CounterfactualQTable {
    /// `values[a][u] = Q(s, (u^{-a}, u))`.
    pub values: Vec<Vec<f64>>,
    pub taken: Vec<usize>,
}

impl CounterfactualQTable {
    pub fn taken_value(&self, a: usize) -> f64 {
        self.values[a][self.taken[a]]
    }
}

pub fn v_value(critic: &Critic, params: &ParamSet, state: &[f64]) -> Result<f64> {
    critic.expect(CriticKind::CentralV)?;
    let row = critic.layout.centralv_row(state)?;
    Ok(critic.evaluate(params, &[row])?.item())
}

pub fn coma_counterfactual_qs(
    critic: &Critic,
    params: &ParamSet,
    state: &[f64],
    obs_a: &[f64],
    prev: Option<&[usize]>,
    joint: &[usize],
    a: usize,
) -> Result<Vec<f64>> {
    critic.expect(CriticKind::Coma)?;
    let row = critic.layout.coma_row(state, obs_a, prev, joint, a)?;
    Ok(critic.evaluate(params, &[row])?.into_data())
}

pub fn comacc_q(
    critic: &Critic,
    params: &ParamSet,
    state: &[f64],
    obs: &[Vec<f64>],
    prev: Option<&[usize]>,
    joint: &[usize],
) -> Result<f64> {
    critic.expect(CriticKind::ComaCc)?;
    let row = critic.layout.comacc_row(state, obs, prev, joint)?;
    Ok(critic.evaluate(params, &[row])?.item())
}

/// All `n·m` counterfactual joint actions scored in one stacked pass.
pub fn comacc_counterfactual_table(
    critic: &Critic,
    params: &ParamSet,
    state: &[f64],
    obs: &[Vec<f64>],
    prev: Option<&[usize]>,
    joint: &[usize],
) -> Result<CounterfactualQTable> {
    critic.expect(CriticKind::ComaCc)?;
    let rows = critic.layout.comacc_counterfactual_rows(state, obs, prev, joint)?;
    let q = critic.evaluate(params, &rows)?;
    let m = critic.layout.n_actions;
    Ok(CounterfactualQTable {
        values: q.data().chunks(m).map(<[f64]>::to_vec).collect(),
        taken: joint.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec() -> DecPomdpSpec {
        DecPomdpSpec {
            n_agents: 3,
            n_actions: 4,
            state_width: 5,
            obs_width: 2,
            horizon: 10,
            gamma: 0.99,
        }
    }

    fn obs() -> Vec<Vec<f64>> {
        vec![vec![0.1, 0.2], vec![0.3, -0.4], vec![1.0, 0.0]]
    }

    #[test]
    fn layout_widths() {
        let s = spec();
        assert_eq!(CriticInputLayout::new(CriticKind::CentralV, &s).width(), 5);
        assert_eq!(
            CriticInputLayout::new(CriticKind::Coma, &s).width(),
            5 + 2 + 12 + 12 + 3
        );
        assert_eq!(CriticInputLayout::new(CriticKind::ComaCc, &s).width(), 5 + 6 + 12 + 12);
        assert_eq!(CriticInputLayout::new(CriticKind::Coma, &s).output_width(), 4);
    }

    #[test]
    fn input_counts() {
        assert_eq!(count_critic_inputs(CriticKind::Coma, 5, 10), 5);
        assert_eq!(count_critic_inputs(CriticKind::ComaCc, 5, 10), 50);
    }

    #[test]
    fn zero_critics_output_zero() {
        let s = spec();
        let st = vec![0.5; 5];
        let v = Critic::new(CriticKind::CentralV, &s, &DEFAULT_HIDDEN).unwrap();
        assert_eq!(v_value(&v, &v.zero_params(), &st).unwrap(), 0.0);
        let c = Critic::new(CriticKind::Coma, &s, &DEFAULT_HIDDEN).unwrap();
        let q = coma_counterfactual_qs(&c, &c.zero_params(), &st, &[0.0, 1.0], None, &[0, 1, 2], 1).unwrap();
        assert_eq!(q, vec![0.0; 4]);
        let cc = Critic::new(CriticKind::ComaCc, &s, &DEFAULT_HIDDEN).unwrap();
        assert_eq!(
            comacc_q(&cc, &cc.zero_params(), &st, &obs(), None, &[0, 1, 2]).unwrap(),
            0.0
        );
    }

    #[test]
    fn width_and_kind_mismatch_rejected() {
        let s = spec();
        let v = Critic::new(CriticKind::CentralV, &s, &[8]).unwrap();
        assert!(v_value(&v, &v.zero_params(), &[1.0]).is_err());
        assert!(comacc_q(&v, &v.zero_params(), &[0.0; 5], &obs(), None, &[0, 0, 0]).is_err());
        let cc = Critic::new(CriticKind::ComaCc, &s, &[8]).unwrap();
        assert!(comacc_q(&cc, &cc.zero_params(), &[0.0; 5], &obs()[..2], None, &[0, 0, 0]).is_err());
        assert!(comacc_q(&cc, &cc.zero_params(), &[0.0; 5], &obs(), None, &[0, 4, 0]).is_err());
    }

    #[test]
    fn single_agent_table_covers_own_actions() {
        let s = DecPomdpSpec { n_agents: 1, ..spec() };
        let cc = Critic::new(CriticKind::ComaCc, &s, &[16]).unwrap();
        let p = cc.init(&mut ChaCha8Rng::seed_from_u64(3));
        let st = vec![0.2; 5];
        let o = vec![vec![0.5, 0.5]];
        let table = comacc_counterfactual_table(&cc, &p, &st, &o, Some(&[1]), &[2]).unwrap();
        for u in 0..4 {
            assert_eq!(
                table.values[0][u],
                comacc_q(&cc, &p, &st, &o, Some(&[1]), &[u]).unwrap()
            );
        }
    }

    #[test]
    fn round_trip_each_kind() {
        let s = spec();
        for kind in [CriticKind::CentralV, CriticKind::Coma, CriticKind::ComaCc] {
            let l = CriticInputLayout::new(kind, &s);
            let input = match kind {
                CriticKind::CentralV => CriticInput {
                    state: vec![1.0, 2.0, 3.0, 4.0, 5.0],
                    obs: vec![],
                    prev_joint: None,
                    joint: vec![],
                    agent: None,
                },
                CriticKind::Coma => CriticInput {
                    state: vec![0.0; 5],
                    obs: vec![vec![0.25, 0.5]],
                    prev_joint: Some(vec![3, 0, 1]),
                    joint: vec![Some(1), None, Some(2)],
                    agent: Some(1),
                },
                CriticKind::ComaCc => CriticInput {
                    state: vec![-1.0; 5],
                    obs: obs(),
                    prev_joint: None,
                    joint: vec![Some(0), Some(3), Some(2)],
                    agent: None,
                },
            };
            let row = l.encode(&input).unwrap();
            assert_eq!(row.len(), l.width());
            assert_eq!(l.decode(&row).unwrap(), input);
        }
    }
}
