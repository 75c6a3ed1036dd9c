//! Cooperative pursuit on a square grid with egocentric partial views.
//!
//! Agents move simultaneously (stay/up/down/left/right). A step ends in a
//! capture when at least two agents are orthogonally adjacent to the prey
//! after moving. Otherwise the prey moves (if it walks) and the team pays
//! the step penalty.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{one_hot, DecPomdp, DecPomdpSpec, Transition};
use crate::error::{Error, Result};

pub const STAY: usize = 0;
const MOVES: [(i64, i64); 5] = [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)];
const CHANNELS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreyPolicy {
    Static,
    RandomWalk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaptureGridConfig {
    pub side: usize,
    pub agents: usize,
    pub prey: PreyPolicy,
    pub view_radius: usize,
    pub capture_reward: f64,
    pub step_penalty: f64,
    pub horizon: usize,
}

impl Default for CaptureGridConfig {
    fn default() -> Self {
        Self {
            side: 5,
            agents: 2,
            prey: PreyPolicy::RandomWalk,
            view_radius: 1,
            capture_reward: 10.0,
            step_penalty: -0.1,
            horizon: 20,
        }
    }
}

pub type Cell = (usize, usize);

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CaptureState {
    pub agents: Vec<Cell>,
    pub prey: Cell,
    pub t: usize,
}

#[derive(Clone, Debug)]
pub struct CaptureGrid {
    cfg: CaptureGridConfig,
    gamma: f64,
}

impl CaptureGrid {
    pub fn new(cfg: CaptureGridConfig) -> Result<Self> {
        if cfg.side < 3 || cfg.agents < 2 || cfg.view_radius < 1 || cfg.horizon < 1 {
            return Err(Error::Config(format!(
                "capture grid needs side >= 3, agents >= 2, view radius >= 1, horizon >= 1 (got {cfg:?})"
            )));
        }
        if cfg.agents + 1 > cfg.side * cfg.side {
            return Err(Error::Config("more occupants than cells".into()));
        }
        if !cfg.capture_reward.is_finite() || !cfg.step_penalty.is_finite() {
            return Err(Error::Config("rewards must be finite".into()));
        }
        Ok(Self { cfg, gamma: 0.99 })
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn config(&self) -> &CaptureGridConfig {
        &self.cfg
    }

    fn offset(&self, cell: Cell, action: usize) -> Option<Cell> {
        let (dr, dc) = MOVES[action];
        let r = cell.0 as i64 + dr;
        let c = cell.1 as i64 + dc;
        let n = self.cfg.side as i64;
        (r >= 0 && r < n && c >= 0 && c < n).then_some((r as usize, c as usize))
    }

    /// Simultaneous agent moves. Blocked moves (prey cell, shared target,
    /// swap, or a cell whose occupant ends up staying) bounce back; the
    /// rule is applied until it reaches a fixed point, so the outcome does
    /// not depend on agent order.
    pub fn resolve_moves(&self, s: &CaptureState, joint: &[usize]) -> Vec<Cell> {
        let cur = &s.agents;
        let mut target: Vec<Cell> = cur
            .iter()
            .zip(joint)
            .map(|(&c, &u)| match self.offset(c, u) {
                Some(t) if t != s.prey => t,
                _ => c,
            })
            .collect();
        loop {
            let mut blocked = vec![false; cur.len()];
            for i in 0..cur.len() {
                if target[i] == cur[i] {
                    continue;
                }
                for j in 0..cur.len() {
                    if i == j {
                        continue;
                    }
                    let same_target = target[j] == target[i];
                    let swap = target[i] == cur[j] && target[j] == cur[i];
                    let into_stayer = target[j] == cur[j] && cur[j] == target[i];
                    if same_target || swap || into_stayer {
                        blocked[i] = true;
                    }
                }
            }
            if !blocked.iter().any(|&b| b) {
                return target;
            }
            for (i, b) in blocked.into_iter().enumerate() {
                if b {
                    target[i] = cur[i];
                }
            }
        }
    }

    fn adjacent(a: Cell, b: Cell) -> bool {
        a.0.abs_diff(b.0) + a.1.abs_diff(b.1) == 1
    }

    fn captured(&self, agents: &[Cell], prey: Cell) -> bool {
        agents.iter().filter(|&&a| Self::adjacent(a, prey)).count() >= 2
    }

    fn prey_options(&self, prey: Cell, agents: &[Cell]) -> Vec<Cell> {
        match self.cfg.prey {
            PreyPolicy::Static => vec![prey],
            PreyPolicy::RandomWalk => (0..MOVES.len())
                .map(|u| match self.offset(prey, u) {
                    Some(c) if !agents.contains(&c) => c,
                    _ => prey,
                })
                .collect(),
        }
    }

    fn norm(&self, v: usize) -> f64 {
        v as f64 / (self.cfg.side - 1) as f64
    }
}

impl DecPomdp for CaptureGrid {
    type State = CaptureState;

    fn spec(&self) -> DecPomdpSpec {
        let w = 2 * self.cfg.view_radius + 1;
        DecPomdpSpec {
            n_agents: self.cfg.agents,
            n_actions: MOVES.len(),
            state_width: 2 * self.cfg.agents + 3,
            obs_width: w * w * CHANNELS + self.cfg.agents + 2,
            horizon: self.cfg.horizon,
            gamma: self.gamma,
        }
    }

    fn initial_distribution(&self) -> Vec<(f64, CaptureState)> {
        let cells: Vec<Cell> = (0..self.cfg.side)
            .flat_map(|r| (0..self.cfg.side).map(move |c| (r, c)))
            .collect();
        let mut out = Vec::new();
        let mut chosen = Vec::with_capacity(self.cfg.agents + 1);
        fn rec(cells: &[Cell], k: usize, chosen: &mut Vec<Cell>, out: &mut Vec<Vec<Cell>>) {
            if chosen.len() == k {
                out.push(chosen.clone());
                return;
            }
            for &c in cells {
                if !chosen.contains(&c) {
                    chosen.push(c);
                    rec(cells, k, chosen, out);
                    chosen.pop();
                }
            }
        }
        let mut placements = Vec::new();
        rec(&cells, self.cfg.agents + 1, &mut chosen, &mut placements);
        let p = 1.0 / placements.len() as f64;
        for mut pl in placements {
            let prey = pl.pop().unwrap();
            out.push((p, CaptureState { agents: pl, prey, t: 0 }));
        }
        out
    }

    /// Rejection sampling: draw cells uniformly until all occupants are
    /// distinct, which is uniform over distinct placements.
    fn sample_initial(&self, rng: &mut ChaCha8Rng) -> CaptureState {
        let n = self.cfg.side;
        let mut cells: Vec<Cell> = Vec::with_capacity(self.cfg.agents + 1);
        while cells.len() < self.cfg.agents + 1 {
            let c = (rng.gen_range(0..n), rng.gen_range(0..n));
            if !cells.contains(&c) {
                cells.push(c);
            }
        }
        let prey = cells.pop().unwrap();
        CaptureState {
            agents: cells,
            prey,
            t: 0,
        }
    }

    fn state_vector(&self, s: &CaptureState) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * s.agents.len() + 3);
        for &(r, c) in &s.agents {
            v.push(self.norm(r));
            v.push(self.norm(c));
        }
        v.push(self.norm(s.prey.0));
        v.push(self.norm(s.prey.1));
        v.push(s.t as f64 / self.cfg.horizon as f64);
        v
    }

    /// Window cells in row-major order, four channels per cell
    /// (self, ally, prey, wall), then the agent one-hot, then the agent's
    /// normalised row and column.
    fn observations(&self, s: &CaptureState) -> Vec<Vec<f64>> {
        let rad = self.cfg.view_radius as i64;
        let n = self.cfg.side as i64;
        let spec = self.spec();
        s.agents
            .iter()
            .enumerate()
            .map(|(a, &(ar, ac))| {
                let mut z = Vec::with_capacity(spec.obs_width);
                for dr in -rad..=rad {
                    for dc in -rad..=rad {
                        let r = ar as i64 + dr;
                        let c = ac as i64 + dc;
                        let mut cell = [0.0; CHANNELS];
                        if r < 0 || r >= n || c < 0 || c >= n {
                            cell[3] = 1.0;
                        } else {
                            let here = (r as usize, c as usize);
                            if dr == 0 && dc == 0 {
                                cell[0] = 1.0;
                            } else if s.agents.contains(&here) {
                                cell[1] = 1.0;
                            }
                            if s.prey == here {
                                cell[2] = 1.0;
                            }
                        }
                        z.extend_from_slice(&cell);
                    }
                }
                z.extend(one_hot(a, self.cfg.agents));
                z.push(self.norm(ar));
                z.push(self.norm(ac));
                z
            })
            .collect()
    }

    fn masks(&self, s: &CaptureState) -> Vec<Vec<bool>> {
        s.agents
            .iter()
            .map(|&c| (0..MOVES.len()).map(|u| self.offset(c, u).is_some()).collect())
            .collect()
    }

    fn transitions(&self, s: &CaptureState, joint: &[usize]) -> Vec<Transition<CaptureState>> {
        let agents = self.resolve_moves(s, joint);
        let t = s.t + 1;
        if self.captured(&agents, s.prey) {
            return vec![Transition {
                prob: 1.0,
                next: CaptureState {
                    agents,
                    prey: s.prey,
                    t,
                },
                reward: self.cfg.capture_reward,
                terminal: true,
                win: true,
            }];
        }
        let terminal = t >= self.cfg.horizon;
        let options = self.prey_options(s.prey, &agents);
        let p = 1.0 / options.len() as f64;
        options
            .into_iter()
            .map(|prey| Transition {
                prob: p,
                next: CaptureState {
                    agents: agents.clone(),
                    prey,
                    t,
                },
                reward: self.cfg.step_penalty,
                terminal,
                win: false,
            })
            .collect()
    }

    fn max_branching(&self) -> usize {
        match self.cfg.prey {
            PreyPolicy::Static => 1,
            PreyPolicy::RandomWalk => MOVES.len(),
        }
    }

    fn reward_range(&self) -> (f64, f64) {
        let (a, b) = (self.cfg.capture_reward, self.cfg.step_penalty);
        (a.min(b), a.max(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvRunner, Environment};
    use rand::SeedableRng;

    fn grid(prey: PreyPolicy) -> CaptureGrid {
        CaptureGrid::new(CaptureGridConfig {
            prey,
            ..Default::default()
        })
        .unwrap()
    }

    fn state(agents: &[Cell], prey: Cell) -> CaptureState {
        CaptureState {
            agents: agents.to_vec(),
            prey,
            t: 0,
        }
    }

    #[test]
    fn reset_is_deterministic_per_seed() {
        let mut env = EnvRunner::new(grid(PreyPolicy::RandomWalk));
        for seed in 0..20 {
            let a = env.reset(seed);
            let sa = env.state().cloned();
            let b = env.reset(seed);
            assert_eq!(a, b);
            assert_eq!(sa.as_ref(), env.state());
        }
    }

    #[test]
    fn placements_are_distinct() {
        let g = grid(PreyPolicy::Static);
        for seed in 0..500 {
            let s = g.sample_initial(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut cells = s.agents.clone();
            cells.push(s.prey);
            cells.sort();
            cells.dedup();
            assert_eq!(cells.len(), 3, "seed {seed}: {s:?}");
        }
    }

    #[test]
    fn capture_pays_reward_and_wins() {
        let g = grid(PreyPolicy::Static);
        // agent 0 steps down next to the prey, agent 1 is already adjacent
        let s = state(&[(0, 2), (2, 1)], (2, 2));
        let ts = g.transitions(&s, &[2, STAY]);
        assert_eq!(ts.len(), 1);
        assert_eq!(ts[0].reward, 10.0);
        assert!(ts[0].win && ts[0].terminal);
    }

    #[test]
    fn non_capturing_step_pays_penalty() {
        let g = grid(PreyPolicy::RandomWalk);
        let s = state(&[(0, 0), (4, 4)], (2, 2));
        for t in g.transitions(&s, &[STAY, STAY]) {
            assert_eq!(t.reward, -0.1);
            assert!(!t.win && !t.terminal);
        }
    }

    #[test]
    fn horizon_terminates_without_win() {
        let g = CaptureGrid::new(CaptureGridConfig {
            horizon: 1,
            prey: PreyPolicy::Static,
            ..Default::default()
        })
        .unwrap();
        let s = state(&[(0, 0), (4, 4)], (2, 2));
        let t = &g.transitions(&s, &[STAY, STAY])[0];
        assert!(t.terminal && !t.win);
    }

    #[test]
    fn conflicting_moves_bounce_back() {
        let g = grid(PreyPolicy::Static);
        // both target (1, 1)
        let s = state(&[(0, 1), (2, 1)], (4, 4));
        assert_eq!(g.resolve_moves(&s, &[2, 1]), vec![(0, 1), (2, 1)]);
        // swap
        let s = state(&[(0, 0), (0, 1)], (4, 4));
        assert_eq!(g.resolve_moves(&s, &[4, 3]), vec![(0, 0), (0, 1)]);
        // follow the leader is allowed
        assert_eq!(g.resolve_moves(&s, &[4, 4]), vec![(0, 1), (0, 2)]);
        // into an agent that stays
        assert_eq!(g.resolve_moves(&s, &[4, STAY]), vec![(0, 0), (0, 1)]);
        // into the prey
        let s = state(&[(0, 0), (3, 3)], (0, 1));
        assert_eq!(g.resolve_moves(&s, &[4, STAY]), vec![(0, 0), (3, 3)]);
    }

    #[test]
    fn bounce_is_order_independent() {
        let g = CaptureGrid::new(CaptureGridConfig {
            agents: 3,
            ..Default::default()
        })
        .unwrap();
        // agent 2 would follow agent 1, but agent 1 collides with agent 0
        let s = state(&[(1, 0), (1, 2), (1, 3)], (4, 4));
        let joint = [4, 3, 3];
        let forward = g.resolve_moves(&s, &joint);
        assert_eq!(forward, vec![(1, 0), (1, 2), (1, 3)]);
        let rev = CaptureState {
            agents: s.agents.iter().rev().copied().collect(),
            ..s.clone()
        };
        let rev_joint: Vec<usize> = joint.iter().rev().copied().collect();
        let mut back = g.resolve_moves(&rev, &rev_joint);
        back.reverse();
        assert_eq!(forward, back);
    }

    #[test]
    fn masks_block_walls_and_keep_stay() {
        let g = grid(PreyPolicy::Static);
        let s = state(&[(0, 0), (4, 4)], (2, 2));
        let m = g.masks(&s);
        assert_eq!(m[0], vec![true, false, true, false, true]);
        assert_eq!(m[1], vec![true, true, false, true, false]);
    }

    #[test]
    fn observation_layout() {
        let g = grid(PreyPolicy::Static);
        let s = state(&[(0, 0), (1, 1)], (0, 1));
        let z = g.observations(&s);
        let spec = g.spec();
        assert_eq!(z[0].len(), spec.obs_width);
        // window cell (dr, dc) = (0, 0) is index 4 in the 3x3 window
        assert_eq!(&z[0][4 * 4..5 * 4], &[1.0, 0.0, 0.0, 0.0]);
        // top-left cell is outside the grid
        assert_eq!(&z[0][0..4], &[0.0, 0.0, 0.0, 1.0]);
        // prey to the right, ally down-right
        assert_eq!(&z[0][5 * 4..6 * 4], &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(&z[0][8 * 4..9 * 4], &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(&z[0][36..38], &[1.0, 0.0]);
        assert_eq!(&z[0][38..], &[0.0, 0.0]);
        assert_eq!(&z[1][38..], &[0.25, 0.25]);
    }

    #[test]
    fn seeded_trajectories_repeat() {
        let mut env = EnvRunner::new(grid(PreyPolicy::RandomWalk));
        let run = |env: &mut EnvRunner<CaptureGrid>| {
            let mut o = env.reset(42);
            let mut trace = vec![o.state.clone()];
            for k in 0..20 {
                let joint: Vec<usize> = o
                    .masks
                    .iter()
                    .map(|m| (0..5).filter(|&u| m[u]).nth(k % 2).unwrap())
                    .collect();
                let r = env.step(&joint).unwrap();
                trace.push(r.state.clone());
                if r.terminal {
                    break;
                }
                o.masks = r.masks;
            }
            trace
        };
        assert_eq!(run(&mut env), run(&mut env));
    }

    #[test]
    fn invalid_configs_rejected() {
        for cfg in [
            CaptureGridConfig {
                side: 2,
                ..Default::default()
            },
            CaptureGridConfig {
                agents: 1,
                ..Default::default()
            },
            CaptureGridConfig {
                view_radius: 0,
                ..Default::default()
            },
        ] {
            assert!(CaptureGrid::new(cfg).is_err());
        }
    }

    #[test]
    fn masked_action_rejected() {
        let mut env = EnvRunner::new(grid(PreyPolicy::Static));
        let (joint, _) = (0..)
            .find_map(|seed| {
                let o = env.reset(seed);
                o.masks.iter().enumerate().find_map(|(a, m)| {
                    m.iter().position(|&ok| !ok).map(|u| {
                        let mut joint = vec![STAY; 2];
                        joint[a] = u;
                        (joint, seed)
                    })
                })
            })
            .unwrap();
        assert!(matches!(env.step(&joint), Err(Error::MaskedAction { .. })));
    }
}
