//! Verification suites exposed on the command line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{finite_diff_check, GradCheckReport, GraphLoss, Mlp, ParamSet, RmsProp, Tensor};
use crate::critic::{comacc_q, v_value, Critic, CriticKind, DEFAULT_HIDDEN};
use crate::env::{
    exact_action_values, CaptureGridConfig, EnvConfig, Environment, PreyPolicy, SwitchGame, SwitchGameConfig,
    UniformPolicy,
};
use crate::error::{Error, Result};
use crate::learn::{
    actor_loss_graph, critic_loss_graph, critic_update_wholebatch, prepare_critic_targets, Batch, CriticState, Episode,
    LearnConfig,
};
use crate::policy::{rollout, ActionDistribution, Actor, SelectMode};

pub const GRAD_STEP: f64 = 1e-5;

/// Parameters are redrawn until every ReLU input on the batch is at least
/// this far from zero, so a `GRAD_STEP` probe cannot cross a kink.
pub const KINK_MARGIN: f64 = 1e-3;
const MAX_DRAWS: usize = 100;

fn relu_margin(mlp: &Mlp, params: &ParamSet, rows: &[Vec<f64>], relu_layers: usize) -> Result<f64> {
    let z = mlp.pre_activations(params, &Tensor::stack_rows(rows)?)?;
    Ok(z[..relu_layers]
        .iter()
        .flat_map(|t| t.data().iter().map(|v| v.abs()))
        .fold(f64::INFINITY, f64::min))
}

fn draw_smooth(draw: &mut impl FnMut() -> ParamSet, margin: impl Fn(&ParamSet) -> Result<f64>) -> Result<ParamSet> {
    for _ in 0..MAX_DRAWS {
        let p = draw();
        if margin(&p)? >= KINK_MARGIN {
            return Ok(p);
        }
    }
    Err(Error::invalid(format!("no kink-free parameters in {MAX_DRAWS} draws")))
}

/// Worst relative gradient error of one loss over several seeds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradSuiteResult {
    pub loss: String,
    pub seeds: u64,
    pub max_rel_error: f64,
    pub worst_seed: u64,
    pub worst_param: String,
    pub worst_entry: (usize, f64, f64),
}

fn grad_env() -> EnvConfig {
    EnvConfig::Capture(CaptureGridConfig {
        side: 3,
        prey: PreyPolicy::RandomWalk,
        horizon: 3,
        capture_reward: 1.0,
        ..CaptureGridConfig::default()
    })
}

fn sample_batch(actor: &Actor, env: &mut dyn Environment, rng: &mut ChaCha8Rng) -> Result<Vec<Episode>> {
    let params = actor.init(rng);
    (0..2)
        .map(|_| {
            let seed = rng.gen();
            rollout(actor, &params, env, seed, |_| 0.3, SelectMode::Sample, rng)
        })
        .collect()
}

/// Central-difference checks of the actor loss and the three critic losses
/// on random batches from a small capture grid, one batch per seed.
pub fn gradient_suite(seeds: u64) -> Result<Vec<GradSuiteResult>> {
    let cfg = grad_env();
    let mut env = cfg.build()?;
    let spec = env.spec();
    let actor = Actor::new(&spec, 8)?;
    let td = LearnConfig::default().td();
    let mut results = Vec::new();

    let record = |name: &str, seed: u64, report: GradCheckReport, results: &mut Vec<GradSuiteResult>| {
        let err = report.max_rel_error;
        match results.iter_mut().find(|r| r.loss == name) {
            Some(r) => {
                r.seeds += 1;
                if err > r.max_rel_error {
                    r.max_rel_error = err;
                    r.worst_seed = seed;
                    r.worst_param = report.worst_param;
                    r.worst_entry = report.worst_entry;
                }
            }
            None => results.push(GradSuiteResult {
                loss: name.to_string(),
                seeds: 1,
                max_rel_error: err,
                worst_seed: seed,
                worst_param: report.worst_param,
                worst_entry: report.worst_entry,
            }),
        }
    };

    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let episodes = sample_batch(&actor, env.as_mut(), &mut rng)?;
        let adv: Vec<Vec<Vec<f64>>> = episodes
            .iter()
            .map(|e| {
                (0..e.len())
                    .map(|_| (0..spec.n_agents).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect()
            })
            .collect();
        let mut inputs = Vec::new();
        for e in &episodes {
            for t in 0..e.len() {
                for a in 0..e.n_agents() {
                    let prev = t.checked_sub(1).map(|p| e.actions[p][a]);
                    inputs.push(actor.input_row(&e.obs[t][a], prev, a)?);
                }
            }
        }
        let params = draw_smooth(&mut || actor.init(&mut rng), |p| {
            relu_margin(actor.embedding(), p, &inputs, 1)
        })?;
        let loss = GraphLoss(|g: &mut _, p: &_| actor_loss_graph(&actor, g, p, &episodes, &adv));
        let report = finite_diff_check(&loss, &params, GRAD_STEP)?;
        record("actor", seed, report, &mut results);

        let batch = Batch::new(&episodes)?;
        for kind in [CriticKind::CentralV, CriticKind::Coma, CriticKind::ComaCc] {
            let critic = Critic::new(kind, &spec, &[16, 16])?;
            let target = critic.init(&mut rng);
            let targets = prepare_critic_targets(&critic, &target, &batch, td)?;
            let rows: Vec<Vec<f64>> = targets.steps.iter().flat_map(|s| s.rows.iter().cloned()).collect();
            let hidden = critic.mlp().sizes().len() - 2;
            let params = draw_smooth(&mut || critic.init(&mut rng), |p| {
                relu_margin(critic.mlp(), p, &rows, hidden)
            })?;
            let steps: Vec<usize> = (0..targets.steps.len()).collect();
            let loss = GraphLoss(|g: &mut _, p: &_| critic_loss_graph(&critic, g, p, &targets, &steps));
            let report = finite_diff_check(&loss, &params, GRAD_STEP)?;
            record(kind.name(), seed, report, &mut results);
        }
    }
    Ok(results)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleFit {
    pub critic: String,
    pub error: f64,
    pub updates: usize,
}

/// One single-step episode per joint action of the default switch game,
/// each recorded under the uniform policy.
pub fn switch_joint_batch(game: &SwitchGameConfig) -> Result<Vec<Episode>> {
    let mut env = EnvConfig::Switch(game.clone()).build()?;
    let m = env.spec().n_actions;
    let mut episodes = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            let first = env.reset(0);
            let step = env.step(&[i, j])?;
            let dists = first
                .masks
                .iter()
                .map(|mask| ActionDistribution::uniform(mask))
                .collect::<Result<Vec<_>>>()?;
            episodes.push(Episode {
                states: vec![first.state],
                obs: vec![first.obs],
                masks: vec![first.masks],
                actions: vec![vec![i, j]],
                rewards: vec![step.reward],
                dists: vec![dists],
                epsilons: vec![1.0],
                generation: 0,
                terminal: step.terminal,
                win: step.win,
            });
        }
    }
    Ok(episodes)
}

/// Fits a CentralV and a COMA-CC critic by whole-batch updates with the
/// default hyperparameters to the uniform policy's exact values on the
/// switch game. Each fit stops once its error is below `tolerance`.
pub fn switch_oracle_check(seed: u64, max_updates: usize, tolerance: f64) -> Result<Vec<OracleFit>> {
    let cfg = SwitchGameConfig::default();
    let game = SwitchGame::new(cfg.clone())?;
    let table = exact_action_values(&game, &UniformPolicy)?;
    let entry = table
        .entries
        .first()
        .ok_or_else(|| Error::invalid("switch game has no initial state"))?;
    let episodes = switch_joint_batch(&cfg)?;
    let batch = Batch::new(&episodes)?;
    let spec = EnvConfig::Switch(cfg).build()?.spec();
    let learn = LearnConfig::default();
    let optimizer: RmsProp = learn.optimizer();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fits = Vec::new();

    for kind in [CriticKind::CentralV, CriticKind::ComaCc] {
        let critic = Critic::new(kind, &spec, &DEFAULT_HIDDEN)?;
        let mut state = CriticState::new(critic.init(&mut rng), learn.target_period);
        let error = |params: &_| -> Result<f64> {
            match kind {
                CriticKind::CentralV => Ok((v_value(&critic, params, &entry.state)? - entry.value).abs()),
                _ => {
                    let mut worst = 0.0f64;
                    for av in &entry.action_values {
                        let ep = &episodes[av.joint[0] * spec.n_actions + av.joint[1]];
                        let q = comacc_q(&critic, params, &ep.states[0], &ep.obs[0], None, &av.joint)?;
                        worst = worst.max((q - av.q).abs());
                    }
                    Ok(worst)
                }
            }
        };
        let mut updates = 0;
        let mut err = error(&state.params)?;
        while err >= tolerance && updates < max_updates {
            critic_update_wholebatch(&critic, &mut state, &optimizer, &batch, learn.td())?;
            updates += 1;
            err = error(&state.params)?;
        }
        fits.push(OracleFit {
            critic: kind.name().to_string(),
            error: err,
            updates,
        });
    }
    Ok(fits)
}
