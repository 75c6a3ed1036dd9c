//! Experiment runner: run configuration, the seeded training loop with
//! periodic greedy evaluation, metrics and manifest output, and
//! cross-seed aggregation.
//!
//! Evaluation points sit on a fixed grid `g_j = min(j·k, S)` for
//! `j = 1..⌈S/k⌉`. A row for `g_j` is emitted as soon as the environment
//! step counter reaches it, so every run with the same `S` and `k` reports
//! the same `step` column regardless of episode lengths.

pub mod checks;
mod metrics;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use metrics::{
    aggregate, aggregate_by, aggregate_csv, metrics_csv, quantile, read_metrics, AggregateRow, MetricsRow,
    METRICS_HEADER,
};

use crate::autodiff::ParamSet;
use crate::critic::{Critic, CriticKind};
use crate::env::{EnvConfig, Environment};
use crate::error::{Error, Result};
use crate::learn::{CriticSchedule, LearnConfig, Learner};
use crate::policy::{rollout, Actor, EpsilonSchedule, SelectMode};
use crate::sop::{seeded_stream, SopConfig, SopMode, SopTrainer, STREAM_EVAL, STREAM_EVAL_TIES, STREAM_INIT};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub algo: CriticKind,
    pub sop: SopMode,
    pub critic_schedule: CriticSchedule,
    pub batch_size: usize,
    pub kl_threshold: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub gamma_adv_one: bool,
    pub lr: f64,
    pub alpha: f64,
    pub rms_eps: f64,
    pub target_period: u64,
    pub actor_hidden: usize,
    pub critic_hidden: Vec<usize>,
    pub total_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub seed: u64,
    /// Fill the `seconds` column. Off by default so metrics files are
    /// reproducible byte for byte.
    pub wall_clock: bool,
    pub env: EnvConfig,
    pub epsilon: EpsilonSchedule,
}

impl Default for RunConfig {
    fn default() -> Self {
        let learn = LearnConfig::default();
        Self {
            algo: CriticKind::CentralV,
            sop: SopMode::Permissive,
            critic_schedule: learn.critic_schedule,
            batch_size: 8,
            kl_threshold: 1.0,
            gamma: learn.gamma,
            lambda: learn.lambda,
            gamma_adv_one: learn.gamma_adv_one,
            lr: learn.lr,
            alpha: learn.alpha,
            rms_eps: learn.eps,
            target_period: learn.target_period,
            actor_hidden: crate::policy::DEFAULT_HIDDEN,
            critic_hidden: crate::critic::DEFAULT_HIDDEN.to_vec(),
            total_steps: 200_000,
            eval_interval: 2_000,
            eval_episodes: 32,
            seed: 0,
            wall_clock: false,
            env: EnvConfig::default(),
            epsilon: EpsilonSchedule::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn learn_config(&self) -> LearnConfig {
        LearnConfig {
            gamma: self.gamma,
            lambda: self.lambda,
            gamma_adv_one: self.gamma_adv_one,
            critic_schedule: self.critic_schedule,
            target_period: self.target_period,
            lr: self.lr,
            alpha: self.alpha,
            eps: self.rms_eps,
        }
    }

    pub fn sop_config(&self) -> SopConfig {
        SopConfig {
            mode: self.sop,
            batch_size: self.batch_size,
            kl_threshold: self.kl_threshold,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.learn_config().validate()?;
        self.sop_config().validate()?;
        if self.total_steps == 0 {
            return Err(Error::Config("total steps must be positive".into()));
        }
        if self.eval_interval == 0 {
            return Err(Error::Config("eval interval must be positive".into()));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval episodes must be at least 1".into()));
        }
        if self.actor_hidden == 0 || self.critic_hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        self.env.build().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// SHA-256 of the canonical TOML serialisation, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// The evaluation grid `min(j·k, S)`, `j = 1..⌈S/k⌉`.
    pub fn eval_grid(&self) -> Vec<u64> {
        let k = self.eval_interval;
        let s = self.total_steps;
        (1..=s.div_ceil(k)).map(|j| (j * k).min(s)).collect()
    }
}

/// Builds the trainer a run starts from: networks initialised from the
/// seed's init stream, rollouts from its env and action streams.
pub fn build_trainer(config: &RunConfig) -> Result<SopTrainer> {
    config.validate()?;
    let env = config.env.build()?;
    let spec = env.spec();
    let actor = Actor::new(&spec, config.actor_hidden)?;
    let critic = Critic::new(config.algo, &spec, &config.critic_hidden)?;
    let mut init = seeded_stream(config.seed, STREAM_INIT);
    let learner = Learner::new(actor, critic, config.learn_config(), &mut init)?;
    SopTrainer::new(learner, env, config.sop_config(), config.seed)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalResult {
    pub win_rate: f64,
    pub mean_return: f64,
}

/// Greedy evaluation with ε = 0 on `episodes` episodes drawn from the
/// evaluation stream of `seed`; exact ties are broken from a second
/// evaluation stream. Touches neither the parameters nor any
/// training stream.
pub fn evaluate(
    actor: &Actor,
    params: &ParamSet,
    env: &mut dyn Environment,
    episodes: usize,
    seed: u64,
) -> Result<EvalResult> {
    if episodes == 0 {
        return Err(Error::invalid("evaluation needs at least one episode"));
    }
    let mut seeds = seeded_stream(seed, STREAM_EVAL);
    let mut ties = seeded_stream(seed, STREAM_EVAL_TIES);
    let mut wins = 0usize;
    let mut total = 0.0;
    for _ in 0..episodes {
        let ep = rollout(
            actor,
            params,
            env,
            seeds.next_u64(),
            |_| 0.0,
            SelectMode::Greedy,
            &mut ties,
        )?;
        wins += ep.win as usize;
        total += ep.total_reward();
    }
    Ok(EvalResult {
        win_rate: wins as f64 / episodes as f64,
        mean_return: total / episodes as f64,
    })
}

/// Sidecar describing a finished run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub environment: String,
    pub env_steps: u64,
    pub episodes: u64,
    pub iterations: u64,
    pub config: RunConfig,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub rows: Vec<MetricsRow>,
    pub actor_params: ParamSet,
    pub critic_params: ParamSet,
    pub manifest: RunManifest,
}

impl RunOutput {
    pub fn metrics_csv(&self) -> Result<Vec<u8>> {
        metrics_csv(&self.rows)
    }

    /// Writes `metrics.csv`, `manifest.toml` and `params.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<RunFiles> {
        std::fs::create_dir_all(dir)?;
        let files = RunFiles::in_dir(dir);
        std::fs::write(&files.metrics, self.metrics_csv()?)?;
        let manifest = toml::to_string(&self.manifest).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(&files.manifest, manifest)?;
        let params = serde_json::json!({
            "actor": self.actor_params,
            "critic": self.critic_params,
        });
        let text = serde_json::to_string(&params).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(&files.params, text)?;
        Ok(files)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunFiles {
    pub metrics: PathBuf,
    pub manifest: PathBuf,
    pub params: PathBuf,
}

impl RunFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            metrics: dir.join("metrics.csv"),
            manifest: dir.join("manifest.toml"),
            params: dir.join("params.json"),
        }
    }
}

pub fn run_experiment(config: &RunConfig) -> Result<RunOutput> {
    run_until(config, |_| false)
}

/// Like [`run_experiment`], but stops after the first row for which `stop`
/// returns true.
pub fn run_until(config: &RunConfig, mut stop: impl FnMut(&MetricsRow) -> bool) -> Result<RunOutput> {
    config.validate()?;
    let started = Instant::now();
    let mut trainer = build_trainer(config)?;
    let mut eval_env = config.env.build()?;
    let grid = config.eval_grid();
    let mut next = 0;
    let mut rows = Vec::with_capacity(grid.len());
    let mut train_return = None;

    'run: loop {
        while !trainer.buffer.is_full() {
            trainer.collect_episode()?;
            while next < grid.len() && trainer.env_steps >= grid[next] {
                let eval = evaluate(
                    &trainer.learner.actor,
                    &trainer.learner.actor_params,
                    eval_env.as_mut(),
                    config.eval_episodes,
                    config.seed,
                )?;
                let kl = trainer.last_kl.as_ref();
                let stats = trainer.last_stats;
                let row = MetricsRow {
                    step: grid[next],
                    episodes: trainer.episodes,
                    train_return,
                    test_win_rate: eval.win_rate,
                    test_return: eval.mean_return,
                    max_buffer_kl: kl.map(|r| r.overall_max),
                    mean_buffer_kl: kl.map(|r| r.mean),
                    critic_loss: stats.map(|s| s.critic_loss),
                    policy_loss: stats.map(|s| s.policy_loss),
                    epsilon: trainer.epsilon(),
                    seconds: config.wall_clock.then(|| started.elapsed().as_secs_f64()),
                };
                next += 1;
                let done = stop(&row);
                rows.push(row);
                if done || next == grid.len() {
                    break 'run;
                }
            }
        }
        let eps = trainer.buffer.episodes();
        train_return = Some(eps.iter().map(|e| e.total_reward()).sum::<f64>() / eps.len() as f64);
        trainer.train()?;
        trainer.evict()?;
    }

    let manifest = RunManifest {
        config_hash: config.hash()?,
        version: env!("CARGO_PKG_VERSION").to_string(),
        environment: eval_env.describe(),
        env_steps: trainer.env_steps,
        episodes: trainer.episodes,
        iterations: trainer.iterations,
        config: config.clone(),
    };
    Ok(RunOutput {
        rows,
        actor_params: trainer.learner.actor_params,
        critic_params: trainer.learner.critic_state.params,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::SwitchGameConfig;

    fn small() -> RunConfig {
        RunConfig {
            env: EnvConfig::Switch(SwitchGameConfig::default()),
            actor_hidden: 8,
            critic_hidden: vec![16],
            total_steps: 50,
            eval_interval: 20,
            eval_episodes: 4,
            ..RunConfig::default()
        }
    }

    #[test]
    fn grid_covers_total_steps() {
        let c = small();
        assert_eq!(c.eval_grid(), vec![20, 40, 50]);
        let c = RunConfig {
            total_steps: 40,
            ..small()
        };
        assert_eq!(c.eval_grid(), vec![20, 40]);
    }

    #[test]
    fn invalid_configs_rejected() {
        for bad in [
            RunConfig {
                batch_size: 0,
                ..small()
            },
            RunConfig {
                eval_interval: 0,
                ..small()
            },
            RunConfig {
                kl_threshold: -1.0,
                ..small()
            },
            RunConfig { lambda: 1.5, ..small() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
        }
    }

    #[test]
    fn toml_round_trip_and_defaults() {
        let c = small();
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        let partial = RunConfig::from_toml("algo = \"coma-cc\"\n[env]\nkind = \"switch\"\n").unwrap();
        assert_eq!(partial.algo, CriticKind::ComaCc);
        assert_eq!(partial.batch_size, 8);
        assert!(RunConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn rows_on_grid_with_monotone_columns() {
        let out = run_experiment(&small()).unwrap();
        let steps: Vec<u64> = out.rows.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![20, 40, 50]);
        assert!(out.rows.windows(2).all(|w| w[0].episodes <= w[1].episodes));
        assert!(out.rows.iter().all(|r| (0.0..=1.0).contains(&r.test_win_rate)));
        assert!(out.rows.iter().all(|r| r.seconds.is_none()));
        assert_eq!(out.manifest.config_hash.len(), 64);
    }

    #[test]
    fn evaluation_is_pure() {
        let trainer = build_trainer(&small()).unwrap();
        let mut env = small().env.build().unwrap();
        let before = trainer.learner.actor_params.clone();
        let a = evaluate(&trainer.learner.actor, &before, env.as_mut(), 16, 3).unwrap();
        let b = evaluate(&trainer.learner.actor, &before, env.as_mut(), 16, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(trainer.learner.actor_params, before);
    }
}
