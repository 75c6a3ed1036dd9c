use rand::RngCore;

use marl_sop::critic::{Critic, CriticKind};
use marl_sop::env::{CaptureGridConfig, EnvConfig};
use marl_sop::harness::{build_trainer, RunConfig};
use marl_sop::learn::Learner;
use marl_sop::policy::{epsilon_at, policy_distribution, rollout, Actor, AgentHistory, SelectMode};
use marl_sop::sop::{kl_exact, max_buffer_kl, seeded_stream, KlKind, SopMode, STREAM_ACTIONS, STREAM_ENV, STREAM_INIT};

fn config(sop: SopMode, algo: CriticKind, seed: u64) -> RunConfig {
    RunConfig {
        env: EnvConfig::Capture(CaptureGridConfig {
            side: 4,
            horizon: 8,
            ..CaptureGridConfig::default()
        }),
        algo,
        sop,
        batch_size: 4,
        actor_hidden: 16,
        critic_hidden: vec![32, 32],
        seed,
        ..RunConfig::default()
    }
}

#[test]
fn off_mode_is_plain_on_policy_training() {
    for algo in [CriticKind::CentralV, CriticKind::ComaCc] {
        let cfg = config(SopMode::Off, algo, 21);
        let mut trainer = build_trainer(&cfg).unwrap();

        let mut env = cfg.env.build().unwrap();
        let spec = env.spec();
        let actor = Actor::new(&spec, cfg.actor_hidden).unwrap();
        let critic = Critic::new(algo, &spec, &cfg.critic_hidden).unwrap();
        let mut learner = Learner::new(
            actor,
            critic,
            cfg.learn_config(),
            &mut seeded_stream(cfg.seed, STREAM_INIT),
        )
        .unwrap();
        let mut env_seeds = seeded_stream(cfg.seed, STREAM_ENV);
        let mut actions = seeded_stream(cfg.seed, STREAM_ACTIONS);
        let mut steps = 0u64;

        for _ in 0..5 {
            let mut batch = Vec::new();
            for _ in 0..cfg.batch_size {
                let start = steps;
                let ep = rollout(
                    &learner.actor,
                    &learner.actor_params,
                    env.as_mut(),
                    env_seeds.next_u64(),
                    |t| epsilon_at(start + t as u64, &cfg.epsilon),
                    SelectMode::Sample,
                    &mut actions,
                )
                .unwrap();
                steps += ep.len() as u64;
                batch.push(ep);
            }
            learner.train(&batch).unwrap();

            let evicted = trainer.iteration().unwrap();
            assert_eq!(evicted.len(), cfg.batch_size);
            assert!(trainer.buffer.is_empty());
            assert_eq!(trainer.env_steps, steps);
            assert_eq!(trainer.learner.actor_params, learner.actor_params);
            assert_eq!(trainer.learner.critic_state.params, learner.critic_state.params);
        }
    }
}

#[test]
fn buffer_kl_matches_incremental_policy_evaluation() {
    let mut trainer = build_trainer(&config(SopMode::Permissive, CriticKind::Coma, 22)).unwrap();
    for _ in 0..3 {
        trainer.iteration().unwrap();
    }
    trainer.fill().unwrap();
    trainer.train().unwrap();

    let learner = &trainer.learner;
    let report = max_buffer_kl(&learner.actor, &learner.actor_params, &trainer.buffer, KlKind::Exact).unwrap();
    for (e, ep) in trainer.buffer.episodes().iter().enumerate() {
        let mut worst = 0.0f64;
        for a in 0..ep.n_agents() {
            let mut history = AgentHistory::new(&learner.actor, a);
            for t in 0..ep.len() {
                let prev = (t > 0).then(|| ep.actions[t - 1][a]);
                history.push(&learner.actor, &ep.obs[t][a], prev).unwrap();
                let current = policy_distribution(
                    &learner.actor,
                    &learner.actor_params,
                    &mut history,
                    &ep.masks[t][a],
                    ep.epsilons[t],
                )
                .unwrap();
                worst = worst.max(kl_exact(&current, &ep.dists[t][a]).unwrap());
            }
        }
        let got = report.per_episode_max[e];
        assert!(
            (got - worst).abs() <= 1e-12 * worst.max(1.0),
            "episode {e}: {got} vs {worst}"
        );
    }
    assert!(report.overall_max > 0.0, "training should move the policy");

    let full = max_buffer_kl(
        &learner.actor,
        &learner.actor_params,
        &trainer.buffer,
        KlKind::FullSupport,
    )
    .unwrap();
    for (x, y) in full.per_episode_max.iter().zip(&report.per_episode_max) {
        assert!((x - y).abs() <= 1e-12, "full support {x} vs exact {y}");
    }
}

#[test]
fn unchanged_policy_has_zero_kl_for_every_kind() {
    let mut trainer = build_trainer(&config(SopMode::Strict, CriticKind::CentralV, 23)).unwrap();
    trainer.fill().unwrap();
    let learner = &trainer.learner;
    for kind in [KlKind::Exact, KlKind::FullSupport, KlKind::Sampled] {
        let r = max_buffer_kl(&learner.actor, &learner.actor_params, &trainer.buffer, kind).unwrap();
        assert_eq!(r.overall_max, 0.0, "{kind:?}");
        assert_eq!(r.mean, 0.0, "{kind:?}");
    }
}

#[test]
fn strict_mode_evicts_oldest_and_drifted() {
    let mut cfg = config(SopMode::Strict, CriticKind::CentralV, 24);
    cfg.kl_threshold = 1e-4;
    cfg.batch_size = 6;
    let mut trainer = build_trainer(&cfg).unwrap();
    for _ in 0..8 {
        let before = trainer.buffer.len();
        trainer.fill().unwrap();
        let gens = trainer.buffer.generations();
        trainer.train().unwrap();
        let evicted = trainer.evict().unwrap();
        let report = trainer.last_kl.clone().unwrap();
        let expected: Vec<u64> = gens
            .iter()
            .enumerate()
            .filter(|&(i, _)| i == 0 || report.per_episode_max[i] > cfg.kl_threshold)
            .map(|(_, &g)| g)
            .collect();
        assert_eq!(evicted, expected);
        assert!(before <= cfg.batch_size);
        assert_eq!(trainer.buffer.len(), cfg.batch_size - expected.len());
    }
}
