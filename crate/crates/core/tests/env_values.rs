//! Monte-Carlo rollouts against the exhaustive value oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use marl_sop::env::{
    exact_state_values, CaptureGrid, CaptureGridConfig, EnvRunner, Environment, PreyPolicy, SwitchGame,
    SwitchGameConfig, UniformPolicy,
};

/// Mean and standard error of the discounted return under a uniform
/// random policy.
fn uniform_returns(env: &mut dyn Environment, rollouts: usize, seed: u64) -> (f64, f64) {
    let spec = env.spec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..rollouts {
        let mut masks = env.reset(rng.gen()).masks;
        let (mut g, mut discount) = (0.0, 1.0);
        loop {
            let joint: Vec<usize> = masks
                .iter()
                .map(|m| {
                    let avail: Vec<usize> = (0..m.len()).filter(|&u| m[u]).collect();
                    avail[rng.gen_range(0..avail.len())]
                })
                .collect();
            let step = env.step(&joint).unwrap();
            g += discount * step.reward;
            discount *= spec.gamma;
            if step.terminal {
                break;
            }
            masks = step.masks;
        }
        sum += g;
        sq += g * g;
    }
    let n = rollouts as f64;
    let mean = sum / n;
    (mean, ((sq / n - mean * mean) / (n - 1.0)).sqrt())
}

#[test]
fn capture_monte_carlo_matches_oracle() {
    let model = CaptureGrid::new(CaptureGridConfig {
        side: 3,
        prey: PreyPolicy::Static,
        horizon: 2,
        ..CaptureGridConfig::default()
    })
    .unwrap();
    let exact = exact_state_values(&model, &UniformPolicy).unwrap().initial_value();
    let (mean, se) = uniform_returns(&mut EnvRunner::new(model), 1_000_000, 1);
    assert!((mean - exact).abs() <= 3.0 * se, "MC {mean} vs exact {exact} (se {se})");
}

#[test]
fn walking_prey_monte_carlo_matches_oracle() {
    let model = CaptureGrid::new(CaptureGridConfig {
        side: 3,
        prey: PreyPolicy::RandomWalk,
        horizon: 2,
        ..CaptureGridConfig::default()
    })
    .unwrap();
    let exact = exact_state_values(&model, &UniformPolicy).unwrap().initial_value();
    let (mean, se) = uniform_returns(&mut EnvRunner::new(model), 200_000, 2);
    assert!((mean - exact).abs() <= 3.0 * se, "MC {mean} vs exact {exact} (se {se})");
}

#[test]
fn switch_monte_carlo_matches_oracle() {
    let cfg = SwitchGameConfig::default();
    let m = cfg.payoff.len();
    let mean_payoff: f64 = cfg.payoff.iter().flatten().sum::<f64>() / (m * m) as f64;
    let model = SwitchGame::new(cfg).unwrap();
    let exact = exact_state_values(&model, &UniformPolicy).unwrap().initial_value();
    assert!((exact - mean_payoff).abs() < 1e-12);
    let (mean, se) = uniform_returns(&mut EnvRunner::new(model), 100_000, 3);
    assert!((mean - exact).abs() <= 3.0 * se, "MC {mean} vs exact {exact} (se {se})");
}
