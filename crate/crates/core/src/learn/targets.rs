use crate::error::{Error, Result};

/// `Σ_{i<n} γ^i r_i + γ^n · bootstrap`. When fewer than `n` rewards are
/// given the episode ended inside the window: the sum truncates and the
/// bootstrap is dropped.
pub fn n_step_return(rewards: &[f64], bootstrap: f64, gamma: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n-step return needs n >= 1"));
    }
    let mut g = 0.0;
    let mut discount = 1.0;
    for &r in rewards.iter().take(n) {
        g += discount * r;
        discount *= gamma;
    }
    if rewards.len() >= n {
        g += discount * bootstrap;
    }
    Ok(g)
}

/// TD(λ) targets for one episode.
///
/// `values[t]` is the target network's estimate at step `t` and `bootstrap`
/// the estimate after the last step (0 when the episode terminated). Weight
/// the geometric series would place on n-step returns past the end is
/// collected on the full return, so λ = 1 gives the Monte-Carlo return and
/// λ = 0 the one-step target. Computed backwards via
/// `y_t = r_t + γ((1-λ) v_{t+1} + λ y_{t+1})`.
pub fn td_lambda_targets(rewards: &[f64], values: &[f64], bootstrap: f64, lambda: f64, gamma: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda {lambda} outside [0, 1]")));
    }
    if values.len() != rewards.len() {
        return Err(Error::shape(
            "td_lambda_targets",
            format!("{} values for {} rewards", values.len(), rewards.len()),
        ));
    }
    let t_len = rewards.len();
    let mut y = vec![0.0; t_len];
    let mut next_y = bootstrap;
    let mut next_v = bootstrap;
    for t in (0..t_len).rev() {
        y[t] = rewards[t] + gamma * ((1.0 - lambda) * next_v + lambda * next_y);
        next_y = y[t];
        next_v = values[t];
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_bootstrap() {
        let g = n_step_return(&[0.0, 0.0, 0.0], 2.0, 0.99, 3).unwrap();
        assert!((g - 0.970299 * 2.0).abs() < 1e-12);
    }

    #[test]
    fn two_step_hand_value() {
        let g = n_step_return(&[1.0, 2.0, 3.0], 10.0, 0.9, 2).unwrap();
        assert!((g - 10.9).abs() < 1e-12);
        assert_eq!(n_step_return(&[4.0], 1.0, 0.5, 1).unwrap(), 4.5);
    }

    #[test]
    fn truncated_window_drops_bootstrap() {
        assert_eq!(n_step_return(&[1.0, 1.0], 100.0, 1.0, 5).unwrap(), 2.0);
        assert!(n_step_return(&[1.0], 0.0, 1.0, 0).is_err());
    }

    #[test]
    fn short_episode_hand_value() {
        let v2 = 7.0;
        let y = td_lambda_targets(&[1.0, 2.0], &[0.0, v2], 0.0, 0.8, 1.0).unwrap();
        assert!((y[0] - (0.2 * (1.0 + v2) + 0.8 * 3.0)).abs() < 1e-12);
        assert_eq!(y[1], 2.0);
    }

    #[test]
    fn lambda_outside_unit_interval_rejected() {
        assert!(td_lambda_targets(&[1.0], &[0.0], 0.0, 1.5, 0.9).is_err());
        assert!(td_lambda_targets(&[1.0], &[0.0], 0.0, -0.1, 0.9).is_err());
    }
}
