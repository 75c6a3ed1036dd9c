use crate::critic::CounterfactualQTable;
use crate::error::{Error, Result};
use crate::policy::ActionDistribution;

/// Shared TD-error advantage `r + γ_adv V(s') - V(s)`, with `V(s') = 0` on
/// the terminal step.
pub fn centralv_advantage(reward: f64, v: f64, v_next: f64, gamma_adv: f64, terminal: bool) -> f64 {
    let next = if terminal { 0.0 } else { v_next };
    reward + gamma_adv * next - v
}

/// `Σ_u π(u) Q(s, (u^{-a}, u))`.
pub fn counterfactual_baseline(dist: &ActionDistribution, q_row: &[f64]) -> Result<f64> {
    if dist.len() != q_row.len() {
        return Err(Error::shape(
            "counterfactual_baseline",
            format!("{} probabilities, {} values", dist.len(), q_row.len()),
        ));
    }
    Ok(dist
        .probs
        .iter()
        .zip(q_row)
        .filter(|(p, _)| **p != 0.0)
        .map(|(p, q)| p * q)
        .sum())
}

/// Per-agent counterfactual advantages from a Q table.
pub fn coma_advantage(table: &CounterfactualQTable, dists: &[ActionDistribution]) -> Result<Vec<f64>> {
    if table.values.len() != dists.len() || table.taken.len() != dists.len() {
        return Err(Error::shape(
            "coma_advantage",
            format!("{} table rows for {} agents", table.values.len(), dists.len()),
        ));
    }
    dists
        .iter()
        .enumerate()
        .map(|(a, d)| {
            let row = &table.values[a];
            let taken = *row
                .get(table.taken[a])
                .ok_or_else(|| Error::invalid(format!("taken action {} out of range", table.taken[a])))?;
            Ok(taken - counterfactual_baseline(d, row)?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(p: &[f64]) -> ActionDistribution {
        ActionDistribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn centralv_cases() {
        assert_eq!(centralv_advantage(0.0, 3.0, 3.0, 1.0, false), 0.0);
        assert!((centralv_advantage(1.0, 1.0, 2.0, 0.99, false) - 1.98).abs() < 1e-12);
        assert_eq!(centralv_advantage(5.0, 3.0, 100.0, 0.99, true), 2.0);
    }

    #[test]
    fn baseline_cases() {
        assert_eq!(
            counterfactual_baseline(&dist(&[0.25, 0.75]), &[1.0, 2.0]).unwrap(),
            1.75
        );
        assert_eq!(counterfactual_baseline(&dist(&[0.5, 0.5]), &[3.0, 3.0]).unwrap(), 3.0);
        assert_eq!(counterfactual_baseline(&dist(&[0.0, 1.0]), &[9.0, -2.0]).unwrap(), -2.0);
        assert!(counterfactual_baseline(&dist(&[1.0]), &[1.0, 2.0]).is_err());
    }

    #[test]
    fn advantage_composition() {
        let table = CounterfactualQTable {
            values: vec![vec![1.0, 2.0], vec![4.0, 4.0]],
            taken: vec![1, 0],
        };
        let a = coma_advantage(&table, &[dist(&[0.25, 0.75]), dist(&[0.5, 0.5])]).unwrap();
        assert_eq!(a, vec![0.25, 0.0]);
        assert!(coma_advantage(&table, &[dist(&[1.0, 0.0])]).is_err());
    }

    #[test]
    fn deterministic_choice_has_zero_advantage() {
        let table = CounterfactualQTable {
            values: vec![vec![0.3, -1.7, 2.9]],
            taken: vec![2],
        };
        assert_eq!(coma_advantage(&table, &[dist(&[0.0, 0.0, 1.0])]).unwrap(), vec![0.0]);
    }
}
