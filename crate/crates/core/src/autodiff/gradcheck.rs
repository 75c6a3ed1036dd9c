use std::collections::BTreeMap;

use super::graph::{BoundParams, Graph, Var};
use super::tensor::ParamSet;
use crate::error::{Error, Result};

/// A scalar loss of a parameter set that can also report its reverse-mode
/// gradient.
pub trait DifferentiableLoss {
    fn value(&self, params: &ParamSet) -> Result<f64>;
    fn value_and_grad(&self, params: &ParamSet) -> Result<(f64, ParamSet)>;
}

/// Wraps a graph-building closure as a [`DifferentiableLoss`].
pub struct GraphLoss<F>(pub F);

impl<F> DifferentiableLoss for GraphLoss<F>
where
    F: Fn(&mut Graph, &BoundParams) -> Result<Var>,
{
    fn value(&self, params: &ParamSet) -> Result<f64> {
        let mut g = Graph::new();
        let p = g.bind_frozen(params);
        let loss = (self.0)(&mut g, &p)?;
        Ok(g.value(loss).item())
    }

    fn value_and_grad(&self, params: &ParamSet) -> Result<(f64, ParamSet)> {
        let mut g = Graph::new();
        let p = g.bind(params);
        let loss = (self.0)(&mut g, &p)?;
        let grads = g.backward(loss);
        Ok((g.value(loss).item(), grads.params(&p)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    /// `(index, analytic, numeric)` at the worst entry.
    pub worst_entry: (usize, f64, f64),
    pub per_param: BTreeMap<String, f64>,
    pub checked: usize,
}

/// Denominator floor of [`relative_error`]. Central differences at a step
/// of 1e-5 resolve a derivative to roughly 1e-11 times the loss scale, so
/// entries smaller than this are compared on absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, REL_ERROR_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERROR_FLOOR)
}

/// Compares the reverse-mode gradient of `loss` against central
/// differences `(f(p+h) - f(p-h)) / 2h` for every scalar parameter.
pub fn finite_diff_check(loss: &dyn DifferentiableLoss, params: &ParamSet, step: f64) -> Result<GradCheckReport> {
    if !(step > 0.0) {
        return Err(Error::invalid(format!("finite-difference step {step}")));
    }
    let (base, analytic) = loss.value_and_grad(params)?;
    if !base.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }

    let mut probe = params.clone();
    let mut per_param = BTreeMap::new();
    let mut worst = (0.0f64, String::new());
    let mut worst_entry = (0, 0.0, 0.0);
    let mut entry_err = -1.0;
    let mut checked = 0;
    let names: Vec<String> = params.names().cloned().collect();
    for name in names {
        let n = params.get(&name)?.len();
        let grad = analytic.get(&name)?.data().to_vec();
        let mut param_worst = 0.0f64;
        for i in 0..n {
            let orig = params.get(&name)?.data()[i];
            probe.get_mut(&name)?.data_mut()[i] = orig + step;
            let plus = loss.value(&probe)?;
            probe.get_mut(&name)?.data_mut()[i] = orig - step;
            let minus = loss.value(&probe)?;
            probe.get_mut(&name)?.data_mut()[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!("loss near `{name}`[{i}]")));
            }
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(grad[i], numeric);
            if err > entry_err {
                entry_err = err;
                worst_entry = (i, grad[i], numeric);
            }
            param_worst = param_worst.max(err);
            checked += 1;
        }
        if param_worst > worst.0 || worst.1.is_empty() {
            worst = (param_worst, name.clone());
        }
        per_param.insert(name, param_worst);
    }
    Ok(GradCheckReport {
        max_rel_error: worst.0,
        worst_param: worst.1,
        worst_entry,
        per_param,
        checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn params() -> ParamSet {
        ParamSet::new()
            .with("a", Tensor::vector(vec![0.5, -1.5, 2.0]))
            .with("b", Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, -4.0]).unwrap())
    }

    #[test]
    fn linear_loss_has_unit_gradient() {
        let loss = GraphLoss(|g: &mut Graph, p: &BoundParams| {
            let a = g.sum(p.get("a")?);
            let b = g.sum(p.get("b")?);
            let both = g.add(a, b);
            Ok(both)
        });
        let (_, grad) = loss.value_and_grad(&params()).unwrap();
        assert!(grad.flatten().iter().all(|&v| v == 1.0));
        let report = finite_diff_check(&loss, &params(), 1e-5).unwrap();
        assert!(report.max_rel_error < 1e-9, "{report:?}");
        assert_eq!(report.checked, 7);
    }

    #[test]
    fn squared_norm_gradient_is_twice_params() {
        let loss = GraphLoss(|g: &mut Graph, p: &BoundParams| {
            let a = g.square(p.get("a")?);
            let a = g.sum(a);
            let b = g.square(p.get("b")?);
            let b = g.sum(b);
            Ok(g.add(a, b))
        });
        let ps = params();
        let (_, grad) = loss.value_and_grad(&ps).unwrap();
        for (x, gx) in ps.flatten().iter().zip(grad.flatten()) {
            assert_eq!(gx, 2.0 * x);
        }
        let report = finite_diff_check(&loss, &ps, 1e-5).unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    #[test]
    fn non_finite_loss_rejected() {
        let loss = GraphLoss(|g: &mut Graph, p: &BoundParams| {
            let a = g.affine(p.get("a")?, 0.0, -1.0);
            let l = g.ln(a);
            Ok(g.sum(l))
        });
        assert!(matches!(
            finite_diff_check(&loss, &params(), 1e-5),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn nonpositive_step_rejected() {
        let loss = GraphLoss(|g: &mut Graph, p: &BoundParams| Ok(g.sum(p.get("a")?)));
        assert!(finite_diff_check(&loss, &params(), 0.0).is_err());
    }
}
