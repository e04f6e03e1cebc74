//! Central finite-difference gradient checking.
//!
//! The checker only ever evaluates the loss forward, so it is an
//! independent oracle for the backward rules in [`super::Graph`].

use super::{ParamGrads, ParamSet};
use crate::error::Result;

/// Denominator floor for relative error, so coordinates whose true
/// gradient is ~0 are compared on an absolute scale.
pub const REL_ERR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    /// Largest analytic gradient magnitude seen, to spot vacuous checks.
    pub max_abs_grad: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<&ParamCheck> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

/// Compares `analytic` against central differences of `loss` for every
/// coordinate of every trainable parameter (at most `max_per_param`
/// coordinates each, spread evenly).
pub fn check_params<F>(
    params: &ParamSet,
    analytic: &ParamGrads,
    mut loss: F,
    step: f64,
    max_per_param: usize,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamSet) -> Result<f64>,
{
    let mut work = params.clone();
    let mut report = GradCheckReport::default();
    for id in params.ids() {
        if !params.is_trainable(id) {
            continue;
        }
        let n = params.get(id).len();
        let stride = n.div_ceil(max_per_param.max(1)).max(1);
        let mut entry = ParamCheck {
            name: params.name(id).to_string(),
            checked: 0,
            max_rel_err: 0.0,
            max_abs_grad: 0.0,
        };
        for j in (0..n).step_by(stride) {
            let orig = params.get(id).data()[j];
            work.get_mut(id).data_mut()[j] = orig + step;
            let up = loss(&work)?;
            work.get_mut(id).data_mut()[j] = orig - step;
            let down = loss(&work)?;
            work.get_mut(id).data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.get(id).map_or(0.0, |g| g.data()[j]);
            entry.max_rel_err = entry.max_rel_err.max(relative_error(a, numeric));
            entry.max_abs_grad = entry.max_abs_grad.max(a.abs());
            entry.checked += 1;
        }
        report.params.push(entry);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Graph, Tensor};

    #[test]
    fn detects_correct_and_wrong_gradients() {
        let mut ps = ParamSet::new();
        let w = ps.add("w", Tensor::vector(vec![0.3, -0.7])).unwrap();
        let f = |p: &ParamSet| -> Result<f64> {
            let mut g = Graph::with_params(p);
            let v = g.param(w);
            let t = g.tanh(v);
            let s = g.sum(t);
            Ok(g.value(s).item())
        };
        let mut g = Graph::with_params(&ps);
        let v = g.param(w);
        let t = g.tanh(v);
        let s = g.sum(t);
        let grads = g.backward(s).unwrap().into_params().unwrap();
        let ok = check_params(&ps, &grads, f, 1e-5, 100).unwrap();
        assert!(ok.max_rel_err() < 1e-8);

        let mut wrong = ParamGrads::zeros_like(&ps);
        wrong.accumulate(w, &Tensor::vector(vec![1.0, 1.0]));
        let bad = check_params(&ps, &wrong, f, 1e-5, 100).unwrap();
        assert!(bad.max_rel_err() > 0.05);
    }
}
