use super::{ParamGrads, ParamSet, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators, one pair per parameter.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
    config: AdamConfig,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let m: Vec<Tensor> = params.ids().map(|id| Tensor::zeros(params.get(id).shape())).collect();
        AdamState {
            v: m.clone(),
            m,
            t: 0,
            config,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self, index: usize) -> &Tensor {
        &self.m[index]
    }

    pub fn second_moment(&self, index: usize) -> &Tensor {
        &self.v[index]
    }
}

/// Scales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut ParamGrads, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}

/// One bias-corrected Adam update over every trainable parameter.
///
/// Parameters without a gradient slot are treated as having a zero gradient,
/// so their moments still decay.
pub fn adam_step(params: &mut ParamSet, grads: &ParamGrads, state: &mut AdamState, lr: f64) -> Result<()> {
    if lr.is_nan() || lr <= 0.0 {
        return Err(Error::contract(format!("learning rate must be positive, got {lr}")));
    }
    if state.m.len() != params.len() {
        return Err(Error::shape("adam state", &[state.m.len()], &[params.len()]));
    }
    for id in params.ids() {
        if let Some(g) = grads.get(id) {
            if g.shape() != params.get(id).shape() {
                return Err(Error::shape("adam gradient", g.shape(), params.get(id).shape()));
            }
            if let Some(pos) = g.data().iter().position(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite gradient {} at {}[{pos}] (step {})",
                    g.data()[pos],
                    params.name(id),
                    state.t + 1
                )));
            }
        }
    }

    state.t += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);

    for id in params.ids() {
        if !params.is_trainable(id) {
            continue;
        }
        let i = id.index();
        let g = grads.get(id);
        let (m, v) = (state.m[i].data_mut(), state.v[i].data_mut());
        let p = params.get_mut(id).data_mut();
        for j in 0..p.len() {
            let gj = g.map_or(0.0, |g| g.data()[j]);
            m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
            v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> (ParamSet, super::super::ParamId) {
        let mut ps = ParamSet::new();
        let id = ps.add("w", Tensor::vector(vec![value])).unwrap();
        (ps, id)
    }

    fn grad_of(ps: &ParamSet, id: super::super::ParamId, g: f64) -> ParamGrads {
        let mut grads = ParamGrads::zeros_like(ps);
        grads.accumulate(id, &Tensor::vector(vec![g]));
        grads
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let (mut ps, id) = single(1.25);
        let mut st = AdamState::new(&ps, AdamConfig::default());
        let grads = grad_of(&ps, id, 0.0);
        adam_step(&mut ps, &grads, &mut st, 1e-3).unwrap();
        assert_eq!(ps.get(id).item(), 1.25);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn first_step_has_magnitude_lr() {
        for g in [3.7, -0.02, 1e-3] {
            let (mut ps, id) = single(0.0);
            let mut st = AdamState::new(&ps, AdamConfig::default());
            let grads = grad_of(&ps, id, g);
            adam_step(&mut ps, &grads, &mut st, 1e-3).unwrap();
            let delta = ps.get(id).item();
            let expected = 1e-3 * g.abs() / (g.abs() + 1e-8);
            assert!((delta.abs() - expected).abs() < 1e-15);
            assert!(delta.signum() == -g.signum());
        }
    }

    #[test]
    fn repeated_steps_bounded_by_lr() {
        let (mut ps, id) = single(0.0);
        let mut st = AdamState::new(&ps, AdamConfig::default());
        let mut prev = 0.0;
        for _ in 0..2 {
            let grads = grad_of(&ps, id, 0.8);
            adam_step(&mut ps, &grads, &mut st, 0.01).unwrap();
            let cur = ps.get(id).item();
            assert!((cur - prev).abs() <= 0.01 + 1e-15);
            prev = cur;
        }
        assert!(st.second_moment(0).data()[0] >= 0.0);
    }

    #[test]
    fn nan_gradient_aborts() {
        let (mut ps, id) = single(0.0);
        let mut st = AdamState::new(&ps, AdamConfig::default());
        let grads = grad_of(&ps, id, f64::NAN);
        let err = adam_step(&mut ps, &grads, &mut st, 1e-3).unwrap_err();
        assert!(matches!(err, Error::Numerical(ref m) if m.contains("w[0]")));
        assert_eq!(ps.get(id).item(), 0.0);
    }

    #[test]
    fn frozen_params_untouched() {
        let mut ps = ParamSet::new();
        let id = ps.add_frozen("emb", Tensor::vector(vec![0.5])).unwrap();
        let mut st = AdamState::new(&ps, AdamConfig::default());
        let grads = grad_of(&ps, id, 1.0);
        adam_step(&mut ps, &grads, &mut st, 0.1).unwrap();
        assert_eq!(ps.get(id).item(), 0.5);
    }

    #[test]
    fn clipping_caps_norm() {
        let mut ps = ParamSet::new();
        let id = ps.add("w", Tensor::vector(vec![0.0, 0.0])).unwrap();
        let mut grads = ParamGrads::zeros_like(&ps);
        grads.accumulate(id, &Tensor::vector(vec![3.0, 4.0]));
        assert_eq!(clip_grad_norm(&mut grads, 1.0), 5.0);
        assert!((grads.global_norm() - 1.0).abs() < 1e-12);
    }
}
