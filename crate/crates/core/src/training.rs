use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Result;
use crate::tensor::{adam_step, clip_grad_norm, AdamConfig, AdamState, ParamGrads, ParamSet};

/// Adam with optional global-norm clipping.
pub(crate) struct Optimizer {
    state: AdamState,
    lr: f64,
    clip: Option<f64>,
}

impl Optimizer {
    pub(crate) fn new(params: &ParamSet, lr: f64, clip: Option<f64>) -> Self {
        Optimizer {
            state: AdamState::new(params, AdamConfig::default()),
            lr,
            clip,
        }
    }

    pub(crate) fn step(&mut self, params: &mut ParamSet, mut grads: ParamGrads) -> Result<()> {
        if let Some(max) = self.clip {
            clip_grad_norm(&mut grads, max);
        }
        adam_step(params, &grads, &mut self.state, self.lr)
    }
}

/// Shuffled index batches covering `0..n`.
pub(crate) fn batches<R: Rng + ?Sized>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}
