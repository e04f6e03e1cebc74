//! Dense row-major tensors and a small reverse-mode autodiff engine.
//!
//! [`Tensor`] is plain data. Differentiable computation happens on a
//! [`Graph`], which records every operation as a node and replays the
//! records backwards in [`Graph::backward`]. Model weights live in a
//! [`ParamSet`] that the graph borrows while a forward pass is recorded.

mod adam;
mod graph;
mod lstm;
mod params;

pub mod gradcheck;

use rand::Rng;

pub use adam::{adam_step, clip_grad_norm, AdamConfig, AdamState};
pub use graph::{Gradients, Graph, Var};
pub use lstm::{lstm_step, run_lstm, BiLstm, LstmParams};
pub use params::{ParamGrads, ParamId, ParamSet};

use crate::error::{Error, Result};

/// Lower bound applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-10;

/// Largest double strictly below one; saturating activations clamp to it.
const ONE_MINUS: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape("tensor", &shape, &[data.len()]));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    /// Builds a matrix from equal-length rows.
    pub fn matrix(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::shape("matrix rows", &[cols], &[row.len()]));
            }
            data.extend_from_slice(row);
        }
        Tensor::new(vec![rows.len(), cols], data)
    }

    /// Uniform initialization in `[-scale, scale]`.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], scale: f64, rng: &mut R) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-scale..=scale)).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.len() <= 1
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Number of columns for a matrix, length for a vector.
    pub(crate) fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// Matrix product `a[m×k] · b[k×n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[1] != b.shape[0] {
        return Err(Error::shape("matmul", &a.shape, &b.shape));
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a.data[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    y.clamp(f64::MIN_POSITIVE, ONE_MINUS)
}

pub(crate) fn tanh_scalar(x: f64) -> f64 {
    x.tanh().clamp(-ONE_MINUS, ONE_MINUS)
}

/// Elementwise logistic function; output stays strictly inside (0, 1).
pub fn sigmoid(x: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| sigmoid_scalar(v)).collect(),
    }
}

pub fn tanh(x: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| tanh_scalar(v)).collect(),
    }
}

pub(crate) fn softmax_slice(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = out.iter().sum();
    for o in &mut out {
        *o /= z;
    }
    out
}

/// Max-shifted softmax over a vector.
pub fn softmax(v: &Tensor) -> Result<Tensor> {
    if v.is_empty() || v.shape.len() > 1 {
        return Err(Error::shape("softmax", &v.shape, &[]));
    }
    Ok(Tensor::vector(softmax_slice(&v.data)))
}

/// `-ln(max(probs[target], PROB_FLOOR))`.
pub fn cross_entropy(probs: &Tensor, target: usize) -> Result<f64> {
    if target >= probs.len() {
        return Err(Error::contract(format!(
            "target index {target} out of range for {} classes",
            probs.len()
        )));
    }
    Ok(-probs.data[target].max(PROB_FLOOR).ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity_and_product() {
        let a = Tensor::matrix(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let eye = Tensor::matrix(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        assert_eq!(matmul(&a, &eye).unwrap(), a);
        let b = Tensor::matrix(&[&[5.0, 6.0], &[7.0, 8.0]]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_reports_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        let msg = matmul(&a, &b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3] vs [2, 3]"), "{msg}");
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        assert!((sigmoid_scalar(3f64.ln()) - 0.75).abs() < 1e-15);
        for x in [-7.5, -1.0, 0.3, 2.0, 11.0] {
            assert!((sigmoid_scalar(-x) - (1.0 - sigmoid_scalar(x))).abs() < 1e-15);
        }
        for x in [-1e3, 1e3, -40.0, 40.0] {
            let y = sigmoid_scalar(x);
            assert!(y > 0.0 && y < 1.0 && y.is_finite());
        }
        assert!(tanh_scalar(50.0) < 1.0 && tanh_scalar(-50.0) > -1.0);
    }

    #[test]
    fn softmax_cases() {
        let u = softmax(&Tensor::vector(vec![1.0, 1.0, 1.0])).unwrap();
        for p in u.data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(softmax(&Tensor::vector(vec![-123.4])).unwrap().data(), &[1.0]);
        let s = softmax(&Tensor::vector(vec![100.0, 0.0])).unwrap();
        assert!(s.is_finite());
        assert!((s.data()[0] - 1.0).abs() < 1e-15);
        assert!(s.data()[1] < 1e-40);
        assert!(softmax(&Tensor::vector(vec![])).is_err());
    }

    #[test]
    fn cross_entropy_cases() {
        let p = Tensor::vector(vec![0.0, 1.0]);
        assert_eq!(cross_entropy(&p, 1).unwrap(), 0.0);
        assert!((cross_entropy(&p, 0).unwrap() - (-(1e-10f64).ln())).abs() < 1e-12);
        let h = Tensor::vector(vec![0.5, 0.5]);
        assert!((cross_entropy(&h, 0).unwrap() - std::f64::consts::LN_2).abs() < 1e-6);
        assert!(cross_entropy(&h, 2).is_err());
    }

    #[test]
    fn tensor_shape_invariant() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![], vec![1.0]).unwrap().is_scalar());
    }
}
