use rand::Rng;

use super::{Graph, ParamId, ParamSet, Tensor, Var};
use crate::error::{Error, Result};

/// Weights of one LSTM cell, gates packed in the order input, forget,
/// candidate, output along the first axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmParams {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub input_size: usize,
    pub hidden_size: usize,
}

impl LstmParams {
    pub fn register<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        input_size: usize,
        hidden_size: usize,
        init_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if hidden_size == 0 || input_size == 0 {
            return Err(Error::contract(format!(
                "{prefix}: LSTM sizes must be positive (input {input_size}, hidden {hidden_size})"
            )));
        }
        let g = 4 * hidden_size;
        Ok(LstmParams {
            w_ih: params.add(
                format!("{prefix}.w_ih"),
                Tensor::uniform(&[g, input_size], init_scale, rng),
            )?,
            w_hh: params.add(
                format!("{prefix}.w_hh"),
                Tensor::uniform(&[g, hidden_size], init_scale, rng),
            )?,
            bias: params.add(format!("{prefix}.bias"), Tensor::uniform(&[g], init_scale, rng))?,
            input_size,
            hidden_size,
        })
    }

    /// Re-attaches to weights already present in `params` (e.g. after loading).
    pub fn lookup(params: &ParamSet, prefix: &str) -> Result<Self> {
        let get = |suffix: &str| {
            params
                .id(&format!("{prefix}.{suffix}"))
                .ok_or_else(|| Error::contract(format!("missing parameter {prefix}.{suffix}")))
        };
        let (w_ih, w_hh, bias) = (get("w_ih")?, get("w_hh")?, get("bias")?);
        let shape = params.get(w_ih).shape();
        let (gates, input_size) = (shape[0], shape[1]);
        let hidden_size = gates / 4;
        if params.get(w_hh).shape() != [gates, hidden_size] || params.get(bias).shape() != [gates] {
            return Err(Error::shape(
                "lstm weights",
                params.get(w_hh).shape(),
                params.get(bias).shape(),
            ));
        }
        Ok(LstmParams {
            w_ih,
            w_hh,
            bias,
            input_size,
            hidden_size,
        })
    }

    pub fn zero_state(&self, g: &mut Graph) -> (Var, Var) {
        let h = g.constant(Tensor::zeros(&[self.hidden_size]));
        let c = g.constant(Tensor::zeros(&[self.hidden_size]));
        (h, c)
    }
}

/// One step of the LSTM recurrence. Returns `(h_t, c_t)`.
pub fn lstm_step(g: &mut Graph, x: Var, h_prev: Var, c_prev: Var, p: &LstmParams) -> Result<(Var, Var)> {
    let hs = p.hidden_size;
    if g.value(h_prev).shape() != [hs] || g.value(c_prev).shape() != [hs] {
        return Err(Error::shape("lstm_step state", g.value(h_prev).shape(), &[hs]));
    }
    if g.value(x).shape() != [p.input_size] {
        return Err(Error::shape("lstm_step input", g.value(x).shape(), &[p.input_size]));
    }
    let (w_ih, w_hh, bias) = (g.param(p.w_ih), g.param(p.w_hh), g.param(p.bias));
    let xi = g.matvec(w_ih, x)?;
    let hh = g.matvec(w_hh, h_prev)?;
    let pre = g.add(xi, hh)?;
    let pre = g.add(pre, bias)?;

    let i_pre = g.slice(pre, 0, hs)?;
    let f_pre = g.slice(pre, hs, hs)?;
    let c_hat_pre = g.slice(pre, 2 * hs, hs)?;
    let o_pre = g.slice(pre, 3 * hs, hs)?;

    let i = g.sigmoid(i_pre);
    let f = g.sigmoid(f_pre);
    let c_hat = g.tanh(c_hat_pre);
    let o = g.sigmoid(o_pre);

    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, c_hat)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

/// Runs a cell over a sequence from a zero state. Returns the hidden state
/// at every position (in input order) and the final `(h, c)`.
pub fn run_lstm(g: &mut Graph, inputs: &[Var], p: &LstmParams, reverse: bool) -> Result<(Vec<Var>, (Var, Var))> {
    let (mut h, mut c) = p.zero_state(g);
    let mut out = vec![h; inputs.len()];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..inputs.len()).rev())
    } else {
        Box::new(0..inputs.len())
    };
    for t in order {
        (h, c) = lstm_step(g, inputs[t], h, c, p)?;
        out[t] = h;
    }
    Ok((out, (h, c)))
}

/// Stacked bidirectional LSTM; each layer's output is the concatenation of
/// its forward and backward hidden states.
#[derive(Clone, Debug, PartialEq)]
pub struct BiLstm {
    pub layers: Vec<(LstmParams, LstmParams)>,
}

impl BiLstm {
    pub fn register<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        input_size: usize,
        hidden_per_direction: usize,
        num_layers: usize,
        init_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(num_layers);
        let mut in_size = input_size;
        for l in 0..num_layers {
            let fw = LstmParams::register(
                params,
                &format!("{prefix}.l{l}.fw"),
                in_size,
                hidden_per_direction,
                init_scale,
                rng,
            )?;
            let bw = LstmParams::register(
                params,
                &format!("{prefix}.l{l}.bw"),
                in_size,
                hidden_per_direction,
                init_scale,
                rng,
            )?;
            layers.push((fw, bw));
            in_size = 2 * hidden_per_direction;
        }
        Ok(BiLstm { layers })
    }

    pub fn lookup(params: &ParamSet, prefix: &str, num_layers: usize) -> Result<Self> {
        let layers = (0..num_layers)
            .map(|l| {
                Ok((
                    LstmParams::lookup(params, &format!("{prefix}.l{l}.fw"))?,
                    LstmParams::lookup(params, &format!("{prefix}.l{l}.bw"))?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BiLstm { layers })
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, |(fw, bw)| fw.hidden_size + bw.hidden_size)
    }

    pub fn hidden_per_direction(&self) -> usize {
        self.layers.first().map_or(0, |(fw, _)| fw.hidden_size)
    }

    /// Dropout is applied to the input of every layer above the first.
    pub fn forward(&self, g: &mut Graph, inputs: &[Var], dropout: f64) -> Result<Vec<Var>> {
        let mut xs = inputs.to_vec();
        for (l, (fw, bw)) in self.layers.iter().enumerate() {
            if l > 0 {
                xs = xs.into_iter().map(|x| g.dropout(x, dropout)).collect();
            }
            let (f, _) = run_lstm(g, &xs, fw, false)?;
            let (b, _) = run_lstm(g, &xs, bw, true)?;
            xs = f
                .iter()
                .zip(&b)
                .map(|(&f, &b)| g.concat(&[f, b]))
                .collect::<Result<Vec<_>>>()?;
        }
        Ok(xs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_cell(input: usize, hidden: usize) -> (ParamSet, LstmParams) {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = LstmParams::register(&mut ps, "cell", input, hidden, 0.0, &mut rng).unwrap();
        (ps, p)
    }

    #[test]
    fn zero_params_zero_state() {
        let (ps, p) = zero_cell(3, 2);
        let mut g = Graph::with_params(&ps);
        let x = g.constant(Tensor::vector(vec![0.4, -1.0, 2.0]));
        let (h0, c0) = p.zero_state(&mut g);
        let (h, c) = lstm_step(&mut g, x, h0, c0, &p).unwrap();
        assert_eq!(g.value(h).data(), &[0.0, 0.0]);
        assert_eq!(g.value(c).data(), &[0.0, 0.0]);
    }

    #[test]
    fn zero_params_unit_cell() {
        let (ps, p) = zero_cell(1, 1);
        let mut g = Graph::with_params(&ps);
        let x = g.constant(Tensor::vector(vec![0.0]));
        let h0 = g.constant(Tensor::vector(vec![0.0]));
        let c0 = g.constant(Tensor::vector(vec![1.0]));
        let (h, c) = lstm_step(&mut g, x, h0, c0, &p).unwrap();
        assert_eq!(g.value(c).item(), 0.5);
        assert!((g.value(h).item() - 0.231059).abs() < 1e-6);
        assert!((g.value(h).item() - 0.5 * 0.5f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let (ps, p) = zero_cell(3, 2);
        let mut g = Graph::with_params(&ps);
        let x = g.constant(Tensor::vector(vec![0.0; 4]));
        let (h0, c0) = p.zero_state(&mut g);
        assert!(matches!(lstm_step(&mut g, x, h0, c0, &p), Err(Error::Shape { .. })));
    }
}
