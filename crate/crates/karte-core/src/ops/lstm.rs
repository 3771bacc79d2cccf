//! Single LSTM cell with forget/input/output gates and tanh candidate.
//!
//! Each gate owns its weight over the concatenated `[x, h_prev]` input and
//! its bias, giving eight parameter groups in total.

use crate::rng::RngState;
use crate::tensor::{shape_err, OpError, Parameter, Tensor};
use alloc::format;
use alloc::vec;

use super::activation::sigmoid_scalar;
use super::dense::{dense, dense_backward};

/// Gate order is fixed: input, forget, candidate, output.
pub struct LstmParams {
    pub w_input: Parameter,
    pub b_input: Parameter,
    pub w_forget: Parameter,
    pub b_forget: Parameter,
    pub w_cell: Parameter,
    pub b_cell: Parameter,
    pub w_output: Parameter,
    pub b_output: Parameter,
    input_width: usize,
    hidden: usize,
}

impl LstmParams {
    /// Glorot weights, zero biases, forget-gate bias 1.0.
    pub fn init(prefix: &str, input_width: usize, hidden: usize, rng: &mut RngState) -> Self {
        let z = input_width + hidden;
        let w = |name: &str, rng: &mut RngState| {
            Parameter::glorot(&format!("{prefix}.w_{name}"), &[z, hidden], z, hidden, rng)
        };
        let b = |name: &str| Parameter::zeros(&format!("{prefix}.b_{name}"), &[hidden]);
        let mut p = LstmParams {
            w_input: w("input", rng),
            b_input: b("input"),
            w_forget: w("forget", rng),
            b_forget: b("forget"),
            w_cell: w("cell", rng),
            b_cell: b("cell"),
            w_output: w("output", rng),
            b_output: b("output"),
            input_width,
            hidden,
        };
        p.b_forget.value.data_mut().iter_mut().for_each(|v| *v = 1.0);
        p
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> [&Parameter; 8] {
        [
            &self.w_input,
            &self.b_input,
            &self.w_forget,
            &self.b_forget,
            &self.w_cell,
            &self.b_cell,
            &self.w_output,
            &self.b_output,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 8] {
        [
            &mut self.w_input,
            &mut self.b_input,
            &mut self.w_forget,
            &mut self.b_forget,
            &mut self.w_cell,
            &mut self.b_cell,
            &mut self.w_output,
            &mut self.b_output,
        ]
    }
}

pub struct LstmCache {
    concat: Tensor,   // [n × (x+h)]
    gate_i: Tensor,   // post-sigmoid
    gate_f: Tensor,
    gate_g: Tensor,   // post-tanh candidate
    gate_o: Tensor,
    c_prev: Tensor,
    c: Tensor,
    tanh_c: Tensor,
}

/// One step: `c = f⊙c_prev + i⊙g`, `h = o⊙tanh(c)`.
pub fn lstm_cell(
    x: &Tensor,
    h_prev: &Tensor,
    c_prev: &Tensor,
    params: &LstmParams,
) -> Result<(Tensor, Tensor, LstmCache), OpError> {
    let &[n, xw] = x.shape() else {
        return Err(shape_err("lstm_cell", x.shape(), h_prev.shape()));
    };
    let hidden = params.hidden;
    if xw != params.input_width
        || h_prev.shape() != [n, hidden]
        || c_prev.shape() != [n, hidden]
    {
        return Err(shape_err("lstm_cell", x.shape(), h_prev.shape()));
    }

    let mut concat = Tensor::zeros(&[n, xw + hidden]);
    for r in 0..n {
        let row = &mut concat.data_mut()[r * (xw + hidden)..(r + 1) * (xw + hidden)];
        row[..xw].copy_from_slice(&x.data()[r * xw..(r + 1) * xw]);
        row[xw..].copy_from_slice(&h_prev.data()[r * hidden..(r + 1) * hidden]);
    }

    let pre_i = dense(&concat, &params.w_input, &params.b_input)?;
    let pre_f = dense(&concat, &params.w_forget, &params.b_forget)?;
    let pre_g = dense(&concat, &params.w_cell, &params.b_cell)?;
    let pre_o = dense(&concat, &params.w_output, &params.b_output)?;

    let map = |t: &Tensor, f: fn(f64) -> f64| -> Tensor {
        Tensor::from_vec(t.shape(), t.data().iter().map(|&v| f(v)).collect())
    };
    let gate_i = map(&pre_i, sigmoid_scalar);
    let gate_f = map(&pre_f, sigmoid_scalar);
    let gate_g = map(&pre_g, libm::tanh);
    let gate_o = map(&pre_o, sigmoid_scalar);

    let mut c = Tensor::zeros(&[n, hidden]);
    for idx in 0..n * hidden {
        c.data_mut()[idx] =
            gate_f.data()[idx] * c_prev.data()[idx] + gate_i.data()[idx] * gate_g.data()[idx];
    }
    let tanh_c = map(&c, libm::tanh);
    let mut h = Tensor::zeros(&[n, hidden]);
    for idx in 0..n * hidden {
        h.data_mut()[idx] = gate_o.data()[idx] * tanh_c.data()[idx];
    }

    Ok((
        h.clone(),
        c.clone(),
        LstmCache {
            concat,
            gate_i,
            gate_f,
            gate_g,
            gate_o,
            c_prev: c_prev.clone(),
            c,
            tanh_c,
        },
    ))
}

/// Full analytic backward through one step. Returns `(dx, dh_prev, dc_prev)`
/// and accumulates all eight parameter gradients.
pub fn lstm_cell_backward(
    cache: &LstmCache,
    params: &mut LstmParams,
    dh: &Tensor,
    dc: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let n = cache.c.shape()[0];
    let hidden = params.hidden;
    let xw = params.input_width;
    let count = n * hidden;

    let mut dc_total = vec![0.0; count];
    let mut d_pre_i = vec![0.0; count];
    let mut d_pre_f = vec![0.0; count];
    let mut d_pre_g = vec![0.0; count];
    let mut d_pre_o = vec![0.0; count];
    let mut dc_prev = vec![0.0; count];

    for idx in 0..count {
        let o = cache.gate_o.data()[idx];
        let tc = cache.tanh_c.data()[idx];
        let d_o = dh.data()[idx] * tc;
        dc_total[idx] = dc.data()[idx] + dh.data()[idx] * o * (1.0 - tc * tc);
        d_pre_o[idx] = d_o * o * (1.0 - o);

        let i = cache.gate_i.data()[idx];
        let f = cache.gate_f.data()[idx];
        let g = cache.gate_g.data()[idx];
        let d_i = dc_total[idx] * g;
        let d_f = dc_total[idx] * cache.c_prev.data()[idx];
        let d_g = dc_total[idx] * i;
        dc_prev[idx] = dc_total[idx] * f;
        d_pre_i[idx] = d_i * i * (1.0 - i);
        d_pre_f[idx] = d_f * f * (1.0 - f);
        d_pre_g[idx] = d_g * (1.0 - g * g);
    }

    let shape = [n, hidden];
    let mut d_concat = Tensor::zeros(&[n, xw + hidden]);
    for (w, b, dpre) in [
        (&mut params.w_input, &mut params.b_input, d_pre_i),
        (&mut params.w_forget, &mut params.b_forget, d_pre_f),
        (&mut params.w_cell, &mut params.b_cell, d_pre_g),
        (&mut params.w_output, &mut params.b_output, d_pre_o),
    ] {
        let dpre = Tensor::from_vec(&shape, dpre);
        let dz = dense_backward(&cache.concat, w, b, &dpre);
        for (a, b) in d_concat.data_mut().iter_mut().zip(dz.data().iter()) {
            *a += b;
        }
    }

    let mut dx = Tensor::zeros(&[n, xw]);
    let mut dh_prev = Tensor::zeros(&[n, hidden]);
    for r in 0..n {
        let row = &d_concat.data()[r * (xw + hidden)..(r + 1) * (xw + hidden)];
        dx.data_mut()[r * xw..(r + 1) * xw].copy_from_slice(&row[..xw]);
        dh_prev.data_mut()[r * hidden..(r + 1) * hidden].copy_from_slice(&row[xw..]);
    }
    (dx, dh_prev, Tensor::from_vec(&[n, hidden], dc_prev))
}
