//! Character-level LSTM decoder. Each step consumes the one-hot previous
//! character concatenated with the attention context, and projects the new
//! hidden state (through dropout) to next-character logits.
//!
//! The first step substitutes the mean annotation vector for the context
//! and records a uniform attention row; later steps attend with the
//! previous hidden state.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::attention::{attend, attend_backward, initial_context, AttentionCache, AttentionParams};
use crate::ops::dense::{dense, dense_backward};
use crate::ops::dropout::{dropout, dropout_backward, DropoutMask};
use crate::ops::lstm::{lstm_cell, lstm_cell_backward, LstmCache, LstmParams};
use crate::rng::RngState;
use crate::tensor::{length_err, OpError, Parameter, Tensor};
use crate::vocab::{PAD, START};

pub struct DecoderParams {
    pub lstm: LstmParams,
    pub w_out: Parameter,
    pub b_out: Parameter,
    pub attention: AttentionParams,
    vocab_size: usize,
    annot_dim: usize,
    dropout_rate: f64,
}

impl DecoderParams {
    pub fn init(
        vocab_size: usize,
        annot_dim: usize,
        hidden: usize,
        attn_width: usize,
        dropout_rate: f64,
        rng: &mut RngState,
    ) -> Self {
        DecoderParams {
            lstm: LstmParams::init("dec.lstm", vocab_size + annot_dim, hidden, rng),
            w_out: Parameter::glorot("dec.w_out", &[hidden, vocab_size], hidden, vocab_size, rng),
            b_out: Parameter::zeros("dec.b_out", &[vocab_size]),
            attention: AttentionParams::init("dec.att", annot_dim, hidden, attn_width, rng),
            vocab_size,
            annot_dim,
            dropout_rate,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn annot_dim(&self) -> usize {
        self.annot_dim
    }

    pub fn hidden(&self) -> usize {
        self.lstm.hidden()
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut v: Vec<&Parameter> = self.lstm.params().to_vec();
        v.push(&self.w_out);
        v.push(&self.b_out);
        v.extend(self.attention.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v: Vec<&mut Parameter> = self.lstm.params_mut().into_iter().collect();
        v.push(&mut self.w_out);
        v.push(&mut self.b_out);
        v.extend(self.attention.params_mut());
        v
    }
}

/// Hidden and cell state for a batch, plus the step index.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub h: Tensor,
    pub c: Tensor,
    pub t: usize,
}

impl DecoderState {
    /// Zero vectors, step 0.
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        DecoderState {
            h: Tensor::zeros(&[batch, hidden]),
            c: Tensor::zeros(&[batch, hidden]),
            t: 0,
        }
    }
}

/// Zero-initialized state plus the mean-annotation initial context.
pub fn init_state(features: &Tensor, hidden: usize) -> (DecoderState, Tensor) {
    let n = features.shape()[0];
    (DecoderState::zeros(n, hidden), initial_context(features))
}

pub struct StepCache {
    lstm: LstmCache,
    dropped: Tensor, // input to the output projection
    mask: DropoutMask,
}

/// One decode step for a batch of previous tokens and contexts.
pub fn decode_step(
    prev_tokens: &[u32],
    context: &Tensor,
    state: &DecoderState,
    params: &DecoderParams,
    rng: &mut RngState,
    training: bool,
) -> Result<(Tensor, DecoderState, StepCache), OpError> {
    let n = prev_tokens.len();
    let k = params.vocab_size;
    let d = params.annot_dim;
    for &tok in prev_tokens {
        if tok as usize >= k {
            return Err(OpError::TokenOutOfRange { token: tok, vocab: k });
        }
    }
    if context.shape() != [n, d] {
        return Err(crate::tensor::shape_err("decode_step", context.shape(), &[n, d]));
    }

    let mut x = Tensor::zeros(&[n, k + d]);
    for (ni, &tok) in prev_tokens.iter().enumerate() {
        x.data_mut()[ni * (k + d) + tok as usize] = 1.0;
        let row = &mut x.data_mut()[ni * (k + d) + k..(ni + 1) * (k + d)];
        row.copy_from_slice(&context.data()[ni * d..(ni + 1) * d]);
    }

    let (h, c, lstm_cache) = lstm_cell(&x, &state.h, &state.c, &params.lstm)?;
    let (dropped, mask) = dropout(&h, params.dropout_rate, rng, training)?;
    let logits = dense(&dropped, &params.w_out, &params.b_out)?;
    Ok((
        logits,
        DecoderState { h, c, t: state.t + 1 },
        StepCache {
            lstm: lstm_cache,
            dropped,
            mask,
        },
    ))
}

/// Backward through one step. `dh_next`/`dc_next` carry gradients arriving
/// from the following step. Returns `(d_context, dh_prev, dc_prev)`.
pub fn decode_step_backward(
    cache: &StepCache,
    params: &mut DecoderParams,
    d_logits: &Tensor,
    dh_next: &Tensor,
    dc_next: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let d_dropped = dense_backward(&cache.dropped, &mut params.w_out, &mut params.b_out, d_logits);
    let mut dh = dropout_backward(&cache.mask, &d_dropped);
    for (a, &b) in dh.data_mut().iter_mut().zip(dh_next.data().iter()) {
        *a += b;
    }
    let (dx, dh_prev, dc_prev) = lstm_cell_backward(&cache.lstm, &mut params.lstm, &dh, dc_next);
    // split off the context slice of dx; the one-hot part carries no grads
    let n = dx.shape()[0];
    let k = params.vocab_size;
    let d = params.annot_dim;
    let mut d_context = Tensor::zeros(&[n, d]);
    for ni in 0..n {
        d_context.data_mut()[ni * d..(ni + 1) * d]
            .copy_from_slice(&dx.data()[ni * (k + d) + k..(ni + 1) * (k + d)]);
    }
    (d_context, dh_prev, dc_prev)
}

/// Bounded target sequences padded to a common width with `<pad>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaddedTargets {
    /// `[N × width]` row-major token ids.
    pub tokens: Vec<u32>,
    pub batch: usize,
    pub width: usize,
}

impl PaddedTargets {
    /// Every sequence must be bounded (`<start> … <end>`).
    pub fn from_sequences(seqs: &[crate::vocab::TokenSequence]) -> Result<Self, OpError> {
        if seqs.is_empty() {
            return Err(length_err("padded_targets", String::from("empty batch")));
        }
        for s in seqs {
            if !s.bounded || !s.bounds_ok() || s.len() < 2 {
                return Err(OpError::UnboundedSequence);
            }
        }
        let width = seqs.iter().map(|s| s.len()).max().unwrap();
        let mut tokens = vec![PAD; seqs.len() * width];
        for (i, s) in seqs.iter().enumerate() {
            tokens[i * width..i * width + s.len()].copy_from_slice(&s.ids);
        }
        Ok(PaddedTargets {
            tokens,
            batch: seqs.len(),
            width,
        })
    }

    pub fn token(&self, sample: usize, pos: usize) -> u32 {
        self.tokens[sample * self.width + pos]
    }

    /// Number of unroll steps: predictions for positions `1..width`.
    pub fn steps(&self) -> usize {
        self.width - 1
    }

    /// True when step `t` predicts a real (non-pad) token for `sample`.
    pub fn active(&self, sample: usize, t: usize) -> bool {
        self.token(sample, t + 1) != PAD
    }
}

pub struct Unroll {
    /// Per-step logits, each `[N × K]`.
    pub step_logits: Vec<Tensor>,
    /// Per-step attention rows, each `[N × L]`; step 0 is the uniform row
    /// implied by the mean-context initialization.
    pub step_weights: Vec<Tensor>,
    caches: Vec<StepCache>,
    att_caches: Vec<Option<AttentionCache>>,
    positions: usize,
}

/// Teacher forcing: step `t` consumes target token `t` and is scored
/// against target token `t+1`. A batch of width `C+2` unrolls `C+1` steps.
pub fn teacher_forced_unroll(
    features: &Tensor,
    targets: &PaddedTargets,
    params: &DecoderParams,
    rng: &mut RngState,
    training: bool,
) -> Result<Unroll, OpError> {
    let &[n, l, _] = features.shape() else {
        return Err(crate::tensor::shape_err("unroll", features.shape(), &[targets.batch]));
    };
    if n != targets.batch {
        return Err(length_err(
            "unroll",
            format!("{} target rows for a feature batch of {n}", targets.batch),
        ));
    }
    for s in 0..n {
        if targets.token(s, 0) != START {
            return Err(OpError::UnboundedSequence);
        }
    }

    let (mut state, z0) = init_state(features, params.hidden());
    let steps = targets.steps();
    let mut step_logits = Vec::with_capacity(steps);
    let mut step_weights = Vec::with_capacity(steps);
    let mut caches = Vec::with_capacity(steps);
    let mut att_caches = Vec::with_capacity(steps);

    for t in 0..steps {
        let (context, weights, att_cache) = if t == 0 {
            (z0.clone(), Tensor::filled(&[n, l], 1.0 / l as f64), None)
        } else {
            let (att, cache) = attend(features, &state.h, &params.attention)?;
            (att.context, att.weights, Some(cache))
        };
        let prev: Vec<u32> = (0..n).map(|s| targets.token(s, t)).collect();
        let (logits, next_state, cache) = decode_step(&prev, &context, &state, params, rng, training)?;
        state = next_state;
        step_logits.push(logits);
        step_weights.push(weights);
        caches.push(cache);
        att_caches.push(att_cache);
    }
    Ok(Unroll {
        step_logits,
        step_weights,
        caches,
        att_caches,
        positions: l,
    })
}

/// Backward through the whole unroll. `d_logits` and `d_weights` are
/// per-step gradients (the loss provides both). Returns the gradient on
/// the annotation features.
pub fn unroll_backward(
    unroll: &Unroll,
    params: &mut DecoderParams,
    d_logits: &[Tensor],
    d_weights: &[Tensor],
    features: &Tensor,
) -> Tensor {
    let steps = unroll.caches.len();
    assert_eq!(d_logits.len(), steps);
    assert_eq!(d_weights.len(), steps);
    let &[n, l, d] = features.shape() else { panic!("unroll_backward: rank-3 features required") };
    debug_assert_eq!(l, unroll.positions);

    let hidden = params.hidden();
    let mut d_features = Tensor::zeros(&[n, l, d]);
    let mut dh_carry = Tensor::zeros(&[n, hidden]);
    let mut dc_carry = Tensor::zeros(&[n, hidden]);
    for t in (0..steps).rev() {
        let (d_context, dh_prev, dc_prev) =
            decode_step_backward(&unroll.caches[t], params, &d_logits[t], &dh_carry, &dc_carry);
        dh_carry = dh_prev;
        dc_carry = dc_prev;
        match &unroll.att_caches[t] {
            Some(att_cache) => {
                let (d_feat, dh_att) =
                    attend_backward(att_cache, &mut params.attention, &d_context, Some(&d_weights[t]));
                for (a, &b) in d_features.data_mut().iter_mut().zip(d_feat.data().iter()) {
                    *a += b;
                }
                for (a, &b) in dh_carry.data_mut().iter_mut().zip(dh_att.data().iter()) {
                    *a += b;
                }
            }
            None => {
                // mean-context step: dz spreads uniformly over positions;
                // the uniform weight row is constant so d_weights[t] stops here
                let scale = 1.0 / l as f64;
                for ni in 0..n {
                    let dz = &d_context.data()[ni * d..(ni + 1) * d];
                    for li in 0..l {
                        let row = &mut d_features.data_mut()[(ni * l + li) * d..(ni * l + li + 1) * d];
                        for (a, &b) in row.iter_mut().zip(dz.iter()) {
                            *a += scale * b;
                        }
                    }
                }
            }
        }
    }
    d_features
}
