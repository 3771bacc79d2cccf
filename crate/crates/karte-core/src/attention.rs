//! Soft attention over the annotation grid: a two-layer scoring network
//! with ReLU, softmax weights over positions, and the weighted-sum context
//! vector.

use alloc::format;
use alloc::vec;

use crate::ops::activation::{softmax, softmax_backward};
use crate::rng::RngState;
use crate::tensor::{shape_err, OpError, Parameter, Tensor};

/// Scoring-network parameters. `A` is the attention hidden width.
pub struct AttentionParams {
    /// `[D × A]` applied to each annotation vector.
    pub w_annot: Parameter,
    /// `[H × A]` applied to the previous hidden state.
    pub w_hidden: Parameter,
    /// `[A]` bias inside the ReLU.
    pub bias: Parameter,
    /// `[A × 1]` projection of the ReLU output to a scalar score.
    pub w_score: Parameter,
}

impl AttentionParams {
    pub fn init(prefix: &str, annot_dim: usize, hidden: usize, attn_width: usize, rng: &mut RngState) -> Self {
        AttentionParams {
            w_annot: Parameter::glorot(
                &format!("{prefix}.w_annot"),
                &[annot_dim, attn_width],
                annot_dim,
                attn_width,
                rng,
            ),
            w_hidden: Parameter::glorot(
                &format!("{prefix}.w_hidden"),
                &[hidden, attn_width],
                hidden,
                attn_width,
                rng,
            ),
            bias: Parameter::zeros(&format!("{prefix}.bias"), &[attn_width]),
            w_score: Parameter::glorot(
                &format!("{prefix}.w_score"),
                &[attn_width, 1],
                attn_width,
                1,
                rng,
            ),
        }
    }

    pub fn annot_dim(&self) -> usize {
        self.w_annot.shape()[0]
    }

    pub fn attn_width(&self) -> usize {
        self.w_annot.shape()[1]
    }

    pub fn hidden(&self) -> usize {
        self.w_hidden.shape()[0]
    }

    pub fn params(&self) -> [&Parameter; 4] {
        [&self.w_annot, &self.w_hidden, &self.bias, &self.w_score]
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 4] {
        [
            &mut self.w_annot,
            &mut self.w_hidden,
            &mut self.bias,
            &mut self.w_score,
        ]
    }
}

/// One attention application over a batch: weights, context and raw scores.
pub struct AttentionStep {
    /// `[N × L]`, each row a probability simplex.
    pub weights: Tensor,
    /// `[N × D]` context vectors.
    pub context: Tensor,
    /// `[N × L]` pre-softmax scores.
    pub scores: Tensor,
}

/// Forward state for [`attend_backward`].
pub struct AttentionCache {
    annotations: Tensor, // [N × L × D]
    h_prev: Tensor,      // [N × H]
    pre_relu: Tensor,    // [N × L × A]
    post_relu: Tensor,   // [N × L × A]
    weights: Tensor,     // [N × L]
}

/// Scores every position with
/// `w_score · ReLU(W_annot a_i + W_hidden h_prev + bias)`, softmaxes over
/// positions, and returns the weighted sum of annotation vectors.
pub fn attend(
    annotations: &Tensor,
    h_prev: &Tensor,
    params: &AttentionParams,
) -> Result<(AttentionStep, AttentionCache), OpError> {
    let &[n, l, d] = annotations.shape() else {
        return Err(shape_err("attend", annotations.shape(), h_prev.shape()));
    };
    let &[hn, h_dim] = h_prev.shape() else {
        return Err(shape_err("attend", annotations.shape(), h_prev.shape()));
    };
    if hn != n || h_dim != params.hidden() || d != params.annot_dim() {
        return Err(shape_err("attend", annotations.shape(), h_prev.shape()));
    }
    let a_width = params.attn_width();

    // pre[n,l,:] = a[n,l,:]·W_annot + h[n,:]·W_hidden + bias
    let mut pre = vec![0.0; n * l * a_width];
    {
        // annotation term: treat [N·L × D] · [D × A]
        crate::ops::matmul::matmul_acc(
            annotations.data(),
            params.w_annot.value.data(),
            &mut pre,
            n * l,
            d,
            a_width,
        );
        // hidden term broadcast over positions
        let mut h_term = vec![0.0; n * a_width];
        crate::ops::matmul::matmul_acc(
            h_prev.data(),
            params.w_hidden.value.data(),
            &mut h_term,
            n,
            params.hidden(),
            a_width,
        );
        for ni in 0..n {
            let ht = &h_term[ni * a_width..(ni + 1) * a_width];
            for li in 0..l {
                let row = &mut pre[(ni * l + li) * a_width..(ni * l + li + 1) * a_width];
                for ((p, &h), &b) in row.iter_mut().zip(ht.iter()).zip(params.bias.value.data()) {
                    *p += h + b;
                }
            }
        }
    }
    let pre_relu = Tensor::from_vec(&[n, l, a_width], pre);
    let post_relu = crate::ops::activation::relu(&pre_relu);

    // scores[n,l] = post_relu[n,l,:] · w_score
    let mut scores = vec![0.0; n * l];
    crate::ops::matmul::matmul_acc(
        post_relu.data(),
        params.w_score.value.data(),
        &mut scores,
        n * l,
        a_width,
        1,
    );
    let scores = Tensor::from_vec(&[n, l], scores);
    let weights = softmax(&scores, 1)?;

    // context[n,:] = Σ_l weights[n,l] · a[n,l,:]
    let mut context = vec![0.0; n * d];
    for ni in 0..n {
        let ctx = &mut context[ni * d..(ni + 1) * d];
        for li in 0..l {
            let w = weights.data()[ni * l + li];
            let a_row = &annotations.data()[(ni * l + li) * d..(ni * l + li + 1) * d];
            for (c, &a) in ctx.iter_mut().zip(a_row.iter()) {
                *c += w * a;
            }
        }
    }
    let context = Tensor::from_vec(&[n, d], context);

    Ok((
        AttentionStep {
            weights: weights.clone(),
            context,
            scores,
        },
        AttentionCache {
            annotations: annotations.clone(),
            h_prev: h_prev.clone(),
            pre_relu,
            post_relu,
            weights,
        },
    ))
}

/// Backward through one attention application. `d_context` is the gradient
/// on the context vectors and `d_weights` any direct gradient on the
/// attention weights (the loss regularizer feeds one). Accumulates the four
/// parameter grads and returns `(d_annotations, d_h_prev)`.
pub fn attend_backward(
    cache: &AttentionCache,
    params: &mut AttentionParams,
    d_context: &Tensor,
    d_weights: Option<&Tensor>,
) -> (Tensor, Tensor) {
    let &[n, l, d] = cache.annotations.shape() else { unreachable!() };
    let a_width = params.attn_width();
    let h_dim = params.hidden();

    // through the weighted sum: dα[n,l] += dz[n,:]·a[n,l,:]; da += α·dz
    let mut d_alpha = vec![0.0; n * l];
    let mut d_annot = vec![0.0; n * l * d];
    for ni in 0..n {
        let dz = &d_context.data()[ni * d..(ni + 1) * d];
        for li in 0..l {
            let a_row = &cache.annotations.data()[(ni * l + li) * d..(ni * l + li + 1) * d];
            let w = cache.weights.data()[ni * l + li];
            let mut dot = 0.0;
            let da_row = &mut d_annot[(ni * l + li) * d..(ni * l + li + 1) * d];
            for ((da, &a), &g) in da_row.iter_mut().zip(a_row.iter()).zip(dz.iter()) {
                dot += a * g;
                *da += w * g;
            }
            d_alpha[ni * l + li] = dot;
        }
    }
    if let Some(dw) = d_weights {
        for (a, &b) in d_alpha.iter_mut().zip(dw.data().iter()) {
            *a += b;
        }
    }

    // through the softmax
    let d_alpha = Tensor::from_vec(&[n, l], d_alpha);
    let d_scores = softmax_backward(&cache.weights, &d_alpha, 1);

    // through the score projection: flat rows [N·L × A]
    let mut d_post = vec![0.0; n * l * a_width];
    {
        let ws = params.w_score.value.data().to_vec();
        let g = params.w_score.value.grad_mut();
        for (row, &ds) in (0..n * l).zip(d_scores.data().iter()) {
            let post = &cache.post_relu.data()[row * a_width..(row + 1) * a_width];
            let dp = &mut d_post[row * a_width..(row + 1) * a_width];
            for i in 0..a_width {
                g[i] += post[i] * ds;
                dp[i] = ws[i] * ds;
            }
        }
    }

    // through the ReLU
    for (dp, &pre) in d_post.iter_mut().zip(cache.pre_relu.data().iter()) {
        if pre <= 0.0 {
            *dp = 0.0;
        }
    }

    // bias grad and the two linear terms
    {
        let gb = params.bias.value.grad_mut();
        for row in d_post.chunks_exact(a_width) {
            for (g, &dp) in gb.iter_mut().zip(row.iter()) {
                *g += dp;
            }
        }
    }
    // dW_annot += aᵀ·d_post over all N·L rows; d_annot += d_post·W_annotᵀ
    crate::ops::matmul::matmul_at_acc(
        cache.annotations.data(),
        &d_post,
        params.w_annot.value.grad_mut(),
        n * l,
        d,
        a_width,
    );
    crate::ops::matmul::matmul_bt_acc(
        &d_post,
        params.w_annot.value.data(),
        &mut d_annot,
        n * l,
        a_width,
        d,
    );
    // hidden term: sum d_post over positions first
    let mut d_post_sum = vec![0.0; n * a_width];
    for ni in 0..n {
        let acc = &mut d_post_sum[ni * a_width..(ni + 1) * a_width];
        for li in 0..l {
            let row = &d_post[(ni * l + li) * a_width..(ni * l + li + 1) * a_width];
            for (a, &b) in acc.iter_mut().zip(row.iter()) {
                *a += b;
            }
        }
    }
    crate::ops::matmul::matmul_at_acc(
        cache.h_prev.data(),
        &d_post_sum,
        params.w_hidden.value.grad_mut(),
        n,
        h_dim,
        a_width,
    );
    let mut d_h = vec![0.0; n * h_dim];
    crate::ops::matmul::matmul_bt_acc(
        &d_post_sum,
        params.w_hidden.value.data(),
        &mut d_h,
        n,
        a_width,
        h_dim,
    );

    (
        Tensor::from_vec(&[n, l, d], d_annot),
        Tensor::from_vec(&[n, h_dim], d_h),
    )
}

/// Mean annotation vector per channel: the initial context `z_0`.
pub fn initial_context(annotations: &Tensor) -> Tensor {
    let &[n, l, d] = annotations.shape() else { panic!("initial_context: rank-3 input required") };
    let mut out = vec![0.0; n * d];
    for ni in 0..n {
        let acc = &mut out[ni * d..(ni + 1) * d];
        for li in 0..l {
            let row = &annotations.data()[(ni * l + li) * d..(ni * l + li + 1) * d];
            for (a, &b) in acc.iter_mut().zip(row.iter()) {
                *a += b;
            }
        }
        acc.iter_mut().for_each(|a| *a /= l as f64);
    }
    Tensor::from_vec(&[n, d], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use crate::gradcheck::relative_error;

    fn random_setup(n: usize, l: usize, d: usize, h: usize, a: usize, seed: u64) -> (Tensor, Tensor, AttentionParams) {
        let mut rng = RngState::new(seed);
        let annotations = Tensor::uniform(&[n, l, d], -1.0, 1.0, &mut rng);
        let h_prev = Tensor::uniform(&[n, h], -1.0, 1.0, &mut rng);
        let params = AttentionParams::init("att", d, h, a, &mut rng);
        (annotations, h_prev, params)
    }

    #[test]
    fn identical_annotations_give_uniform_weights() {
        let mut rng = RngState::new(1);
        let v: Vec<f64> = (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let mut data = Vec::new();
        for _ in 0..5 {
            data.extend_from_slice(&v);
        }
        let annotations = Tensor::from_vec(&[1, 5, 3], data);
        let h_prev = Tensor::uniform(&[1, 4], -1.0, 1.0, &mut rng);
        let params = AttentionParams::init("att", 3, 4, 6, &mut rng);
        let (step, _) = attend(&annotations, &h_prev, &params).unwrap();
        for &w in step.weights.data() {
            assert!((w - 0.2).abs() < 1e-9);
        }
        for (z, want) in step.context.data().iter().zip(v.iter()) {
            assert!((z - want).abs() < 1e-9);
        }
    }

    #[test]
    fn dominant_score_saturates_to_that_annotation() {
        // score gap of ~1e3 makes softmax one-hot at position 2
        let (annotations, h_prev, mut params) = random_setup(1, 4, 3, 2, 3, 7);
        // zero the score path, then bias scores through w_annot so that only
        // position 2's annotation drives a huge score: easiest is to hand-set
        // weights so score = 1e3 * a[..,0] and make position 2's first channel
        // large.
        let mut a = annotations.clone();
        for li in 0..4 {
            a.data_mut()[li * 3] = if li == 2 { 5.0 } else { -5.0 };
        }
        params.w_annot.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        params.w_annot.value.data_mut()[0] = 100.0; // channel 0 -> attn unit 0
        params.w_hidden.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        params.bias.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        params.w_score.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        params.w_score.value.data_mut()[0] = 1.0;
        let (step, _) = attend(&a, &h_prev, &params).unwrap();
        assert!(step.weights.data()[2] > 1.0 - 1e-6);
        for (zi, want) in step.context.data().iter().zip(a.data()[6..9].iter()) {
            assert!((zi - want).abs() < 1e-6);
        }
    }

    #[test]
    fn context_matches_brute_force_weighted_sum() {
        let (annotations, h_prev, params) = random_setup(2, 5, 3, 4, 4, 11);
        let (step, _) = attend(&annotations, &h_prev, &params).unwrap();
        for ni in 0..2 {
            for di in 0..3 {
                let mut want = 0.0;
                for li in 0..5 {
                    want += step.weights.data()[ni * 5 + li] * annotations.data()[(ni * 5 + li) * 3 + di];
                }
                assert!((step.context.data()[ni * 3 + di] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn weights_form_a_simplex_and_context_stays_in_hull() {
        for seed in 0..50 {
            let (annotations, h_prev, params) = random_setup(1, 6, 4, 3, 5, 1000 + seed);
            let (step, _) = attend(&annotations, &h_prev, &params).unwrap();
            let sum: f64 = step.weights.data().iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
            assert!(step.weights.data().iter().all(|&w| w > 0.0));
            for di in 0..4 {
                let column: Vec<f64> = (0..6).map(|li| annotations.data()[li * 4 + di]).collect();
                let lo = column.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z = step.context.data()[di];
                assert!(z >= lo - 1e-12 && z <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn constant_score_shift_leaves_weights_unchanged() {
        let (annotations, h_prev, params) = random_setup(1, 5, 3, 4, 4, 13);
        let (step, _) = attend(&annotations, &h_prev, &params).unwrap();
        // adding a constant to every score must not move the weights
        let shifted = Tensor::from_vec(
            step.scores.shape(),
            step.scores.data().iter().map(|s| s + 55.5).collect(),
        );
        let w2 = softmax(&shifted, 1).unwrap();
        for (a, b) in step.weights.data().iter().zip(w2.data().iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn permutation_equivariance() {
        let (annotations, h_prev, params) = random_setup(1, 5, 3, 4, 4, 17);
        let (step, _) = attend(&annotations, &h_prev, &params).unwrap();
        // rotate positions by 2
        let mut permuted = vec![0.0; 15];
        for li in 0..5 {
            let src = &annotations.data()[li * 3..(li + 1) * 3];
            permuted[((li + 2) % 5) * 3..((li + 2) % 5 + 1) * 3].copy_from_slice(src);
        }
        let permuted = Tensor::from_vec(&[1, 5, 3], permuted);
        let (step2, _) = attend(&permuted, &h_prev, &params).unwrap();
        for li in 0..5 {
            assert!((step.weights.data()[li] - step2.weights.data()[(li + 2) % 5]).abs() < 1e-12);
        }
        for (a, b) in step.context.data().iter().zip(step2.context.data().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn initial_context_is_the_mean() {
        let a = Tensor::from_vec(&[1, 2, 2], vec![0.0, 2.0, 2.0, 0.0]);
        let z0 = initial_context(&a);
        assert_eq!(z0.data(), &[1.0, 1.0]);

        let mut rng = RngState::new(3);
        let v: Vec<f64> = (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let mut data = Vec::new();
        for _ in 0..3 {
            data.extend_from_slice(&v);
        }
        let constant = Tensor::from_vec(&[1, 3, 4], data);
        let z = initial_context(&constant);
        for (a, b) in z.data().iter().zip(v.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn initial_context_equals_attend_under_forced_uniform_weights() {
        let (annotations, _, _) = random_setup(2, 6, 3, 4, 4, 19);
        let z0 = initial_context(&annotations);
        for ni in 0..2 {
            for di in 0..3 {
                let mut want = 0.0;
                for li in 0..6 {
                    want += annotations.data()[(ni * 6 + li) * 3 + di] / 6.0;
                }
                assert!((z0.data()[ni * 3 + di] - want).abs() < 1e-12);
            }
        }
    }

    // Gradient check of all four parameter groups plus both inputs, using a
    // random projection of (context, weights) as the scalar loss so the
    // d_weights path is exercised too.
    #[test]
    fn gradients_match_finite_differences() {
        let (annotations, h_prev, mut params) = random_setup(2, 5, 3, 4, 4, 23);
        let mut rng = RngState::new(29);
        let proj_z: Vec<f64> = (0..6).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let proj_w: Vec<f64> = (0..10).map(|_| rng.uniform(-1.0, 1.0)).collect();

        let loss = |a: &Tensor, h: &Tensor, p: &AttentionParams| -> f64 {
            let (step, _) = attend(a, h, p).unwrap();
            step.context.data().iter().zip(proj_z.iter()).map(|(x, y)| x * y).sum::<f64>()
                + step.weights.data().iter().zip(proj_w.iter()).map(|(x, y)| x * y).sum::<f64>()
        };

        let (_, cache) = attend(&annotations, &h_prev, &params).unwrap();
        let dz = Tensor::from_vec(&[2, 3], proj_z.clone());
        let dw = Tensor::from_vec(&[2, 5], proj_w.clone());
        let (d_annot, d_h) = attend_backward(&cache, &mut params, &dz, Some(&dw));

        let eps = 1e-6;
        for gi in 0..4 {
            let grads = params.params()[gi].value.grad().unwrap().to_vec();
            for idx in 0..grads.len() {
                let orig = params.params()[gi].value.data()[idx];
                params.params_mut()[gi].value.data_mut()[idx] = orig + eps;
                let up = loss(&annotations, &h_prev, &params);
                params.params_mut()[gi].value.data_mut()[idx] = orig - eps;
                let down = loss(&annotations, &h_prev, &params);
                params.params_mut()[gi].value.data_mut()[idx] = orig;
                let numeric = (up - down) / (2.0 * eps);
                assert!(
                    relative_error(grads[idx], numeric) < 1e-4,
                    "group {gi} elem {idx}"
                );
            }
        }
        let mut probe = annotations.clone();
        for idx in 0..probe.len() {
            let orig = probe.data()[idx];
            probe.data_mut()[idx] = orig + eps;
            let up = loss(&probe, &h_prev, &params);
            probe.data_mut()[idx] = orig - eps;
            let down = loss(&probe, &h_prev, &params);
            probe.data_mut()[idx] = orig;
            assert!(relative_error(d_annot.data()[idx], (up - down) / (2.0 * eps)) < 1e-4);
        }
        let mut probe = h_prev.clone();
        for idx in 0..probe.len() {
            let orig = probe.data()[idx];
            probe.data_mut()[idx] = orig + eps;
            let up = loss(&annotations, &probe, &params);
            probe.data_mut()[idx] = orig - eps;
            let down = loss(&annotations, &probe, &params);
            probe.data_mut()[idx] = orig;
            assert!(relative_error(d_h.data()[idx], (up - down) / (2.0 * eps)) < 1e-4);
        }
    }
}
