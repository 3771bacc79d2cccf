//! Bias-corrected Adam updates applied in place to [`Parameter`]s, plus
//! global-norm gradient clipping.

use crate::tensor::{OpError, Parameter};
use alloc::string::ToString;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update from the parameter's accumulated gradient. The gradient
/// buffer is left untouched; callers zero it per batch.
pub fn adam_step(param: &mut Parameter, lr: f64, hyper: &AdamHyper) -> Result<(), OpError> {
    let grad = match param.value.grad() {
        Some(g) => g,
        None => return Ok(()), // never touched by backward: nothing to do
    };
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(OpError::NonFiniteGrad {
            param: param.name.to_string(),
        });
    }
    let grad = grad.to_vec();
    param.step_count += 1;
    let t = param.step_count as i32;
    let bc1 = 1.0 - libm::pow(hyper.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(hyper.beta2, t as f64);
    let m = param.first_moment.data_mut();
    for (mi, &g) in m.iter_mut().zip(grad.iter()) {
        *mi = hyper.beta1 * *mi + (1.0 - hyper.beta1) * g;
    }
    let v = param.second_moment.data_mut();
    for (vi, &g) in v.iter_mut().zip(grad.iter()) {
        *vi = hyper.beta2 * *vi + (1.0 - hyper.beta2) * g * g;
    }
    let m = param.first_moment.data();
    let v = param.second_moment.data();
    for ((w, &mi), &vi) in param.value.data_mut().iter_mut().zip(m.iter()).zip(v.iter()) {
        let m_hat = mi / bc1;
        let v_hat = vi / bc2;
        *w -= lr * m_hat / (libm::sqrt(v_hat) + hyper.eps);
    }
    Ok(())
}

/// Scales all gradients so their joint L2 norm does not exceed `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(params: &mut [&mut Parameter], max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for p in params.iter() {
        if let Some(g) = p.value.grad() {
            sq += g.iter().map(|v| v * v).sum::<f64>();
        }
    }
    let norm = libm::sqrt(sq);
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for p in params.iter_mut() {
            if p.value.grad().is_some() {
                p.value.grad_mut().iter_mut().for_each(|v| *v *= scale);
            }
        }
    }
    norm
}
