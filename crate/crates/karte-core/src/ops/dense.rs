//! Fully connected layer: `y = x·W + b` with exact analytic backward.

use crate::ops::matmul::{matmul_acc, matmul_at_acc, matmul_bt_acc};
use crate::tensor::{shape_err, OpError, Parameter, Tensor};

/// `x: [n×i]`, `weight: [i×o]`, `bias: [o]` -> `[n×o]`.
pub fn dense(x: &Tensor, weight: &Parameter, bias: &Parameter) -> Result<Tensor, OpError> {
    let (n, i) = match x.shape() {
        [n, i] => (*n, *i),
        _ => return Err(shape_err("dense", x.shape(), weight.shape())),
    };
    let (wi, o) = match weight.shape() {
        [wi, o] => (*wi, *o),
        _ => return Err(shape_err("dense", x.shape(), weight.shape())),
    };
    if wi != i || bias.shape() != [o] {
        return Err(shape_err("dense", x.shape(), weight.shape()));
    }
    let mut out = Tensor::zeros(&[n, o]);
    for row in out.data_mut().chunks_exact_mut(o) {
        row.copy_from_slice(bias.value.data());
    }
    matmul_acc(x.data(), weight.value.data(), out.data_mut(), n, i, o);
    Ok(out)
}

/// Backward pass. Accumulates `dW += xᵀ·dy` and `db += Σ_n dy` into the
/// parameter grads and returns `dx = dy·Wᵀ`.
pub fn dense_backward(
    x: &Tensor,
    weight: &mut Parameter,
    bias: &mut Parameter,
    dy: &Tensor,
) -> Tensor {
    let &[n, i] = x.shape() else { panic!("dense_backward: x must be rank 2") };
    let &[wi, o] = weight.shape() else { panic!("dense_backward: weight must be rank 2") };
    assert_eq!(wi, i);
    assert_eq!(dy.shape(), &[n, o]);

    matmul_at_acc(x.data(), dy.data(), weight.value.grad_mut(), n, i, o);
    {
        let db = bias.value.grad_mut();
        for row in dy.data().chunks_exact(o) {
            for (g, &d) in db.iter_mut().zip(row.iter()) {
                *g += d;
            }
        }
    }
    let mut dx = Tensor::zeros(&[n, i]);
    matmul_bt_acc(dy.data(), weight.value.data(), dx.data_mut(), n, o, i);
    dx
}
