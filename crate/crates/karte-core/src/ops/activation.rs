//! Elementwise nonlinearities and the stabilized softmax.

use crate::tensor::{geometry_err, OpError, Tensor};
use alloc::format;
use alloc::vec;

pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    Tensor::from_vec(x.shape(), data)
}

/// Subgradient 0 at exactly 0: gradient passes only where `x > 0`.
pub fn relu_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    debug_assert_eq!(x.shape(), dy.shape());
    let data = x
        .data()
        .iter()
        .zip(dy.data().iter())
        .map(|(&v, &d)| if v > 0.0 { d } else { 0.0 })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Max-shifted softmax along `axis`; outputs in `(0, 1]` summing to 1.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor, OpError> {
    let shape = x.shape();
    if axis >= shape.len() {
        return Err(geometry_err(
            "softmax",
            format!("axis {axis} out of range for shape {shape:?}"),
        ));
    }
    let m = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = vec![0.0; x.len()];
    let data = x.data();
    for ou in 0..outer {
        for inn in 0..inner {
            let base = ou * m * inner + inn;
            let mut max = f64::NEG_INFINITY;
            for j in 0..m {
                max = max.max(data[base + j * inner]);
            }
            let mut sum = 0.0;
            for j in 0..m {
                let e = libm::exp(data[base + j * inner] - max);
                out[base + j * inner] = e;
                sum += e;
            }
            for j in 0..m {
                out[base + j * inner] /= sum;
            }
        }
    }
    Ok(Tensor::from_vec(shape, out))
}

/// `dx = y ⊙ (dy − Σ_axis dy⊙y)` where `y = softmax(x)`.
pub fn softmax_backward(y: &Tensor, dy: &Tensor, axis: usize) -> Tensor {
    debug_assert_eq!(y.shape(), dy.shape());
    let shape = y.shape();
    let m = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = vec![0.0; y.len()];
    let yd = y.data();
    let dyd = dy.data();
    for ou in 0..outer {
        for inn in 0..inner {
            let base = ou * m * inner + inn;
            let mut dot = 0.0;
            for j in 0..m {
                let k = base + j * inner;
                dot += dyd[k] * yd[k];
            }
            for j in 0..m {
                let k = base + j * inner;
                out[k] = yd[k] * (dyd[k] - dot);
            }
        }
    }
    Tensor::from_vec(shape, out)
}

/// Natural-log softmax along the last axis of a rank-2 tensor, computed
/// stably as `x − max − ln Σ exp(x − max)`.
pub fn log_softmax_rows(x: &Tensor) -> Tensor {
    let &[n, k] = x.shape() else { panic!("log_softmax_rows: rank-2 input required") };
    let mut out = vec![0.0; n * k];
    for r in 0..n {
        let row = &x.data()[r * k..(r + 1) * k];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let logsum = libm::log(row.iter().map(|&v| libm::exp(v - max)).sum::<f64>());
        for (o, &v) in out[r * k..(r + 1) * k].iter_mut().zip(row.iter()) {
            *o = v - max - logsum;
        }
    }
    Tensor::from_vec(&[n, k], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;
    use crate::gradcheck::relative_error;
    use crate::rng::RngState;

    #[test]
    fn relu_clamps_negatives() {
        let x = Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]);
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn relu_all_negative_gives_zero_gradient() {
        let x = Tensor::from_vec(&[3], vec![-1.0, -2.0, -0.5]);
        let y = relu(&x);
        assert!(y.data().iter().all(|&v| v == 0.0));
        let dy = Tensor::filled(&[3], 1.0);
        let dx = relu_backward(&x, &dy);
        assert!(dx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relu_gradient_matches_finite_differences_away_from_zero() {
        let mut rng = RngState::new(7);
        // resample elements until all are at least 1e-3 from the kink
        let mut vals: Vec<f64> = Vec::new();
        while vals.len() < 12 {
            let v = rng.uniform(-2.0, 2.0);
            if v.abs() >= 1e-3 {
                vals.push(v);
            }
        }
        let x = Tensor::from_vec(&[12], vals);
        let proj: Vec<f64> = (0..12).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let loss = |t: &Tensor| -> f64 {
            relu(t).data().iter().zip(proj.iter()).map(|(a, p)| a * p).sum()
        };
        let dy = Tensor::from_vec(&[12], proj.clone());
        let dx = relu_backward(&x, &dy);
        let eps = 1e-5;
        let mut probe = x.clone();
        for i in 0..12 {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + eps;
            let up = loss(&probe);
            probe.data_mut()[i] = orig - eps;
            let down = loss(&probe);
            probe.data_mut()[i] = orig;
            assert!(relative_error(dx.data()[i], (up - down) / (2.0 * eps)) < 1e-4);
        }
    }

    #[test]
    fn softmax_uniform_on_equal_logits() {
        let x = Tensor::zeros(&[1, 4]);
        let y = softmax(&x, 1).unwrap();
        for &v in y.data() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let x = Tensor::from_vec(&[1, 2], vec![1000.0, 0.0]);
        let y = softmax(&x, 1).unwrap();
        assert!(y.all_finite());
        assert!((y.data()[0] - 1.0).abs() < 1e-9);
        assert!(y.data()[1] < 1e-9);
        // stays finite out to |x| = 1e4
        let x = Tensor::from_vec(&[1, 2], vec![1e4, -1e4]);
        assert!(softmax(&x, 1).unwrap().all_finite());
    }

    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant() {
        let mut rng = RngState::new(11);
        let x = Tensor::uniform(&[5, 7], -3.0, 3.0, &mut rng);
        let y = softmax(&x, 1).unwrap();
        for r in 0..5 {
            let s: f64 = y.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
        let shifted = Tensor::from_vec(&[5, 7], x.data().iter().map(|v| v + 123.456).collect());
        let y2 = softmax(&shifted, 1).unwrap();
        for (a, b) in y.data().iter().zip(y2.data().iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn softmax_jvp_matches_finite_differences() {
        let mut rng = RngState::new(13);
        let x = Tensor::uniform(&[2, 5], -2.0, 2.0, &mut rng);
        let proj: Vec<f64> = (0..10).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let loss = |t: &Tensor| -> f64 {
            softmax(t, 1)
                .unwrap()
                .data()
                .iter()
                .zip(proj.iter())
                .map(|(a, p)| a * p)
                .sum()
        };
        let y = softmax(&x, 1).unwrap();
        let dy = Tensor::from_vec(&[2, 5], proj.clone());
        let dx = softmax_backward(&y, &dy, 1);
        let eps = 1e-5;
        let mut probe = x.clone();
        for i in 0..10 {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + eps;
            let up = loss(&probe);
            probe.data_mut()[i] = orig - eps;
            let down = loss(&probe);
            probe.data_mut()[i] = orig;
            assert!(relative_error(dx.data()[i], (up - down) / (2.0 * eps)) < 1e-4);
        }
    }

    #[test]
    fn softmax_middle_axis() {
        let mut rng = RngState::new(17);
        let x = Tensor::uniform(&[2, 3, 4], -2.0, 2.0, &mut rng);
        let y = softmax(&x, 1).unwrap();
        for ou in 0..2 {
            for inn in 0..4 {
                let s: f64 = (0..3).map(|j| y.data()[ou * 12 + j * 4 + inn]).sum();
                assert!((s - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn log_softmax_agrees_with_log_of_softmax() {
        let mut rng = RngState::new(19);
        let x = Tensor::uniform(&[3, 6], -4.0, 4.0, &mut rng);
        let a = log_softmax_rows(&x);
        let b = softmax(&x, 1).unwrap();
        for (l, p) in a.data().iter().zip(b.data().iter()) {
            assert!((l - libm::log(*p)).abs() < 1e-10);
        }
    }
}
