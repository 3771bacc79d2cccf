//! Inverted dropout: evaluation mode is the identity.

use crate::rng::RngState;
use crate::tensor::{OpError, Tensor};
use alloc::vec;
use alloc::vec::Vec;

/// Multiplicative mask produced during a training-mode pass; needed to
/// replay the same scaling in backward.
pub struct DropoutMask {
    scale: Option<Vec<f64>>, // None means identity (eval mode or rate 0)
}

/// Zeroes each element with probability `rate` and scales survivors by
/// `1/(1-rate)`; identity when `training` is false or `rate == 0`.
pub fn dropout(
    x: &Tensor,
    rate: f64,
    rng: &mut RngState,
    training: bool,
) -> Result<(Tensor, DropoutMask), OpError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(OpError::BadRate(rate));
    }
    if !training || rate == 0.0 {
        return Ok((x.clone(), DropoutMask { scale: None }));
    }
    let keep_scale = 1.0 / (1.0 - rate);
    let mut scale = vec![0.0; x.len()];
    for s in scale.iter_mut() {
        if rng.next_f64() >= rate {
            *s = keep_scale;
        }
    }
    let data = x.data().iter().zip(scale.iter()).map(|(v, s)| v * s).collect();
    Ok((Tensor::from_vec(x.shape(), data), DropoutMask { scale: Some(scale) }))
}

pub fn dropout_backward(mask: &DropoutMask, dy: &Tensor) -> Tensor {
    match &mask.scale {
        None => dy.clone(),
        Some(scale) => {
            let data = dy.data().iter().zip(scale.iter()).map(|(d, s)| d * s).collect();
            Tensor::from_vec(dy.shape(), data)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_zero_is_identity() {
        let mut rng = RngState::new(1);
        let x = Tensor::from_vec(&[4], vec![1.0, -2.0, 3.0, 4.0]);
        let (y, _) = dropout(&x, 0.0, &mut rng, true).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn eval_mode_is_identity() {
        let mut rng = RngState::new(2);
        let x = Tensor::from_vec(&[4], vec![1.0, -2.0, 3.0, 4.0]);
        let (y, mask) = dropout(&x, 0.5, &mut rng, false).unwrap();
        assert_eq!(y, x);
        let dy = Tensor::filled(&[4], 2.0);
        assert_eq!(dropout_backward(&mask, &dy), dy);
    }

    #[test]
    fn rejects_rate_one() {
        let mut rng = RngState::new(3);
        let x = Tensor::zeros(&[2]);
        assert!(matches!(dropout(&x, 1.0, &mut rng, true), Err(OpError::BadRate(_))));
    }

    // Law-of-large-numbers check on 10^5 elements at rate 0.5.
    #[test]
    fn survivor_statistics_match_rate() {
        let mut rng = RngState::new(99);
        let n = 100_000;
        let x = Tensor::filled(&[n], 1.0);
        let (y, _) = dropout(&x, 0.5, &mut rng, true).unwrap();
        let survivors = y.data().iter().filter(|&&v| v != 0.0).count();
        let frac = survivors as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.01, "survivor fraction {frac}");
        let mean: f64 = y.data().iter().sum::<f64>() / n as f64;
        // survivors are scaled by 2, so the overall mean stays near the input mean
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
        for &v in y.data() {
            assert!(v == 0.0 || (v - 2.0).abs() < 1e-12);
        }
    }
}
