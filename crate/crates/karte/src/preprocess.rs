//! Image pre-processing: grayscale replicated to three channels, bilinear
//! resize, random crop (training) or direct resize (evaluation), then
//! per-channel normalization with the fixed mean/std.

use karte_core::rng::RngState;
use karte_core::tensor::Tensor;
use karte_core::trace::upsample_bilinear;

use crate::img::GrayImage;

pub const CHANNEL_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const CHANNEL_STD: [f64; 3] = [0.229, 0.224, 0.225];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessConfig {
    /// Final square side S fed to the encoder.
    pub crop_size: usize,
    /// Intermediate side R for train-mode resize-then-crop.
    pub resize_size: usize,
}

impl PreprocessConfig {
    pub fn desk_scale() -> Self {
        PreprocessConfig {
            crop_size: 64,
            resize_size: 72,
        }
    }
}

fn to_unit(img: &GrayImage) -> Vec<f64> {
    img.pixels.iter().map(|&p| p as f64 / 255.0).collect()
}

fn resize(gray: &[f64], h: usize, w: usize, side: usize) -> Vec<f64> {
    upsample_bilinear(gray, h, w, side, side)
}

fn normalize_to_tensor(crop: &[f64], side: usize) -> Tensor {
    let mut out = Tensor::zeros(&[3, side, side]);
    for c in 0..3 {
        let plane = &mut out.data_mut()[c * side * side..(c + 1) * side * side];
        for (o, &v) in plane.iter_mut().zip(crop.iter()) {
            *o = (v - CHANNEL_MEAN[c]) / CHANNEL_STD[c];
        }
    }
    out
}

/// Training path: resize to R×R, random-crop S×S (offsets drawn y then x),
/// replicate to three channels, normalize.
pub fn preprocess_train(img: &GrayImage, cfg: &PreprocessConfig, rng: &mut RngState) -> Tensor {
    let resized = resize(&to_unit(img), img.height, img.width, cfg.resize_size);
    let span = cfg.resize_size - cfg.crop_size + 1;
    let oy = rng.below(span);
    let ox = rng.below(span);
    let mut crop = vec![0.0; cfg.crop_size * cfg.crop_size];
    for y in 0..cfg.crop_size {
        let src = &resized[(y + oy) * cfg.resize_size + ox..(y + oy) * cfg.resize_size + ox + cfg.crop_size];
        crop[y * cfg.crop_size..(y + 1) * cfg.crop_size].copy_from_slice(src);
    }
    normalize_to_tensor(&crop, cfg.crop_size)
}

/// Evaluation path: resize straight to S×S; a pure function of the image
/// bytes and config.
pub fn preprocess_eval(img: &GrayImage, cfg: &PreprocessConfig) -> Tensor {
    let resized = resize(&to_unit(img), img.height, img.width, cfg.crop_size);
    normalize_to_tensor(&resized, cfg.crop_size)
}

/// Stacks per-image `[3×S×S]` tensors into a `[N×3×S×S]` batch.
pub fn stack_batch(tensors: &[&Tensor]) -> Tensor {
    assert!(!tensors.is_empty());
    let shape = tensors[0].shape();
    let per = tensors[0].len();
    let mut out = Tensor::zeros(&[tensors.len(), shape[0], shape[1], shape[2]]);
    for (i, t) in tensors.iter().enumerate() {
        assert_eq!(t.shape(), shape);
        out.data_mut()[i * per..(i + 1) * per].copy_from_slice(t.data());
    }
    out
}
