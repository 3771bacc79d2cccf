//! Small CNN encoder: stacked conv/ReLU/maxpool stages producing the
//! annotation grid, plus a global-average-pool classification head for
//! pre-training.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::adam::{adam_step, AdamHyper};
use crate::ops::activation::{relu, relu_backward, softmax};
use crate::ops::conv::{conv2d, conv2d_backward, maxpool2d, maxpool2d_backward, Conv2dCache, MaxPoolCache};
use crate::ops::dense::{dense, dense_backward};
use crate::rng::RngState;
use crate::tensor::{geometry_err, OpError, Parameter, Tensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageConfig {
    pub out_channels: usize,
    /// 2x2/stride-2 max pool after the activation.
    pub pool: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    pub in_channels: usize,
    pub image_size: usize,
    pub kernel: usize,
    pub stages: Vec<StageConfig>,
    pub pretrain_classes: usize,
}

impl EncoderConfig {
    /// 64-pixel inputs through 16/32/64/128 channels, pooling after the
    /// first three stages: an 8x8 grid of 128-channel annotation vectors.
    pub fn desk_scale() -> Self {
        EncoderConfig {
            in_channels: 3,
            image_size: 64,
            kernel: 3,
            stages: vec![
                StageConfig { out_channels: 16, pool: true },
                StageConfig { out_channels: 32, pool: true },
                StageConfig { out_channels: 64, pool: true },
                StageConfig { out_channels: 128, pool: false },
            ],
            pretrain_classes: 13,
        }
    }

    /// 224-pixel geometry with a 14x14 grid of 2048-channel vectors.
    /// Far heavier than the desk-scale default; intended for real data.
    pub fn paper_scale() -> Self {
        EncoderConfig {
            in_channels: 3,
            image_size: 224,
            kernel: 3,
            stages: vec![
                StageConfig { out_channels: 64, pool: true },
                StageConfig { out_channels: 128, pool: true },
                StageConfig { out_channels: 256, pool: true },
                StageConfig { out_channels: 512, pool: true },
                StageConfig { out_channels: 2048, pool: false },
            ],
            pretrain_classes: 11,
        }
    }

    pub fn pool_count(&self) -> usize {
        self.stages.iter().filter(|s| s.pool).count()
    }

    /// Spatial extent of the annotation grid.
    pub fn grid_extent(&self) -> usize {
        self.image_size >> self.pool_count()
    }

    /// L = grid positions.
    pub fn annot_positions(&self) -> usize {
        self.grid_extent() * self.grid_extent()
    }

    /// D = channels of the final stage.
    pub fn annot_dim(&self) -> usize {
        self.stages.last().map(|s| s.out_channels).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), OpError> {
        if self.stages.is_empty() {
            return Err(geometry_err("encoder", String::from("at least one stage required")));
        }
        if self.image_size % (1 << self.pool_count()) != 0 {
            return Err(geometry_err(
                "encoder",
                format!(
                    "image size {} not divisible by 2^{} pools",
                    self.image_size,
                    self.pool_count()
                ),
            ));
        }
        if self.grid_extent() < 4 {
            return Err(geometry_err(
                "encoder",
                format!("final spatial extent {0}x{0} is below 4x4", self.grid_extent()),
            ));
        }
        Ok(())
    }
}

/// Encoder output: `features` is `[N × L × D]` with position `i` mapping to
/// grid cell `(i / grid_w, i % grid_w)`. Attention and heatmap rendering
/// share this row-major convention.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationGrid {
    pub features: Tensor,
    pub grid_h: usize,
    pub grid_w: usize,
}

impl AnnotationGrid {
    pub fn positions(&self) -> usize {
        self.grid_h * self.grid_w
    }
}

pub struct EncoderParams {
    pub cfg: EncoderConfig,
    pub kernels: Vec<Parameter>,
    pub biases: Vec<Parameter>,
}

impl EncoderParams {
    pub fn init(cfg: EncoderConfig, rng: &mut RngState) -> Result<Self, OpError> {
        cfg.validate()?;
        let mut kernels = Vec::new();
        let mut biases = Vec::new();
        let mut in_ch = cfg.in_channels;
        let k = cfg.kernel;
        for (i, stage) in cfg.stages.iter().enumerate() {
            let f = stage.out_channels;
            kernels.push(Parameter::glorot(
                &format!("enc.stage{i}.kernel"),
                &[f, in_ch, k, k],
                in_ch * k * k,
                f * k * k,
                rng,
            ));
            biases.push(Parameter::zeros(&format!("enc.stage{i}.bias"), &[f]));
            in_ch = f;
        }
        Ok(EncoderParams { cfg, kernels, biases })
    }

    pub fn params(&self) -> Vec<&Parameter> {
        self.kernels.iter().chain(self.biases.iter()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.kernels.iter_mut().chain(self.biases.iter_mut()).collect()
    }
}

pub struct EncoderCache {
    conv_caches: Vec<Conv2dCache>,
    pre_relu: Vec<Tensor>,
    pool_caches: Vec<Option<MaxPoolCache>>,
    grid: (usize, usize),
}

/// Runs the conv stack and reshapes the final feature map `[N×D×h×w]` into
/// annotation vectors `[N×L×D]`.
pub fn encode_image(batch: &Tensor, params: &EncoderParams) -> Result<(AnnotationGrid, EncoderCache), OpError> {
    let cfg = &params.cfg;
    let &[n, c, h, w] = batch.shape() else {
        return Err(geometry_err("encode_image", format!("rank-4 batch required, got {:?}", batch.shape())));
    };
    if c != cfg.in_channels || h != cfg.image_size || w != cfg.image_size {
        return Err(geometry_err(
            "encode_image",
            format!(
                "batch {:?} does not match configured {}x{}x{}",
                batch.shape(),
                cfg.in_channels,
                cfg.image_size,
                cfg.image_size
            ),
        ));
    }

    let pad = cfg.kernel / 2;
    let mut x = batch.clone();
    let mut conv_caches = Vec::new();
    let mut pre_relu = Vec::new();
    let mut pool_caches = Vec::new();
    for (i, stage) in cfg.stages.iter().enumerate() {
        let (conv_out, conv_cache) = conv2d(&x, &params.kernels[i], &params.biases[i], 1, pad)?;
        conv_caches.push(conv_cache);
        let activated = relu(&conv_out);
        pre_relu.push(conv_out);
        if stage.pool {
            let (pooled, pool_cache) = maxpool2d(&activated, 2, 2)?;
            pool_caches.push(Some(pool_cache));
            x = pooled;
        } else {
            pool_caches.push(None);
            x = activated;
        }
    }

    let &[_, d, gh, gw] = x.shape() else { unreachable!() };
    let features = feature_map_to_annotations(&x, n, d, gh, gw);
    Ok((
        AnnotationGrid {
            features,
            grid_h: gh,
            grid_w: gw,
        },
        EncoderCache {
            conv_caches,
            pre_relu,
            pool_caches,
            grid: (gh, gw),
        },
    ))
}

/// Chains `d_features` (`[N×L×D]`) back through every stage, accumulating
/// kernel and bias grads. Returns the input-image gradient.
pub fn encode_image_backward(
    cache: &EncoderCache,
    params: &mut EncoderParams,
    d_features: &Tensor,
) -> Tensor {
    let (gh, gw) = cache.grid;
    let &[n, l, d] = d_features.shape() else { panic!("encode_image_backward: rank-3 grad required") };
    debug_assert_eq!(l, gh * gw);
    let mut dy = annotations_to_feature_map(d_features, n, d, gh, gw);
    for i in (0..params.cfg.stages.len()).rev() {
        if let Some(pool_cache) = &cache.pool_caches[i] {
            dy = maxpool2d_backward(pool_cache, &dy);
        }
        let d_act = relu_backward(&cache.pre_relu[i], &dy);
        dy = conv2d_backward(
            &cache.conv_caches[i],
            &mut params.kernels[i],
            &mut params.biases[i],
            &d_act,
        );
    }
    dy
}

fn feature_map_to_annotations(fm: &Tensor, n: usize, d: usize, gh: usize, gw: usize) -> Tensor {
    let l = gh * gw;
    let mut out = vec![0.0; n * l * d];
    let data = fm.data();
    for ni in 0..n {
        for di in 0..d {
            let plane = &data[(ni * d + di) * l..(ni * d + di + 1) * l];
            for (pos, &v) in plane.iter().enumerate() {
                out[(ni * l + pos) * d + di] = v;
            }
        }
    }
    Tensor::from_vec(&[n, l, d], out)
}

fn annotations_to_feature_map(ann: &Tensor, n: usize, d: usize, gh: usize, gw: usize) -> Tensor {
    let l = gh * gw;
    let mut out = vec![0.0; n * d * l];
    let data = ann.data();
    for ni in 0..n {
        for pos in 0..l {
            let row = &data[(ni * l + pos) * d..(ni * l + pos + 1) * d];
            for (di, &v) in row.iter().enumerate() {
                out[(ni * d + di) * l + pos] = v;
            }
        }
    }
    Tensor::from_vec(&[n, d, gh, gw], out)
}

/// Classification head for pre-training: global average pool over
/// positions, then a dense projection to class logits.
pub struct PretrainHead {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl PretrainHead {
    pub fn init(annot_dim: usize, classes: usize, rng: &mut RngState) -> Self {
        PretrainHead {
            weight: Parameter::glorot("head.weight", &[annot_dim, classes], annot_dim, classes, rng),
            bias: Parameter::zeros("head.bias", &[classes]),
        }
    }

    pub fn classes(&self) -> usize {
        self.weight.shape()[1]
    }
}

pub struct ClassifyCache {
    pooled: Tensor, // [N × D]
    positions: usize,
}

pub fn classify_forward(grid: &AnnotationGrid, head: &PretrainHead) -> Result<(Tensor, ClassifyCache), OpError> {
    let ann = &grid.features;
    let &[n, l, d] = ann.shape() else { unreachable!() };
    let mut pooled = vec![0.0; n * d];
    for ni in 0..n {
        let row = &mut pooled[ni * d..(ni + 1) * d];
        for li in 0..l {
            let a = &ann.data()[(ni * l + li) * d..(ni * l + li + 1) * d];
            for (p, &v) in row.iter_mut().zip(a.iter()) {
                *p += v;
            }
        }
        row.iter_mut().for_each(|p| *p /= l as f64);
    }
    let pooled = Tensor::from_vec(&[n, d], pooled);
    let logits = dense(&pooled, &head.weight, &head.bias)?;
    Ok((logits, ClassifyCache { pooled, positions: l }))
}

/// Returns the gradient on the annotation grid.
pub fn classify_backward(cache: &ClassifyCache, head: &mut PretrainHead, d_logits: &Tensor) -> Tensor {
    let d_pooled = dense_backward(&cache.pooled, &mut head.weight, &mut head.bias, d_logits);
    let &[n, d] = d_pooled.shape() else { unreachable!() };
    let l = cache.positions;
    let mut d_ann = vec![0.0; n * l * d];
    for ni in 0..n {
        let src = &d_pooled.data()[ni * d..(ni + 1) * d];
        for li in 0..l {
            let dst = &mut d_ann[(ni * l + li) * d..(ni * l + li + 1) * d];
            for (o, &v) in dst.iter_mut().zip(src.iter()) {
                *o = v / l as f64;
            }
        }
    }
    Tensor::from_vec(&[n, l, d], d_ann)
}

/// Mean softmax cross-entropy over the batch; also returns `d_logits`.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor), OpError> {
    let &[n, k] = logits.shape() else {
        return Err(geometry_err("cross_entropy", format!("rank-2 logits required, got {:?}", logits.shape())));
    };
    if labels.len() != n {
        return Err(geometry_err(
            "cross_entropy",
            format!("{} labels for batch of {n}", labels.len()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&lb| lb >= k) {
        return Err(geometry_err(
            "cross_entropy",
            format!("label {bad} out of range for {k} classes"),
        ));
    }
    let probs = softmax(logits, 1)?;
    let mut loss = 0.0;
    let mut d_logits = probs.clone();
    for (ni, &label) in labels.iter().enumerate() {
        let p = probs.data()[ni * k + label];
        loss -= libm::log(p.max(1e-300));
        d_logits.data_mut()[ni * k + label] -= 1.0;
    }
    let scale = 1.0 / n as f64;
    d_logits.data_mut().iter_mut().for_each(|v| *v *= scale);
    Ok((loss * scale, d_logits))
}

/// One pre-training step: forward, cross-entropy, backward, Adam on the
/// encoder and head. Returns the batch loss.
#[allow(clippy::too_many_arguments)]
pub fn pretrain_step(
    batch: &Tensor,
    labels: &[usize],
    enc: &mut EncoderParams,
    head: &mut PretrainHead,
    lr: f64,
    hyper: &AdamHyper,
) -> Result<f64, OpError> {
    for p in enc.params_mut() {
        p.zero_grad();
    }
    head.weight.zero_grad();
    head.bias.zero_grad();

    let (grid, enc_cache) = encode_image(batch, enc)?;
    let (logits, cls_cache) = classify_forward(&grid, head)?;
    let (loss, d_logits) = cross_entropy(&logits, labels)?;
    let d_ann = classify_backward(&cls_cache, head, &d_logits);
    let _ = encode_image_backward(&enc_cache, enc, &d_ann);

    for p in enc.params_mut() {
        adam_step(p, lr, hyper)?;
    }
    adam_step(&mut head.weight, lr, hyper)?;
    adam_step(&mut head.bias, lr, hyper)?;
    Ok(loss)
}
