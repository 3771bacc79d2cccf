//! The full captioning model: encoder, attention and decoder parameters
//! under one roof, with the composed forward/backward used for training
//! and gradient checking.

use alloc::vec::Vec;

use crate::decoder::{teacher_forced_unroll, unroll_backward, DecoderParams, PaddedTargets, Unroll};
use crate::encoder::{encode_image, encode_image_backward, AnnotationGrid, EncoderConfig, EncoderParams};
use crate::gradcheck::ParamSet;
use crate::loss::{caption_loss, caption_loss_backward};
use crate::rng::RngState;
use crate::tensor::{OpError, Parameter, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub vocab_size: usize,
    pub hidden: usize,
    pub attn_width: usize,
    pub dropout: f64,
    pub lambda: f64,
}

impl ModelConfig {
    /// Laptop-sized geometry: 64-pixel images, hidden width 64.
    pub fn desk_scale(vocab_size: usize) -> Self {
        ModelConfig {
            encoder: EncoderConfig::desk_scale(),
            vocab_size,
            hidden: 64,
            attn_width: 64,
            dropout: 0.5,
            lambda: 1.0,
        }
    }

    /// The full-size geometry (224-pixel images, hidden width 256).
    pub fn paper_scale(vocab_size: usize) -> Self {
        ModelConfig {
            encoder: EncoderConfig::paper_scale(),
            vocab_size,
            hidden: 256,
            attn_width: 256,
            dropout: 0.5,
            lambda: 1.0,
        }
    }
}

pub struct CaptionModel {
    pub cfg: ModelConfig,
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
}

impl CaptionModel {
    pub fn init(cfg: ModelConfig, rng: &mut RngState) -> Result<Self, OpError> {
        let encoder = EncoderParams::init(cfg.encoder.clone(), rng)?;
        let decoder = DecoderParams::init(
            cfg.vocab_size,
            cfg.encoder.annot_dim(),
            cfg.hidden,
            cfg.attn_width,
            cfg.dropout,
            rng,
        );
        Ok(CaptionModel { cfg, encoder, decoder })
    }

    pub fn encode(&self, images: &Tensor) -> Result<AnnotationGrid, OpError> {
        Ok(encode_image(images, &self.encoder)?.0)
    }

    /// Loss of one batch without touching gradients. Dropout is driven by
    /// `rng`, so pass a fresh clone of a fixed state for deterministic
    /// re-evaluation.
    pub fn batch_loss(
        &self,
        images: &Tensor,
        targets: &PaddedTargets,
        rng: &mut RngState,
        training: bool,
    ) -> Result<f64, OpError> {
        let (grid, _) = encode_image(images, &self.encoder)?;
        let unroll = teacher_forced_unroll(&grid.features, targets, &self.decoder, rng, training)?;
        let (loss, _) = caption_loss(
            &unroll.step_logits,
            targets,
            &unroll.step_weights,
            self.cfg.lambda,
        )?;
        Ok(loss)
    }

    /// Forward plus full backward: accumulates gradients on every parameter
    /// and returns the loss together with the per-step attention rows.
    pub fn train_batch(
        &mut self,
        images: &Tensor,
        targets: &PaddedTargets,
        rng: &mut RngState,
        training: bool,
    ) -> Result<(f64, Unroll), OpError> {
        let (grid, enc_cache) = encode_image(images, &self.encoder)?;
        let unroll = teacher_forced_unroll(&grid.features, targets, &self.decoder, rng, training)?;
        let (loss, loss_cache) = caption_loss(
            &unroll.step_logits,
            targets,
            &unroll.step_weights,
            self.cfg.lambda,
        )?;
        let (d_logits, d_weights) = caption_loss_backward(&loss_cache);
        let d_features = unroll_backward(&unroll, &mut self.decoder, &d_logits, &d_weights, &grid.features);
        let _ = encode_image_backward(&enc_cache, &mut self.encoder, &d_features);
        Ok((loss, unroll))
    }

    /// Encoder parameters carry the `enc.` prefix; the learning-rate split
    /// in the trainer keys off it.
    pub fn parameters(&self) -> Vec<&Parameter> {
        let mut v = self.encoder.params();
        v.extend(self.decoder.params());
        v
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = self.encoder.params_mut();
        v.extend(self.decoder.params_mut());
        v
    }
}

impl ParamSet for CaptionModel {
    fn groups(&self) -> Vec<&Parameter> {
        self.parameters()
    }

    fn groups_mut(&mut self) -> Vec<&mut Parameter> {
        self.parameters_mut()
    }
}
