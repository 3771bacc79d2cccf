//! Run configuration: a UTF-8 `key=value` file with CLI-flag overrides.
//! Unknown keys are rejected; every run logs the fully resolved form.

use std::fmt::Write as _;
use std::path::Path;

use karte_core::dataset::SamplingMode;
use karte_core::encoder::{EncoderConfig, StageConfig};
use karte_core::model::ModelConfig;

use crate::error::{Error, Result};
use crate::preprocess::PreprocessConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    // data handling
    pub normal_string: String,
    pub exclude_exact: Vec<String>,
    pub exclude_prefix: Vec<String>,
    pub threshold: usize,
    // geometry
    pub image_size: usize,
    pub resize_size: usize,
    pub stage_channels: Vec<usize>,
    pub hidden: usize,
    /// 0 = follow `hidden`.
    pub attn_width: usize,
    // optimization
    pub batch_size: usize,
    pub lr_encoder: f64,
    pub lr_decoder: f64,
    pub lambda: f64,
    pub dropout: f64,
    pub grad_clip: f64,
    pub freeze_encoder: bool,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub sampling: SamplingMode,
    pub oversample_per_class: usize,
    // encoder pre-training
    pub pretrain_epochs: usize,
    pub lr_pretrain: f64,
    // decoding
    pub beam_size: usize,
    /// 0 = derive as 2 × longest training finding + 2.
    pub max_len: usize,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            normal_string: "異常なし".to_string(),
            exclude_exact: vec![],
            exclude_prefix: vec!["前回".to_string(), "手入力".to_string()],
            threshold: 5,
            image_size: 64,
            resize_size: 72,
            stage_channels: vec![16, 32, 64, 128],
            hidden: 64,
            attn_width: 0,
            batch_size: 16,
            lr_encoder: 1e-4,
            lr_decoder: 4e-4,
            lambda: 1.0,
            dropout: 0.5,
            grad_clip: 5.0,
            freeze_encoder: false,
            plateau_patience: 10,
            plateau_factor: 0.8,
            early_stop_patience: 20,
            max_epochs: 200,
            sampling: SamplingMode::Oversample,
            oversample_per_class: 100,
            pretrain_epochs: 15,
            lr_pretrain: 1e-3,
            beam_size: 3,
            max_len: 0,
            seed: 42,
        }
    }
}

impl Config {
    /// The full-size geometry preset selected by `--paper-scale`.
    pub fn apply_paper_scale(&mut self) {
        self.image_size = 224;
        self.resize_size = 256;
        self.stage_channels = vec![64, 128, 256, 512, 2048];
        self.hidden = 256;
    }

    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                detail: format!("{}:{}: expected key=value", path.display(), i + 1),
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| Error::Config {
                detail: format!("{}:{}: {e}", path.display(), i + 1),
            })?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| Error::Config {
                detail: format!("bad value `{value}` for key `{key}`"),
            })
        }
        fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
            if value.is_empty() {
                return Ok(vec![]);
            }
            value
                .split(',')
                .map(|v| parse(key, v.trim()))
                .collect()
        }
        match key {
            "normal_string" => self.normal_string = value.to_string(),
            "exclude_exact" => {
                self.exclude_exact = if value.is_empty() {
                    vec![]
                } else {
                    value.split(',').map(|s| s.trim().to_string()).collect()
                }
            }
            "exclude_prefix" => {
                self.exclude_prefix = if value.is_empty() {
                    vec![]
                } else {
                    value.split(',').map(|s| s.trim().to_string()).collect()
                }
            }
            "threshold" => self.threshold = parse(key, value)?,
            "image_size" => self.image_size = parse(key, value)?,
            "resize_size" => self.resize_size = parse(key, value)?,
            "stage_channels" => self.stage_channels = parse_list(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "attn_width" => self.attn_width = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr_encoder" => self.lr_encoder = parse(key, value)?,
            "lr_decoder" => self.lr_decoder = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "grad_clip" => self.grad_clip = parse(key, value)?,
            "freeze_encoder" => self.freeze_encoder = parse(key, value)?,
            "plateau_patience" => self.plateau_patience = parse(key, value)?,
            "plateau_factor" => self.plateau_factor = parse(key, value)?,
            "early_stop_patience" => self.early_stop_patience = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "sampling" => self.sampling = parse_sampling(value)?,
            "oversample_per_class" => self.oversample_per_class = parse(key, value)?,
            "pretrain_epochs" => self.pretrain_epochs = parse(key, value)?,
            "lr_pretrain" => self.lr_pretrain = parse(key, value)?,
            "beam_size" => self.beam_size = parse(key, value)?,
            "max_len" => self.max_len = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            other => {
                return Err(Error::Config {
                    detail: format!("unknown key `{other}`"),
                })
            }
        }
        Ok(())
    }

    /// Deterministic `key=value` dump, one key per line, sorted.
    pub fn to_text(&self) -> String {
        let mut pairs: Vec<(&str, String)> = vec![
            ("attn_width", self.attn_width.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("beam_size", self.beam_size.to_string()),
            ("dropout", self.dropout.to_string()),
            ("early_stop_patience", self.early_stop_patience.to_string()),
            ("exclude_exact", self.exclude_exact.join(",")),
            ("exclude_prefix", self.exclude_prefix.join(",")),
            ("freeze_encoder", self.freeze_encoder.to_string()),
            ("grad_clip", self.grad_clip.to_string()),
            ("hidden", self.hidden.to_string()),
            ("image_size", self.image_size.to_string()),
            ("lambda", self.lambda.to_string()),
            ("lr_decoder", self.lr_decoder.to_string()),
            ("lr_encoder", self.lr_encoder.to_string()),
            ("lr_pretrain", self.lr_pretrain.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("max_len", self.max_len.to_string()),
            ("normal_string", self.normal_string.clone()),
            ("oversample_per_class", self.oversample_per_class.to_string()),
            ("plateau_factor", self.plateau_factor.to_string()),
            ("plateau_patience", self.plateau_patience.to_string()),
            ("pretrain_epochs", self.pretrain_epochs.to_string()),
            ("resize_size", self.resize_size.to_string()),
            ("sampling", self.sampling.as_str().to_string()),
            ("seed", self.seed.to_string()),
            ("stage_channels", join_usize(&self.stage_channels)),
            ("threshold", self.threshold.to_string()),
        ];
        pairs.sort_by_key(|(k, _)| *k);
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// Pooling after every stage except the last.
    pub fn encoder_config(&self, pretrain_classes: usize) -> EncoderConfig {
        let n = self.stage_channels.len();
        EncoderConfig {
            in_channels: 3,
            image_size: self.image_size,
            kernel: 3,
            stages: self
                .stage_channels
                .iter()
                .enumerate()
                .map(|(i, &c)| StageConfig {
                    out_channels: c,
                    pool: i + 1 < n,
                })
                .collect(),
            pretrain_classes,
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            encoder: self.encoder_config(0),
            vocab_size,
            hidden: self.hidden,
            attn_width: self.resolved_attn_width(),
            dropout: self.dropout,
            lambda: self.lambda,
        }
    }

    /// The attention hidden width; defaults to the decoder hidden size.
    pub fn resolved_attn_width(&self) -> usize {
        if self.attn_width == 0 {
            self.hidden
        } else {
            self.attn_width
        }
    }

    pub fn preprocess_config(&self) -> PreprocessConfig {
        PreprocessConfig {
            crop_size: self.image_size,
            resize_size: self.resize_size,
        }
    }

    pub fn exclusion_rules(&self) -> Vec<karte_core::dataset::ExclusionRule> {
        let mut rules = Vec::new();
        for s in &self.exclude_exact {
            rules.push(karte_core::dataset::ExclusionRule::Exact(s.clone()));
        }
        for s in &self.exclude_prefix {
            rules.push(karte_core::dataset::ExclusionRule::Prefix(s.clone()));
        }
        rules
    }

    /// Decode-length cap: the configured value, or the derived default
    /// 2 × longest finding + 2.
    pub fn resolve_max_len(&self, longest_finding: usize) -> usize {
        if self.max_len > 0 {
            self.max_len
        } else {
            2 * longest_finding + 2
        }
    }
}

fn join_usize(xs: &[usize]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_sampling(value: &str) -> Result<SamplingMode> {
    match value {
        "over" => Ok(SamplingMode::Oversample),
        "under" => Ok(SamplingMode::Undersample),
        "natural" => Ok(SamplingMode::Natural),
        other => Err(Error::Config {
            detail: format!("sampling must be over|under|natural, got `{other}`"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_training_conditions() {
        let cfg = Config::default();
        assert_eq!(cfg.batch_size, 16);
        assert!((cfg.lr_encoder - 1e-4).abs() < 1e-18);
        assert!((cfg.lr_decoder - 4e-4).abs() < 1e-18);
        assert!((cfg.lambda - 1.0).abs() < 1e-18);
        assert_eq!(cfg.plateau_patience, 10);
        assert!((cfg.plateau_factor - 0.8).abs() < 1e-18);
        assert_eq!(cfg.early_stop_patience, 20);
        assert_eq!(cfg.max_epochs, 200);
        assert!((cfg.dropout - 0.5).abs() < 1e-18);
    }

    #[test]
    fn desk_geometry_resolves_to_8x8x128() {
        let cfg = Config::default();
        let enc = cfg.encoder_config(13);
        enc.validate().unwrap();
        assert_eq!(enc.grid_extent(), 8);
        assert_eq!(enc.annot_dim(), 128);
    }

    #[test]
    fn paper_scale_preset() {
        let mut cfg = Config::default();
        cfg.apply_paper_scale();
        let enc = cfg.encoder_config(11);
        enc.validate().unwrap();
        assert_eq!(enc.grid_extent(), 14);
        assert_eq!(enc.annot_dim(), 2048);
        assert_eq!(cfg.hidden, 256);
        assert_eq!(cfg.resolved_attn_width(), 256);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut cfg = Config::default();
        assert!(cfg.set("no_such_key", "1").is_err());
        assert!(cfg.set("hidden", "128").is_ok());
        assert_eq!(cfg.hidden, 128);
    }

    #[test]
    fn file_round_trip_through_resolved_text() {
        let mut cfg = Config::default();
        cfg.set("sampling", "under").unwrap();
        cfg.set("stage_channels", "8,16").unwrap();
        cfg.set("normal_string", "正常").unwrap();
        let text = cfg.to_text();
        let dir = std::env::temp_dir().join(format!("karte-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("config.txt");
        std::fs::write(&path, &text).unwrap();
        let mut back = Config::default();
        back.load_file(&path).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn max_len_derivation() {
        let mut cfg = Config::default();
        assert_eq!(cfg.resolve_max_len(7), 16);
        cfg.set("max_len", "9").unwrap();
        assert_eq!(cfg.resolve_max_len(7), 9);
    }
}
