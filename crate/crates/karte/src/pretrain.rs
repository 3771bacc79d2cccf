//! Encoder pre-training: image-level classification over the manifest's
//! class labels, 80/20 train/validation, best-validation checkpointing.

use std::collections::BTreeMap;
use std::path::Path;

use karte_core::adam::AdamHyper;
use karte_core::checkpoint;
use karte_core::encoder::{classify_forward, encode_image, pretrain_step, EncoderParams, PretrainHead};
use karte_core::rng::RngState;
use karte_core::tensor::{Parameter, Tensor};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::img::GrayImage;
use crate::manifest::{load_manifest, resolve_image};
use crate::preprocess::{preprocess_eval, preprocess_train, stack_batch};

pub struct PretrainOutcome {
    pub classes: Vec<String>,
    pub best_val_accuracy: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Trains the encoder + classification head and writes the best-validation
/// checkpoint (encoder stages prefixed `enc.`, head prefixed `head.`) to
/// `out_path`. With zero epochs the initialization itself is saved.
pub fn pretrain_loop(manifest_path: &Path, out_path: &Path, cfg: &Config) -> Result<PretrainOutcome> {
    let samples = load_manifest(manifest_path, &cfg.normal_string)?;
    // one record per image; the first class label wins
    let mut by_image: BTreeMap<&str, &str> = BTreeMap::new();
    for s in &samples {
        let label = s.class_label.as_deref().ok_or_else(|| Error::Train {
            detail: format!("sample {} has no class label for pre-training", s.image_path),
        })?;
        by_image.entry(s.image_path.as_str()).or_insert(label);
    }
    if by_image.is_empty() {
        return Err(Error::Train {
            detail: "pre-training manifest is empty".to_string(),
        });
    }

    // class ids in first-occurrence order over the manifest
    let mut classes: Vec<String> = Vec::new();
    let mut class_ids: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &samples {
        let label = s.class_label.as_deref().unwrap();
        if !class_ids.contains_key(label) {
            class_ids.insert(label, classes.len());
            classes.push(label.to_string());
        }
    }

    let records: Vec<(&str, usize)> = by_image
        .iter()
        .map(|(path, label)| (*path, class_ids[label]))
        .collect();

    let mut master = RngState::new(cfg.seed);
    let mut rng_split = master.fork();
    let mut rng_init = master.fork();
    let mut rng_train = master.fork();

    let mut order: Vec<usize> = (0..records.len()).collect();
    rng_split.shuffle(&mut order);
    let val_count = (records.len() / 5).max(1).min(records.len() - 1);
    let (val_idx, train_idx) = order.split_at(val_count);

    let ppcfg = cfg.preprocess_config();
    let mut grays: BTreeMap<&str, GrayImage> = BTreeMap::new();
    for (path, _) in &records {
        let img = GrayImage::load(&resolve_image(manifest_path, &samples_for(path, &samples)))?;
        grays.insert(path, img);
    }
    let val_tensors: Vec<(Tensor, usize)> = val_idx
        .iter()
        .map(|&i| {
            let (path, label) = records[i];
            (preprocess_eval(&grays[path], &ppcfg), label)
        })
        .collect();

    let enc_cfg = cfg.encoder_config(classes.len());
    let mut enc = EncoderParams::init(enc_cfg, &mut rng_init)?;
    let mut head = PretrainHead::init(enc.cfg.annot_dim(), classes.len(), &mut rng_init);
    let hyper = AdamHyper::default();

    let mut best: Option<(f64, Vec<Parameter>, Vec<Parameter>, usize)> = None;
    let mut epochs_run = 0;
    for epoch in 1..=cfg.pretrain_epochs {
        epochs_run = epoch;
        let mut rng_epoch = rng_train.fork();
        let mut idx = train_idx.to_vec();
        rng_epoch.shuffle(&mut idx);
        for chunk in idx.chunks(cfg.batch_size) {
            let tensors: Vec<Tensor> = chunk
                .iter()
                .map(|&i| preprocess_train(&grays[records[i].0], &ppcfg, &mut rng_epoch))
                .collect();
            let refs: Vec<&Tensor> = tensors.iter().collect();
            let batch = stack_batch(&refs);
            let labels: Vec<usize> = chunk.iter().map(|&i| records[i].1).collect();
            pretrain_step(&batch, &labels, &mut enc, &mut head, cfg.lr_pretrain, &hyper)?;
        }

        let accuracy = validation_accuracy(&val_tensors, &enc, &head)?;
        let improved = best.as_ref().map(|(b, ..)| accuracy > *b).unwrap_or(true);
        if improved {
            let enc_snapshot: Vec<Parameter> = enc.params().into_iter().cloned().collect();
            let head_snapshot = vec![head.weight.clone(), head.bias.clone()];
            best = Some((accuracy, enc_snapshot, head_snapshot, epoch));
        }
    }

    let (best_val_accuracy, best_epoch) = match &best {
        Some((acc, enc_params, head_params, epoch)) => {
            let refs: Vec<&Parameter> = enc_params.iter().chain(head_params.iter()).collect();
            write_bytes(out_path, &checkpoint::serialize(&refs, false))?;
            (*acc, *epoch)
        }
        None => {
            // zero epochs: persist the initialization
            let mut refs: Vec<&Parameter> = enc.params();
            refs.push(&head.weight);
            refs.push(&head.bias);
            write_bytes(out_path, &checkpoint::serialize(&refs, false))?;
            (0.0, 0)
        }
    };

    Ok(PretrainOutcome {
        classes,
        best_val_accuracy,
        best_epoch,
        epochs_run,
    })
}

fn samples_for(path: &str, samples: &[karte_core::dataset::Sample]) -> karte_core::dataset::Sample {
    samples
        .iter()
        .find(|s| s.image_path == path)
        .expect("path came from samples")
        .clone()
}

fn validation_accuracy(
    val: &[(Tensor, usize)],
    enc: &EncoderParams,
    head: &PretrainHead,
) -> Result<f64> {
    if val.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for (tensor, label) in val {
        let refs = [tensor];
        let batch = stack_batch(&refs);
        let (grid, _) = encode_image(&batch, enc)?;
        let (logits, _) = classify_forward(&grid, head)?;
        if argmax(logits.row(0)) == *label {
            correct += 1;
        }
    }
    Ok(correct as f64 / val.len() as f64)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic_corpus, SynthConfig};

    fn tmp_dir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("karte-pretrain-{}-{tag}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn small_cfg() -> Config {
        let mut cfg = Config::default();
        cfg.set("image_size", "32").unwrap();
        cfg.set("resize_size", "36").unwrap();
        cfg.set("stage_channels", "4,8,16").unwrap();
        cfg.set("hidden", "16").unwrap();
        cfg.set("attn_width", "16").unwrap();
        cfg
    }

    #[test]
    fn zero_epochs_saves_the_initialization() {
        let dir = tmp_dir("zero");
        let out = generate_synthetic_corpus(&SynthConfig::new(12, 1), &dir.join("corpus")).unwrap();
        let mut cfg = small_cfg();
        cfg.set("pretrain_epochs", "0").unwrap();
        let ckpt = dir.join("enc.kcpt");
        let outcome = pretrain_loop(&out.manifest, &ckpt, &cfg).unwrap();
        assert_eq!(outcome.epochs_run, 0);
        let loaded = checkpoint::parse(&std::fs::read(&ckpt).unwrap()).unwrap();
        assert!(loaded.params.iter().any(|p| p.name.starts_with("enc.")));
        assert!(loaded.params.iter().any(|p| p.name.starts_with("head.")));
    }

    #[test]
    fn checkpoint_round_trip_reproduces_forward_outputs() {
        let dir = tmp_dir("rt");
        let out = generate_synthetic_corpus(&SynthConfig::new(16, 2), &dir.join("corpus")).unwrap();
        let mut cfg = small_cfg();
        cfg.set("pretrain_epochs", "1").unwrap();
        let ckpt = dir.join("enc.kcpt");
        let outcome = pretrain_loop(&out.manifest, &ckpt, &cfg).unwrap();

        // load twice into fresh parameter sets; forwards must agree bit-exactly
        let bytes = std::fs::read(&ckpt).unwrap();
        let loaded = checkpoint::parse(&bytes).unwrap();
        let enc_cfg = cfg.encoder_config(outcome.classes.len());
        let mut rng_a = RngState::new(9);
        let mut rng_b = RngState::new(1009);
        let mut enc_a = EncoderParams::init(enc_cfg.clone(), &mut rng_a).unwrap();
        let mut enc_b = EncoderParams::init(enc_cfg, &mut rng_b).unwrap();
        checkpoint::load_into(&loaded, &mut enc_a.params_mut(), false).unwrap();
        checkpoint::load_into(&loaded, &mut enc_b.params_mut(), false).unwrap();
        let probe = Tensor::uniform(&[1, 3, 32, 32], -1.0, 1.0, &mut RngState::new(4));
        let (grid_a, _) = encode_image(&probe, &enc_a).unwrap();
        let (grid_b, _) = encode_image(&probe, &enc_b).unwrap();
        assert_eq!(grid_a.features, grid_b.features);
    }

    // Synthetic class set: validation accuracy must clear 3x chance.
    #[test]
    fn learns_above_three_times_chance() {
        let dir = tmp_dir("learn");
        let out = generate_synthetic_corpus(&SynthConfig::new(160, 3), &dir.join("corpus")).unwrap();
        let mut cfg = small_cfg();
        cfg.set("pretrain_epochs", "12").unwrap();
        let ckpt = dir.join("enc.kcpt");
        let outcome = pretrain_loop(&out.manifest, &ckpt, &cfg).unwrap();
        let chance = 1.0 / outcome.classes.len() as f64;
        assert!(
            outcome.best_val_accuracy >= 3.0 * chance,
            "accuracy {} vs chance {chance} over {} classes",
            outcome.best_val_accuracy,
            outcome.classes.len()
        );
    }
}
