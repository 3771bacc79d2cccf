//! End-to-end caption training: manifest -> exclusions -> threshold ->
//! vocabulary -> stratified split -> epoch loop with the configured
//! sampler, per-group learning rates, plateau decay, BLEU-4 early stopping
//! and best-checkpoint tracking.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use karte_core::adam::{adam_step, clip_global_norm, AdamHyper};
use karte_core::bleu::corpus_bleu;
use karte_core::checkpoint;
use karte_core::dataset::{
    apply_exclusions, plan_epoch_natural, plan_epoch_oversample, plan_epoch_undersample,
    split_dataset, threshold_filter, Sample, SamplingMode,
};
use karte_core::decoder::PaddedTargets;
use karte_core::encoder::AnnotationGrid;
use karte_core::gradcheck::ParamSet;
use karte_core::infer::greedy_decode;
use karte_core::model::CaptionModel;
use karte_core::rng::RngState;
use karte_core::schedule::{EarlyStop, PlateauSchedule, StopDecision};
use karte_core::tensor::Tensor;
use karte_core::vocab::{TokenSequence, Vocabulary};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::img::GrayImage;
use crate::manifest::{load_manifest, resolve_image, write_manifest};
use crate::modelio::{rel_path, save_model};
use crate::preprocess::{preprocess_eval, preprocess_train, stack_batch};

pub struct TrainOutcome {
    pub best_bleu4: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_checkpoint: PathBuf,
    pub final_checkpoint: PathBuf,
    /// False when the validation split was empty and the training pairs
    /// were monitored instead.
    pub monitored_validation: bool,
    pub distinct_findings: usize,
    pub character_count: usize,
    pub train_size: usize,
    pub validation_size: usize,
    pub test_size: usize,
}

/// One epoch's log record; written tab-separated, one line per epoch.
struct LogRecord {
    epoch: usize,
    mean_loss: f64,
    monitor_bleu4: f64,
    lr_encoder: f64,
    lr_decoder: f64,
    plan_len: usize,
    abnormal: usize,
    normal: usize,
    wall_secs: f64,
}

impl LogRecord {
    fn header() -> &'static str {
        "epoch\tmean_loss\tmonitor_bleu4\tlr_encoder\tlr_decoder\tplan_len\tabnormal\tnormal\twall_secs"
    }

    fn line(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.6}\t{:e}\t{:e}\t{}\t{}\t{}\t{:.3}",
            self.epoch,
            self.mean_loss,
            self.monitor_bleu4,
            self.lr_encoder,
            self.lr_decoder,
            self.plan_len,
            self.abnormal,
            self.normal,
            self.wall_secs
        )
    }
}

pub fn train(
    manifest_path: &Path,
    out_dir: &Path,
    cfg: &Config,
    encoder_init: Option<&Path>,
) -> Result<TrainOutcome> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let samples = load_manifest(manifest_path, &cfg.normal_string)?;
    let (samples, excluded) = apply_exclusions(samples, &cfg.exclusion_rules());
    let samples = threshold_filter(samples, cfg.threshold)?;

    let findings: Vec<&str> = samples.iter().map(|s| s.finding.as_str()).collect();
    let vocab = Vocabulary::build(&findings)?;
    let distinct: std::collections::BTreeSet<&str> = findings.iter().copied().collect();
    let longest = findings.iter().map(|f| f.chars().count()).max().unwrap_or(1);

    let mut resolved = cfg.clone();
    resolved.max_len = cfg.resolve_max_len(longest);

    let mut master = RngState::new(cfg.seed);
    let mut rng_split = master.fork();
    let mut rng_init = master.fork();
    let mut rng_train = master.fork();

    let split = split_dataset(&samples, (0.8, 0.1, 0.1), cfg.threshold, &mut rng_split)?;

    println!("dataset: {} samples after threshold {}", samples.len(), cfg.threshold);
    println!("distinct findings: {}", distinct.len());
    println!("characters: {} (vocabulary size {})", vocab.size() - 4, vocab.size());
    println!("longest finding: {longest} characters (max_len {})", resolved.max_len);
    println!(
        "split: {} train / {} validation / {} test",
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );
    for (rule, count) in cfg.exclusion_rules().iter().zip(excluded.iter()) {
        println!("excluded by {rule:?}: {count}");
    }

    // persist run inputs
    std::fs::write(out_dir.join("config.resolved"), resolved.to_text())
        .map_err(|e| Error::io(out_dir.join("config.resolved"), e))?;
    std::fs::write(out_dir.join("vocab.txt"), vocab.to_text())
        .map_err(|e| Error::io(out_dir.join("vocab.txt"), e))?;
    let relocate = |list: &[Sample]| -> Vec<Sample> {
        list.iter()
            .map(|s| {
                let mut out = s.clone();
                out.image_path = rel_path(out_dir, &resolve_image(manifest_path, s));
                out
            })
            .collect()
    };
    write_manifest(&relocate(&split.train), &out_dir.join("split.train.tsv"))?;
    write_manifest(&relocate(&split.validation), &out_dir.join("split.val.tsv"))?;
    write_manifest(&relocate(&split.test), &out_dir.join("split.test.tsv"))?;

    // preload images once per unique path
    let mut grays: BTreeMap<&str, GrayImage> = BTreeMap::new();
    for s in split.train.iter().chain(split.validation.iter()) {
        if !grays.contains_key(s.image_path.as_str()) {
            grays.insert(&s.image_path, GrayImage::load(&resolve_image(manifest_path, s))?);
        }
    }
    let ppcfg = resolved.preprocess_config();

    // monitor pairs: validation split, or the training pairs when empty
    let monitored_validation = !split.validation.is_empty();
    let monitor_samples: &[Sample] = if monitored_validation {
        &split.validation
    } else {
        &split.train
    };
    let monitor_tensors: Vec<(Tensor, &str)> = monitor_samples
        .iter()
        .map(|s| (preprocess_eval(&grays[s.image_path.as_str()], &ppcfg), s.finding.as_str()))
        .collect();

    let targets: Vec<TokenSequence> = split
        .train
        .iter()
        .map(|s| vocab.encode(&s.finding, true))
        .collect();

    let mut model = CaptionModel::init(resolved.model_config(vocab.size()), &mut rng_init)?;
    if let Some(init_path) = encoder_init {
        let bytes = std::fs::read(init_path).map_err(|e| Error::io(init_path, e))?;
        let loaded = checkpoint::parse(&bytes)?;
        checkpoint::load_into(&loaded, &mut model.encoder.params_mut(), false)?;
        println!("encoder initialized from {}", init_path.display());
    }

    let hyper = AdamHyper::default();
    let mut lr_encoder = resolved.lr_encoder;
    let mut lr_decoder = resolved.lr_decoder;
    let mut plateau = PlateauSchedule::new(resolved.plateau_patience, resolved.plateau_factor);
    let mut early_stop = EarlyStop::new(resolved.early_stop_patience);

    let best_path = out_dir.join("best.kcpt");
    let final_path = out_dir.join("final.kcpt");
    let mut log = String::from(LogRecord::header());
    log.push('\n');

    let mut epochs_run = 0;
    for epoch in 1..=resolved.max_epochs {
        epochs_run = epoch;
        let started = Instant::now();
        let mut rng_epoch = rng_train.fork();
        let plan = match resolved.sampling {
            SamplingMode::Oversample => {
                plan_epoch_oversample(&split.train, resolved.oversample_per_class, &mut rng_epoch)?
            }
            SamplingMode::Undersample => plan_epoch_undersample(&split.train, &mut rng_epoch)?,
            SamplingMode::Natural => plan_epoch_natural(&split.train, &mut rng_epoch),
        };

        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in plan.order.chunks(resolved.batch_size) {
            let tensors: Vec<Tensor> = chunk
                .iter()
                .map(|&i| {
                    preprocess_train(&grays[split.train[i].image_path.as_str()], &ppcfg, &mut rng_epoch)
                })
                .collect();
            let refs: Vec<&Tensor> = tensors.iter().collect();
            let images = stack_batch(&refs);
            let seqs: Vec<TokenSequence> = chunk.iter().map(|&i| targets[i].clone()).collect();
            let padded = PaddedTargets::from_sequences(&seqs)?;

            model.zero_grads();
            let (loss, _) = model.train_batch(&images, &padded, &mut rng_epoch, true)?;
            if !loss.is_finite() {
                return Err(Error::Train {
                    detail: format!("non-finite loss at epoch {epoch}, batch {batches}"),
                });
            }
            if resolved.grad_clip > 0.0 {
                clip_global_norm(&mut model.parameters_mut(), resolved.grad_clip);
            }
            for p in model.parameters_mut() {
                let encoder_param = p.name.starts_with("enc.");
                if encoder_param && resolved.freeze_encoder {
                    continue;
                }
                let lr = if encoder_param { lr_encoder } else { lr_decoder };
                adam_step(p, lr, &hyper)?;
            }
            loss_sum += loss;
            batches += 1;
        }
        let mean_loss = if batches > 0 { loss_sum / batches as f64 } else { 0.0 };

        let monitor_bleu4 = monitor_bleu4(&model, &vocab, &monitor_tensors, resolved.max_len, resolved.batch_size)?;

        if early_stop.observe(monitor_bleu4) {
            save_model(&best_path, &model, &vocab, &resolved)?;
        }
        if plateau.observe(monitor_bleu4) {
            lr_encoder *= resolved.plateau_factor;
            lr_decoder *= resolved.plateau_factor;
        }

        let record = LogRecord {
            epoch,
            mean_loss,
            monitor_bleu4,
            lr_encoder,
            lr_decoder,
            plan_len: plan.order.len(),
            abnormal: plan.abnormal_count,
            normal: plan.normal_count,
            wall_secs: started.elapsed().as_secs_f64(),
        };
        println!("{}", record.line());
        let _ = writeln!(log, "{}", record.line());

        if early_stop.decision() == StopDecision::Stop {
            println!("early stop at epoch {epoch} (best epoch {})", early_stop.best_epoch());
            break;
        }
    }

    save_model(&final_path, &model, &vocab, &resolved)?;
    if !best_path.is_file() {
        // zero-epoch runs have no observed best; the initialization is it
        save_model(&best_path, &model, &vocab, &resolved)?;
    }
    std::fs::write(out_dir.join("train.log.tsv"), log)
        .map_err(|e| Error::io(out_dir.join("train.log.tsv"), e))?;

    Ok(TrainOutcome {
        best_bleu4: early_stop.best().unwrap_or(0.0),
        best_epoch: early_stop.best_epoch(),
        epochs_run,
        best_checkpoint: best_path,
        final_checkpoint: final_path,
        monitored_validation,
        distinct_findings: distinct.len(),
        character_count: vocab.size() - 4,
        train_size: split.train.len(),
        validation_size: split.validation.len(),
        test_size: split.test.len(),
    })
}

/// Greedy-decodes the monitor set in encoder batches and scores corpus
/// BLEU-4 against the references.
fn monitor_bleu4(
    model: &CaptionModel,
    vocab: &Vocabulary,
    monitor: &[(Tensor, &str)],
    max_len: usize,
    batch_size: usize,
) -> Result<f64> {
    if monitor.is_empty() {
        return Ok(0.0);
    }
    let mut pairs: Vec<(String, String)> = Vec::with_capacity(monitor.len());
    for chunk in monitor.chunks(batch_size) {
        let refs: Vec<&Tensor> = chunk.iter().map(|(t, _)| t).collect();
        let batch = stack_batch(&refs);
        let grid = model.encode(&batch)?;
        for (i, (_, reference)) in chunk.iter().enumerate() {
            let row = grid_row(&grid, i);
            let hyp = greedy_decode(&row, &model.decoder, max_len)?;
            let text = vocab.decode(&hyp.to_sequence())?;
            pairs.push((text, reference.to_string()));
        }
    }
    Ok(corpus_bleu(&pairs, 4)?.bleu[3])
}

/// One sample's annotation grid out of a batch.
pub fn grid_row(grid: &AnnotationGrid, index: usize) -> AnnotationGrid {
    let &[_, l, d] = grid.features.shape() else { panic!("rank-3 grid expected") };
    let data = grid.features.data()[index * l * d..(index + 1) * l * d].to_vec();
    AnnotationGrid {
        features: Tensor::from_vec(&[1, l, d], data),
        grid_h: grid.grid_h,
        grid_w: grid.grid_w,
    }
}
