//! Prediction (single image and batch) and evaluation reports: BLEU 1-4 on
//! the original distribution and on the abnormal-only subset, exact-match
//! accuracy on the normal finding, and the distinct-findings count.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use karte_core::bleu::{corpus_bleu, exact_match_normal, BleuReport};
use karte_core::infer::beam_search;
use karte_core::model::CaptionModel;
use karte_core::tensor::Tensor;
use karte_core::trace::AttentionTrace;
use karte_core::vocab::Vocabulary;

use crate::error::{Error, Result};
use crate::img::GrayImage;
use crate::manifest::{load_manifest, resolve_image};
use crate::modelio::load_model;
use crate::preprocess::{preprocess_eval, stack_batch};
use crate::trainer::grid_row;

pub struct Prediction {
    pub image_path: String,
    pub finding: String,
    pub log_prob: f64,
    pub trace: AttentionTrace,
}

/// Beam-searches one already-encoded sample and assembles its trace.
pub fn predict_encoded(
    model: &CaptionModel,
    grid: &karte_core::encoder::AnnotationGrid,
    vocab: &Vocabulary,
    beam_size: usize,
    max_len: usize,
) -> Result<(String, f64, AttentionTrace)> {
    let ranked = beam_search(grid, &model.decoder, beam_size, max_len)?;
    let best = ranked.first().ok_or_else(|| Error::Train {
        detail: "beam search returned no hypotheses".to_string(),
    })?;
    let text = vocab.decode(&best.to_sequence())?;
    let tokens: Vec<String> = best.tokens[1..]
        .iter()
        .map(|&id| vocab.display_token(id))
        .collect();
    let trace = AttentionTrace {
        grid_h: grid.grid_h,
        grid_w: grid.grid_w,
        rows: best.trace_rows.clone(),
        tokens,
    };
    trace.validate()?;
    Ok((text, best.log_prob, trace))
}

/// Full single-image pipeline: eval pre-processing, encoder, beam search.
pub fn predict_image(
    image_path: &Path,
    checkpoint: &Path,
    vocab_override: Option<&Path>,
    config_override: Option<&Path>,
    beam_override: Option<usize>,
    max_len_override: Option<usize>,
) -> Result<(String, f64, AttentionTrace)> {
    let (model, vocab, cfg) = load_model(checkpoint, vocab_override, config_override)?;
    let beam = beam_override.unwrap_or(cfg.beam_size);
    let max_len = max_len_override.unwrap_or_else(|| cfg.resolve_max_len(16));
    let img = GrayImage::load(image_path)?;
    let tensor = preprocess_eval(&img, &cfg.preprocess_config());
    let batch = stack_batch(&[&tensor]);
    let grid = model.encode(&batch)?;
    let (text, log_prob, trace) = predict_encoded(&model, &grid, &vocab, beam, max_len)?;
    Ok((text, log_prob, trace))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub pairs: usize,
    pub overall: BleuReport,
    /// Empty abnormal subsets are flagged, not errors.
    pub abnormal: Option<BleuReport>,
    pub abnormal_pairs: usize,
    /// `None` when the set has no normal references.
    pub exact_match_normal: Option<f64>,
    pub distinct_generated: usize,
    pub reference_unk_tokens: usize,
}

impl EvalReport {
    /// Human-readable `key: value` form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "pairs: {}", self.pairs);
        for (n, b) in self.overall.bleu.iter().enumerate() {
            let _ = writeln!(out, "bleu{}: {:.6}", n + 1, b);
        }
        for (n, p) in self.overall.precisions.iter().enumerate() {
            let smoothed = if self.overall.smoothed[n] { " (smoothed)" } else { "" };
            let _ = writeln!(out, "precision{}: {:.6}{smoothed}", n + 1, p);
        }
        let _ = writeln!(out, "brevity_penalty: {:.6}", self.overall.brevity_penalty);
        let _ = writeln!(out, "abnormal_pairs: {}", self.abnormal_pairs);
        match &self.abnormal {
            Some(rep) => {
                for (n, b) in rep.bleu.iter().enumerate() {
                    let _ = writeln!(out, "abnormal_bleu{}: {:.6}", n + 1, b);
                }
            }
            None => {
                let _ = writeln!(out, "abnormal_bleu: empty subset");
            }
        }
        match self.exact_match_normal {
            Some(acc) => {
                let _ = writeln!(out, "exact_match_normal: {:.6}", acc);
            }
            None => {
                let _ = writeln!(out, "exact_match_normal: n/a (no normal references)");
            }
        }
        let _ = writeln!(out, "distinct_generated_findings: {}", self.distinct_generated);
        let _ = writeln!(out, "reference_unk_tokens: {}", self.reference_unk_tokens);
        out
    }

    /// Machine-readable twin: the same keys, tab-separated.
    pub fn to_tsv(&self) -> String {
        self.to_text()
            .lines()
            .map(|line| line.replacen(": ", "\t", 1))
            .collect::<Vec<_>>()
            .join("\n")
            + "\n"
    }
}

pub struct EvalOutcome {
    pub report: EvalReport,
    pub predictions: Vec<Prediction>,
}

/// Runs beam-search prediction over a manifest and scores it. With
/// `abnormal_only`, samples whose reference equals the normal string are
/// dropped before prediction (the paper's second test set).
pub fn evaluate_manifest(
    manifest_path: &Path,
    checkpoint: &Path,
    beam_override: Option<usize>,
    abnormal_only: bool,
) -> Result<EvalOutcome> {
    let (model, vocab, cfg) = load_model(checkpoint, None, None)?;
    let beam = beam_override.unwrap_or(cfg.beam_size);
    let max_len = cfg.resolve_max_len(16);
    let mut samples = load_manifest(manifest_path, &cfg.normal_string)?;
    if abnormal_only {
        samples.retain(|s| !s.is_normal);
    }
    if samples.is_empty() {
        return Err(Error::Train {
            detail: "no samples to evaluate".to_string(),
        });
    }

    let ppcfg = cfg.preprocess_config();
    let mut predictions = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(cfg.batch_size.max(1)) {
        let tensors: Vec<Tensor> = chunk
            .iter()
            .map(|s| Ok(preprocess_eval(&GrayImage::load(&resolve_image(manifest_path, s))?, &ppcfg)))
            .collect::<Result<_>>()?;
        let refs: Vec<&Tensor> = tensors.iter().collect();
        let grid = model.encode(&stack_batch(&refs))?;
        for (i, sample) in chunk.iter().enumerate() {
            let row = grid_row(&grid, i);
            let (finding, log_prob, trace) = predict_encoded(&model, &row, &vocab, beam, max_len)?;
            predictions.push(Prediction {
                image_path: sample.image_path.clone(),
                finding,
                log_prob,
                trace,
            });
        }
    }

    let pairs: Vec<(String, String)> = predictions
        .iter()
        .zip(samples.iter())
        .map(|(p, s)| (p.finding.clone(), s.finding.clone()))
        .collect();
    let overall = corpus_bleu(&pairs, 4)?;
    let abnormal_pairs: Vec<(String, String)> = pairs
        .iter()
        .filter(|(_, reference)| reference != &cfg.normal_string)
        .cloned()
        .collect();
    let abnormal = if abnormal_pairs.is_empty() {
        None
    } else {
        Some(corpus_bleu(&abnormal_pairs, 4)?)
    };
    let exact = exact_match_normal(&pairs, &cfg.normal_string).ok();
    let distinct: BTreeSet<&str> = predictions.iter().map(|p| p.finding.as_str()).collect();
    let reference_unk_tokens: usize = samples
        .iter()
        .map(|s| vocab.encode(&s.finding, false).unk_count())
        .sum();

    Ok(EvalOutcome {
        report: EvalReport {
            pairs: pairs.len(),
            overall,
            abnormal_pairs: abnormal_pairs.len(),
            abnormal,
            exact_match_normal: exact,
            distinct_generated: distinct.len(),
            reference_unk_tokens,
        },
        predictions,
    })
}

/// `image_path⟨TAB⟩generated_finding⟨TAB⟩log_prob`, one line per sample.
pub fn predictions_tsv(predictions: &[Prediction]) -> String {
    let mut out = String::new();
    for p in predictions {
        let _ = writeln!(out, "{}\t{}\t{:.6}", p.image_path, p.finding, p.log_prob);
    }
    out
}

/// Writes predictions.tsv, report.txt and report.tsv into `out_dir`.
pub fn write_eval_outputs(outcome: &EvalOutcome, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let files = [
        ("predictions.tsv", predictions_tsv(&outcome.predictions)),
        ("report.txt", outcome.report.to_text()),
        ("report.tsv", outcome.report.to_tsv()),
    ];
    let mut written = Vec::new();
    for (name, content) in files {
        let path = out_dir.join(name);
        std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
