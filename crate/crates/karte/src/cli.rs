//! Command-line surface: synth-data, pretrain, train, predict, evaluate,
//! visualize and gradcheck subcommands over the library pipeline.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::evaluate::{evaluate_manifest, predict_image, write_eval_outputs};
use crate::pretrain::pretrain_loop;
use crate::synth::{generate_synthetic_corpus, SynthConfig};
use crate::trainer::train;
use crate::visualize::render_heatmaps;

/// Character-level radiograph caption training and inference.
#[derive(Parser)]
#[command(name = "karte", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic image/finding corpus (images, manifest.tsv, report.txt)
    SynthData {
        /// Number of images to generate
        #[arg(long)]
        n: usize,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Side length of the generated square images
        #[arg(long, default_value_t = 96)]
        image_size: usize,
        /// Fraction of images without findings
        #[arg(long, default_value_t = 0.75)]
        normal_fraction: f64,
        /// Generator seed (falls back to KARTE_SEED, then 42)
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Pre-train the encoder as a classifier over the manifest's class labels
    Pretrain {
        /// Manifest TSV: image_path<TAB>finding<TAB>class_label
        #[arg(long)]
        manifest: PathBuf,
        /// Output checkpoint path
        #[arg(long)]
        out: PathBuf,
        /// key=value configuration file
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of pre-training epochs
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Use the full-size 224-pixel geometry
        #[arg(long)]
        paper_scale: bool,
    },
    /// Train the captioning model and write checkpoints plus split manifests
    Train {
        /// Manifest TSV: image_path<TAB>finding[<TAB>class_label]
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for checkpoints, logs and split manifests
        #[arg(long)]
        out: PathBuf,
        /// Keep only findings occurring at least this often (paper: 5 or 30)
        #[arg(long)]
        threshold: Option<usize>,
        /// Epoch sampler: over | under | natural
        #[arg(long)]
        sampling: Option<String>,
        /// key=value configuration file
        #[arg(long)]
        config: Option<PathBuf>,
        /// Encoder checkpoint from `pretrain` to initialize from
        #[arg(long)]
        encoder_init: Option<PathBuf>,
        /// Use the full-size 224-pixel geometry
        #[arg(long)]
        paper_scale: bool,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate a finding for one image and write its attention trace
    Predict {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Beam width (default from the checkpoint config)
        #[arg(long)]
        beam: Option<usize>,
        /// Generated-length cap (default from the checkpoint config)
        #[arg(long)]
        max_len: Option<usize>,
        /// Vocabulary file (default <checkpoint>.vocab)
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Configuration file (default <checkpoint>.config)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trace output path (default <image stem>.trace.tsv)
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Predict over a manifest and report BLEU 1-4, exact-match and counts
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Evaluate only samples whose reference differs from the normal string
        #[arg(long)]
        abnormal_only: bool,
        #[arg(long)]
        beam: Option<usize>,
        /// Directory for predictions.tsv, report.txt and report.tsv
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render per-character attention overlays and the summed map as PNGs
    Visualize {
        /// Attention trace file written by `predict`
        #[arg(long)]
        trace: PathBuf,
        /// Base image the trace belongs to
        #[arg(long)]
        image: PathBuf,
        /// Output directory for the PNG overlays
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the finite-difference gradient suite over every layer
    Gradcheck {
        /// Central-difference step
        #[arg(long, default_value_t = 1e-5)]
        epsilon: f64,
    },
}

/// Seed precedence: explicit flag, then KARTE_SEED, then the config value.
fn resolve_seed(flag: Option<u64>, cfg: &mut Config) {
    if let Some(seed) = flag {
        cfg.seed = seed;
    } else if let Ok(value) = std::env::var("KARTE_SEED") {
        if let Ok(seed) = value.parse() {
            cfg.seed = seed;
        }
    }
}

fn build_config(
    file: Option<&Path>,
    paper_scale: bool,
    seed: Option<u64>,
) -> Result<Config> {
    let mut cfg = Config::default();
    if paper_scale {
        cfg.apply_paper_scale();
    }
    if let Some(path) = file {
        cfg.load_file(path)?;
    }
    resolve_seed(seed, &mut cfg);
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthData {
            n,
            out,
            image_size,
            normal_fraction,
            seed,
        } => {
            let mut cfg = Config::default();
            resolve_seed(seed, &mut cfg);
            let synth = SynthConfig {
                n,
                image_size,
                normal_fraction,
                seed: cfg.seed,
            };
            let outcome = generate_synthetic_corpus(&synth, &out)?;
            println!(
                "wrote {} images ({} normal) and {}",
                outcome.images,
                outcome.normal_images,
                outcome.manifest.display()
            );
            Ok(())
        }
        Command::Pretrain {
            manifest,
            out,
            config,
            epochs,
            seed,
            paper_scale,
        } => {
            let mut cfg = build_config(config.as_deref(), paper_scale, seed)?;
            if let Some(e) = epochs {
                cfg.pretrain_epochs = e;
            }
            eprintln!("resolved config:\n{}", cfg.to_text());
            let outcome = pretrain_loop(&manifest, &out, &cfg)?;
            println!(
                "pretrained {} classes, best validation accuracy {:.4} at epoch {} ({} run)",
                outcome.classes.len(),
                outcome.best_val_accuracy,
                outcome.best_epoch,
                outcome.epochs_run
            );
            println!("checkpoint: {}", out.display());
            Ok(())
        }
        Command::Train {
            manifest,
            out,
            threshold,
            sampling,
            config,
            encoder_init,
            paper_scale,
            max_epochs,
            seed,
        } => {
            let mut cfg = build_config(config.as_deref(), paper_scale, seed)?;
            if let Some(t) = threshold {
                if t == 0 {
                    return Err(Error::Config {
                        detail: "threshold must be at least 1".into(),
                    });
                }
                cfg.threshold = t;
            }
            if let Some(s) = &sampling {
                cfg.set("sampling", s)?;
            }
            if let Some(m) = max_epochs {
                cfg.max_epochs = m;
            }
            eprintln!("resolved config:\n{}", cfg.to_text());
            let outcome = train(&manifest, &out, &cfg, encoder_init.as_deref())?;
            println!(
                "finished after {} epochs; best BLEU-4 {:.4} at epoch {} ({})",
                outcome.epochs_run,
                outcome.best_bleu4,
                outcome.best_epoch,
                if outcome.monitored_validation {
                    "validation"
                } else {
                    "training pairs; validation split was empty"
                }
            );
            println!("best checkpoint: {}", outcome.best_checkpoint.display());
            Ok(())
        }
        Command::Predict {
            image,
            checkpoint,
            beam,
            max_len,
            vocab,
            config,
            trace_out,
        } => {
            let (finding, log_prob, trace) = predict_image(
                &image,
                &checkpoint,
                vocab.as_deref(),
                config.as_deref(),
                beam,
                max_len,
            )?;
            let trace_path = trace_out.unwrap_or_else(|| {
                let stem = image
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or("prediction");
                PathBuf::from(format!("{stem}.trace.tsv"))
            });
            std::fs::write(&trace_path, trace.to_text()).map_err(|e| Error::io(&trace_path, e))?;
            println!("{finding}");
            eprintln!("log_prob: {log_prob:.6}");
            eprintln!("trace: {}", trace_path.display());
            Ok(())
        }
        Command::Evaluate {
            manifest,
            checkpoint,
            abnormal_only,
            beam,
            out,
        } => {
            let outcome = evaluate_manifest(&manifest, &checkpoint, beam, abnormal_only)?;
            print!("{}", outcome.report.to_text());
            if let Some(dir) = out {
                let written = write_eval_outputs(&outcome, &dir)?;
                for path in written {
                    eprintln!("wrote {}", path.display());
                }
            }
            Ok(())
        }
        Command::Visualize { trace, image, out } => {
            let written = render_heatmaps(&trace, &image, &out)?;
            println!("wrote {} overlays to {}", written.len(), out.display());
            Ok(())
        }
        Command::Gradcheck { epsilon } => {
            let entries = karte_core::gradsuite::run_full_suite(epsilon);
            for e in &entries {
                let verdict = if e.max_rel_err < 1e-4 { "PASS" } else { "FAIL" };
                println!("{} {verdict}", karte_core::gradsuite::format_entry(e));
            }
            let worst = karte_core::gradsuite::worst_entry(&entries).unwrap();
            println!(
                "worst: {} / {} = {:.3e}",
                worst.check, worst.group, worst.max_rel_err
            );
            if worst.max_rel_err < 1e-4 {
                Ok(())
            } else {
                Err(Error::Train {
                    detail: format!(
                        "gradient check failed: {} / {} = {:.3e}",
                        worst.check, worst.group, worst.max_rel_err
                    ),
                })
            }
        }
    }
}

/// Parses `argv` and runs; returns the process exit status. Usage errors
/// exit 2 (clap's convention); runtime failures print one line to stderr
/// and return 1.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
