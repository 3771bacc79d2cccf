//! Checkpoint files plus their sidecars: `<ckpt>.vocab` (the vocabulary
//! text format) and `<ckpt>.config` (the resolved run configuration), so a
//! checkpoint alone is enough to predict.

use std::path::{Path, PathBuf};

use karte_core::checkpoint;
use karte_core::model::CaptionModel;
use karte_core::rng::RngState;
use karte_core::vocab::Vocabulary;

use crate::config::Config;
use crate::error::{Error, Result};

pub fn vocab_sidecar(ckpt: &Path) -> PathBuf {
    sidecar(ckpt, "vocab")
}

pub fn config_sidecar(ckpt: &Path) -> PathBuf {
    sidecar(ckpt, "config")
}

fn sidecar(ckpt: &Path, ext: &str) -> PathBuf {
    let mut name = ckpt.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(ext);
    ckpt.with_file_name(name)
}

pub fn save_model(path: &Path, model: &CaptionModel, vocab: &Vocabulary, cfg: &Config) -> Result<()> {
    let bytes = checkpoint::serialize(&model.parameters(), true);
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    std::fs::write(vocab_sidecar(path), vocab.to_text())
        .map_err(|e| Error::io(vocab_sidecar(path), e))?;
    std::fs::write(config_sidecar(path), cfg.to_text())
        .map_err(|e| Error::io(config_sidecar(path), e))?;
    Ok(())
}

/// Rebuilds a model from a checkpoint. Vocabulary and config come from the
/// sidecar files unless explicit paths are given.
pub fn load_model(
    ckpt: &Path,
    vocab_path: Option<&Path>,
    config_path: Option<&Path>,
) -> Result<(CaptionModel, Vocabulary, Config)> {
    let vocab_path = vocab_path.map(Path::to_path_buf).unwrap_or_else(|| vocab_sidecar(ckpt));
    let config_path = config_path.map(Path::to_path_buf).unwrap_or_else(|| config_sidecar(ckpt));

    let vocab_text = std::fs::read_to_string(&vocab_path).map_err(|e| Error::io(&vocab_path, e))?;
    let vocab = Vocabulary::from_text(&vocab_text)?;
    let mut cfg = Config::default();
    cfg.load_file(&config_path)?;

    let bytes = std::fs::read(ckpt).map_err(|e| Error::io(ckpt, e))?;
    let loaded = checkpoint::parse(&bytes)?;
    let mut model = CaptionModel::init(cfg.model_config(vocab.size()), &mut RngState::new(0))?;
    checkpoint::load_into(&loaded, &mut model.parameters_mut(), true)?;
    Ok((model, vocab, cfg))
}

/// Relative path from `dir` to `file`, for writing portable manifests.
/// Falls back to the absolute path when the two share no usable prefix.
pub fn rel_path(dir: &Path, file: &Path) -> String {
    let dir = std::path::absolute(dir).unwrap_or_else(|_| dir.to_path_buf());
    let file = std::path::absolute(file).unwrap_or_else(|_| file.to_path_buf());
    let dir_parts: Vec<_> = dir.components().collect();
    let file_parts: Vec<_> = file.components().collect();
    let common = dir_parts
        .iter()
        .zip(file_parts.iter())
        .take_while(|(a, b)| a == b)
        .count();
    if common == 0 {
        return file.display().to_string();
    }
    let mut out = PathBuf::new();
    for _ in common..dir_parts.len() {
        out.push("..");
    }
    for part in &file_parts[common..] {
        out.push(part);
    }
    out.display().to_string()
}
