//! Figure-style rendering: per-character attention overlays and the
//! summed-weight map, written as PNGs next to a base image.

use std::path::{Path, PathBuf};

use karte_core::trace::{blend_overlay, normalize_min_max, upsample_bilinear, AttentionTrace};

use crate::error::{Error, Result};
use crate::img::{save_png_rgb, GrayImage};

pub const OVERLAY_ALPHA: f64 = 0.5;

/// File-name fragment for one step's token: `uXXXX` for characters,
/// the bare name for specials (`end`, `pad`, ...).
fn token_fragment(token: &str) -> String {
    let mut chars = token.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => format!("u{:04X}", c as u32),
        _ => token.trim_matches(['<', '>']).to_string(),
    }
}

/// Renders `⟨stem⟩.step⟨t⟩.⟨token⟩.png` per trace row plus `⟨stem⟩.sum.png`,
/// where the stem comes from the trace file name. Pure function of the
/// trace and image bytes; returns the written paths.
pub fn render_heatmaps(trace_path: &Path, image_path: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(trace_path).map_err(|e| Error::io(trace_path, e))?;
    let trace = AttentionTrace::from_text(&text)?;
    let image = GrayImage::load(image_path)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let stem = trace_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("trace")
        .to_string();

    let mut written = Vec::new();
    let render = |map: &[f64], name: String| -> Result<PathBuf> {
        let up = upsample_bilinear(map, trace.grid_h, trace.grid_w, image.height, image.width);
        let heat = normalize_min_max(&up);
        let rgb = blend_overlay(&image.pixels, &heat, OVERLAY_ALPHA);
        let path = out_dir.join(name);
        save_png_rgb(&path, image.width, image.height, &rgb)?;
        Ok(path)
    };

    for (t, row) in trace.rows.iter().enumerate() {
        let fragment = token_fragment(&trace.tokens[t]);
        written.push(render(row, format!("{stem}.step{t}.{fragment}.png"))?);
    }
    written.push(render(&trace.summed(), format!("{stem}.sum.png"))?);
    Ok(written)
}
