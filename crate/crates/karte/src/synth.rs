//! Synthetic desk-scale corpus: noisy grayscale images carrying zero to
//! two bright shapes (disc, bar, ring) placed in quadrants, captioned by a
//! fixed mini-grammar over positional characters (左/右/上/下) and shape
//! words, with 異常なし for empty images. Roughly 75% of images are
//! normal, mirroring the imbalance of real reading workflows.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use karte_core::rng::RngState;

use crate::error::{Error, Result};
use crate::img::GrayImage;

pub const SHAPE_WORDS: [&str; 3] = ["円影", "線状影", "輪状影"];
pub const QUADRANT_WORDS: [&str; 4] = ["左上", "右上", "左下", "右下"];
pub const NORMAL_FINDING: &str = "異常なし";

#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    pub n: usize,
    pub image_size: usize,
    pub normal_fraction: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        SynthConfig {
            n,
            image_size: 96,
            normal_fraction: 0.75,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Disc,
    Bar,
    Ring,
}

impl Shape {
    fn word(&self) -> &'static str {
        match self {
            Shape::Disc => SHAPE_WORDS[0],
            Shape::Bar => SHAPE_WORDS[1],
            Shape::Ring => SHAPE_WORDS[2],
        }
    }
}

/// Quadrant index: 0 左上, 1 右上, 2 左下, 3 右下.
fn quadrant_center(q: usize, s: usize) -> (f64, f64) {
    let lo = s as f64 * 0.25;
    let hi = s as f64 * 0.75;
    match q {
        0 => (lo, lo),
        1 => (hi, lo),
        2 => (lo, hi),
        _ => (hi, hi),
    }
}

struct PlacedShape {
    shape: Shape,
    quadrant: usize,
    cx: f64,
    cy: f64,
}

impl PlacedShape {
    fn caption(&self) -> String {
        format!("{}{}", QUADRANT_WORDS[self.quadrant], self.shape.word())
    }
}

fn draw_shape(img: &mut GrayImage, placed: &PlacedShape, rng: &mut RngState) {
    let s = img.width as f64;
    let bright = 170.0 + rng.uniform(0.0, 60.0);
    let radius = s / 10.0 + rng.uniform(-s / 40.0, s / 40.0);
    let horizontal = rng.next_f64() < 0.5;
    let (cx, cy) = (placed.cx, placed.cy);
    for y in 0..img.height {
        for x in 0..img.width {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            let inside = match placed.shape {
                Shape::Disc => dx * dx + dy * dy <= radius * radius,
                Shape::Bar => {
                    let (long, short) = if horizontal { (dx, dy) } else { (dy, dx) };
                    long.abs() <= radius * 1.4 && short.abs() <= (s / 24.0).max(1.5)
                }
                Shape::Ring => {
                    let d = (dx * dx + dy * dy).sqrt();
                    (d - radius).abs() <= (s / 28.0).max(1.5)
                }
            };
            if inside {
                img.pixels[y * img.width + x] = bright as u8;
            }
        }
    }
}

pub struct SynthOutcome {
    pub manifest: PathBuf,
    pub report: PathBuf,
    pub images: usize,
    pub normal_images: usize,
}

/// Writes `img_#####.png` files, `manifest.tsv` (one line per finding,
/// third column = pre-training class label) and `report.txt` into
/// `out_dir`. Fully deterministic for a fixed config.
pub fn generate_synthetic_corpus(cfg: &SynthConfig, out_dir: &Path) -> Result<SynthOutcome> {
    assert!(cfg.n >= 1);
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut master = RngState::new(cfg.seed);
    let s = cfg.image_size;

    let mut manifest = String::new();
    let mut finding_counts: std::collections::BTreeMap<String, usize> = Default::default();
    let mut class_counts: std::collections::BTreeMap<String, usize> = Default::default();
    let mut normal_images = 0usize;

    for i in 0..cfg.n {
        let mut rng = master.fork();
        let mut img = GrayImage::new(s, s);
        for p in img.pixels.iter_mut() {
            *p = (28.0 + rng.uniform(0.0, 26.0)) as u8;
        }

        let normal = rng.next_f64() < cfg.normal_fraction;
        let mut findings = Vec::new();
        let class_label;
        if normal {
            normal_images += 1;
            findings.push(NORMAL_FINDING.to_string());
            class_label = NORMAL_FINDING.to_string();
        } else {
            let shape_count = if rng.next_f64() < 0.7 { 1 } else { 2 };
            let mut quadrants = [0usize, 1, 2, 3];
            rng.shuffle(&mut quadrants);
            let mut placed_shapes = Vec::new();
            for &q in quadrants.iter().take(shape_count) {
                let shape = match rng.below(3) {
                    0 => Shape::Disc,
                    1 => Shape::Bar,
                    _ => Shape::Ring,
                };
                let (qx, qy) = quadrant_center(q, s);
                let jitter = s as f64 / 16.0;
                let placed = PlacedShape {
                    shape,
                    quadrant: q,
                    cx: qx + rng.uniform(-jitter, jitter),
                    cy: qy + rng.uniform(-jitter, jitter),
                };
                draw_shape(&mut img, &placed, &mut rng);
                placed_shapes.push(placed);
            }
            class_label = placed_shapes[0].caption();
            for p in &placed_shapes {
                findings.push(p.caption());
            }
        }

        let name = format!("img_{i:05}.png");
        img.save_png(&out_dir.join(&name))?;
        for finding in &findings {
            let _ = writeln!(manifest, "{name}\t{finding}\t{class_label}");
            *finding_counts.entry(finding.clone()).or_insert(0) += 1;
        }
        *class_counts.entry(class_label).or_insert(0) += 1;
    }

    let manifest_path = out_dir.join("manifest.tsv");
    std::fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;

    let mut report = String::new();
    let _ = writeln!(report, "images: {}", cfg.n);
    let _ = writeln!(report, "image_size: {s}");
    let _ = writeln!(report, "normal_images: {normal_images}");
    let _ = writeln!(
        report,
        "normal_fraction: {:.4}",
        normal_images as f64 / cfg.n as f64
    );
    let _ = writeln!(report, "distinct_findings: {}", finding_counts.len());
    let mut charset: std::collections::BTreeSet<char> = Default::default();
    for finding in finding_counts.keys() {
        charset.extend(finding.chars());
    }
    let _ = writeln!(report, "characters: {}", charset.len());
    let _ = writeln!(report, "charset: {}", charset.iter().collect::<String>());
    let _ = writeln!(report, "findings:");
    for (finding, count) in &finding_counts {
        let _ = writeln!(report, "  {finding}\t{count}");
    }
    let _ = writeln!(report, "classes:");
    for (class, count) in &class_counts {
        let _ = writeln!(report, "  {class}\t{count}");
    }
    let report_path = out_dir.join("report.txt");
    std::fs::write(&report_path, report).map_err(|e| Error::io(&report_path, e))?;

    Ok(SynthOutcome {
        manifest: manifest_path,
        report: report_path,
        images: cfg.n,
        normal_images,
    })
}
