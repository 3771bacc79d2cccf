//! Tab-separated manifests: `image_path⟨TAB⟩finding[⟨TAB⟩class_label]`.
//! Image paths are stored relative to the manifest file, so a corpus
//! directory can be moved wholesale.

use std::fs;
use std::path::{Path, PathBuf};

use karte_core::dataset::Sample;

use crate::error::{Error, Result};

/// Parses a manifest. One image annotated with several findings appears as
/// several lines (one `Sample` each). Every referenced image must exist;
/// the error lists all missing paths.
pub fn load_manifest(path: &Path, normal_string: &str) -> Result<Vec<Sample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut samples = Vec::new();
    let mut missing = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let image = fields.next().unwrap_or("");
        let finding = fields.next().ok_or(Error::Manifest {
            path: path.to_path_buf(),
            line: i + 1,
            detail: "missing tab separator between image path and finding".to_string(),
        })?;
        if image.is_empty() || finding.is_empty() {
            return Err(Error::Manifest {
                path: path.to_path_buf(),
                line: i + 1,
                detail: "empty image path or finding".to_string(),
            });
        }
        let class_label = fields.next().map(|s| s.to_string());
        if fields.next().is_some() {
            return Err(Error::Manifest {
                path: path.to_path_buf(),
                line: i + 1,
                detail: "too many tab-separated fields".to_string(),
            });
        }
        if !base.join(image).is_file() {
            missing.push(base.join(image));
        }
        let mut sample = Sample::new(image, finding, normal_string);
        sample.class_label = class_label;
        samples.push(sample);
    }
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(Error::MissingImages(missing));
    }
    Ok(samples)
}

pub fn write_manifest(samples: &[Sample], path: &Path) -> Result<()> {
    let mut out = String::new();
    for s in samples {
        out.push_str(&s.image_path);
        out.push('\t');
        out.push_str(&s.finding);
        if let Some(label) = &s.class_label {
            out.push('\t');
            out.push_str(label);
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Absolute path of a sample's image, resolved against the manifest.
pub fn resolve_image(manifest: &Path, sample: &Sample) -> PathBuf {
    manifest
        .parent()
        .unwrap_or(Path::new("."))
        .join(&sample.image_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::img::GrayImage;

    fn tmp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("karte-manifest-{}-{tag}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn empty_file_gives_empty_list() {
        let dir = tmp_dir("empty");
        let path = dir.join("m.tsv");
        fs::write(&path, "").unwrap();
        assert!(load_manifest(&path, "異常なし").unwrap().is_empty());
    }

    #[test]
    fn one_image_two_findings_gives_two_samples() {
        let dir = tmp_dir("multi");
        GrayImage::new(4, 4).save_png(&dir.join("a.png")).unwrap();
        let path = dir.join("m.tsv");
        fs::write(&path, "a.png\t左上円影\na.png\t右下線状影\n").unwrap();
        let samples = load_manifest(&path, "異常なし").unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[0].image_path, samples[1].image_path);
        assert_ne!(samples[0].finding, samples[1].finding);
        assert!(!samples[0].is_normal);
    }

    #[test]
    fn missing_tab_reports_line_number() {
        let dir = tmp_dir("badline");
        let path = dir.join("m.tsv");
        fs::write(&path, "a.png\t異常なし\nno-tab-here\n").unwrap();
        match load_manifest(&path, "異常なし") {
            Err(Error::Manifest { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_images_are_listed() {
        let dir = tmp_dir("missing");
        let path = dir.join("m.tsv");
        fs::write(&path, "gone.png\t異常なし\nalso-gone.png\tx\n").unwrap();
        match load_manifest(&path, "異常なし") {
            Err(Error::MissingImages(paths)) => assert_eq!(paths.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn round_trip_with_class_labels() {
        let dir = tmp_dir("rt");
        GrayImage::new(4, 4).save_png(&dir.join("x.png")).unwrap();
        let mut s = Sample::new("x.png", "異常なし", "異常なし");
        s.class_label = Some("正常".to_string());
        let path = dir.join("m.tsv");
        write_manifest(&[s.clone()], &path).unwrap();
        let back = load_manifest(&path, "異常なし").unwrap();
        assert_eq!(back, vec![s]);
    }
}
