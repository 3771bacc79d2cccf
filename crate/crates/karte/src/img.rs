//! 8-bit grayscale image IO: PNG (via the `png` crate) and PGM (P5/P2),
//! plus RGB PNG output for the heatmap overlays.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        match ext.as_str() {
            "png" => load_png(path),
            "pgm" => load_pgm(path),
            other => Err(Error::Image {
                path: path.to_path_buf(),
                detail: format!("unsupported image extension `{other}` (png and pgm are supported)"),
            }),
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| png_err(path, e))?;
        writer
            .write_image_data(&self.pixels)
            .map_err(|e| png_err(path, e))?;
        Ok(())
    }

    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        write!(w, "P5\n{} {}\n255\n", self.width, self.height).map_err(|e| Error::io(path, e))?;
        w.write_all(&self.pixels).map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Interleaved-RGB PNG used by the overlay renderer.
pub fn save_png_rgb(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    assert_eq!(rgb.len(), width * height * 3);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| png_err(path, e))?;
    writer.write_image_data(rgb).map_err(|e| png_err(path, e))?;
    Ok(())
}

fn png_err(path: &Path, e: png::EncodingError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        detail: format!("png encode: {e}"),
    }
}

fn load_png(path: &Path) -> Result<GrayImage> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| Error::Image {
        path: path.to_path_buf(),
        detail: format!("png decode: {e}"),
    })?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Image {
            path: path.to_path_buf(),
            detail: format!(
                "expected 8-bit grayscale, found {:?}/{:?}",
                info.color_type, info.bit_depth
            ),
        });
    }
    let size = reader.output_buffer_size().ok_or_else(|| Error::Image {
        path: path.to_path_buf(),
        detail: "png dimensions overflow".to_string(),
    })?;
    let mut buf = vec![0; size];
    let frame = reader.next_frame(&mut buf).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        detail: format!("png decode: {e}"),
    })?;
    buf.truncate(frame.buffer_size());
    Ok(GrayImage {
        width: frame.width as usize,
        height: frame.height as usize,
        pixels: buf,
    })
}

fn load_pgm(path: &Path) -> Result<GrayImage> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| Error::io(path, e))?;
    let bad = |detail: &str| Error::Image {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    };

    // header tokens: magic, width, height, maxval (comments allowed)
    let mut pos = 0usize;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < raw.len() && (raw[pos] as char).is_ascii_whitespace() {
            pos += 1;
        }
        if pos < raw.len() && raw[pos] == b'#' {
            while pos < raw.len() && raw[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < raw.len() && !(raw[pos] as char).is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        tokens.push(std::str::from_utf8(&raw[start..pos]).map_err(|_| bad("non-ascii header"))?);
    }
    let magic = tokens[0];
    let width: usize = tokens[1].parse().map_err(|_| bad("bad width"))?;
    let height: usize = tokens[2].parse().map_err(|_| bad("bad height"))?;
    let maxval: usize = tokens[3].parse().map_err(|_| bad("bad maxval"))?;
    if maxval != 255 {
        return Err(bad("only 8-bit (maxval 255) PGM is supported"));
    }
    let pixels = match magic {
        "P5" => {
            pos += 1; // single whitespace after maxval
            let need = width * height;
            if raw.len() < pos + need {
                return Err(bad("truncated pixel data"));
            }
            raw[pos..pos + need].to_vec()
        }
        "P2" => {
            let text = std::str::from_utf8(&raw[pos..]).map_err(|_| bad("non-ascii P2 data"))?;
            let vals: std::result::Result<Vec<u8>, _> =
                text.split_ascii_whitespace().map(|t| t.parse::<u8>()).collect();
            let vals = vals.map_err(|_| bad("bad P2 pixel value"))?;
            if vals.len() != width * height {
                return Err(bad("wrong P2 pixel count"));
            }
            vals
        }
        _ => return Err(bad("not a PGM file (expected P5 or P2)")),
    };
    Ok(GrayImage { width, height, pixels })
}
