//! Per-character attention traces: validation, a line-oriented text
//! format, and the raster math behind the heatmap overlays.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// The T×L attention matrix recorded during one decode, with the display
/// form of each generated token ("左", "<end>", ...).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    pub grid_h: usize,
    pub grid_w: usize,
    /// One row of length `grid_h * grid_w` per decode step.
    pub rows: Vec<Vec<f64>>,
    /// One display token per row.
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceError {
    RowSum { row: usize, sum: f64 },
    Malformed { line: usize, detail: String },
}

impl fmt::Display for TraceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceError::RowSum { row, sum } => {
                write!(f, "attention row {row} sums to {sum}, expected 1 within 1e-6")
            }
            TraceError::Malformed { line, detail } => write!(f, "trace line {line}: {detail}"),
        }
    }
}

impl core::error::Error for TraceError {}

impl AttentionTrace {
    pub fn steps(&self) -> usize {
        self.rows.len()
    }

    pub fn positions(&self) -> usize {
        self.grid_h * self.grid_w
    }

    /// Row-sum and dimension invariants.
    pub fn validate(&self) -> Result<(), TraceError> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.positions() {
                return Err(TraceError::Malformed {
                    line: i + 3,
                    detail: format!("row has {} weights, expected {}", row.len(), self.positions()),
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(TraceError::RowSum { row: i, sum });
            }
        }
        if self.tokens.len() != self.rows.len() {
            return Err(TraceError::Malformed {
                line: 2,
                detail: format!("{} tokens for {} rows", self.tokens.len(), self.rows.len()),
            });
        }
        Ok(())
    }

    /// Elementwise sum of all rows: the summed-weight map.
    pub fn summed(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.positions()];
        for row in &self.rows {
            for (a, &b) in acc.iter_mut().zip(row.iter()) {
                *a += b;
            }
        }
        acc
    }

    /// Text form: a header line `T L grid_h grid_w` (tab-separated), a
    /// token line (`U+XXXX` code points or `<special>` names, space
    /// separated), then one tab-separated row of weights per step. Floats
    /// use the shortest round-trip representation, so read-back is exact.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            self.steps(),
            self.positions(),
            self.grid_h,
            self.grid_w
        ));
        let toks: Vec<String> = self.tokens.iter().map(|t| encode_token(t)).collect();
        out.push_str(&toks.join(" "));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|w| w.to_string()).collect();
            out.push_str(&cells.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TraceError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(TraceError::Malformed {
            line: 1,
            detail: "empty file".to_string(),
        })?;
        let fields: Vec<&str> = header.split('\t').collect();
        if fields.len() != 4 {
            return Err(TraceError::Malformed {
                line: 1,
                detail: format!("expected 4 header fields, found {}", fields.len()),
            });
        }
        let parse = |s: &str, line: usize| -> Result<usize, TraceError> {
            s.parse().map_err(|_| TraceError::Malformed {
                line,
                detail: format!("not an integer: `{s}`"),
            })
        };
        let steps = parse(fields[0], 1)?;
        let positions = parse(fields[1], 1)?;
        let grid_h = parse(fields[2], 1)?;
        let grid_w = parse(fields[3], 1)?;
        if grid_h * grid_w != positions {
            return Err(TraceError::Malformed {
                line: 1,
                detail: format!("{grid_h}x{grid_w} grid does not give {positions} positions"),
            });
        }

        let (_, token_line) = lines.next().ok_or(TraceError::Malformed {
            line: 2,
            detail: "missing token line".to_string(),
        })?;
        let tokens: Vec<String> = if token_line.is_empty() {
            Vec::new()
        } else {
            token_line
                .split(' ')
                .map(decode_token)
                .collect::<Result<_, _>>()
                .map_err(|detail| TraceError::Malformed { line: 2, detail })?
        };
        if tokens.len() != steps {
            return Err(TraceError::Malformed {
                line: 2,
                detail: format!("{} tokens for {steps} steps", tokens.len()),
            });
        }

        let mut rows = Vec::with_capacity(steps);
        for (idx, line) in lines {
            if rows.len() == steps {
                return Err(TraceError::Malformed {
                    line: idx + 1,
                    detail: "extra row".to_string(),
                });
            }
            let row: Vec<f64> = line
                .split('\t')
                .map(|c| {
                    c.parse().map_err(|_| TraceError::Malformed {
                        line: idx + 1,
                        detail: format!("not a float: `{c}`"),
                    })
                })
                .collect::<Result<_, _>>()?;
            rows.push(row);
        }
        if rows.len() != steps {
            return Err(TraceError::Malformed {
                line: steps + 2,
                detail: format!("{} rows for {steps} steps", rows.len()),
            });
        }
        let trace = AttentionTrace {
            grid_h,
            grid_w,
            rows,
            tokens,
        };
        trace.validate()?;
        Ok(trace)
    }
}

/// Single characters become `U+XXXX`; special names pass through.
fn encode_token(token: &str) -> String {
    let mut chars = token.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => format!("U+{:04X}", c as u32),
        _ => token.to_string(),
    }
}

fn decode_token(field: &str) -> Result<String, String> {
    if let Some(hex) = field.strip_prefix("U+") {
        let cp = u32::from_str_radix(hex, 16).map_err(|_| format!("bad code point `{field}`"))?;
        let ch = char::from_u32(cp).ok_or_else(|| format!("invalid code point `{field}`"))?;
        Ok(ch.to_string())
    } else if field.starts_with('<') && field.ends_with('>') {
        Ok(field.to_string())
    } else {
        Err(format!("unrecognized token field `{field}`"))
    }
}

/// Bilinear upsampling with half-pixel centers: source coordinate
/// `(p + 0.5) / scale − 0.5`, clamped at the borders.
pub fn upsample_bilinear(map: &[f64], in_h: usize, in_w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    assert_eq!(map.len(), in_h * in_w);
    let mut out = vec![0.0; out_h * out_w];
    let sy = in_h as f64 / out_h as f64;
    let sx = in_w as f64 / out_w as f64;
    for oy in 0..out_h {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (in_h - 1) as f64);
        let y0 = libm::floor(fy) as usize;
        let y1 = (y0 + 1).min(in_h - 1);
        let wy = fy - y0 as f64;
        for ox in 0..out_w {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (in_w - 1) as f64);
            let x0 = libm::floor(fx) as usize;
            let x1 = (x0 + 1).min(in_w - 1);
            let wx = fx - x0 as f64;
            let top = map[y0 * in_w + x0] * (1.0 - wx) + map[y0 * in_w + x1] * wx;
            let bottom = map[y1 * in_w + x0] * (1.0 - wx) + map[y1 * in_w + x1] * wx;
            out[oy * out_w + ox] = top * (1.0 - wy) + bottom * wy;
        }
    }
    out
}

/// Min-max normalization to `[0, 1]`. A constant map renders at zero
/// intensity (there is no information to show and it avoids a divide by
/// zero).
pub fn normalize_min_max(map: &[f64]) -> Vec<f64> {
    let lo = map.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = map.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo || hi.is_nan() || lo.is_nan() {
        return vec![0.0; map.len()];
    }
    map.iter().map(|&v| (v - lo) / (hi - lo)).collect()
}

/// Alpha-blends a normalized heat map over a grayscale base as a
/// single-hue (red) intensity ramp. Returns interleaved RGB bytes.
pub fn blend_overlay(base_gray: &[u8], heat: &[f64], alpha: f64) -> Vec<u8> {
    assert_eq!(base_gray.len(), heat.len());
    let mut out = Vec::with_capacity(base_gray.len() * 3);
    for (&g, &h) in base_gray.iter().zip(heat.iter()) {
        let base = (1.0 - alpha) * g as f64;
        let r = base + alpha * h.clamp(0.0, 1.0) * 255.0;
        out.push(libm::round(r).clamp(0.0, 255.0) as u8);
        out.push(libm::round(base).clamp(0.0, 255.0) as u8);
        out.push(libm::round(base).clamp(0.0, 255.0) as u8);
    }
    out
}
