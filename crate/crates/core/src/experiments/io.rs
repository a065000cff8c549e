//! PGM images and CSV metric files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiments::metrics::PSNR_CAP_DB;
use crate::field::{ScalarImage, Shape};

/// Per-frame metrics row.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    pub frame: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub gap: Option<f64>,
    pub wall_time: Option<f64>,
}

pub const METRICS_HEADER: &str = "frame,psnr,ssim,gap,wall_time";

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Renders metrics as CSV. Infinite PSNR is written as the 99 dB cap;
/// absent gaps and timings are left empty.
pub fn metrics_csv(records: &[FrameRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in records {
        let psnr = if r.psnr.is_infinite() && r.psnr > 0.0 { PSNR_CAP_DB } else { r.psnr };
        let _ = writeln!(out, "{},{},{},{},{}", r.frame, psnr, r.ssim, opt(r.gap), opt(r.wall_time));
    }
    out
}

/// Parses a file written by [`metrics_csv`].
pub fn parse_metrics_csv(text: &str) -> Result<Vec<FrameRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::invalid("metrics file has an unexpected header"));
    }
    let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::invalid(format!("bad number {s:?}"))) };
    let optnum = |s: &str| -> Result<Option<f64>> { if s.is_empty() { Ok(None) } else { num(s).map(Some) } };
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 5 {
                return Err(Error::invalid(format!("metrics row has {} fields: {l:?}", f.len())));
            }
            Ok(FrameRecord {
                frame: f[0].parse().map_err(|_| Error::invalid(format!("bad frame index {:?}", f[0])))?,
                psnr: num(f[1])?,
                ssim: num(f[2])?,
                gap: optnum(f[3])?,
                wall_time: optnum(f[4])?,
            })
        })
        .collect()
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// 8-bit binary PGM; values are clamped to `[0, 1]` and scaled to 255.
pub fn encode_pgm(x: &ScalarImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", x.width(), x.height()).into_bytes();
    out.extend(x.as_slice().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn write_pgm(path: &Path, x: &ScalarImage) -> Result<()> {
    fs::write(path, encode_pgm(x)).map_err(|e| Error::io(path, e))
}

/// Reads binary (`P5`) or ASCII (`P2`) PGM, scaling to `[0, 1]` by maxval.
pub fn decode_pgm(bytes: &[u8]) -> Result<ScalarImage> {
    let mut pos = 0;
    let mut header = Vec::new();
    while header.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(Error::invalid("truncated PGM header"));
        }
        header.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    let field = |s: &str| -> Result<usize> { s.parse().map_err(|_| Error::invalid(format!("bad PGM header field {s:?}"))) };
    let (w, h, maxval) = (field(&header[1])?, field(&header[2])?, field(&header[3])?);
    if w == 0 || h == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::invalid(format!("unsupported PGM geometry {w}x{h}, maxval {maxval}")));
    }
    let n = w * h;
    let scale = 1.0 / maxval as f64;
    let data: Vec<f64> = match header[0].as_str() {
        "P5" => {
            let body = &bytes[(pos + 1).min(bytes.len())..];
            let bpp = if maxval < 256 { 1 } else { 2 };
            if body.len() < n * bpp {
                return Err(Error::invalid("truncated PGM pixel data"));
            }
            (0..n)
                .map(|k| {
                    let v = if bpp == 1 { body[k] as f64 } else { u16::from_be_bytes([body[2 * k], body[2 * k + 1]]) as f64 };
                    v * scale
                })
                .collect()
        }
        "P2" => {
            let text = String::from_utf8_lossy(&bytes[pos..]);
            let vals: Vec<f64> = text
                .split_ascii_whitespace()
                .take(n)
                .map(|t| t.parse::<f64>().map(|v| v * scale).map_err(|_| Error::invalid(format!("bad PGM value {t:?}"))))
                .collect::<Result<_>>()?;
            if vals.len() < n {
                return Err(Error::invalid("truncated PGM pixel data"));
            }
            vals
        }
        m => return Err(Error::invalid(format!("not a greyscale PGM (magic {m:?})"))),
    };
    ScalarImage::from_vec(Shape::new(w, h), data)
}

pub fn read_pgm(path: &Path) -> Result<ScalarImage> {
    decode_pgm(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
