//! Binary PGM images, text sidecars and fixed-precision CSV.
//!
//! Image rows are stored top row first with y pointing up, so the in-memory
//! row order (y growing with the row index) is reversed on disk.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use sha2::{Digest, Sha256};
use twistbench_core::RealImage;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: not a binary PGM: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("count {0} does not fit a 16-bit PGM")]
    Overflow(u32),
}

fn fs_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Fs {
        path: path.to_path_buf(),
        source,
    }
}

fn header(nx: usize, ny: usize, maxval: u32) -> Vec<u8> {
    format!("P5\n{nx} {ny}\n{maxval}\n").into_bytes()
}

/// 8-bit PGM of `image` scaled so its maximum maps to 255.
pub fn encode_pgm8(image: &RealImage) -> Vec<u8> {
    let (nx, ny) = image.dims();
    let peak = image.max();
    let scale = if peak > 0.0 { 255.0 / peak } else { 0.0 };
    let mut out = header(nx, ny, 255);
    for row in image.data.outer_iter().rev() {
        out.extend(row.iter().map(|&v| (v * scale).round().clamp(0.0, 255.0) as u8));
    }
    out
}

/// 16-bit big-endian PGM of raw counts.
pub fn encode_pgm16(counts: &Array2<u32>) -> Result<Vec<u8>, IoError> {
    let (ny, nx) = counts.dim();
    let peak = counts.iter().copied().max().unwrap_or(0);
    if peak > u16::MAX as u32 {
        return Err(IoError::Overflow(peak));
    }
    let mut out = header(nx, ny, 65535);
    for row in counts.outer_iter().rev() {
        for &c in row {
            out.extend((c as u16).to_be_bytes());
        }
    }
    Ok(out)
}

fn next_token<'a>(data: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &data[start..*pos])
}

/// Decodes a P5 image into raw sample values (not rescaled).
pub fn decode_pgm(data: &[u8]) -> Result<Array2<f64>, String> {
    let mut pos = 0;
    if next_token(data, &mut pos) != Some(b"P5") {
        return Err("missing P5 magic".into());
    }
    let mut num = |what: &str| -> Result<usize, String> {
        next_token(data, &mut pos)
            .and_then(|t| std::str::from_utf8(t).ok())
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| format!("bad {what}"))
    };
    let (nx, ny, maxval) = (num("width")?, num("height")?, num("maxval")?);
    if nx == 0 || ny == 0 || maxval == 0 || maxval > 65535 {
        return Err(format!("bad header {nx}x{ny} maxval {maxval}"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let bytes = if maxval < 256 { 1 } else { 2 };
    let raster = data.get(pos..).unwrap_or(&[]);
    if raster.len() < nx * ny * bytes {
        return Err(format!("raster holds {} bytes, need {}", raster.len(), nx * ny * bytes));
    }
    let mut img = Array2::zeros((ny, nx));
    for (k, v) in img.iter_mut().enumerate() {
        let (r, c) = (k / nx, k % nx);
        let src = (ny - 1 - r) * nx + c;
        *v = if bytes == 1 {
            raster[src] as f64
        } else {
            u16::from_be_bytes([raster[2 * src], raster[2 * src + 1]]) as f64
        };
    }
    Ok(img)
}

pub fn read_pgm(path: &Path, pitch: f64) -> Result<RealImage, IoError> {
    let data = fs::read(path).map_err(fs_err(path))?;
    let img = decode_pgm(&data).map_err(|reason| IoError::Format {
        path: path.to_path_buf(),
        reason,
    })?;
    RealImage::square(img, pitch).map_err(|e| IoError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Sidecar path for an image: `name.pgm` -> `name.meta`.
pub fn sidecar_path(image: &Path) -> PathBuf {
    image.with_extension("meta")
}

pub fn encode_sidecar(fields: &[(&str, String)]) -> Vec<u8> {
    let mut s = String::new();
    for (k, v) in fields {
        let _ = writeln!(s, "{k} = {v}");
    }
    s.into_bytes()
}

/// Reads `key = value` lines of a sidecar.
pub fn read_sidecar(path: &Path) -> Result<Vec<(String, String)>, IoError> {
    let text = fs::read_to_string(path).map_err(fs_err(path))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect())
}

/// Nine significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    format!("{v:.8e}")
}

/// A CSV table with a fixed column order.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            text: format!("{}\n", columns.join(",")),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

pub fn write_file(path: &Path, data: &[u8]) -> Result<(), IoError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(fs_err(dir))?;
    }
    fs::write(path, data).map_err(fs_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm8_round_trip_keeps_orientation() {
        let data = Array2::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as f64);
        let img = RealImage::square(data, 1e-5).unwrap();
        let bytes = encode_pgm8(&img);
        assert!(bytes.starts_with(b"P5\n4 3\n255\n"));
        // the top row on disk is the last row in memory
        assert_eq!(bytes[11], 185);
        let back = decode_pgm(&bytes).unwrap();
        for ((i, j), &v) in back.indexed_iter() {
            assert_eq!(v, ((i * 4 + j) as f64 * 255.0 / 11.0).round());
        }
    }

    #[test]
    fn pgm16_round_trip_is_exact() {
        let counts = Array2::from_shape_fn((5, 2), |(i, j)| (i * 1000 + j * 7) as u32);
        let back = decode_pgm(&encode_pgm16(&counts).unwrap()).unwrap();
        assert_eq!(back, counts.mapv(|c| c as f64));
        assert!(encode_pgm16(&Array2::from_elem((1, 1), 70_000)).is_err());
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5 # made by hand\n2 1\n# max\n255\n".to_vec();
        bytes.extend([7, 9]);
        assert_eq!(decode_pgm(&bytes).unwrap(), ndarray::arr2(&[[7.0, 9.0]]));
        assert!(decode_pgm(b"P2\n1 1\n255\n1").is_err());
        assert!(decode_pgm(b"P5\n4 4\n255\n\x00").is_err());
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_f64(1.0 / 3.0), "3.33333333e-1");
        assert_eq!(fmt_f64(-760e-6), "-7.60000000e-4");
        assert_eq!(fmt_f64(0.0), "0");
    }
}
