//! Binary PGM (P5) and PPM (P6) with maxval 255.
//!
//! Samples load as `value / 255`; saving rounds `value * 255` and clamps, so
//! a load → save round trip reproduces the original bytes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// An 8-bit raster with 1 (gray) or 3 (RGB, interleaved) channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub bytes: Vec<u8>,
}

impl Raster {
    /// Samples in `[0, 1]`, planar (channel-major) order.
    pub fn to_planar(&self) -> Vec<f64> {
        let n = self.width * self.height;
        let mut out = vec![0.0; n * self.channels];
        for (i, px) in self.bytes.chunks_exact(self.channels).enumerate() {
            for (c, &b) in px.iter().enumerate() {
                out[c * n + i] = b as f64 / 255.0;
            }
        }
        out
    }

    /// Quantizes planar samples in `[0, 1]`.
    pub fn from_planar(width: usize, height: usize, channels: usize, planar: &[f64]) -> Result<Self> {
        let n = width * height;
        if planar.len() != n * channels || !(channels == 1 || channels == 3) {
            return Err(Error::Format(format!("{} samples do not form a {}x{}x{} raster", planar.len(), channels, height, width)));
        }
        let mut bytes = vec![0u8; n * channels];
        for i in 0..n {
            for c in 0..channels {
                bytes[i * channels + c] = quantize(planar[c * n + i]);
            }
        }
        Ok(Self { width, height, channels, bytes })
    }
}

pub fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

fn magic(channels: usize) -> &'static str {
    if channels == 1 {
        "P5"
    } else {
        "P6"
    }
}

pub fn encode(r: &Raster) -> Vec<u8> {
    let mut out = format!("{}\n{} {}\n255\n", magic(r.channels), r.width, r.height).into_bytes();
    out.extend_from_slice(&r.bytes);
    out
}

/// Parses a P5 or P6 image. Header comments (`#` to end of line) are allowed.
pub fn decode(data: &[u8]) -> Result<Raster> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < data.len() && (data[pos].is_ascii_whitespace() || data[pos] == b'#') {
            if data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() && data[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated netpbm header".into()));
        }
        fields.push(std::str::from_utf8(&data[start..pos]).map_err(|_| Error::Format("non-ascii netpbm header".into()))?);
    }
    let channels = match fields[0] {
        "P5" => 1,
        "P6" => 3,
        m => return Err(Error::Format(format!("unsupported netpbm magic {:?}", m))),
    };
    let num = |s: &str, what: &str| -> Result<usize> {
        s.parse::<usize>().map_err(|_| Error::Format(format!("bad {} {:?}", what, s)))
    };
    let width = num(fields[1], "width")?;
    let height = num(fields[2], "height")?;
    let maxval = num(fields[3], "maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!("maxval must be 255, got {}", maxval)));
    }
    if width == 0 || height == 0 {
        return Err(Error::Format("empty raster".into()));
    }
    // exactly one whitespace byte separates the header from the samples
    if pos >= data.len() || !data[pos].is_ascii_whitespace() {
        return Err(Error::Format("truncated netpbm header".into()));
    }
    pos += 1;
    let len = width * height * channels;
    let body = &data[pos..];
    if body.len() < len {
        return Err(Error::Format(format!("expected {} sample bytes, found {}", len, body.len())));
    }
    if body.len() > len {
        return Err(Error::Format(format!("{} trailing bytes after samples", body.len() - len)));
    }
    Ok(Raster { width, height, channels, bytes: body.to_vec() })
}

fn load(path: &Path, channels: usize) -> Result<Raster> {
    let r = decode(&fs::read(path)?)?;
    if r.channels != channels {
        return Err(Error::Format(format!("{}: expected {}", path.display(), magic(channels))));
    }
    Ok(r)
}

pub fn load_pgm(path: &Path) -> Result<Raster> {
    load(path, 1)
}

pub fn load_ppm(path: &Path) -> Result<Raster> {
    load(path, 3)
}

pub fn save(path: &Path, r: &Raster) -> Result<()> {
    fs::write(path, encode(r))?;
    Ok(())
}
