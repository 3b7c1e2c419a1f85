//! Synthetic salient-object dataset and its on-disk layout
//! (`images/<id>.ppm` + `masks/<id>.pgm`).

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::netpbm::{self, quantize, Raster};
use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::parallel::map_indexed;

pub const SIZES: [usize; 3] = [32, 64, 128];
pub const MIN_COVERAGE: f64 = 0.05;
pub const MAX_COVERAGE: f64 = 0.6;
pub const MIN_CONTRAST: f64 = 0.2;

/// One image (3 planar channels in `[0, 1]`) and its binary mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ToySample {
    pub id: String,
    pub size: usize,
    pub image: Vec<f32>,
    pub mask: Vec<f32>,
}

impl ToySample {
    pub fn coverage(&self) -> f64 {
        self.mask.iter().filter(|&&m| m > 0.5).count() as f64 / self.mask.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64, angle: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Triangle { pts: [(f64, f64); 3] },
}

impl Shape {
    /// Whether the point `(x, y)` (pixel-centre coordinates) lies inside.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Ellipse { cx, cy, rx, ry, angle } => {
                let (s, c) = angle.sin_cos();
                let (dx, dy) = (x - cx, y - cy);
                let u = (c * dx + s * dy) / rx;
                let v = (-s * dx + c * dy) / ry;
                u * u + v * v <= 1.0
            }
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x <= x1 && y >= y0 && y <= y1,
            Shape::Triangle { pts: [a, b, c] } => {
                let cross = |p: (f64, f64), q: (f64, f64)| (q.0 - p.0) * (y - p.1) - (q.1 - p.1) * (x - p.0);
                let (d1, d2, d3) = (cross(a, b), cross(b, c), cross(c, a));
                let neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
                let pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
                !(neg && pos)
            }
        }
    }

    fn random(rng: &mut impl Rng, size: f64) -> Self {
        let cx = rng.gen_range(0.2..0.8) * size;
        let cy = rng.gen_range(0.2..0.8) * size;
        match rng.gen_range(0..3) {
            0 => Shape::Ellipse {
                cx,
                cy,
                rx: rng.gen_range(0.08..0.3) * size,
                ry: rng.gen_range(0.08..0.3) * size,
                angle: rng.gen_range(0.0..std::f64::consts::PI),
            },
            1 => {
                let hw = rng.gen_range(0.08..0.3) * size;
                let hh = rng.gen_range(0.08..0.3) * size;
                Shape::Rect { x0: cx - hw, y0: cy - hh, x1: cx + hw, y1: cy + hh }
            }
            _ => {
                let r = rng.gen_range(0.15..0.4) * size;
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                let mut pts = [(0.0, 0.0); 3];
                for (k, p) in pts.iter_mut().enumerate() {
                    let a = phase + k as f64 * std::f64::consts::TAU / 3.0 + rng.gen_range(-0.4..0.4);
                    *p = (cx + r * a.cos(), cy + r * a.sin());
                }
                Shape::Triangle { pts }
            }
        }
    }
}

/// Union of the shapes, sampled at pixel centres.
pub fn rasterize(shapes: &[Shape], size: usize) -> Vec<bool> {
    let mut mask = vec![false; size * size];
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            mask[y * size + x] = shapes.iter().any(|s| s.contains(px, py));
        }
    }
    mask
}

fn random_color(rng: &mut impl Rng) -> [f64; 3] {
    [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]
}

/// Mean absolute per-channel difference.
pub fn contrast(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 3.0
}

fn sample_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

/// Texture amplitude; small enough that the colour contrast survives.
const TEXTURE: f64 = 0.06;

/// One sample: 1-3 shapes on a sinusoid-textured background. Shapes are
/// redrawn until the coverage lands in `[MIN_COVERAGE, MAX_COVERAGE]`.
pub fn generate_sample(size: usize, seed: u64, index: usize) -> ToySample {
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, index));
    let s = size as f64;
    let mask = loop {
        let count = rng.gen_range(1..=3);
        let shapes: Vec<Shape> = (0..count).map(|_| Shape::random(&mut rng, s)).collect();
        let mask = rasterize(&shapes, size);
        let cov = mask.iter().filter(|&&m| m).count() as f64 / (size * size) as f64;
        if (MIN_COVERAGE..=MAX_COVERAGE).contains(&cov) {
            break mask;
        }
    };
    let bg = random_color(&mut rng);
    let fg = loop {
        let c = random_color(&mut rng);
        if contrast(c, bg) >= MIN_CONTRAST + 2.0 * TEXTURE {
            break c;
        }
    };
    let freq: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0.1..0.6));
    let phase: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0.0..std::f64::consts::TAU));
    let n = size * size;
    let mut image = vec![0f32; 3 * n];
    for y in 0..size {
        for x in 0..size {
            let i = y * size + x;
            let (fx, fy) = (x as f64, y as f64);
            let bg_tex = 0.5 * TEXTURE * ((freq[0] * fx + phase[0]).sin() + (freq[1] * fy + phase[1]).sin());
            let fg_tex = 0.5 * TEXTURE * (freq[2] * (fx + fy) + phase[2]).sin() * (freq[3] * (fx - fy) + phase[3]).cos();
            for c in 0..3 {
                let v = if mask[i] { fg[c] + fg_tex } else { bg[c] + bg_tex };
                image[c * n + i] = quantize(v.clamp(0.0, 1.0)) as f32 / 255.0;
            }
        }
    }
    ToySample {
        id: format!("{:06}", index),
        size,
        image,
        mask: mask.into_iter().map(|m| if m { 1.0 } else { 0.0 }).collect(),
    }
}

/// `n` samples, deterministic in `seed`. Pixel values are multiples of 1/255
/// so the dataset survives a disk round trip unchanged.
pub fn generate_dataset(n: usize, size: usize, seed: u64) -> Result<Vec<ToySample>> {
    if n == 0 {
        return Err(Error::Config("dataset size must be at least 1".into()));
    }
    if !SIZES.contains(&size) {
        return Err(Error::Config(format!("image size must be one of {:?}, got {}", SIZES, size)));
    }
    Ok(map_indexed(n, |i| generate_sample(size, seed, i)))
}

pub fn save_dataset(dir: &Path, samples: &[ToySample]) -> Result<()> {
    fs::create_dir_all(dir.join("images"))?;
    fs::create_dir_all(dir.join("masks"))?;
    for s in samples {
        let img = Raster::from_planar(s.size, s.size, 3, &s.image.iter().map(|&v| v as f64).collect::<Vec<_>>())?;
        let mask = Raster::from_planar(s.size, s.size, 1, &s.mask.iter().map(|&v| v as f64).collect::<Vec<_>>())?;
        netpbm::save(&dir.join("images").join(format!("{}.ppm", s.id)), &img)?;
        netpbm::save(&dir.join("masks").join(format!("{}.pgm", s.id)), &mask)?;
    }
    Ok(())
}

/// Sorted stems of files with the given extension.
pub fn list_stems(dir: &Path, ext: &str) -> Result<Vec<String>> {
    let mut stems = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.push(stem.to_string());
            }
        }
    }
    stems.sort();
    Ok(stems)
}

/// Gray levels at or above 128 count as foreground.
pub fn binarize(v: f64) -> f32 {
    if v >= 128.0 / 255.0 {
        1.0
    } else {
        0.0
    }
}

pub fn load_dataset(dir: &Path) -> Result<Vec<ToySample>> {
    let stems = list_stems(&dir.join("images"), "ppm")?;
    if stems.is_empty() {
        return Err(Error::Config(format!("no images found in {}", dir.join("images").display())));
    }
    let mut out = Vec::with_capacity(stems.len());
    for stem in stems {
        let img = netpbm::load_ppm(&dir.join("images").join(format!("{}.ppm", stem)))?;
        let mask_path = dir.join("masks").join(format!("{}.pgm", stem));
        if !mask_path.exists() {
            return Err(Error::Config(format!("missing mask {}", mask_path.display())));
        }
        let mask = netpbm::load_pgm(&mask_path)?;
        if img.width != img.height || mask.width != img.width || mask.height != img.height {
            return Err(Error::Format(format!("{}: image and mask must be equal squares", stem)));
        }
        out.push(ToySample {
            id: stem,
            size: img.width,
            image: img.to_planar().into_iter().map(|v| v as f32).collect(),
            mask: mask.to_planar().into_iter().map(binarize).collect(),
        });
    }
    Ok(out)
}

/// Stacks samples into `(N, 3, S, S)` images and `(N, 1, S, S)` masks.
pub fn batch<'a>(samples: impl IntoIterator<Item = &'a ToySample>) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let (mut images, mut masks, mut n, mut size) = (Vec::new(), Vec::new(), 0, 0);
    for s in samples {
        if n > 0 && s.size != size {
            return Err(Error::Shape("batch mixes image sizes".into()));
        }
        size = s.size;
        images.extend_from_slice(&s.image);
        masks.extend_from_slice(&s.mask);
        n += 1;
    }
    if n == 0 {
        return Err(Error::Contract("empty batch".into()));
    }
    Ok((Tensor::new(&[n, 3, size, size], images)?, Tensor::new(&[n, 1, size, size], masks)?))
}
