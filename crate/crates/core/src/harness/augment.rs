//! Random crop-and-resize and horizontal flip.

use rand::Rng;

use super::data::ToySample;

pub const MIN_CROP: f64 = 0.75;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentConfig {
    pub crop: bool,
    pub flip: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { crop: true, flip: true }
    }
}

/// Crops the `side x side` window at `(x0, y0)` and resizes it back to the
/// full size: bilinear for the image, nearest for the mask.
pub fn crop_resize(s: &ToySample, x0: usize, y0: usize, side: usize) -> ToySample {
    let size = s.size;
    let n = size * size;
    let scale = side as f64 / size as f64;
    let src = |o: usize| (o as f64 + 0.5) * scale - 0.5;
    let mut image = vec![0f32; 3 * n];
    let mut mask = vec![0f32; n];
    for oy in 0..size {
        let fy = src(oy).max(0.0);
        let y0i = (fy.floor() as usize).min(side - 1);
        let y1i = (y0i + 1).min(side - 1);
        let wy = (fy - y0i as f64) as f32;
        let ny = (((oy as f64 + 0.5) * scale).floor() as usize).min(side - 1);
        for ox in 0..size {
            let fx = src(ox).max(0.0);
            let x0i = (fx.floor() as usize).min(side - 1);
            let x1i = (x0i + 1).min(side - 1);
            let wx = (fx - x0i as f64) as f32;
            let nx = (((ox as f64 + 0.5) * scale).floor() as usize).min(side - 1);
            let at = |y: usize, x: usize| (y0 + y) * size + x0 + x;
            for c in 0..3 {
                let p = &s.image[c * n..(c + 1) * n];
                let top = p[at(y0i, x0i)] * (1.0 - wx) + p[at(y0i, x1i)] * wx;
                let bot = p[at(y1i, x0i)] * (1.0 - wx) + p[at(y1i, x1i)] * wx;
                image[c * n + oy * size + ox] = top * (1.0 - wy) + bot * wy;
            }
            mask[oy * size + ox] = s.mask[at(ny, nx)];
        }
    }
    ToySample { id: s.id.clone(), size, image, mask }
}

pub fn flip_horizontal(s: &ToySample) -> ToySample {
    let size = s.size;
    let flip = |plane: &[f32]| -> Vec<f32> { plane.chunks_exact(size).flat_map(|row| row.iter().rev().copied()).collect() };
    ToySample { id: s.id.clone(), size, image: flip(&s.image), mask: flip(&s.mask) }
}

pub fn augment(s: &ToySample, cfg: AugmentConfig, rng: &mut impl Rng) -> ToySample {
    let mut out = if cfg.crop {
        let frac = rng.gen_range(MIN_CROP..=1.0);
        let side = ((frac * s.size as f64).round() as usize).clamp(1, s.size);
        let x0 = rng.gen_range(0..=s.size - side);
        let y0 = rng.gen_range(0..=s.size - side);
        crop_resize(s, x0, y0, side)
    } else {
        s.clone()
    };
    if cfg.flip && rng.gen_bool(0.5) {
        out = flip_horizontal(&out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::data::generate_sample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn double_flip_is_identity() {
        let s = generate_sample(32, 1, 0);
        assert_eq!(flip_horizontal(&flip_horizontal(&s)), s);
        assert_ne!(flip_horizontal(&s), s);
    }

    #[test]
    fn full_crop_is_identity() {
        let s = generate_sample(32, 2, 0);
        assert_eq!(crop_resize(&s, 0, 0, 32), s);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(augment(&s, AugmentConfig { crop: false, flip: false }, &mut rng), s);
    }

    #[test]
    fn mask_stays_binary() {
        let s = generate_sample(64, 3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = augment(&s, AugmentConfig::default(), &mut rng);
            assert!(a.mask.iter().all(|&m| m == 0.0 || m == 1.0));
            assert!(a.image.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
