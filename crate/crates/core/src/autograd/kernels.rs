//! Slice-level forward/backward kernels. Each kernel parallelizes over
//! independent batch items or output planes and keeps a fixed accumulation
//! order, so parallel and sequential runs agree bit for bit.

use super::Float;
use crate::parallel::{for_each_chunk, map_indexed};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.pad - self.k) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pad - self.k) / self.stride + 1
    }

    /// Output range `[lo, hi)` whose input coordinate `o*stride + tap - pad`
    /// lands inside `0..extent`.
    fn valid(&self, tap: usize, extent: usize, out: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = if self.pad > tap { (self.pad - tap).div_ceil(s) } else { 0 };
        if extent + self.pad < tap + 1 {
            return (0, 0);
        }
        let hi = ((extent - 1 + self.pad - tap) / s + 1).min(out);
        (lo.min(hi), hi)
    }
}

impl ConvGeom {
    fn in_plane(&self) -> usize {
        self.h * self.w
    }

    fn out_plane(&self) -> usize {
        self.out_h() * self.out_w()
    }

    /// Rows of the unfolded input: one per `(cin, ky, kx)` tap.
    fn taps(&self) -> usize {
        self.cin * self.k * self.k
    }

    /// 1x1, stride 1, no padding: the unfolded input is the input itself.
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Unfolds one item `(cin, h, w)` into `(cin*k*k, ho*wo)` columns; taps that
/// fall into the padding are zero.
fn im2col<T: Float>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let (ho, wo) = (g.out_h(), g.out_w());
    let (k, s, p) = (g.k, g.stride, g.pad);
    let zero = T::zero();
    let mut cols = Vec::with_capacity(g.taps() * ho * wo);
    for ci in 0..g.cin {
        let xin = &x[ci * g.in_plane()..][..g.in_plane()];
        for ky in 0..k {
            let (oy_lo, oy_hi) = g.valid(ky, g.h, ho);
            for kx in 0..k {
                let (ox_lo, ox_hi) = g.valid(kx, g.w, wo);
                cols.resize(cols.len() + oy_lo * wo, zero);
                for oy in oy_lo..oy_hi {
                    let irow = &xin[(oy * s + ky - p) * g.w..][..g.w];
                    cols.resize(cols.len() + ox_lo, zero);
                    if s == 1 {
                        cols.extend_from_slice(&irow[ox_lo + kx - p..ox_hi + kx - p]);
                    } else {
                        cols.extend((ox_lo..ox_hi).map(|ox| irow[ox * s + kx - p]));
                    }
                    cols.resize(cols.len() + wo - ox_hi.max(ox_lo), zero);
                }
                cols.resize(cols.len() + (ho - oy_hi.max(oy_lo)) * wo, zero);
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: accumulates columns back into one item.
fn col2im<T: Float>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let (ho, wo) = (g.out_h(), g.out_w());
    let (k, s, p) = (g.k, g.stride, g.pad);
    for ci in 0..g.cin {
        let d = &mut dx[ci * g.in_plane()..][..g.in_plane()];
        for ky in 0..k {
            let (oy_lo, oy_hi) = g.valid(ky, g.h, ho);
            for kx in 0..k {
                let (ox_lo, ox_hi) = g.valid(kx, g.w, wo);
                let row = &cols[((ci * k + ky) * k + kx) * ho * wo..][..ho * wo];
                for oy in oy_lo..oy_hi {
                    let drow = &mut d[(oy * s + ky - p) * g.w..][..g.w];
                    let grow = &row[oy * wo..(oy + 1) * wo];
                    if s == 1 {
                        for (dv, &gv) in drow[ox_lo + kx - p..].iter_mut().zip(&grow[ox_lo..ox_hi]) {
                            *dv += gv;
                        }
                    } else {
                        for ox in ox_lo..ox_hi {
                            drow[ox * s + kx - p] += grow[ox];
                        }
                    }
                }
            }
        }
    }
}

/// `y[n] = W · unfold(x[n]) + b`, one matrix product per batch item.
pub fn conv2d_forward<T: Float>(x: &[T], w: &[T], b: Option<&[T]>, g: &ConvGeom) -> Vec<T> {
    let (hw, taps) = (g.out_plane(), g.taps());
    let item = g.cin * g.in_plane();
    let mut out = vec![T::zero(); g.n * g.cout * hw];
    for_each_chunk(&mut out, g.cout * hw, |n, o| {
        let xin = &x[n * item..][..item];
        let unfolded;
        let cols = if g.is_pointwise() {
            xin
        } else {
            unfolded = im2col(xin, g);
            &unfolded
        };
        T::gemm(g.cout, taps, hw, w, (taps, 1), cols, (hw, 1), T::zero(), o);
        if let Some(b) = b {
            for (row, &bv) in o.chunks_exact_mut(hw).zip(b) {
                row.iter_mut().for_each(|v| *v += bv);
            }
        }
    });
    out
}

/// Input gradient: `fold(Wᵀ · dy[n])` per item.
pub fn conv2d_backward_input<T: Float>(dy: &[T], w: &[T], g: &ConvGeom) -> Vec<T> {
    let (hw, taps) = (g.out_plane(), g.taps());
    let item = g.cin * g.in_plane();
    let mut dx = vec![T::zero(); g.n * item];
    for_each_chunk(&mut dx, item, |n, d| {
        let dyn_ = &dy[n * g.cout * hw..][..g.cout * hw];
        if g.is_pointwise() {
            T::gemm(taps, g.cout, hw, w, (1, taps), dyn_, (hw, 1), T::zero(), d);
        } else {
            let mut cols = vec![T::zero(); taps * hw];
            T::gemm(taps, g.cout, hw, w, (1, taps), dyn_, (hw, 1), T::zero(), &mut cols);
            col2im(&cols, g, d);
        }
    });
    dx
}

/// Weight gradient, laid out like the weights `(cout, cin, k, k)`: per-item
/// products `dy[n] · unfold(x[n])ᵀ`, summed in item order.
pub fn conv2d_backward_weight<T: Float>(dy: &[T], x: &[T], g: &ConvGeom) -> Vec<T> {
    let (hw, taps) = (g.out_plane(), g.taps());
    let item = g.cin * g.in_plane();
    let partials = map_indexed(g.n, |n| {
        let xin = &x[n * item..][..item];
        let unfolded;
        let cols = if g.is_pointwise() {
            xin
        } else {
            unfolded = im2col(xin, g);
            &unfolded
        };
        let mut dw = vec![T::zero(); g.cout * taps];
        T::gemm(g.cout, hw, taps, &dy[n * g.cout * hw..][..g.cout * hw], (hw, 1), cols, (1, hw), T::zero(), &mut dw);
        dw
    });
    let mut parts = partials.into_iter();
    let mut dw = parts.next().unwrap_or_else(|| vec![T::zero(); g.cout * taps]);
    for p in parts {
        dw.iter_mut().zip(&p).for_each(|(a, &b)| *a += b);
    }
    dw
}

pub fn conv2d_backward_bias<T: Float>(dy: &[T], g: &ConvGeom) -> Vec<T> {
    let plane = g.out_h() * g.out_w();
    let mut db = vec![T::zero(); g.cout];
    for n in 0..g.n {
        for (co, acc) in db.iter_mut().enumerate() {
            *acc += dy[(n * g.cout + co) * plane..][..plane].iter().copied().sum::<T>();
        }
    }
    db
}

/// Half-open input range averaged into each output cell along one axis.
pub type Bins = Vec<(usize, usize)>;

pub fn strided_bins(extent: usize, kernel: usize, stride: usize) -> Bins {
    let out = (extent - kernel) / stride + 1;
    (0..out).map(|o| (o * stride, o * stride + kernel)).collect()
}

/// Near-equal partition: bin `i` covers `floor(i*n/out) .. ceil((i+1)*n/out)`.
pub fn adaptive_bins(extent: usize, out: usize) -> Bins {
    (0..out)
        .map(|i| ((i * extent) / out, ((i + 1) * extent).div_ceil(out)))
        .collect()
}

pub fn bin_pool_forward<T: Float>(x: &[T], planes: usize, h: usize, w: usize, ybins: &Bins, xbins: &Bins) -> Vec<T> {
    let (ho, wo) = (ybins.len(), xbins.len());
    let mut out = vec![T::zero(); planes * ho * wo];
    for_each_chunk(&mut out, ho * wo, |pi, o| {
        let xp = &x[pi * h * w..][..h * w];
        for (oy, &(y0, y1)) in ybins.iter().enumerate() {
            for (ox, &(x0, x1)) in xbins.iter().enumerate() {
                let mut acc = T::zero();
                for row in xp[y0 * w..y1 * w].chunks(w) {
                    acc += row[x0..x1].iter().copied().sum::<T>();
                }
                o[oy * wo + ox] = acc / T::of_usize((y1 - y0) * (x1 - x0));
            }
        }
    });
    out
}

pub fn bin_pool_backward<T: Float>(dy: &[T], planes: usize, h: usize, w: usize, ybins: &Bins, xbins: &Bins) -> Vec<T> {
    let (ho, wo) = (ybins.len(), xbins.len());
    let mut dx = vec![T::zero(); planes * h * w];
    for_each_chunk(&mut dx, h * w, |pi, d| {
        let gp = &dy[pi * ho * wo..][..ho * wo];
        for (oy, &(y0, y1)) in ybins.iter().enumerate() {
            for (ox, &(x0, x1)) in xbins.iter().enumerate() {
                let g = gp[oy * wo + ox] / T::of_usize((y1 - y0) * (x1 - x0));
                for y in y0..y1 {
                    for v in &mut d[y * w + x0..y * w + x1] {
                        *v += g;
                    }
                }
            }
        }
    });
    dx
}

/// Per-axis bilinear taps with half-pixel centers (align-corners false).
#[derive(Clone, Debug)]
pub struct Taps<T> {
    pub i0: Vec<usize>,
    pub i1: Vec<usize>,
    pub l1: Vec<T>,
}

pub fn bilinear_taps<T: Float>(src: usize, dst: usize) -> Taps<T> {
    let scale = src as f64 / dst as f64;
    let mut taps = Taps { i0: Vec::with_capacity(dst), i1: Vec::with_capacity(dst), l1: Vec::with_capacity(dst) };
    for d in 0..dst {
        let c = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
        let i0 = (c.floor() as usize).min(src - 1);
        let i1 = if i0 + 1 < src { i0 + 1 } else { i0 };
        taps.i0.push(i0);
        taps.i1.push(i1);
        taps.l1.push(T::from_f64(c - i0 as f64));
    }
    taps
}

pub fn bilinear_forward<T: Float>(x: &[T], planes: usize, h: usize, w: usize, ty: &Taps<T>, tx: &Taps<T>) -> Vec<T> {
    let (ho, wo) = (ty.i0.len(), tx.i0.len());
    let mut out = vec![T::zero(); planes * ho * wo];
    for_each_chunk(&mut out, ho * wo, |pi, o| {
        let xp = &x[pi * h * w..][..h * w];
        for oy in 0..ho {
            let (r0, r1) = (&xp[ty.i0[oy] * w..][..w], &xp[ty.i1[oy] * w..][..w]);
            let ly1 = ty.l1[oy];
            let ly0 = T::one() - ly1;
            for ox in 0..wo {
                let (a, b) = (tx.i0[ox], tx.i1[ox]);
                let lx1 = tx.l1[ox];
                let lx0 = T::one() - lx1;
                o[oy * wo + ox] = ly0 * (lx0 * r0[a] + lx1 * r0[b]) + ly1 * (lx0 * r1[a] + lx1 * r1[b]);
            }
        }
    });
    out
}

pub fn bilinear_backward<T: Float>(dy: &[T], planes: usize, h: usize, w: usize, ty: &Taps<T>, tx: &Taps<T>) -> Vec<T> {
    let (ho, wo) = (ty.i0.len(), tx.i0.len());
    let mut dx = vec![T::zero(); planes * h * w];
    for_each_chunk(&mut dx, h * w, |pi, d| {
        let gp = &dy[pi * ho * wo..][..ho * wo];
        for oy in 0..ho {
            let (y0, y1) = (ty.i0[oy], ty.i1[oy]);
            let ly1 = ty.l1[oy];
            let ly0 = T::one() - ly1;
            for ox in 0..wo {
                let (a, b) = (tx.i0[ox], tx.i1[ox]);
                let lx1 = tx.l1[ox];
                let lx0 = T::one() - lx1;
                let g = gp[oy * wo + ox];
                d[y0 * w + a] += ly0 * lx0 * g;
                d[y0 * w + b] += ly0 * lx1 * g;
                d[y1 * w + a] += ly1 * lx0 * g;
                d[y1 * w + b] += ly1 * lx1 * g;
            }
        }
    });
    dx
}

/// Marks a window position that fell on padding.
pub const PAD_SOURCE: u32 = u32::MAX;

/// Same-padded sliding-window max (`take_max`) or min. Returns the values and,
/// per output pixel, the in-plane index of the selected input (first in scan
/// order on ties) or [`PAD_SOURCE`].
pub fn window_extreme<T: Float>(x: &[T], planes: usize, h: usize, w: usize, k: usize, take_max: bool, pad_value: T) -> (Vec<T>, Vec<u32>) {
    let r = (k / 2) as isize;
    let mut out = vec![(T::zero(), PAD_SOURCE); planes * h * w];
    for_each_chunk(&mut out, h * w, |pi, o| {
        let xp = &x[pi * h * w..][..h * w];
        for y in 0..h as isize {
            for xx in 0..w as isize {
                let mut best: Option<(T, u32)> = None;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (sy, sx) = (y + dy, xx + dx);
                        let cand = if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                            (pad_value, PAD_SOURCE)
                        } else {
                            let i = sy as usize * w + sx as usize;
                            (xp[i], i as u32)
                        };
                        best = match best {
                            None => Some(cand),
                            Some(b) if (take_max && cand.0 > b.0) || (!take_max && cand.0 < b.0) => Some(cand),
                            keep => keep,
                        };
                    }
                }
                o[y as usize * w + xx as usize] = best.expect("window is nonempty");
            }
        }
    });
    out.into_iter().unzip()
}

pub fn route_backward<T: Float>(dy: &[T], src: &[u32], planes: usize, plane: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); planes * plane];
    for_each_chunk(&mut dx, plane, |pi, d| {
        let g = &dy[pi * plane..][..plane];
        let s = &src[pi * plane..][..plane];
        for (&gi, &si) in g.iter().zip(s) {
            if si != PAD_SOURCE {
                d[si as usize] += gi;
            }
        }
    });
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &[f64], w: &[f64], g: &ConvGeom) -> Vec<f64> {
        let (ho, wo) = (g.out_h(), g.out_w());
        let mut out = vec![0.0; g.n * g.cout * ho * wo];
        for n in 0..g.n {
            for co in 0..g.cout {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = 0.0;
                        for ci in 0..g.cin {
                            for ky in 0..g.k {
                                for kx in 0..g.k {
                                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                                    let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                    if iy < 0 || ix < 0 || iy >= g.h as isize || ix >= g.w as isize {
                                        continue;
                                    }
                                    acc += w[((co * g.cin + ci) * g.k + ky) * g.k + kx]
                                        * x[((n * g.cin + ci) * g.h + iy as usize) * g.w + ix as usize];
                                }
                            }
                        }
                        out[((n * g.cout + co) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_naive_loops() {
        let mut seed = 7u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for &(h, w, k, stride, pad) in &[(5, 7, 3, 1, 1), (6, 6, 3, 2, 1), (4, 5, 1, 1, 0), (7, 4, 3, 2, 0)] {
            let g = ConvGeom { n: 2, cin: 3, h, w, cout: 2, k, stride, pad };
            let x: Vec<f64> = (0..g.n * g.cin * h * w).map(|_| next()).collect();
            let wt: Vec<f64> = (0..g.cout * g.cin * k * k).map(|_| next()).collect();
            let fast = conv2d_forward(&x, &wt, None, &g);
            let slow = naive_conv(&x, &wt, &g);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adaptive_bins_cover_axis() {
        assert_eq!(adaptive_bins(4, 2), vec![(0, 2), (2, 4)]);
        assert_eq!(adaptive_bins(10, 5), vec![(0, 2), (2, 4), (4, 6), (6, 8), (8, 10)]);
        // overlapping bins when the extent is not divisible
        assert_eq!(adaptive_bins(5, 2), vec![(0, 3), (2, 5)]);
    }

    #[test]
    fn bilinear_taps_identity_at_same_size() {
        let t = bilinear_taps::<f64>(6, 6);
        assert_eq!(t.i0, (0..6).collect::<Vec<_>>());
        assert!(t.l1.iter().all(|&l| l == 0.0));
    }
}
