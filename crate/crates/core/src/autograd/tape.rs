use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use super::kernels::{self, Bins, ConvGeom, Taps};
use super::tensor::dims4;
use super::{Float, Tensor};
use crate::error::{contract_err, shape_err, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Statistics source for [`Tape::batch_norm`].
pub enum BnMode<'a, T> {
    /// Normalize by batch statistics and fold them into the running buffers.
    Train { running_mean: &'a mut [T], running_var: &'a mut [T], momentum: T },
    /// Normalize by the stored running statistics.
    Eval { running_mean: &'a [T], running_var: &'a [T] },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
}

enum Op<T> {
    Leaf,
    Binary { kind: BinaryKind, a: Var, b: Var },
    Scale { x: Var, factor: T },
    Offset { x: Var },
    Concat { parts: Vec<Var> },
    Conv2d { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, train: bool },
    Relu { x: Var },
    Sigmoid { x: Var },
    Log { x: Var },
    Clamp { x: Var, lo: T, hi: T },
    Pool { x: Var, ybins: Bins, xbins: Bins },
    Upsample { x: Var, ty: Taps<T>, tx: Taps<T> },
    Linear { x: Var, w: Var, b: Option<Var> },
    Reshape { x: Var },
    Route { x: Var, src: Vec<u32> },
    Sum { x: Var },
    SumItems { x: Var },
    Div { a: Var, b: Var },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Reverse-mode tape. Nodes are appended in execution order, so inputs always
/// precede their consumers and the backward pass is a single reverse sweep.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradient buffers keyed by node, produced by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Float> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl<T: Float> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn same_spatial(a: [usize; 4], b: [usize; 4]) -> bool {
    a[0] == b[0] && a[2] == b[2] && a[3] == b[3]
}

impl<T: Float> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn dims(&self, v: Var) -> [usize; 4] {
        self.nodes[v.0].value.dims4()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vs: &[Var]) -> bool {
        vs.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// `a (op) b`, where every extent of `b` either equals `a`'s or is 1.
    pub fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (da, db) = (dims4(&sa), dims4(&sb));
        if sa.len() != sb.len() || da.iter().zip(&db).any(|(&x, &y)| y != x && y != 1) {
            return shape_err(format!("cannot broadcast {:?} onto {:?}", sb, sa));
        }
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let f = |x: T, y: T| match kind {
            BinaryKind::Add => x + y,
            BinaryKind::Sub => x - y,
            BinaryKind::Mul => x * y,
        };
        let data: Vec<T> = if da == db {
            av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect()
        } else {
            let mut out = Vec::with_capacity(av.len());
            for_broadcast(da, db, |ai, bi| out.push(f(av[ai], bv[bi])));
            out
        };
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(&sa, data)?, Op::Binary { kind, a, b }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let value = self.value(x).map(|v| v * factor);
        let rg = self.requires_grad(x);
        self.push(value, Op::Scale { x, factor }, rg)
    }

    /// `x + c` for a scalar constant.
    pub fn offset(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v + c);
        let rg = self.requires_grad(x);
        self.push(value, Op::Offset { x }, rg)
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return contract_err("concat of zero parts");
        };
        let d0 = self.dims(first);
        let rank = self.shape(first).len();
        let mut channels = 0;
        for &p in parts {
            let d = self.dims(p);
            if !same_spatial(d, d0) || self.shape(p).len() != rank {
                return shape_err(format!("concat mismatch: {:?} vs {:?}", self.shape(p), self.shape(first)));
            }
            channels += d[1];
        }
        let [n, _, h, w] = d0;
        let plane = h * w;
        let mut data = Vec::with_capacity(n * channels * plane);
        for ni in 0..n {
            for &p in parts {
                let c = self.dims(p)[1];
                data.extend_from_slice(&self.value(p).data()[ni * c * plane..(ni + 1) * c * plane]);
            }
        }
        let mut shape = self.shape(first).to_vec();
        shape[1] = channels;
        let rg = self.any_grad(parts);
        Ok(self.push(Tensor::new(&shape, data)?, Op::Concat { parts: parts.to_vec() }, rg))
    }

    /// 2-D cross-correlation. `w` is `(cout, cin, k, k)`, `b` is `(cout,)`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let [n, cin, h, wd] = self.dims(x);
        let ws = self.shape(w).to_vec();
        if self.shape(x).len() != 4 || ws.len() != 4 || ws[2] != ws[3] {
            return shape_err(format!("conv2d expects NCHW input and (O,I,k,k) weights, got {:?} / {:?}", self.shape(x), ws));
        }
        if ws[1] != cin {
            return shape_err(format!("conv2d channel mismatch: input has {}, weights expect {}", cin, ws[1]));
        }
        if let Some(b) = b {
            if self.value(b).len() != ws[0] {
                return shape_err("conv2d bias length != out channels");
            }
        }
        if stride == 0 || h + 2 * pad < ws[2] || wd + 2 * pad < ws[2] {
            return shape_err(format!("kernel {} does not fit {}x{} with pad {}", ws[2], h, wd, pad));
        }
        let geom = ConvGeom { n, cin, h, w: wd, cout: ws[0], k: ws[2], stride, pad };
        let out = kernels::conv2d_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            &geom,
        );
        let shape = [n, geom.cout, geom.out_h(), geom.out_w()];
        let mut deps = vec![x, w];
        deps.extend(b);
        let rg = self.any_grad(&deps);
        Ok(self.push(Tensor::new(&shape, out)?, Op::Conv2d { x, w, b, geom }, rg))
    }

    /// Per-channel batch normalization over N, H and W.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, mode: BnMode<'_, T>, eps: T) -> Result<Var> {
        let [n, c, h, w] = self.dims(x);
        let stats_len = match &mode {
            BnMode::Train { running_mean, running_var, .. } => (running_mean.len(), running_var.len()),
            BnMode::Eval { running_mean, running_var } => (running_mean.len(), running_var.len()),
        };
        if self.value(gamma).len() != c || self.value(beta).len() != c || stats_len != (c, c) {
            return shape_err(format!("batch_norm parameters do not match {} channels", c));
        }
        let train = matches!(mode, BnMode::Train { .. });
        let plane = h * w;
        let m = n * plane;
        let xv = self.value(x).data();
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![T::zero(); xv.len()];
        let mut out = vec![T::zero(); xv.len()];
        let mut inv_std = vec![T::zero(); c];
        let mf = T::of_usize(m);
        let mut mode = mode;
        for ci in 0..c {
            let planes = (0..n).map(|ni| (ni * c + ci) * plane);
            let (mean, var) = match &mut mode {
                BnMode::Train { running_mean, running_var, momentum } => {
                    let mut s = T::zero();
                    for st in planes.clone() {
                        s += xv[st..st + plane].iter().copied().sum::<T>();
                    }
                    let mean = s / mf;
                    let mut ss = T::zero();
                    for st in planes.clone() {
                        for &v in &xv[st..st + plane] {
                            ss += (v - mean) * (v - mean);
                        }
                    }
                    let var = ss / mf;
                    let unbiased = if m > 1 { ss / T::of_usize(m - 1) } else { var };
                    let mom = *momentum;
                    running_mean[ci] = (T::one() - mom) * running_mean[ci] + mom * mean;
                    running_var[ci] = (T::one() - mom) * running_var[ci] + mom * unbiased;
                    (mean, var)
                }
                BnMode::Eval { running_mean, running_var } => (running_mean[ci], running_var[ci]),
            };
            let is = T::one() / (var + eps).sqrt();
            inv_std[ci] = is;
            for st in planes {
                for i in st..st + plane {
                    let xh = (xv[i] - mean) * is;
                    xhat[i] = xh;
                    out[i] = g[ci] * xh + b[ci];
                }
            }
        }
        let shape = self.shape(x).to_vec();
        let rg = self.any_grad(&[x, gamma, beta]);
        Ok(self.push(Tensor::new(&shape, out)?, Op::BatchNorm { x, gamma, beta, xhat, inv_std, train }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        let rg = self.requires_grad(x);
        self.push(value, Op::Relu { x }, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        let rg = self.requires_grad(x);
        self.push(value, Op::Sigmoid { x }, rg)
    }

    pub fn log(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.ln());
        let rg = self.requires_grad(x);
        self.push(value, Op::Log { x }, rg)
    }

    /// Clamps into `[lo, hi]`; gradient is zero outside the interval.
    pub fn clamp(&mut self, x: Var, lo: T, hi: T) -> Var {
        let value = self.value(x).map(|v| v.max(lo).min(hi));
        let rg = self.requires_grad(x);
        self.push(value, Op::Clamp { x, lo, hi }, rg)
    }

    fn pool(&mut self, x: Var, ybins: Bins, xbins: Bins) -> Result<Var> {
        let [n, c, h, w] = self.dims(x);
        let out = kernels::bin_pool_forward(self.value(x).data(), n * c, h, w, &ybins, &xbins);
        let shape = [n, c, ybins.len(), xbins.len()];
        let rg = self.requires_grad(x);
        Ok(self.push(Tensor::new(&shape, out)?, Op::Pool { x, ybins, xbins }, rg))
    }

    /// Average pooling without padding.
    pub fn avg_pool(&mut self, x: Var, kernel: usize, stride: usize) -> Result<Var> {
        let [_, _, h, w] = self.dims(x);
        if kernel == 0 || stride == 0 || kernel > h || kernel > w {
            return shape_err(format!("pool kernel {} does not fit {}x{}", kernel, h, w));
        }
        self.pool(x, kernels::strided_bins(h, kernel, stride), kernels::strided_bins(w, kernel, stride))
    }

    pub fn adaptive_avg_pool(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let [_, _, h, w] = self.dims(x);
        if out_h == 0 || out_w == 0 || out_h > h || out_w > w {
            return shape_err(format!("adaptive pool to {}x{} from {}x{}", out_h, out_w, h, w));
        }
        self.pool(x, kernels::adaptive_bins(h, out_h), kernels::adaptive_bins(w, out_w))
    }

    /// Mean over H and W, returned as `(N, C)`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let [n, c, _, _] = self.dims(x);
        let p = self.adaptive_avg_pool(x, 1, 1)?;
        self.reshape(p, &[n, c])
    }

    /// Bilinear resampling with half-pixel centers. Only upsampling (or the
    /// identity) is allowed; a same-size request returns `x` itself.
    pub fn upsample_bilinear(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let [n, c, h, w] = self.dims(x);
        if out_h < h || out_w < w {
            return contract_err(format!("bilinear upsample cannot shrink {}x{} to {}x{}", h, w, out_h, out_w));
        }
        if out_h == h && out_w == w {
            return Ok(x);
        }
        let ty = kernels::bilinear_taps(h, out_h);
        let tx = kernels::bilinear_taps(w, out_w);
        let out = kernels::bilinear_forward(self.value(x).data(), n * c, h, w, &ty, &tx);
        let rg = self.requires_grad(x);
        Ok(self.push(Tensor::new(&[n, c, out_h, out_w], out)?, Op::Upsample { x, ty, tx }, rg))
    }

    /// `y[n, o] = sum_i w[o, i] * x[n, i] + b[o]`. `x` may be `(N, C)` or `(N, C, 1, 1)`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let [n, cin, h, wd] = self.dims(x);
        let ws = self.shape(w).to_vec();
        if h != 1 || wd != 1 || ws.len() != 2 || ws[1] != cin {
            return shape_err(format!("linear: input {:?} vs weights {:?}", self.shape(x), ws));
        }
        let cout = ws[0];
        if let Some(b) = b {
            if self.value(b).len() != cout {
                return shape_err("linear bias length != out features");
            }
        }
        let (xv, wv) = (self.value(x).data(), self.value(w).data());
        let bv = b.map(|b| self.value(b).data());
        let mut out = vec![T::zero(); n * cout];
        for ni in 0..n {
            let xr = &xv[ni * cin..(ni + 1) * cin];
            for o in 0..cout {
                let wr = &wv[o * cin..(o + 1) * cin];
                let mut acc = bv.map_or(T::zero(), |b| b[o]);
                for (&a, &bb) in xr.iter().zip(wr) {
                    acc += a * bb;
                }
                out[ni * cout + o] = acc;
            }
        }
        let mut deps = vec![x, w];
        deps.extend(b);
        let rg = self.any_grad(&deps);
        Ok(self.push(Tensor::new(&[n, cout], out)?, Op::Linear { x, w, b }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.requires_grad(x);
        Ok(self.push(value, Op::Reshape { x }, rg))
    }

    fn morph(&mut self, x: Var, kernel: usize, take_max: bool) -> Result<Var> {
        if kernel % 2 == 0 {
            return contract_err(format!("morphology kernel must be odd, got {}", kernel));
        }
        let [n, c, h, w] = self.dims(x);
        let pad = if take_max { T::zero() } else { T::one() };
        let (out, src) = kernels::window_extreme(self.value(x).data(), n * c, h, w, kernel, take_max, pad);
        let shape = self.shape(x).to_vec();
        let rg = self.requires_grad(x);
        Ok(self.push(Tensor::new(&shape, out)?, Op::Route { x, src }, rg))
    }

    /// Sliding-window max, same padding with 0.
    pub fn dilate(&mut self, x: Var, kernel: usize) -> Result<Var> {
        self.morph(x, kernel, true)
    }

    /// Sliding-window min, same padding with 1.
    pub fn erode(&mut self, x: Var, kernel: usize) -> Result<Var> {
        self.morph(x, kernel, false)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let rg = self.requires_grad(x);
        self.push(Tensor::scalar(s), Op::Sum { x }, rg)
    }

    /// Sums each batch item over all remaining axes; output shape `(N,)`.
    pub fn sum_items(&mut self, x: Var) -> Var {
        let n = self.shape(x)[0];
        let per = self.value(x).len() / n;
        let data: Vec<T> = self.value(x).data().chunks(per).map(|c| c.iter().copied().sum()).collect();
        let rg = self.requires_grad(x);
        self.push(Tensor::new(&[n], data).expect("nonzero batch"), Op::SumItems { x }, rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len();
        let s = self.sum(x);
        self.scale(s, T::one() / T::of_usize(n))
    }

    /// Elementwise `a / b` on equal shapes.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return shape_err(format!("div shapes {:?} vs {:?}", self.shape(a), self.shape(b)));
        }
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x / y).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(&shape, data)?, Op::Div { a, b }, rg))
    }

    /// Hash of every branch taken by a non-smooth op: ReLU signs, clamp
    /// regions and morphology winners. Two evaluations with equal signatures
    /// lie on the same smooth piece of the function.
    pub fn branch_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                &Op::Relu { x } => {
                    for &v in self.nodes[x.0].value.data() {
                        (v > T::zero()).hash(&mut h);
                    }
                }
                &Op::Clamp { x, lo, hi } => {
                    for &v in self.nodes[x.0].value.data() {
                        (v < lo, v > hi).hash(&mut h);
                    }
                }
                Op::Route { src, .. } => src.hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }

    /// Reverse sweep from a scalar `loss`. Gradients accumulate into each
    /// input in tape order, so fan-out sums are reproducible.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return contract_err(format!("backward needs a scalar loss, got shape {:?}", self.shape(loss)));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![T::one()]);
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            for (input, dx) in self.vjp(node, &g) {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.iter_mut().zip(&dx).for_each(|(a, &d)| *a += d),
                    slot @ None => *slot = Some(dx),
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn vjp(&self, node: &Node<T>, g: &[T]) -> Vec<(Var, Vec<T>)> {
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let val = |v: Var| self.nodes[v.0].value.data();
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            &Op::Binary { kind, a, b } => {
                let (da, db) = (self.dims(a), self.dims(b));
                if wants(a) {
                    let ga = match kind {
                        BinaryKind::Mul if da == db => g.iter().zip(val(b)).map(|(&gi, &bi)| gi * bi).collect(),
                        BinaryKind::Mul => {
                            let bv = val(b);
                            let mut ga = vec![T::zero(); g.len()];
                            for_broadcast(da, db, |ai, bi| ga[ai] = g[ai] * bv[bi]);
                            ga
                        }
                        _ => g.to_vec(),
                    };
                    out.push((a, ga));
                }
                if wants(b) {
                    let mut gb = vec![T::zero(); val(b).len()];
                    let av = val(a);
                    let mut acc = |ai: usize, bi: usize| {
                        gb[bi] += match kind {
                            BinaryKind::Add => g[ai],
                            BinaryKind::Sub => -g[ai],
                            BinaryKind::Mul => g[ai] * av[ai],
                        }
                    };
                    if da == db {
                        (0..g.len()).for_each(|i| acc(i, i));
                    } else {
                        for_broadcast(da, db, acc);
                    }
                    out.push((b, gb));
                }
            }
            &Op::Scale { x, factor } => out.push((x, g.iter().map(|&v| v * factor).collect())),
            &Op::Offset { x } => out.push((x, g.to_vec())),
            Op::Concat { parts } => {
                let [n, ctot, h, w] = node.value.dims4();
                let plane = h * w;
                let mut off = 0;
                for &p in parts {
                    let c = self.dims(p)[1];
                    if wants(p) {
                        let mut gp = Vec::with_capacity(n * c * plane);
                        for ni in 0..n {
                            let st = (ni * ctot + off) * plane;
                            gp.extend_from_slice(&g[st..st + c * plane]);
                        }
                        out.push((p, gp));
                    }
                    off += c;
                }
            }
            &Op::Conv2d { x, w, b, ref geom } => {
                if wants(x) {
                    out.push((x, kernels::conv2d_backward_input(g, val(w), geom)));
                }
                if wants(w) {
                    out.push((w, kernels::conv2d_backward_weight(g, val(x), geom)));
                }
                if let Some(b) = b.filter(|&b| wants(b)) {
                    out.push((b, kernels::conv2d_backward_bias(g, geom)));
                }
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, train } => {
                let [n, c, h, w] = node.value.dims4();
                let plane = h * w;
                let m = T::of_usize(n * plane);
                let gam = val(*gamma);
                let mut dg = vec![T::zero(); c];
                let mut dbt = vec![T::zero(); c];
                for ci in 0..c {
                    for ni in 0..n {
                        let st = (ni * c + ci) * plane;
                        for i in st..st + plane {
                            dg[ci] += g[i] * xhat[i];
                            dbt[ci] += g[i];
                        }
                    }
                }
                if wants(*x) {
                    let mut dx = vec![T::zero(); g.len()];
                    for ci in 0..c {
                        let k = gam[ci] * inv_std[ci];
                        for ni in 0..n {
                            let st = (ni * c + ci) * plane;
                            for i in st..st + plane {
                                dx[i] = if *train {
                                    k / m * (m * g[i] - dbt[ci] - xhat[i] * dg[ci])
                                } else {
                                    k * g[i]
                                };
                            }
                        }
                    }
                    out.push((*x, dx));
                }
                if wants(*gamma) {
                    out.push((*gamma, dg));
                }
                if wants(*beta) {
                    out.push((*beta, dbt));
                }
            }
            &Op::Relu { x } => {
                let d = g.iter().zip(val(x)).map(|(&gi, &xi)| if xi > T::zero() { gi } else { T::zero() }).collect();
                out.push((x, d));
            }
            &Op::Sigmoid { x } => {
                let s = node.value.data();
                out.push((x, g.iter().zip(s).map(|(&gi, &si)| gi * si * (T::one() - si)).collect()));
            }
            &Op::Log { x } => out.push((x, g.iter().zip(val(x)).map(|(&gi, &xi)| gi / xi).collect())),
            &Op::Clamp { x, lo, hi } => {
                let d = g
                    .iter()
                    .zip(val(x))
                    .map(|(&gi, &xi)| if xi >= lo && xi <= hi { gi } else { T::zero() })
                    .collect();
                out.push((x, d));
            }
            Op::Pool { x, ybins, xbins } => {
                let [n, c, h, w] = self.dims(*x);
                out.push((*x, kernels::bin_pool_backward(g, n * c, h, w, ybins, xbins)));
            }
            Op::Upsample { x, ty, tx } => {
                let [n, c, h, w] = self.dims(*x);
                out.push((*x, kernels::bilinear_backward(g, n * c, h, w, ty, tx)));
            }
            &Op::Linear { x, w, b } => {
                let [n, cin, _, _] = self.dims(x);
                let cout = self.dims(w)[0];
                let (xv, wv) = (val(x), val(w));
                if wants(x) {
                    let mut dx = vec![T::zero(); n * cin];
                    for ni in 0..n {
                        for o in 0..cout {
                            let go = g[ni * cout + o];
                            for i in 0..cin {
                                dx[ni * cin + i] += go * wv[o * cin + i];
                            }
                        }
                    }
                    out.push((x, dx));
                }
                if wants(w) {
                    let mut dw = vec![T::zero(); cout * cin];
                    for ni in 0..n {
                        for o in 0..cout {
                            let go = g[ni * cout + o];
                            for i in 0..cin {
                                dw[o * cin + i] += go * xv[ni * cin + i];
                            }
                        }
                    }
                    out.push((w, dw));
                }
                if let Some(b) = b.filter(|&b| wants(b)) {
                    let mut db = vec![T::zero(); cout];
                    for ni in 0..n {
                        for o in 0..cout {
                            db[o] += g[ni * cout + o];
                        }
                    }
                    out.push((b, db));
                }
            }
            &Op::Reshape { x } => out.push((x, g.to_vec())),
            Op::Route { x, src } => {
                let [n, c, h, w] = self.dims(*x);
                out.push((*x, kernels::route_backward(g, src, n * c, h * w)));
            }
            &Op::Sum { x } => out.push((x, vec![g[0]; self.nodes[x.0].value.len()])),
            &Op::SumItems { x } => {
                let per = self.nodes[x.0].value.len() / g.len();
                out.push((x, g.iter().flat_map(|&gi| std::iter::repeat_n(gi, per)).collect()));
            }
            &Op::Div { a, b } => {
                let (av, bv) = (val(a), val(b));
                if wants(a) {
                    out.push((a, g.iter().zip(bv).map(|(&gi, &bi)| gi / bi).collect()));
                }
                if wants(b) {
                    let d = g.iter().zip(av).zip(bv).map(|((&gi, &ai), &bi)| -gi * ai / (bi * bi)).collect();
                    out.push((b, d));
                }
            }
        }
        out
    }
}

pub(crate) fn sigmoid<T: Float>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Visits `(index_in_a, index_in_b)` for every element of `a` in row-major
/// order, with `b` broadcast along its unit extents.
fn for_broadcast(da: [usize; 4], db: [usize; 4], mut f: impl FnMut(usize, usize)) {
    let pick = |i: usize, axis: usize| if db[axis] == 1 { 0 } else { i };
    let mut ai = 0;
    for n in 0..da[0] {
        for c in 0..da[1] {
            for y in 0..da[2] {
                let brow = ((pick(n, 0) * db[1] + pick(c, 1)) * db[2] + pick(y, 2)) * db[3];
                for x in 0..da[3] {
                    f(ai, brow + pick(x, 3));
                    ai += 1;
                }
            }
        }
    }
}
