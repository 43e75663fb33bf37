//! Forward and backward kernels on raw tensors.
//!
//! Every reduction runs in a fixed sequential order. In particular each
//! convolution and linear output element is accumulated from zero over its
//! reduction index in ascending order, with the bias added last, so results
//! are bit-identical to the obvious nested-loop formulation.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

const MR: usize = 4;
const NR: usize = 32;

/// `c[m×n] += a[m×k] · b[k×n]`, all row-major.
///
/// Each `c[i][j]` receives its `k` products in ascending order.
pub fn gemm_acc<T: Element>(m: usize, n: usize, k: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let full_rows = m - m % MR;
    let full_cols = n - n % NR;
    if full_rows > 0 && full_cols > 0 {
        // A packed as [row tile][p][MR] so the inner loop reads it contiguously.
        let tiles = full_rows / MR;
        let mut packed = vec![T::zero(); tiles * k * MR];
        for t in 0..tiles {
            for p in 0..k {
                for r in 0..MR {
                    packed[(t * k + p) * MR + r] = a[(t * MR + r) * k + p];
                }
            }
        }
        let mut j = 0;
        while j < full_cols {
            for t in 0..tiles {
                let i = t * MR;
                let ap = &packed[t * k * MR..(t + 1) * k * MR];
                let mut acc = [[T::zero(); NR]; MR];
                for (r, row) in acc.iter_mut().enumerate() {
                    row.copy_from_slice(&c[(i + r) * n + j..(i + r) * n + j + NR]);
                }
                for p in 0..k {
                    let brow: &[T; NR] = b[p * n + j..p * n + j + NR].try_into().unwrap();
                    let acol: &[T; MR] = ap[p * MR..p * MR + MR].try_into().unwrap();
                    for (row, &av) in acc.iter_mut().zip(acol) {
                        for q in 0..NR {
                            row[q] += av * brow[q];
                        }
                    }
                }
                for (r, row) in acc.iter().enumerate() {
                    c[(i + r) * n + j..(i + r) * n + j + NR].copy_from_slice(row);
                }
            }
            j += NR;
        }
    }
    for i in 0..m {
        let from = if i < full_rows { full_cols } else { 0 };
        gemm_row_tail(i, from, n, k, a, b, c);
    }
}

fn gemm_row_tail<T: Element>(
    i: usize,
    from: usize,
    n: usize,
    k: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
) {
    for j in from..n {
        let mut acc = c[i * n + j];
        for p in 0..k {
            acc += a[i * k + p] * b[p * n + j];
        }
        c[i * n + j] = acc;
    }
}

fn transpose<T: Element>(rows: usize, cols: usize, src: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}

/// Static geometry of a 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], weight: &[usize], stride: usize, padding: usize) -> Result<Self> {
        if input.len() != 4 || weight.len() != 4 {
            return Err(Error::dim(format!(
                "conv2d expects 4-D input and weight, got {input:?} and {weight:?}"
            )));
        }
        let (b, cin, h, w) = (input[0], input[1], input[2], input[3]);
        let (cout, wcin, kh, kw) = (weight[0], weight[1], weight[2], weight[3]);
        if wcin != cin {
            return Err(Error::dim(format!(
                "conv2d input has {cin} channels but weight expects {wcin}"
            )));
        }
        if kh != kw || kh == 0 {
            return Err(Error::dim(format!("conv2d needs a square kernel, got {kh}x{kw}")));
        }
        if stride == 0 {
            return Err(Error::dim("conv2d stride must be positive"));
        }
        if h + 2 * padding < kh || w + 2 * padding < kh {
            return Err(Error::dim(format!(
                "conv2d kernel {kh} larger than padded input {}x{}",
                h + 2 * padding,
                w + 2 * padding
            )));
        }
        Ok(Self {
            batch: b,
            in_channels: cin,
            out_channels: cout,
            height: h,
            width: w,
            kernel: kh,
            stride,
            padding,
            out_height: (h + 2 * padding - kh) / stride + 1,
            out_width: (w + 2 * padding - kh) / stride + 1,
        })
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn positions(&self) -> usize {
        self.out_height * self.out_width
    }

    /// Input coordinate for output coordinate `o` and kernel offset `k`, if
    /// it falls inside the unpadded image.
    #[inline]
    fn source(&self, o: usize, k: usize, limit: usize) -> Option<usize> {
        let v = (o * self.stride + k) as isize - self.padding as isize;
        (v >= 0 && (v as usize) < limit).then_some(v as usize)
    }

    /// Unfold one image into `col[patch][position]` (or transposed).
    fn im2col<T: Element>(&self, image: &[T], col: &mut [T], transposed: bool) {
        let (k, hw) = (self.kernel, self.height * self.width);
        let (np, npos) = (self.patch_len(), self.positions());
        for ci in 0..self.in_channels {
            let plane = &image[ci * hw..(ci + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let r = (ci * k + ky) * k + kx;
                    for oy in 0..self.out_height {
                        let sy = self.source(oy, ky, self.height);
                        for ox in 0..self.out_width {
                            let p = oy * self.out_width + ox;
                            let v = match (sy, self.source(ox, kx, self.width)) {
                                (Some(y), Some(x)) => plane[y * self.width + x],
                                _ => T::zero(),
                            };
                            if transposed {
                                col[p * np + r] = v;
                            } else {
                                col[r * npos + p] = v;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Fold `col[patch][position]` back, accumulating into the image.
    fn col2im<T: Element>(&self, col: &[T], image: &mut [T]) {
        let (k, hw) = (self.kernel, self.height * self.width);
        let npos = self.positions();
        for ci in 0..self.in_channels {
            let plane = &mut image[ci * hw..(ci + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let r = (ci * k + ky) * k + kx;
                    for oy in 0..self.out_height {
                        let Some(y) = self.source(oy, ky, self.height) else {
                            continue;
                        };
                        for ox in 0..self.out_width {
                            if let Some(x) = self.source(ox, kx, self.width) {
                                plane[y * self.width + x] += col[r * npos + oy * self.out_width + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 2-D convolution with zero padding. Weight is `[Cout, Cin, k, k]`.
pub fn conv2d<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let g = ConvGeometry::new(input.shape(), weight.shape(), stride, padding)?;
    if bias.shape() != [g.out_channels] {
        return Err(Error::dim(format!(
            "conv2d bias shape {:?}, expected [{}]",
            bias.shape(),
            g.out_channels
        )));
    }
    let (np, npos) = (g.patch_len(), g.positions());
    let in_len = g.in_channels * g.height * g.width;
    let out_len = g.out_channels * npos;
    let mut out = vec![T::zero(); g.batch * out_len];
    let mut col = vec![T::zero(); np * npos];
    for b in 0..g.batch {
        g.im2col(&input.data()[b * in_len..(b + 1) * in_len], &mut col, false);
        let dst = &mut out[b * out_len..(b + 1) * out_len];
        gemm_acc(g.out_channels, npos, np, weight.data(), &col, dst);
        for (co, plane) in dst.chunks_mut(npos).enumerate() {
            let bv = bias.data()[co];
            for v in plane {
                *v += bv;
            }
        }
    }
    Ok(Tensor::from_parts(
        vec![g.batch, g.out_channels, g.out_height, g.out_width],
        out,
    ))
}

pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    padding: usize,
    need_input: bool,
) -> Result<ConvGrads<T>> {
    let g = ConvGeometry::new(input.shape(), weight.shape(), stride, padding)?;
    let (np, npos) = (g.patch_len(), g.positions());
    let in_len = g.in_channels * g.height * g.width;
    let out_len = g.out_channels * npos;
    let mut dw = vec![T::zero(); g.out_channels * np];
    let mut db = vec![T::zero(); g.out_channels];
    let mut dx = need_input.then(|| vec![T::zero(); input.len()]);
    let wt = need_input.then(|| transpose(g.out_channels, np, weight.data()));
    let mut col_t = vec![T::zero(); npos * np];
    let mut dcol = vec![T::zero(); np * npos];
    for b in 0..g.batch {
        let dout = &grad_out.data()[b * out_len..(b + 1) * out_len];
        for (co, plane) in dout.chunks(npos).enumerate() {
            let mut s = db[co];
            for &v in plane {
                s += v;
            }
            db[co] = s;
        }
        g.im2col(&input.data()[b * in_len..(b + 1) * in_len], &mut col_t, true);
        gemm_acc(g.out_channels, np, npos, dout, &col_t, &mut dw);
        if let (Some(dx), Some(wt)) = (dx.as_mut(), wt.as_ref()) {
            dcol.iter_mut().for_each(|v| *v = T::zero());
            gemm_acc(np, npos, g.out_channels, wt, dout, &mut dcol);
            g.col2im(&dcol, &mut dx[b * in_len..(b + 1) * in_len]);
        }
    }
    Ok(ConvGrads {
        input: dx.map(|d| Tensor::from_parts(input.shape().to_vec(), d)),
        weight: Tensor::from_parts(weight.shape().to_vec(), dw),
        bias: Tensor::from_parts(vec![g.out_channels], db),
    })
}

/// 2×2 max pooling with stride 2. Returns the pooled tensor and, for each
/// output element, the flat input index of the first maximal element of its
/// window in row-major order.
pub fn maxpool2x2<T: Element>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let s = input.shape();
    if s.len() != 4 {
        return Err(Error::dim(format!("maxpool expects 4-D input, got {s:?}")));
    }
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::dim(format!("maxpool needs even spatial dims, got {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(b * c * oh * ow);
    let mut arg = Vec::with_capacity(b * c * oh * ow);
    for plane in 0..b * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    Ok((Tensor::from_parts(vec![b, c, oh, ow], out), arg))
}

pub fn maxpool2x2_backward<T: Element>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&i, &g) in argmax.iter().zip(grad_out.data()) {
        d[i] += g;
    }
    dx
}

/// Per-channel statistics from a train-mode batch-norm forward.
#[derive(Clone, Debug)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub inv_std: Vec<T>,
}

fn bn_dims(s: &[usize], channels: usize) -> Result<(usize, usize, usize)> {
    if s.len() != 4 || s[1] != channels {
        return Err(Error::dim(format!(
            "batchnorm over {channels} channels got input {s:?}"
        )));
    }
    Ok((s[0], s[1], s[2] * s[3]))
}

/// Train-mode batch norm: normalizes each channel over batch and spatial
/// axes with the biased batch variance. Returns output, normalized input
/// and the batch statistics.
pub fn batchnorm2d_train<T: Element>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> Result<(Tensor<T>, Tensor<T>, BatchStats<T>)> {
    let (b, c, hw) = bn_dims(input.shape(), gamma.len())?;
    if beta.len() != c {
        return Err(Error::dim("batchnorm beta length differs from gamma"));
    }
    let x = input.data();
    let n = T::from_usize(b * hw).unwrap();
    let mut stats = BatchStats {
        mean: vec![T::zero(); c],
        var: vec![T::zero(); c],
        inv_std: vec![T::zero(); c],
    };
    for ch in 0..c {
        let mut s = T::zero();
        for bi in 0..b {
            for &v in &x[(bi * c + ch) * hw..(bi * c + ch + 1) * hw] {
                s += v;
            }
        }
        let mean = s / n;
        let mut ss = T::zero();
        for bi in 0..b {
            for &v in &x[(bi * c + ch) * hw..(bi * c + ch + 1) * hw] {
                let d = v - mean;
                ss += d * d;
            }
        }
        let var = ss / n;
        stats.mean[ch] = mean;
        stats.var[ch] = var;
        stats.inv_std[ch] = T::one() / (var + eps).sqrt();
    }
    let mut xhat = vec![T::zero(); x.len()];
    let mut y = vec![T::zero(); x.len()];
    for bi in 0..b {
        for ch in 0..c {
            let (m, is, gm, bt) = (
                stats.mean[ch],
                stats.inv_std[ch],
                gamma.data()[ch],
                beta.data()[ch],
            );
            for i in (bi * c + ch) * hw..(bi * c + ch + 1) * hw {
                let xh = (x[i] - m) * is;
                xhat[i] = xh;
                y[i] = gm * xh + bt;
            }
        }
    }
    let shape = input.shape().to_vec();
    Ok((
        Tensor::from_parts(shape.clone(), y),
        Tensor::from_parts(shape, xhat),
        stats,
    ))
}

pub struct NormGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

pub fn batchnorm2d_train_backward<T: Element>(
    xhat: &Tensor<T>,
    gamma: &Tensor<T>,
    inv_std: &[T],
    grad_out: &Tensor<T>,
) -> NormGrads<T> {
    let (b, c, hw) = (xhat.shape()[0], xhat.shape()[1], xhat.shape()[2] * xhat.shape()[3]);
    let n = T::from_usize(b * hw).unwrap();
    let (xh, dy) = (xhat.data(), grad_out.data());
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for ch in 0..c {
        let (mut sg, mut sb) = (T::zero(), T::zero());
        for bi in 0..b {
            for i in (bi * c + ch) * hw..(bi * c + ch + 1) * hw {
                sg += dy[i] * xh[i];
                sb += dy[i];
            }
        }
        dgamma[ch] = sg;
        dbeta[ch] = sb;
    }
    // With dxhat = dy * gamma:
    // dx = inv_std / n * (n * dxhat - sum(dxhat) - xhat * sum(dxhat * xhat))
    let mut dx = vec![T::zero(); xh.len()];
    for bi in 0..b {
        for ch in 0..c {
            let gm = gamma.data()[ch];
            let (sum_dxh, sum_dxh_xh) = (dbeta[ch] * gm, dgamma[ch] * gm);
            let scale = inv_std[ch] / n;
            for i in (bi * c + ch) * hw..(bi * c + ch + 1) * hw {
                dx[i] = scale * (n * dy[i] * gm - sum_dxh - xh[i] * sum_dxh_xh);
            }
        }
    }
    NormGrads {
        input: Tensor::from_parts(xhat.shape().to_vec(), dx),
        gamma: Tensor::from_parts(vec![c], dgamma),
        beta: Tensor::from_parts(vec![c], dbeta),
    }
}

/// Eval-mode batch norm with fixed statistics. Returns output and the
/// normalized input.
pub fn batchnorm2d_eval<T: Element>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    mean: &[T],
    var: &[T],
    eps: T,
) -> Result<(Tensor<T>, Tensor<T>, Vec<T>)> {
    let (b, c, hw) = bn_dims(input.shape(), gamma.len())?;
    if beta.len() != c || mean.len() != c || var.len() != c {
        return Err(Error::dim("batchnorm running statistics length mismatch"));
    }
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let x = input.data();
    let mut xhat = vec![T::zero(); x.len()];
    let mut y = vec![T::zero(); x.len()];
    for bi in 0..b {
        for ch in 0..c {
            for i in (bi * c + ch) * hw..(bi * c + ch + 1) * hw {
                let xh = (x[i] - mean[ch]) * inv_std[ch];
                xhat[i] = xh;
                y[i] = gamma.data()[ch] * xh + beta.data()[ch];
            }
        }
    }
    let shape = input.shape().to_vec();
    Ok((
        Tensor::from_parts(shape.clone(), y),
        Tensor::from_parts(shape, xhat),
        inv_std,
    ))
}

pub fn batchnorm2d_eval_backward<T: Element>(
    xhat: &Tensor<T>,
    gamma: &Tensor<T>,
    inv_std: &[T],
    grad_out: &Tensor<T>,
) -> NormGrads<T> {
    let (b, c, hw) = (xhat.shape()[0], xhat.shape()[1], xhat.shape()[2] * xhat.shape()[3]);
    let (xh, dy) = (xhat.data(), grad_out.data());
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    let mut dx = vec![T::zero(); xh.len()];
    for bi in 0..b {
        for ch in 0..c {
            let k = gamma.data()[ch] * inv_std[ch];
            for i in (bi * c + ch) * hw..(bi * c + ch + 1) * hw {
                dgamma[ch] += dy[i] * xh[i];
                dbeta[ch] += dy[i];
                dx[i] = dy[i] * k;
            }
        }
    }
    NormGrads {
        input: Tensor::from_parts(xhat.shape().to_vec(), dx),
        gamma: Tensor::from_parts(vec![c], dgamma),
        beta: Tensor::from_parts(vec![c], dbeta),
    }
}

/// `input[B,F] · weight[F,G] + bias[G]`.
pub fn linear<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (xs, ws) = (input.shape(), weight.shape());
    if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] || bias.shape() != [ws[1]] {
        return Err(Error::dim(format!(
            "linear: input {xs:?}, weight {ws:?}, bias {:?}",
            bias.shape()
        )));
    }
    let (b, f, g) = (xs[0], xs[1], ws[1]);
    let mut out = vec![T::zero(); b * g];
    gemm_acc(b, g, f, input.data(), weight.data(), &mut out);
    for row in out.chunks_mut(g) {
        for (v, &bv) in row.iter_mut().zip(bias.data()) {
            *v += bv;
        }
    }
    Ok(Tensor::from_parts(vec![b, g], out))
}

pub struct LinearGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn linear_backward<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_input: bool,
) -> LinearGrads<T> {
    let (b, f, g) = (input.shape()[0], input.shape()[1], weight.shape()[1]);
    let dy = grad_out.data();
    let xt = transpose(b, f, input.data());
    let mut dw = vec![T::zero(); f * g];
    gemm_acc(f, g, b, &xt, dy, &mut dw);
    let mut db = vec![T::zero(); g];
    for row in dy.chunks(g) {
        for (d, &v) in db.iter_mut().zip(row) {
            *d += v;
        }
    }
    let dx = need_input.then(|| {
        let wt = transpose(f, g, weight.data());
        let mut dx = vec![T::zero(); b * f];
        gemm_acc(b, f, g, dy, &wt, &mut dx);
        Tensor::from_parts(vec![b, f], dx)
    });
    LinearGrads {
        input: dx,
        weight: Tensor::from_parts(vec![f, g], dw),
        bias: Tensor::from_parts(vec![g], db),
    }
}

pub fn relu<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_backward<T: Element>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    Tensor::from_parts(
        x.shape().to_vec(),
        x.data()
            .iter()
            .zip(grad_out.data())
            .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
            .collect(),
    )
}

pub fn sigmoid<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| {
        if v >= T::zero() {
            T::one() / (T::one() + (-v).exp())
        } else {
            let e = v.exp();
            e / (T::one() + e)
        }
    })
}

pub fn sigmoid_backward<T: Element>(y: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    Tensor::from_parts(
        y.shape().to_vec(),
        y.data()
            .iter()
            .zip(grad_out.data())
            .map(|(&s, &g)| g * s * (T::one() - s))
            .collect(),
    )
}

/// Row-wise softmax of a 2-D tensor.
pub fn softmax_rows<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.ndim() != 2 {
        return Err(Error::dim(format!("softmax expects 2-D input, got {:?}", x.shape())));
    }
    let cols = x.shape()[1];
    let mut out = Vec::with_capacity(x.len());
    for row in x.data().chunks(cols) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        let mut s = T::zero();
        for &v in row {
            let e = (v - m).exp();
            s += e;
            out.push(e);
        }
        for v in &mut out[start..] {
            *v = *v / s;
        }
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), out))
}

pub fn softmax_rows_backward<T: Element>(y: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let cols = y.shape()[1];
    let mut dx = Vec::with_capacity(y.len());
    for (p, g) in y.data().chunks(cols).zip(grad_out.data().chunks(cols)) {
        let mut dot = T::zero();
        for (&pv, &gv) in p.iter().zip(g) {
            dot += pv * gv;
        }
        dx.extend(p.iter().zip(g).map(|(&pv, &gv)| pv * (gv - dot)));
    }
    Tensor::from_parts(y.shape().to_vec(), dx)
}

/// Stack `a` and `b` along the channel axis, `a` first.
pub fn concat_channels<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 4 || sb.len() != 4 || sa[0] != sb[0] || sa[2..] != sb[2..] {
        return Err(Error::dim(format!("concat_channels of {sa:?} and {sb:?}")));
    }
    let (la, lb) = (a.len() / sa[0], b.len() / sb[0]);
    let mut out = Vec::with_capacity(a.len() + b.len());
    for i in 0..sa[0] {
        out.extend_from_slice(&a.data()[i * la..(i + 1) * la]);
        out.extend_from_slice(&b.data()[i * lb..(i + 1) * lb]);
    }
    Ok(Tensor::from_parts(vec![sa[0], sa[1] + sb[1], sa[2], sa[3]], out))
}

/// Split a channel-concatenated gradient back into its two parts.
pub fn split_channels<T: Element>(
    grad: &Tensor<T>,
    first_channels: usize,
) -> (Tensor<T>, Tensor<T>) {
    let s = grad.shape();
    let hw = s[2] * s[3];
    let (la, lb) = (first_channels * hw, (s[1] - first_channels) * hw);
    let mut a = Vec::with_capacity(s[0] * la);
    let mut b = Vec::with_capacity(s[0] * lb);
    for row in grad.data().chunks(la + lb) {
        a.extend_from_slice(&row[..la]);
        b.extend_from_slice(&row[la..]);
    }
    (
        Tensor::from_parts(vec![s[0], first_channels, s[2], s[3]], a),
        Tensor::from_parts(vec![s[0], s[1] - first_channels, s[2], s[3]], b),
    )
}
