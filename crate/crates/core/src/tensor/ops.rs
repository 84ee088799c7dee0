//! Forward and backward kernels.
//!
//! The public functions are pure forward operations on [`Tensor`]s. The
//! `*_backward` kernels are used by [`Graph`](super::Graph) and take the
//! upstream gradient of the operation's output.

use super::Tensor;
use crate::error::{dim_err, Error, Result};

/// Lower clamp applied to probabilities before taking their logarithm.
pub const PROB_CLAMP: f32 = 1e-12;

/// Row-major GEMM `c = a·b + beta·c` with explicit strides for `a` and `b`,
/// so transposed operands need no copy.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    a_strides: (isize, isize),
    b: &[f32],
    b_strides: (isize, isize),
    beta: f32,
    c: &mut [f32],
) {
    assert!(c.len() >= m * n);
    let a_need = if m == 0 || k == 0 {
        0
    } else {
        ((m - 1) as isize * a_strides.0 + (k - 1) as isize * a_strides.1) as usize + 1
    };
    let b_need = if k == 0 || n == 0 {
        0
    } else {
        ((k - 1) as isize * b_strides.0 + (n - 1) as isize * b_strides.1) as usize + 1
    };
    assert!(a.len() >= a_need && b.len() >= b_need);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Matrix product of `a: m×k` and `b: k×n`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k, n) = matmul_dims(a, b)?;
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, a.data(), (k as isize, 1), b.data(), (n as isize, 1), 0.0, &mut out);
    Tensor::new(vec![m, n], out)
}

pub(crate) fn matmul_dims(a: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    match (a.shape(), b.shape()) {
        (&[m, k], &[k2, n]) if k == k2 => Ok((m, k, n)),
        (sa, sb) => dim_err(format!("matmul of {sa:?} and {sb:?}")),
    }
}

/// Returns `(grad_a, grad_b)` for `a·b`; either side is skipped when not needed.
pub(crate) fn matmul_backward(
    a: &Tensor,
    b: &Tensor,
    grad: &Tensor,
    need_a: bool,
    need_b: bool,
) -> (Option<Tensor>, Option<Tensor>) {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let ga = need_a.then(|| {
        // dA = dC · Bᵀ
        let mut out = vec![0.0; m * k];
        gemm(m, n, k, grad.data(), (n as isize, 1), b.data(), (1, n as isize), 0.0, &mut out);
        Tensor::new(vec![m, k], out).unwrap()
    });
    let gb = need_b.then(|| {
        // dB = Aᵀ · dC
        let mut out = vec![0.0; k * n];
        gemm(k, m, n, a.data(), (1, k as isize), grad.data(), (n as isize, 1), 0.0, &mut out);
        Tensor::new(vec![k, n], out).unwrap()
    });
    (ga, gb)
}

/// `x: B×U` plus a bias `b: U` broadcast over rows.
pub fn add_row_bias(x: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (rows, cols) = match x.shape() {
        &[r, c] if bias.shape() == [c] => (r, c),
        s => return dim_err(format!("cannot add bias {:?} to {s:?}", bias.shape())),
    };
    let mut out = x.clone();
    for r in 0..rows {
        for (o, b) in out.data_mut()[r * cols..(r + 1) * cols].iter_mut().zip(bias.data()) {
            *o += b;
        }
    }
    Ok(out)
}

pub(crate) fn row_sums(grad: &Tensor) -> Tensor {
    let cols = *grad.shape().last().unwrap();
    let mut out = vec![0.0f32; cols];
    for row in grad.data().chunks_exact(cols) {
        for (o, g) in out.iter_mut().zip(row) {
            *o += g;
        }
    }
    Tensor::from_vec(out)
}

/// Geometry of a 2-D convolution, shared by forward and backward kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub padding: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvGeometry {
    /// Validates shapes for `input` (`C×H×W` or `B×C×H×W`), `kernels`
    /// (`C_out×C_in×k×k`) and `bias` (`C_out`).
    pub fn new(
        input: &[usize],
        kernels: &[usize],
        bias: &[usize],
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let (batch, c_in, h, w) = match *input {
            [c, h, w] => (1, c, h, w),
            [b, c, h, w] => (b, c, h, w),
            _ => return dim_err(format!("conv2d input must be C×H×W or B×C×H×W, got {input:?}")),
        };
        let (c_out, kc, k) = match *kernels {
            [o, c, kh, kw] if kh == kw => (o, c, kh),
            _ => return dim_err(format!("conv2d kernels must be C_out×C_in×k×k, got {kernels:?}")),
        };
        if kc != c_in {
            return dim_err(format!(
                "conv2d kernels {kernels:?} expect {kc} input channels, input {input:?} has {c_in}"
            ));
        }
        if bias != [c_out] {
            return dim_err(format!("conv2d bias {bias:?} does not match {c_out} output channels"));
        }
        if stride == 0 {
            return dim_err("conv2d stride must be positive");
        }
        if k > h + 2 * padding || k > w + 2 * padding {
            return dim_err(format!(
                "conv2d kernel {k}×{k} larger than padded input {}×{}",
                h + 2 * padding,
                w + 2 * padding
            ));
        }
        Ok(ConvGeometry {
            batch,
            c_in,
            h,
            w,
            c_out,
            k,
            stride,
            padding,
            h_out: (h + 2 * padding - k) / stride + 1,
            w_out: (w + 2 * padding - k) / stride + 1,
        })
    }

    fn patch_len(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn out_pixels(&self) -> usize {
        self.h_out * self.w_out
    }

    /// Range of output columns `ox` whose tap `kj` lands inside the input row.
    fn valid_cols(&self, kj: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = self.padding.saturating_sub(kj).div_ceil(s);
        let reach = self.w + self.padding;
        let hi = if reach > kj {
            ((reach - kj - 1) / s + 1).min(self.w_out)
        } else {
            0
        };
        (lo.min(hi), hi)
    }

    fn output_shape(&self, batched: bool) -> Vec<usize> {
        if batched {
            vec![self.batch, self.c_out, self.h_out, self.w_out]
        } else {
            vec![self.c_out, self.h_out, self.w_out]
        }
    }
}

/// Unfolds one `C×H×W` sample into a `(C·k·k)×(H'·W')` column matrix.
fn im2col(x: &[f32], g: &ConvGeometry, cols: &mut [f32]) {
    let n = g.out_pixels();
    let (s, p) = (g.stride, g.padding);
    for c in 0..g.c_in {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let dst = &mut cols[row * n..(row + 1) * n];
                let (lo, hi) = g.valid_cols(kj);
                for oy in 0..g.h_out {
                    let out_row = &mut dst[oy * g.w_out..(oy + 1) * g.w_out];
                    let iy = (oy * s + ki) as isize - p as isize;
                    if iy < 0 || iy >= g.h as isize {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    out_row[..lo].fill(0.0);
                    out_row[hi..].fill(0.0);
                    if s == 1 {
                        let start = lo + kj - p;
                        out_row[lo..hi].copy_from_slice(&src[start..start + (hi - lo)]);
                    } else {
                        for (ox, o) in out_row[lo..hi].iter_mut().enumerate() {
                            *o = src[(ox + lo) * s + kj - p];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back into `dx`.
fn col2im(cols: &[f32], g: &ConvGeometry, dx: &mut [f32]) {
    let n = g.out_pixels();
    let (s, p) = (g.stride, g.padding);
    for c in 0..g.c_in {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let src = &cols[row * n..(row + 1) * n];
                let (lo, hi) = g.valid_cols(kj);
                for oy in 0..g.h_out {
                    let iy = (oy * s + ki) as isize - p as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let col_row = &src[oy * g.w_out..(oy + 1) * g.w_out];
                    for ox in lo..hi {
                        dst[ox * s + kj - p] += col_row[ox];
                    }
                }
            }
        }
    }
}

/// 2-D cross-correlation (no kernel flip) plus per-channel bias.
///
/// `input` is `C_in×H×W` or batched `B×C_in×H×W`; output follows the same
/// rank with `H' = (H + 2·padding − k)/stride + 1` (floor), likewise `W'`.
pub fn conv2d(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let g = ConvGeometry::new(input.shape(), kernels.shape(), bias.shape(), stride, padding)?;
    let (kl, n) = (g.patch_len(), g.out_pixels());
    let in_len = g.c_in * g.h * g.w;
    let out_len = g.c_out * n;
    let mut cols = vec![0.0f32; kl * n];
    let mut out = vec![0.0f32; g.batch * out_len];
    for b in 0..g.batch {
        im2col(&input.data()[b * in_len..(b + 1) * in_len], &g, &mut cols);
        let dst = &mut out[b * out_len..(b + 1) * out_len];
        for (row, &bv) in dst.chunks_exact_mut(n).zip(bias.data()) {
            row.fill(bv);
        }
        gemm(g.c_out, kl, n, kernels.data(), (kl as isize, 1), &cols, (n as isize, 1), 1.0, dst);
    }
    Tensor::new(g.output_shape(input.rank() == 4), out)
}

/// Gradients of [`conv2d`] with respect to input (if `need_input`), kernels
/// and bias. Per-sample contributions are accumulated in batch order.
pub(crate) fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    grad: &Tensor,
    g: &ConvGeometry,
    need_input: bool,
) -> (Option<Tensor>, Tensor, Tensor) {
    let (kl, n) = (g.patch_len(), g.out_pixels());
    let in_len = g.c_in * g.h * g.w;
    let out_len = g.c_out * n;
    let mut cols = vec![0.0f32; kl * n];
    let mut dcols = if need_input { vec![0.0f32; kl * n] } else { Vec::new() };
    let mut dx = if need_input { vec![0.0f32; input.len()] } else { Vec::new() };
    let mut dk = vec![0.0f32; kernels.len()];
    let mut db = vec![0.0f32; g.c_out];
    for b in 0..g.batch {
        let x = &input.data()[b * in_len..(b + 1) * in_len];
        let dy = &grad.data()[b * out_len..(b + 1) * out_len];
        im2col(x, g, &mut cols);
        // dK += dY · colsᵀ
        gemm(g.c_out, n, kl, dy, (n as isize, 1), &cols, (1, n as isize), 1.0, &mut dk);
        for (acc, row) in db.iter_mut().zip(dy.chunks_exact(n)) {
            *acc += row.iter().sum::<f32>();
        }
        if need_input {
            // dcols = Kᵀ · dY
            gemm(kl, g.c_out, n, kernels.data(), (1, kl as isize), dy, (n as isize, 1), 0.0, &mut dcols);
            col2im(&dcols, g, &mut dx[b * in_len..(b + 1) * in_len]);
        }
    }
    let dx = need_input.then(|| Tensor::new(input.shape().to_vec(), dx).unwrap());
    (
        dx,
        Tensor::new(kernels.shape().to_vec(), dk).unwrap(),
        Tensor::from_vec(db),
    )
}

fn pool_dims(shape: &[usize], k: usize, stride: usize) -> Result<(usize, usize, usize, usize, usize)> {
    let (planes, h, w) = match *shape {
        [c, h, w] => (c, h, w),
        [b, c, h, w] => (b * c, h, w),
        _ => return dim_err(format!("maxpool2d input must be C×H×W or B×C×H×W, got {shape:?}")),
    };
    if k == 0 || stride == 0 {
        return dim_err("maxpool2d window and stride must be positive");
    }
    if k > h || k > w {
        return dim_err(format!("maxpool2d window {k}×{k} larger than input {h}×{w}"));
    }
    Ok((planes, h, w, (h - k) / stride + 1, (w - k) / stride + 1))
}

/// Per-window maximum over each channel plane.
pub fn maxpool2d(input: &Tensor, k: usize, stride: usize) -> Result<Tensor> {
    maxpool2d_with_argmax(input, k, stride).map(|(t, _)| t)
}

/// Forward max-pool that also returns, for each output, the flat input index
/// that won. Ties go to the lowest row-major index.
pub(crate) fn maxpool2d_with_argmax(
    input: &Tensor,
    k: usize,
    stride: usize,
) -> Result<(Tensor, Vec<u32>)> {
    let (planes, h, w, ho, wo) = pool_dims(input.shape(), k, stride)?;
    let x = input.data();
    let mut out = Vec::with_capacity(planes * ho * wo);
    let mut arg = Vec::with_capacity(planes * ho * wo);
    for p in 0..planes {
        let base = p * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best_idx = base + oy * stride * w + ox * stride;
                let mut best = x[best_idx];
                for ki in 0..k {
                    let row = base + (oy * stride + ki) * w + ox * stride;
                    for (kj, &v) in x[row..row + k].iter().enumerate() {
                        if v > best {
                            best = v;
                            best_idx = row + kj;
                        }
                    }
                }
                out.push(best);
                arg.push(best_idx as u32);
            }
        }
    }
    let mut shape = input.shape().to_vec();
    let r = shape.len();
    shape[r - 2] = ho;
    shape[r - 1] = wo;
    Ok((Tensor::new(shape, out)?, arg))
}

pub(crate) fn maxpool2d_backward(input_shape: &[usize], argmax: &[u32], grad: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&i, &g) in argmax.iter().zip(grad.data()) {
        d[i as usize] += g;
    }
    dx
}

/// Elementwise `max(0, x)`.
pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(x.shape().to_vec(), data).unwrap()
}

/// Passes gradient where the input was strictly positive.
pub(crate) fn relu_backward(x: &Tensor, grad: &Tensor) -> Tensor {
    let data = x
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(x.shape().to_vec(), data).unwrap()
}

/// Softmax over the last axis, with max-subtraction.
pub fn softmax(x: &Tensor) -> Tensor {
    let cols = *x.shape().last().unwrap_or(&1);
    let mut out = x.data().to_vec();
    for row in out.chunks_exact_mut(cols) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut total = 0.0f64;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v as f64;
        }
        for v in row.iter_mut() {
            *v = (*v as f64 / total) as f32;
        }
    }
    Tensor::new(x.shape().to_vec(), out).unwrap()
}

/// `dx = s ⊙ (dy − ⟨dy, s⟩)` row by row, given the softmax output `s`.
pub(crate) fn softmax_backward(s: &Tensor, grad: &Tensor) -> Tensor {
    let cols = *s.shape().last().unwrap_or(&1);
    let mut out = vec![0.0f32; s.len()];
    for ((o, sr), gr) in out
        .chunks_exact_mut(cols)
        .zip(s.data().chunks_exact(cols))
        .zip(grad.data().chunks_exact(cols))
    {
        let dot: f64 = sr.iter().zip(gr).map(|(&a, &b)| a as f64 * b as f64).sum();
        for ((ov, &sv), &gv) in o.iter_mut().zip(sr).zip(gr) {
            *ov = (sv as f64 * (gv as f64 - dot)) as f32;
        }
    }
    Tensor::new(s.shape().to_vec(), out).unwrap()
}

/// Mean squared error `(1/n)·Σ(pred − target)²` as a scalar tensor.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    if pred.len() != target.len() {
        return dim_err(format!(
            "mse_loss of {:?} against {:?}",
            pred.shape(),
            target.shape()
        ));
    }
    let n = pred.len() as f64;
    let total: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p as f64 - t as f64;
            d * d
        })
        .sum();
    Ok(Tensor::scalar((total / n) as f32))
}

/// Gradient of [`mse_loss`] with respect to `pred`, scaled by the upstream
/// scalar gradient. The target gradient is its negation.
pub(crate) fn mse_backward(pred: &Tensor, target: &Tensor, upstream: f32) -> Tensor {
    let scale = 2.0 * upstream as f64 / pred.len() as f64;
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (scale * (p as f64 - t as f64)) as f32)
        .collect();
    Tensor::new(pred.shape().to_vec(), data).unwrap()
}

fn ce_dims(probs: &Tensor, targets: &[usize]) -> Result<(usize, usize)> {
    let (rows, classes) = match *probs.shape() {
        [c] => (1, c),
        [b, c] => (b, c),
        ref s => return dim_err(format!("cross_entropy_loss expects batch×classes, got {s:?}")),
    };
    if targets.len() != rows {
        return dim_err(format!(
            "cross_entropy_loss has {rows} rows but {} targets",
            targets.len()
        ));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= classes) {
        return Err(Error::Domain(format!(
            "target class {t} out of range for {classes} classes"
        )));
    }
    Ok((rows, classes))
}

/// Mean negative log-likelihood of the target classes, with probabilities
/// clamped to [`PROB_CLAMP`] before the logarithm.
pub fn cross_entropy_loss(probs: &Tensor, targets: &[usize]) -> Result<Tensor> {
    let (rows, classes) = ce_dims(probs, targets)?;
    let mut total = 0.0f64;
    for (i, (row, &t)) in probs.data().chunks_exact(classes).zip(targets).enumerate() {
        let sum: f64 = row.iter().map(|&p| p as f64).sum();
        if (sum - 1.0).abs() > 1e-5 {
            return Err(Error::Contract(format!(
                "cross_entropy_loss row {i} sums to {sum}, not 1"
            )));
        }
        total -= (row[t].max(PROB_CLAMP) as f64).ln();
    }
    Ok(Tensor::scalar((total / rows as f64) as f32))
}

pub(crate) fn cross_entropy_backward(probs: &Tensor, targets: &[usize], upstream: f32) -> Tensor {
    let classes = *probs.shape().last().unwrap();
    let rows = targets.len() as f64;
    let mut out = Tensor::zeros(probs.shape());
    for (i, &t) in targets.iter().enumerate() {
        let p = probs.data()[i * classes + t];
        if p > PROB_CLAMP {
            out.data_mut()[i * classes + t] = (-(upstream as f64) / (rows * p as f64)) as f32;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    /// Direct sliding-window cross-correlation, independent of im2col.
    fn conv_oracle(x: &Tensor, k: &Tensor, b: &Tensor, s: usize, p: usize) -> Vec<f32> {
        let [c_in, h, w] = x.shape().try_into().unwrap();
        let [c_out, _, kk, _] = k.shape().try_into().unwrap();
        let ho = (h + 2 * p - kk) / s + 1;
        let wo = (w + 2 * p - kk) / s + 1;
        let mut out = Vec::new();
        for o in 0..c_out {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b.data()[o] as f64;
                    for c in 0..c_in {
                        for ki in 0..kk {
                            for kj in 0..kk {
                                let iy = (oy * s + ki) as isize - p as isize;
                                let ix = (ox * s + kj) as isize - p as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    acc += x.data()[(c * h + iy as usize) * w + ix as usize] as f64
                                        * k.data()[((o * c_in + c) * kk + ki) * kk + kj] as f64;
                                }
                            }
                        }
                    }
                    out.push(acc as f32);
                }
            }
        }
        out
    }

    #[test]
    fn matmul_identity_and_product() {
        let eye = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let a = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(matmul(&eye, &a).unwrap(), a);
        let b = t(&[2, 2], &[5.0, 6.0, 7.0, 8.0]);
        assert_eq!(matmul(&a, &b).unwrap().data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let err = matmul(&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[4, 2])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
    }

    #[test]
    fn conv_identity_kernel() {
        let x = t(&[1, 2, 3], &[1.0, -2.0, 3.0, 4.5, 5.0, 6.0]);
        let k = t(&[1, 1, 1, 1], &[1.0]);
        let y = conv2d(&x, &k, &Tensor::zeros(&[1]), 1, 0).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv_all_ones_window() {
        let x = t(&[1, 3, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let k = Tensor::full(&[1, 1, 2, 2], 1.0);
        let y = conv2d(&x, &k, &Tensor::zeros(&[1]), 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        // windows: 1+2+4+5, 2+3+5+6, 4+5+7+8, 5+6+8+9
        assert_eq!(y.data(), &[12.0, 16.0, 24.0, 28.0]);
    }

    #[test]
    fn conv_kernel_larger_than_input_fails() {
        let x = Tensor::zeros(&[1, 2, 2]);
        let k = Tensor::zeros(&[1, 1, 3, 3]);
        assert!(matches!(
            conv2d(&x, &k, &Tensor::zeros(&[1]), 1, 0),
            Err(Error::Dimension(_))
        ));
        // padding makes room
        assert!(conv2d(&x, &k, &Tensor::zeros(&[1]), 1, 1).is_ok());
    }

    #[test]
    fn conv_matches_direct_oracle_with_stride_and_padding() {
        let mut seed = 7u32;
        let mut next = || {
            seed = seed.wrapping_mul(1664525).wrapping_add(1013904223);
            (seed >> 8) as f32 / (1 << 24) as f32 - 0.5
        };
        for &(c_in, h, w, c_out, k, s, p) in &[
            (2, 5, 6, 3, 3, 1, 1),
            (3, 7, 5, 2, 3, 2, 1),
            (1, 4, 4, 2, 2, 2, 0),
            (2, 6, 6, 1, 3, 3, 2),
        ] {
            let x = Tensor::new(vec![c_in, h, w], (0..c_in * h * w).map(|_| next()).collect()).unwrap();
            let kt = Tensor::new(vec![c_out, c_in, k, k], (0..c_out * c_in * k * k).map(|_| next()).collect()).unwrap();
            let b = Tensor::new(vec![c_out], (0..c_out).map(|_| next()).collect()).unwrap();
            let got = conv2d(&x, &kt, &b, s, p).unwrap();
            let want = conv_oracle(&x, &kt, &b, s, p);
            assert_eq!(got.len(), want.len());
            for (a, b) in got.data().iter().zip(&want) {
                assert!((a - b).abs() < 1e-5, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn conv_batched_equals_per_sample() {
        let x = Tensor::new(vec![2, 1, 3, 3], (0..18).map(|v| v as f32).collect()).unwrap();
        let k = Tensor::new(vec![2, 1, 2, 2], vec![1.0, 0.5, -1.0, 2.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        let b = Tensor::from_vec(vec![0.5, -0.5]);
        let y = conv2d(&x, &k, &b, 1, 0).unwrap();
        assert_eq!(y.shape(), &[2, 2, 2, 2]);
        for s in 0..2 {
            let xs = Tensor::new(vec![1, 3, 3], x.data()[s * 9..(s + 1) * 9].to_vec()).unwrap();
            let ys = conv2d(&xs, &k, &b, 1, 0).unwrap();
            assert_eq!(&y.data()[s * 8..(s + 1) * 8], ys.data());
        }
    }

    #[test]
    fn maxpool_examples() {
        let x = t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(maxpool2d(&x, 1, 1).unwrap(), x);
        assert_eq!(maxpool2d(&x, 2, 2).unwrap().data(), &[4.0]);
        let x = t(&[1, 3, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let y = maxpool2d(&x, 2, 1).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        assert_eq!(y.data(), &[5.0, 6.0, 8.0, 9.0]);
        assert!(maxpool2d(&x, 4, 1).is_err());
    }

    #[test]
    fn maxpool_tie_goes_to_lowest_index() {
        let x = t(&[1, 2, 2], &[3.0, 3.0, 3.0, 3.0]);
        let (_, arg) = maxpool2d_with_argmax(&x, 2, 2).unwrap();
        assert_eq!(arg, vec![0]);
        let dx = maxpool2d_backward(x.shape(), &arg, &t(&[1, 1, 1], &[1.0]));
        assert_eq!(dx.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn relu_examples() {
        assert_eq!(relu(&Tensor::from_vec(vec![-1.0, 0.0, 2.0])).data(), &[0.0, 0.0, 2.0]);
        let x = Tensor::from_vec(vec![3.0, -3.0, 0.0]);
        let g = relu_backward(&x, &Tensor::full(&[3], 1.0));
        assert_eq!(g.data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn softmax_examples() {
        let s = softmax(&Tensor::from_vec(vec![0.0, 0.0]));
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax(&Tensor::from_vec(vec![2f32.ln(), 0.0]));
        assert!((s.data()[0] - 2.0 / 3.0).abs() < 1e-6);
        assert!((s.data()[1] - 1.0 / 3.0).abs() < 1e-6);
        let s = softmax(&Tensor::from_vec(vec![1000.0, 0.0]));
        assert!(s.all_finite());
        assert!((s.data()[0] - 1.0).abs() < 1e-6 && s.data()[1] < 1e-6);
    }

    #[test]
    fn softmax_is_row_wise() {
        let s = softmax(&t(&[2, 2], &[0.0, 0.0, 2f32.ln(), 0.0]));
        assert_eq!(&s.data()[..2], &[0.5, 0.5]);
        assert!((s.data()[2] - 2.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn mse_examples() {
        let p = Tensor::from_vec(vec![2.0, 2.0]);
        assert_eq!(mse_loss(&p, &p).unwrap().item(), Some(0.0));
        let tgt = Tensor::from_vec(vec![1.0, 3.0]);
        assert_eq!(mse_loss(&p, &tgt).unwrap().item(), Some(1.0));
        let g = mse_backward(&Tensor::from_vec(vec![2.0]), &Tensor::from_vec(vec![1.0]), 1.0);
        assert_eq!(g.data(), &[2.0]);
        assert!(mse_loss(&p, &Tensor::from_vec(vec![1.0])).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let one_hot = t(&[1, 2], &[0.0, 1.0]);
        assert_eq!(cross_entropy_loss(&one_hot, &[1]).unwrap().item(), Some(0.0));
        let uniform = t(&[2, 2], &[0.5, 0.5, 0.5, 0.5]);
        let l = cross_entropy_loss(&uniform, &[0, 1]).unwrap().item().unwrap();
        assert!((l - std::f32::consts::LN_2).abs() < 1e-6);
        assert!(matches!(
            cross_entropy_loss(&uniform, &[2, 0]),
            Err(Error::Domain(_))
        ));
        // saturated wrong prediction stays finite
        let l = cross_entropy_loss(&one_hot, &[0]).unwrap().item().unwrap();
        assert!((l - 1e-12f32.ln().abs()).abs() < 1e-3);
    }

    #[test]
    fn cross_entropy_gradient_is_minus_inverse_prob() {
        let p = t(&[2, 2], &[0.25, 0.75, 0.5, 0.5]);
        let g = cross_entropy_backward(&p, &[1, 0], 1.0);
        assert!((g.data()[1] + 1.0 / (2.0 * 0.75)).abs() < 1e-6);
        assert!((g.data()[2] + 1.0).abs() < 1e-6);
        assert_eq!(g.data()[0], 0.0);
        assert_eq!(g.data()[3], 0.0);
    }
}
