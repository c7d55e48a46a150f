//! Batched layer kernels. Activations are `B × C × H × W` row-major;
//! convolutions use stride 1 with "same" zero padding and are lowered to
//! GEMM through im2col.

use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Columns `[lo, hi)` of an output row that read inside a width-`w` image
/// when shifted by `dx`.
fn valid_span(w: usize, dx: isize) -> (usize, usize) {
    let lo = (-dx).clamp(0, w as isize);
    let hi = (w as isize - dx).clamp(lo, w as isize);
    (lo as usize, hi as usize)
}

/// Unfolds one `c × h × w` image into a `(c·k·k) × (h·w)` column matrix.
fn im2col<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, k: usize, col: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let img = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * hw;
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                let (lo, hi) = valid_span(w, dx);
                for y in 0..h {
                    let sy = y as isize + dy;
                    let out = &mut col[row + y * w..row + (y + 1) * w];
                    if sy < 0 || sy >= h as isize || lo >= hi {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &img[sy as usize * w..(sy as usize + 1) * w];
                    out[..lo].fill(T::zero());
                    out[lo..hi].copy_from_slice(&src[(lo as isize + dx) as usize..(hi as isize + dx) as usize]);
                    out[hi..].fill(T::zero());
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the image.
fn col2im<T: Scalar>(col: &[T], c: usize, h: usize, w: usize, k: usize, x: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    x.fill(T::zero());
    for ci in 0..c {
        let img = &mut x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * hw;
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                let (lo, hi) = valid_span(w, dx);
                if lo >= hi {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &col[row + y * w + lo..row + y * w + hi];
                    let start = sy as usize * w;
                    let dst = &mut img[(start as isize + lo as isize + dx) as usize..(start as isize + hi as isize + dx) as usize];
                    for (d, &g) in dst.iter_mut().zip(src) {
                        *d = *d + g;
                    }
                }
            }
        }
    }
}

fn conv_shapes(x: &[usize], kernels: &[usize], bias: usize) -> Result<(usize, usize, usize, usize, usize, usize)> {
    if x.len() != 4 || kernels.len() != 4 {
        return Err(Error::invalid("convolution expects 4-d input and kernels"));
    }
    let (b, c, h, w) = (x[0], x[1], x[2], x[3]);
    let (m, kc, k, k2) = (kernels[0], kernels[1], kernels[2], kernels[3]);
    if kc != c {
        return Err(Error::invalid(format!("kernels expect {kc} input maps, input has {c}")));
    }
    if k != k2 || k % 2 == 0 {
        return Err(Error::invalid("convolution kernels must be square with odd size"));
    }
    if bias != m {
        return Err(Error::invalid(format!("{m} kernels but {bias} biases")));
    }
    Ok((b, c, h, w, m, k))
}

pub fn conv2d_forward<T: Scalar>(x: &Tensor<T>, kernels: &Tensor<T>, bias: &[T]) -> Result<Tensor<T>> {
    let (b, c, h, w, m, k) = conv_shapes(x.dims(), kernels.dims(), bias.len())?;
    let mut y = Tensor::zeros(&[b, m, h, w]);
    conv_forward_raw(x.data(), b, c, h, w, kernels.data(), bias, m, k, y.data_mut());
    Ok(y)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_forward_raw<T: Scalar>(
    x: &[T],
    b: usize,
    c: usize,
    h: usize,
    w: usize,
    kernels: &[T],
    bias: &[T],
    m: usize,
    k: usize,
    y: &mut [T],
) {
    let hw = h * w;
    let ckk = c * k * k;
    let mut col = vec![T::zero(); ckk * hw];
    for s in 0..b {
        im2col(&x[s * c * hw..(s + 1) * c * hw], c, h, w, k, &mut col);
        let out = &mut y[s * m * hw..(s + 1) * m * hw];
        for (mi, row) in out.chunks_exact_mut(hw).enumerate() {
            row.fill(bias[mi]);
        }
        T::gemm(m, ckk, hw, kernels, false, &col, false, T::one(), out);
    }
}

pub struct ConvGrads<T> {
    pub kernels: Tensor<T>,
    pub bias: Vec<T>,
    pub input: Option<Tensor<T>>,
}

/// Gradients of a convolution given the upstream gradient `dy`.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    kernels: &Tensor<T>,
    dy: &Tensor<T>,
    need_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let m = kernels.dims()[0];
    let (b, c, h, w, m, k) = conv_shapes(x.dims(), kernels.dims(), m)?;
    if dy.dims() != [b, m, h, w] {
        return Err(Error::invalid("upstream gradient shape mismatch"));
    }
    let mut dk = vec![T::zero(); kernels.len()];
    let mut db = vec![T::zero(); m];
    let mut dx = need_input_grad.then(|| vec![T::zero(); x.len()]);
    conv_backward_raw(
        x.data(),
        b,
        c,
        h,
        w,
        kernels.data(),
        m,
        k,
        dy.data(),
        &mut dk,
        &mut db,
        dx.as_deref_mut(),
    );
    Ok(ConvGrads {
        kernels: Tensor::from_vec(kernels.dims(), dk)?,
        bias: db,
        input: dx.map(|d| Tensor::from_vec(x.dims(), d)).transpose()?,
    })
}

/// Accumulates kernel and bias gradients into `dk`/`db` and, when given,
/// writes the input gradient into `dx`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward_raw<T: Scalar>(
    x: &[T],
    b: usize,
    c: usize,
    h: usize,
    w: usize,
    kernels: &[T],
    m: usize,
    k: usize,
    dy: &[T],
    dk: &mut [T],
    db: &mut [T],
    mut dx: Option<&mut [T]>,
) {
    let hw = h * w;
    let ckk = c * k * k;
    let mut col = vec![T::zero(); ckk * hw];
    let mut dcol = vec![T::zero(); if dx.is_some() { ckk * hw } else { 0 }];
    let mut bias_acc = vec![0.0f64; m];
    for s in 0..b {
        im2col(&x[s * c * hw..(s + 1) * c * hw], c, h, w, k, &mut col);
        let g = &dy[s * m * hw..(s + 1) * m * hw];
        T::gemm(m, hw, ckk, g, false, &col, true, T::one(), dk);
        for (mi, row) in g.chunks_exact(hw).enumerate() {
            bias_acc[mi] += row.iter().map(|v| v.as_f64()).sum::<f64>();
        }
        if let Some(dx) = dx.as_deref_mut() {
            T::gemm(ckk, m, hw, kernels, true, g, false, T::zero(), &mut dcol);
            col2im(&dcol, c, h, w, k, &mut dx[s * c * hw..(s + 1) * c * hw]);
        }
    }
    for (d, a) in db.iter_mut().zip(bias_acc) {
        *d = *d + T::of_f64(a);
    }
}

/// Output spatial size of an `m × m`, stride-`m` pooling (floor semantics).
pub fn pooled(h: usize, w: usize, m: usize) -> (usize, usize) {
    (h / m, w / m)
}

/// Average pooling with window and stride `m`; trailing rows and columns
/// that do not fill a window are dropped.
pub fn avgpool_forward<T: Scalar>(x: &Tensor<T>, m: usize) -> Result<Tensor<T>> {
    let d = x.dims();
    if d.len() != 4 {
        return Err(Error::invalid("pooling expects a 4-d input"));
    }
    if m == 0 || d[2] < m || d[3] < m {
        return Err(Error::invalid(format!("input {}x{} too small for {m}x{m} pooling", d[2], d[3])));
    }
    let (oh, ow) = pooled(d[2], d[3], m);
    let mut y = Tensor::zeros(&[d[0], d[1], oh, ow]);
    pool_forward_raw(x.data(), d[0] * d[1], d[2], d[3], m, y.data_mut());
    Ok(y)
}

pub fn avgpool2_forward<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    avgpool_forward(x, 2)
}

pub(crate) fn pool_forward_raw<T: Scalar>(x: &[T], planes: usize, h: usize, w: usize, m: usize, y: &mut [T]) {
    let (oh, ow) = pooled(h, w, m);
    let scale = T::of_f64(1.0 / (m * m) as f64);
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut y[p * oh * ow..(p + 1) * oh * ow];
        for (oy, out) in dst.chunks_exact_mut(ow).enumerate() {
            if m == 2 {
                let r0 = &src[2 * oy * w..2 * oy * w + 2 * ow];
                let r1 = &src[(2 * oy + 1) * w..(2 * oy + 1) * w + 2 * ow];
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (r0[2 * i] + r0[2 * i + 1] + r1[2 * i] + r1[2 * i + 1]) * scale;
                }
                continue;
            }
            out.fill(T::zero());
            for dy in 0..m {
                let row = &src[(oy * m + dy) * w..(oy * m + dy) * w + ow * m];
                for (o, win) in out.iter_mut().zip(row.chunks_exact(m)) {
                    *o = win.iter().fold(*o, |a, &v| a + v);
                }
            }
            for o in out.iter_mut() {
                *o = *o * scale;
            }
        }
    }
}

/// Adjoint of average pooling: each input cell of a window receives the
/// window's gradient divided by `m²`; dropped cells receive zero.
pub fn avgpool_backward<T: Scalar>(dy: &Tensor<T>, input_dims: &[usize], m: usize) -> Result<Tensor<T>> {
    if input_dims.len() != 4 {
        return Err(Error::invalid("pooling expects a 4-d input"));
    }
    let (oh, ow) = pooled(input_dims[2], input_dims[3], m);
    if dy.dims() != [input_dims[0], input_dims[1], oh, ow] {
        return Err(Error::invalid("pooling gradient shape mismatch"));
    }
    let mut dx = Tensor::zeros(input_dims);
    pool_backward_raw(
        dy.data(),
        input_dims[0] * input_dims[1],
        input_dims[2],
        input_dims[3],
        m,
        dx.data_mut(),
    );
    Ok(dx)
}

pub(crate) fn pool_backward_raw<T: Scalar>(dy: &[T], planes: usize, h: usize, w: usize, m: usize, dx: &mut [T]) {
    let (oh, ow) = pooled(h, w, m);
    let scale = T::of_f64(1.0 / (m * m) as f64);
    for p in 0..planes {
        let g = &dy[p * oh * ow..(p + 1) * oh * ow];
        let dst = &mut dx[p * h * w..(p + 1) * h * w];
        for (y, row) in dst.chunks_exact_mut(w).enumerate() {
            let oy = y / m;
            if oy >= oh {
                row.fill(T::zero());
                continue;
            }
            let grow = &g[oy * ow..(oy + 1) * ow];
            if m == 2 {
                for (i, &v) in grow.iter().enumerate() {
                    row[2 * i] = v * scale;
                    row[2 * i + 1] = v * scale;
                }
            } else {
                for (win, &v) in row[..ow * m].chunks_exact_mut(m).zip(grow) {
                    win.fill(v * scale);
                }
            }
            row[ow * m..].fill(T::zero());
        }
    }
}

/// `y = x · Wᵀ + b` for a batch `x` of shape `B × in` and `W` of `out × in`.
pub fn dense_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &[T]) -> Result<Tensor<T>> {
    let (batch, n_in) = match x.dims() {
        [n] => (1, *n),
        [bt, n] => (*bt, *n),
        _ => return Err(Error::invalid("dense layer expects a 1-d or 2-d input")),
    };
    let [n_out, w_in] = w.dims() else {
        return Err(Error::invalid("dense weights must be 2-d"));
    };
    if *w_in != n_in || b.len() != *n_out {
        return Err(Error::invalid(format!(
            "dense layer {n_out}x{w_in} with {} biases cannot take input of width {n_in}",
            b.len()
        )));
    }
    let mut y = Tensor::zeros(&[batch, *n_out]);
    dense_forward_raw(x.data(), batch, n_in, w.data(), b, *n_out, y.data_mut());
    Ok(y)
}

pub(crate) fn dense_forward_raw<T: Scalar>(
    x: &[T],
    batch: usize,
    n_in: usize,
    w: &[T],
    b: &[T],
    n_out: usize,
    y: &mut [T],
) {
    for row in y.chunks_exact_mut(n_out) {
        row.copy_from_slice(b);
    }
    T::gemm(batch, n_in, n_out, x, false, w, true, T::one(), y);
}

/// Accumulates weight/bias gradients; writes the input gradient if asked.
#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward_raw<T: Scalar>(
    x: &[T],
    batch: usize,
    n_in: usize,
    w: &[T],
    n_out: usize,
    dy: &[T],
    dw: &mut [T],
    db: &mut [T],
    dx: Option<&mut [T]>,
) {
    T::gemm(n_out, batch, n_in, dy, true, x, false, T::one(), dw);
    for (o, d) in db.iter_mut().enumerate() {
        let s: f64 = (0..batch).map(|r| dy[r * n_out + o].as_f64()).sum();
        *d = *d + T::of_f64(s);
    }
    if let Some(dx) = dx {
        T::gemm(batch, n_out, n_in, dy, false, w, false, T::zero(), dx);
    }
}

pub fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

pub(crate) fn relu_inplace<T: Scalar>(x: &mut [T]) {
    for v in x {
        *v = relu(*v);
    }
}

/// Masks `grad` where the ReLU output is zero (input ≤ 0).
pub(crate) fn relu_backward_inplace<T: Scalar>(out: &[T], grad: &mut [T]) {
    for (g, &o) in grad.iter_mut().zip(out) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
}
