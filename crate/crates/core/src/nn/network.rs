//! Feature-extraction + regression network with all parameters stored in
//! one flat buffer (checkpoint order: conv kernels/bias per block, then
//! dense weights/bias per layer).

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{
    conv_backward_raw, conv_forward_raw, dense_backward_raw, dense_forward_raw, pool_backward_raw,
    pool_forward_raw, pooled, relu_backward_inplace, relu_inplace,
};
use super::loss::squared_error;
use super::scalar::Scalar;
use crate::error::{Error, Result};

/// One convolution block: `maps` filters of `kernel × kernel`, ReLU, then
/// `pool × pool` average pooling (1 disables pooling).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub maps: usize,
    pub kernel: usize,
    pub pool: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchitectureSpec {
    pub in_h: usize,
    pub in_w: usize,
    pub convs: Vec<ConvSpec>,
    /// Hidden dense layer widths (ReLU).
    pub hidden: Vec<usize>,
    /// Linear output width (2 × number of pumps).
    pub n_out: usize,
}

impl ArchitectureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_out == 0 || self.hidden.contains(&0) {
            return Err(Error::invalid("dense layer widths must be positive"));
        }
        let (mut h, mut w) = (self.in_h, self.in_w);
        if h == 0 || w == 0 {
            return Err(Error::invalid("input must be non-empty"));
        }
        for (l, c) in self.convs.iter().enumerate() {
            if c.maps == 0 || c.kernel % 2 == 0 || c.pool == 0 {
                return Err(Error::invalid(format!(
                    "conv block {}: needs positive maps, odd kernel and positive pool",
                    l + 1
                )));
            }
            if h < c.pool || w < c.pool {
                return Err(Error::invalid(format!(
                    "conv block {}: {h}x{w} input too small for {}x{} pooling",
                    l + 1,
                    c.pool,
                    c.pool
                )));
            }
            (h, w) = pooled(h, w, c.pool);
        }
        Ok(())
    }

    /// `(maps, h, w)` entering each conv block, plus the final pooled shape.
    fn block_shapes(&self) -> Vec<(usize, usize, usize)> {
        let mut shapes = vec![(1, self.in_h, self.in_w)];
        let (mut h, mut w) = (self.in_h, self.in_w);
        for c in &self.convs {
            (h, w) = pooled(h, w, c.pool);
            shapes.push((c.maps, h, w));
        }
        shapes
    }

    /// Spatial size `(q, r)` after the last pooling layer.
    pub fn feature_hw(&self) -> (usize, usize) {
        let &(_, h, w) = self.block_shapes().last().unwrap();
        (h, w)
    }

    pub fn flatten_len(&self) -> usize {
        let &(c, h, w) = self.block_shapes().last().unwrap();
        c * h * w
    }

    pub fn dense_widths(&self) -> Vec<usize> {
        let mut v = vec![self.flatten_len()];
        v.extend(&self.hidden);
        v.push(self.n_out);
        v
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        let mut c_in = 1;
        for c in &self.convs {
            shapes.push(vec![c.maps, c_in, c.kernel, c.kernel]);
            shapes.push(vec![c.maps]);
            c_in = c.maps;
        }
        for w in self.dense_widths().windows(2) {
            shapes.push(vec![w[1], w[0]]);
            shapes.push(vec![w[1]]);
        }
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }

    fn ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.param_shapes()
            .iter()
            .map(|s| {
                let n: usize = s.iter().product();
                let r = start..start + n;
                start += n;
                r
            })
            .collect()
    }
}

/// Samples pushed through the layers together.
const MICRO_BATCH: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    arch: ArchitectureSpec,
    params: Vec<T>,
    ranges: Vec<Range<usize>>,
}

/// Activations kept from the forward pass for backpropagation.
pub struct ForwardCache<T> {
    batch: usize,
    conv_in: Vec<Vec<T>>,
    conv_out: Vec<Vec<T>>,
    dense_in: Vec<Vec<T>>,
    dense_out: Vec<Vec<T>>,
}

impl<T: Scalar> Network<T> {
    /// He-uniform weights for ReLU layers, Glorot-uniform for the linear
    /// output layer, zero biases.
    pub fn init(arch: ArchitectureSpec, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = arch.param_shapes();
        let n_layers = shapes.len() / 2;
        let mut params = Vec::with_capacity(arch.param_count());
        for (l, pair) in shapes.chunks_exact(2).enumerate() {
            let w = &pair[0];
            let fan_in: usize = w[1..].iter().product();
            let limit = if l + 1 == n_layers {
                (6.0 / (fan_in + w[0]) as f64).sqrt()
            } else {
                (6.0 / fan_in as f64).sqrt()
            };
            let n: usize = w.iter().product();
            params.extend((0..n).map(|_| T::of_f64(rng.random_range(-limit..=limit))));
            params.extend((0..pair[1][0]).map(|_| T::zero()));
        }
        Ok(Self::assemble(arch, params))
    }

    fn assemble(arch: ArchitectureSpec, params: Vec<T>) -> Self {
        let ranges = arch.ranges();
        Self { arch, params, ranges }
    }

    pub fn from_params(arch: ArchitectureSpec, params: Vec<T>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(Error::invalid(format!(
                "architecture needs {} parameters, got {}",
                arch.param_count(),
                params.len()
            )));
        }
        Ok(Self::assemble(arch, params))
    }

    pub fn arch(&self) -> &ArchitectureSpec {
        &self.arch
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Parameter tensors in checkpoint order.
    pub fn param_tensors(&self) -> impl Iterator<Item = &[T]> {
        self.ranges.iter().map(|r| &self.params[r.clone()])
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network::assemble(
            self.arch.clone(),
            self.params.iter().map(|v| U::of_f64(v.as_f64())).collect(),
        )
    }

    fn check_input(&self, x: &[T], batch: usize) -> Result<()> {
        let per = self.arch.in_h * self.arch.in_w;
        if batch == 0 || x.len() != batch * per {
            return Err(Error::invalid(format!(
                "expected {batch} inputs of {}x{}, got {} values",
                self.arch.in_h,
                self.arch.in_w,
                x.len()
            )));
        }
        Ok(())
    }

    /// Runs the network on `batch` inputs of `in_h × in_w`, returning the
    /// `batch × n_out` outputs and the activations needed for backward.
    pub fn forward_cached(&self, x: &[T], batch: usize) -> Result<(Vec<T>, ForwardCache<T>)> {
        self.check_input(x, batch)?;
        let shapes = self.arch.block_shapes();
        let mut cache = ForwardCache {
            batch,
            conv_in: Vec::new(),
            conv_out: Vec::new(),
            dense_in: Vec::new(),
            dense_out: Vec::new(),
        };
        let mut act = x.to_vec();
        let (mut c, mut h, mut w) = (1, self.arch.in_h, self.arch.in_w);
        for (l, spec) in self.arch.convs.iter().enumerate() {
            let mut z = vec![T::zero(); batch * spec.maps * h * w];
            conv_forward_raw(
                &act,
                batch,
                c,
                h,
                w,
                &self.params[self.ranges[2 * l].clone()],
                &self.params[self.ranges[2 * l + 1].clone()],
                spec.maps,
                spec.kernel,
                &mut z,
            );
            relu_inplace(&mut z);
            let (_, ph, pw) = shapes[l + 1];
            let next = if spec.pool > 1 {
                let mut p = vec![T::zero(); batch * spec.maps * ph * pw];
                pool_forward_raw(&z, batch * spec.maps, h, w, spec.pool, &mut p);
                p
            } else {
                z.clone()
            };
            cache.conv_in.push(std::mem::replace(&mut act, next));
            cache.conv_out.push(z);
            (c, h, w) = (spec.maps, ph, pw);
        }
        let widths = self.arch.dense_widths();
        let n_conv = self.arch.convs.len();
        let n_dense = widths.len() - 1;
        for l in 0..n_dense {
            let (n_in, n_out) = (widths[l], widths[l + 1]);
            let mut z = vec![T::zero(); batch * n_out];
            dense_forward_raw(
                &act,
                batch,
                n_in,
                &self.params[self.ranges[2 * (n_conv + l)].clone()],
                &self.params[self.ranges[2 * (n_conv + l) + 1].clone()],
                n_out,
                &mut z,
            );
            if l + 1 < n_dense {
                relu_inplace(&mut z);
            }
            cache.dense_in.push(std::mem::replace(&mut act, z.clone()));
            cache.dense_out.push(z);
        }
        Ok((act, cache))
    }

    pub fn forward(&self, x: &[T], batch: usize) -> Result<Vec<T>> {
        self.check_input(x, batch)?;
        let per = self.arch.in_h * self.arch.in_w;
        let mut out = Vec::with_capacity(batch * self.arch.n_out);
        for chunk in x.chunks(MICRO_BATCH * per) {
            out.extend(self.forward_cached(chunk, chunk.len() / per)?.0);
        }
        Ok(out)
    }

    /// Backpropagates `d_out` (gradient of the loss w.r.t. the outputs) and
    /// returns the gradient of every parameter in checkpoint order.
    pub fn backward(&self, cache: &ForwardCache<T>, d_out: &[T]) -> Vec<T> {
        let mut grads = vec![T::zero(); self.params.len()];
        self.backward_into(cache, d_out, &mut grads);
        grads
    }

    /// Like [`Network::backward`], but adds the gradients into `grads`.
    pub fn backward_into(&self, cache: &ForwardCache<T>, d_out: &[T], grads: &mut [T]) {
        let batch = cache.batch;
        assert_eq!(grads.len(), self.params.len());
        let widths = self.arch.dense_widths();
        let n_conv = self.arch.convs.len();
        let n_dense = widths.len() - 1;
        assert_eq!(d_out.len(), batch * widths[n_dense]);

        let mut g = d_out.to_vec();
        for l in (0..n_dense).rev() {
            if l + 1 < n_dense {
                relu_backward_inplace(&cache.dense_out[l], &mut g);
            }
            let (n_in, n_out) = (widths[l], widths[l + 1]);
            let (rw, rb) = (self.ranges[2 * (n_conv + l)].clone(), self.ranges[2 * (n_conv + l) + 1].clone());
            let (gw, gb) = grads[rw.start..rb.end].split_at_mut(rw.len());
            let mut dx = vec![T::zero(); batch * n_in];
            dense_backward_raw(
                &cache.dense_in[l],
                batch,
                n_in,
                &self.params[rw],
                n_out,
                &g,
                gw,
                gb,
                Some(&mut dx),
            );
            g = dx;
        }

        let shapes = self.arch.block_shapes();
        for l in (0..n_conv).rev() {
            let spec = self.arch.convs[l];
            let (c_in, h, w) = (shapes[l].0, shapes[l].1, shapes[l].2);
            let mut gz = if spec.pool > 1 {
                let mut d = vec![T::zero(); batch * spec.maps * h * w];
                pool_backward_raw(&g, batch * spec.maps, h, w, spec.pool, &mut d);
                d
            } else {
                g
            };
            relu_backward_inplace(&cache.conv_out[l], &mut gz);
            let (rk, rb) = (self.ranges[2 * l].clone(), self.ranges[2 * l + 1].clone());
            let (gk, gb) = grads[rk.start..rb.end].split_at_mut(rk.len());
            let mut dx = if l > 0 { vec![T::zero(); batch * c_in * h * w] } else { Vec::new() };
            conv_backward_raw(
                &cache.conv_in[l],
                batch,
                c_in,
                h,
                w,
                &self.params[rk],
                spec.maps,
                spec.kernel,
                &gz,
                gk,
                gb,
                (l > 0).then_some(dx.as_mut_slice()),
            );
            g = std::mem::take(&mut dx);
        }
    }

    /// Batch-mean MSE against `y` (`batch × n_out`) and its gradient.
    ///
    /// The batch is pushed through in micro-batches whose gradients are
    /// summed, which keeps activations cache-resident.
    pub fn loss_and_gradients(&self, x: &[T], y: &[T], batch: usize) -> Result<(f64, Vec<T>)> {
        self.check_input(x, batch)?;
        let dim = self.arch.n_out;
        if y.len() != batch * dim {
            return Err(Error::invalid("target batch has the wrong size"));
        }
        let per = self.arch.in_h * self.arch.in_w;
        let denom = (batch * dim) as f64;
        let mut grads = vec![T::zero(); self.params.len()];
        let mut sum = 0.0;
        for (xc, yc) in x.chunks(MICRO_BATCH * per).zip(y.chunks(MICRO_BATCH * dim)) {
            let (out, cache) = self.forward_cached(xc, yc.len() / dim)?;
            let (s, d_out) = squared_error(&out, yc, denom);
            sum += s;
            self.backward_into(&cache, &d_out, &mut grads);
        }
        Ok((sum / denom, grads))
    }

    pub fn loss(&self, x: &[T], y: &[T], batch: usize) -> Result<f64> {
        if y.len() != batch * self.arch.n_out {
            return Err(Error::invalid("target batch has the wrong size"));
        }
        let out = self.forward(x, batch)?;
        Ok(squared_error(&out, y, 1.0).0 / y.len() as f64)
    }
}
