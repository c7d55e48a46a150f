//! Independent reference implementations shared by the integration tests
//! and the acceptance harness.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raman_core::nn::{ArchitectureSpec, ConvSpec, Network};

/// Direct nested-loop "same" convolution, stride 1.
pub fn conv_ref(x: &[f64], xd: [usize; 4], k: &[f64], kd: [usize; 4], bias: &[f64]) -> Vec<f64> {
    let [b, c, h, w] = xd;
    let [m, _, kk, _] = kd;
    let p = (kk / 2) as isize;
    let mut y = vec![0.0; b * m * h * w];
    for s in 0..b {
        for mi in 0..m {
            for i in 0..h {
                for j in 0..w {
                    let mut acc = bias[mi];
                    for ci in 0..c {
                        for u in 0..kk {
                            for v in 0..kk {
                                let (ii, jj) = (i as isize + u as isize - p, j as isize + v as isize - p);
                                if ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize {
                                    continue;
                                }
                                acc += k[((mi * c + ci) * kk + u) * kk + v]
                                    * x[((s * c + ci) * h + ii as usize) * w + jj as usize];
                            }
                        }
                    }
                    y[((s * m + mi) * h + i) * w + j] = acc;
                }
            }
        }
    }
    y
}

/// Kernel, bias and input gradients of [`conv_ref`] by direct summation.
pub fn conv_backward_ref(
    x: &[f64],
    xd: [usize; 4],
    k: &[f64],
    kd: [usize; 4],
    dy: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let [b, c, h, w] = xd;
    let [m, _, kk, _] = kd;
    let p = (kk / 2) as isize;
    let mut dk = vec![0.0; k.len()];
    let mut db = vec![0.0; m];
    let mut dx = vec![0.0; x.len()];
    for s in 0..b {
        for mi in 0..m {
            for i in 0..h {
                for j in 0..w {
                    let g = dy[((s * m + mi) * h + i) * w + j];
                    db[mi] += g;
                    for ci in 0..c {
                        for u in 0..kk {
                            for v in 0..kk {
                                let (ii, jj) = (i as isize + u as isize - p, j as isize + v as isize - p);
                                if ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize {
                                    continue;
                                }
                                let xi = ((s * c + ci) * h + ii as usize) * w + jj as usize;
                                let ki = ((mi * c + ci) * kk + u) * kk + v;
                                dk[ki] += g * x[xi];
                                dx[xi] += g * k[ki];
                            }
                        }
                    }
                }
            }
        }
    }
    (dk, db, dx)
}

/// Direct `m × m` stride-`m` average pooling with floor semantics.
pub fn pool_ref(x: &[f64], xd: [usize; 4], m: usize) -> Vec<f64> {
    let [b, c, h, w] = xd;
    let (oh, ow) = (h / m, w / m);
    let mut y = vec![0.0; b * c * oh * ow];
    for pl in 0..b * c {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = 0.0;
                for u in 0..m {
                    for v in 0..m {
                        acc += x[(pl * h + i * m + u) * w + j * m + v];
                    }
                }
                y[(pl * oh + i) * ow + j] = acc / (m * m) as f64;
            }
        }
    }
    y
}

/// Largest absolute difference relative to the largest reference magnitude.
pub fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    let scale = want.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    got.iter().zip(want).fold(0.0f64, |a, (g, w)| a.max((g - w).abs())) / scale
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub b: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub m: usize,
    pub k: usize,
    pub pool: usize,
}

pub fn random_shape(rng: &mut ChaCha8Rng) -> Shape {
    let pool = rng.random_range(1..=3);
    Shape {
        b: rng.random_range(1..=3),
        c: rng.random_range(1..=4),
        h: rng.random_range(pool..=12),
        w: rng.random_range(pool..=12),
        m: rng.random_range(1..=5),
        k: [1, 3, 5][rng.random_range(0..3)],
        pool,
    }
}

/// Worst relative error of the f64 and f32 layer kernels against the
/// references on one shape: `(conv_fwd, conv_bwd, pool_fwd, pool_bwd)`.
pub fn layer_errors(s: Shape, seed: u64) -> [f64; 4] {
    use raman_core::nn::layers::*;
    use raman_core::nn::Tensor;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xd = [s.b, s.c, s.h, s.w];
    let kd = [s.m, s.c, s.k, s.k];
    let yd = [s.b, s.m, s.h, s.w];
    let x = random_vec(&mut rng, xd.iter().product());
    let k = random_vec(&mut rng, kd.iter().product());
    let bias = random_vec(&mut rng, s.m);
    let dy = random_vec(&mut rng, yd.iter().product());

    let want_y = conv_ref(&x, xd, &k, kd, &bias);
    let (want_dk, want_db, want_dx) = conv_backward_ref(&x, xd, &k, kd, &dy);
    let want_p = pool_ref(&x, xd, s.pool);

    let mut errs = [0.0f64; 4];
    // f64 and f32 kernels
    for single in [false, true] {
        let (y, (dk, db, dx), p, pb) = if single {
            let t = |d: &[usize], v: &[f64]| Tensor::from_vec(d, v.iter().map(|&a| a as f32).collect()).unwrap();
            let bias32: Vec<f32> = bias.iter().map(|&a| a as f32).collect();
            let (xt, kt, dyt) = (t(&xd, &x), t(&kd, &k), t(&yd, &dy));
            let y = conv2d_forward(&xt, &kt, &bias32).unwrap();
            let g = conv2d_backward(&xt, &kt, &dyt, true).unwrap();
            let p = avgpool_forward(&xt, s.pool).unwrap();
            let pb = avgpool_backward(&p, &xd, s.pool).unwrap();
            let up = |v: &[f32]| v.iter().map(|&a| a as f64).collect::<Vec<f64>>();
            (
                up(y.data()),
                (up(g.kernels.data()), up(&g.bias), up(g.input.unwrap().data())),
                up(p.data()),
                up(pb.data()),
            )
        } else {
            let t = |d: &[usize], v: &[f64]| Tensor::from_vec(d, v.to_vec()).unwrap();
            let (xt, kt, dyt) = (t(&xd, &x), t(&kd, &k), t(&yd, &dy));
            let y = conv2d_forward(&xt, &kt, &bias).unwrap();
            let g = conv2d_backward(&xt, &kt, &dyt, true).unwrap();
            let p = avgpool_forward(&xt, s.pool).unwrap();
            let pb = avgpool_backward(&p, &xd, s.pool).unwrap();
            (
                y.data().to_vec(),
                (g.kernels.data().to_vec(), g.bias, g.input.unwrap().data().to_vec()),
                p.data().to_vec(),
                pb.data().to_vec(),
            )
        };
        errs[0] = errs[0].max(rel_err(&y, &want_y));
        errs[1] = errs[1]
            .max(rel_err(&dk, &want_dk))
            .max(rel_err(&db, &want_db))
            .max(rel_err(&dx, &want_dx));
        errs[2] = errs[2].max(rel_err(&p, &want_p));
        // pooling backward is the adjoint: <P x, P x> = <x, Pᵀ P x>
        let lhs: f64 = p.iter().map(|v| v * v).sum();
        let rhs: f64 = x.iter().zip(&pb).map(|(a, b)| a * b).sum();
        errs[3] = errs[3].max((lhs - rhs).abs() / lhs.abs().max(1e-300));
    }
    errs
}

/// Miniature network used for gradient checks.
pub fn mini_arch() -> ArchitectureSpec {
    ArchitectureSpec {
        in_h: 6,
        in_w: 8,
        convs: vec![
            ConvSpec { maps: 2, kernel: 3, pool: 2 },
            ConvSpec { maps: 3, kernel: 3, pool: 1 },
        ],
        hidden: vec![5],
        n_out: 4,
    }
}

/// Worst relative error between back-propagated and central-difference
/// gradients of the batch MSE for one seeded network, in f64.
pub fn gradient_check(seed: u64) -> f64 {
    let arch = mini_arch();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let batch = 3;
    let x = random_vec(&mut rng, batch * arch.in_h * arch.in_w);
    let y = random_vec(&mut rng, batch * arch.n_out);
    let mut net = Network::<f64>::init(arch, seed).unwrap();
    for v in net.params_mut().iter_mut() {
        // nonzero biases so ReLU units sit away from their kinks
        if *v == 0.0 {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    let (_, grads) = net.loss_and_gradients(&x, &y, batch).unwrap();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..grads.len() {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + h;
        let up = net.loss(&x, &y, batch).unwrap();
        net.params_mut()[i] = orig - h;
        let down = net.loss(&x, &y, batch).unwrap();
        net.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let denom = grads[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((grads[i] - numeric).abs() / denom);
    }
    worst
}
