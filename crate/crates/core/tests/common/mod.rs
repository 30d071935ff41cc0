//! Shared test oracles: independent looped implementations used to check the
//! kernels. These deliberately share no code with the library's compute
//! paths — plain index arithmetic and explicit loops only.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxcast::Tensor;

pub fn rng_tensor(shape: &[usize], seed: u64, amp: f64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-amp..amp))
}

pub fn rng_tensor32(shape: &[usize], seed: u64, amp: f32) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-amp..amp))
}

/// Mean over `axes` by explicit summation, keeping reduced extents as 1.
pub fn looped_mean(x: &Tensor<f64>, axes: &[usize]) -> Tensor<f64> {
    let shape = x.shape();
    let rank = shape.len();
    let out_shape: Vec<usize> = (0..rank)
        .map(|i| if axes.contains(&i) { 1 } else { shape[i] })
        .collect();
    let count: usize = axes.iter().map(|&a| shape[a]).product();
    let mut out = vec![0.0; out_shape.iter().product()];

    let n: usize = shape.iter().product();
    for flat in 0..n {
        // decode multi-index
        let mut rem = flat;
        let mut idx = vec![0usize; rank];
        for ax in (0..rank).rev() {
            idx[ax] = rem % shape[ax];
            rem /= shape[ax];
        }
        // encode output index with reduced axes pinned to 0
        let mut off = 0usize;
        for ax in 0..rank {
            let i = if axes.contains(&ax) { 0 } else { idx[ax] };
            off = off * out_shape[ax] + i;
        }
        out[off] += x.data()[flat];
    }
    for v in out.iter_mut() {
        *v /= count as f64;
    }
    Tensor::new(out_shape, out).unwrap()
}

/// `x (rows, in) @ w (in, out) + b`, accumulating over `in` in ascending
/// order starting from the bias (same summation order as a direct loop).
pub fn looped_linear(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    let (rows, in_w) = (x.shape()[0], x.shape()[1]);
    let out_w = w.shape()[1];
    let mut out = vec![0.0; rows * out_w];
    for r in 0..rows {
        for o in 0..out_w {
            let mut acc = b.data()[o];
            for i in 0..in_w {
                acc += x.data()[r * in_w + i] * w.data()[i * out_w + o];
            }
            out[r * out_w + o] = acc;
        }
    }
    Tensor::new(vec![rows, out_w], out).unwrap()
}

/// Direct-summation 3D cross-correlation with explicit bounds tests
/// (no padded buffer).
pub fn looped_conv3(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    b: &Tensor<f64>,
    stride: usize,
    pad: usize,
) -> Tensor<f64> {
    let [bt, cin, sx, sy, sz] = [
        x.shape()[0],
        x.shape()[1],
        x.shape()[2],
        x.shape()[3],
        x.shape()[4],
    ];
    let [cout, kx, ky, kz] = [w.shape()[0], w.shape()[2], w.shape()[3], w.shape()[4]];
    let ox = (sx + 2 * pad - kx) / stride + 1;
    let oy = (sy + 2 * pad - ky) / stride + 1;
    let oz = (sz + 2 * pad - kz) / stride + 1;
    let mut out = vec![0.0; bt * cout * ox * oy * oz];
    let xat = |bi: usize, ci: usize, i: isize, j: isize, l: isize| -> f64 {
        if i < 0 || j < 0 || l < 0 || i >= sx as isize || j >= sy as isize || l >= sz as isize {
            return 0.0;
        }
        x.data()[(((bi * cin + ci) * sx + i as usize) * sy + j as usize) * sz + l as usize]
    };
    for bi in 0..bt {
        for co in 0..cout {
            for i in 0..ox {
                for j in 0..oy {
                    for l in 0..oz {
                        let mut acc = b.data()[co];
                        for ci in 0..cin {
                            for dx in 0..kx {
                                for dy in 0..ky {
                                    for dz in 0..kz {
                                        let xi = (i * stride + dx) as isize - pad as isize;
                                        let yj = (j * stride + dy) as isize - pad as isize;
                                        let zl = (l * stride + dz) as isize - pad as isize;
                                        acc += w.data()
                                            [(((co * cin + ci) * kx + dx) * ky + dy) * kz + dz]
                                            * xat(bi, ci, xi, yj, zl);
                                    }
                                }
                            }
                        }
                        out[(((bi * cout + co) * ox + i) * oy + j) * oz + l] = acc;
                    }
                }
            }
        }
    }
    Tensor::new(vec![bt, cout, ox, oy, oz], out).unwrap()
}

/// Explicit-softmax attention for a single group.
pub fn looped_attention(q: &Tensor<f64>, k: &Tensor<f64>, v: &Tensor<f64>) -> Tensor<f64> {
    let (nq, d) = (q.shape()[0], q.shape()[1]);
    let (nk, dv) = (v.shape()[0], v.shape()[1]);
    let scale = 1.0 / (d as f64).sqrt();
    let mut out = vec![0.0; nq * dv];
    for i in 0..nq {
        let mut logits = vec![0.0; nk];
        for (j, slot) in logits.iter_mut().enumerate() {
            let mut acc = 0.0;
            for c in 0..d {
                acc += q.data()[i * d + c] * k.data()[j * d + c];
            }
            *slot = acc * scale;
        }
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
        let z: f64 = weights.iter().sum();
        for c in 0..dv {
            let mut acc = 0.0;
            for j in 0..nk {
                acc += weights[j] / z * v.data()[j * dv + c];
            }
            out[i * dv + c] = acc;
        }
    }
    Tensor::new(vec![nq, dv], out).unwrap()
}

/// Max |a-b| / max(1, |b|) between two same-shape tensors.
pub fn max_rel(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data().iter())
        .map(|(&x, &y)| (x - y).abs() / f64::max(1.0, y.abs()))
        .fold(0.0, f64::max)
}
