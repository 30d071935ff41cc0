//! Per-position channel normalization with learned affine and activation.

use crate::error::{Error, Result};
use crate::tensor::ops::Act;
use crate::tensor::tape::{Session, Var};
use crate::tensor::{meter, Element, Tensor};

const LN_EPS: f64 = 1e-5;

impl<T: Element> Session<'_, T> {
    /// Layer-style normalization over the channel axis (axis 1), applied
    /// independently at every (batch, spatial...) position, followed by a
    /// learned per-channel scale/shift and an elementwise activation.
    /// `gamma`/`beta` have shape `(c,)`. A constant channel vector normalizes
    /// to zero (epsilon-guarded), so the output there is `act(beta)`.
    pub fn layer_norm_act(&mut self, x: Var, gamma: Var, beta: Var, act: Act) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() < 2 {
            return Err(Error::shape(format!("layer_norm_act: rank < 2 {:?}", xs)));
        }
        let c = xs[1];
        let gs = self.value(gamma).shape();
        let bs = self.value(beta).shape();
        if gs != [c] || bs != [c] {
            return Err(Error::shape(format!(
                "layer_norm_act: gamma {:?} beta {:?} vs channels {c}",
                gs, bs
            )));
        }
        let batch = xs[0];
        let spatial: usize = xs[2..].iter().product();
        let positions = batch * spatial;
        let eps = T::from_f64(LN_EPS);
        let inv_c = T::one() / T::from_f64(c as f64);

        let xd = self.value(x).data();
        let gd = self.value(gamma).data();
        let bd = self.value(beta).data();
        let mut out = vec![T::zero(); xd.len()];
        let mut xhat = vec![T::zero(); xd.len()];
        let mut inv_std = vec![T::zero(); positions];

        for b in 0..batch {
            for s in 0..spatial {
                let base = b * c * spatial + s;
                let mut sum = T::zero();
                for ch in 0..c {
                    sum = sum + xd[base + ch * spatial];
                }
                let mean = sum * inv_c;
                let mut var = T::zero();
                for ch in 0..c {
                    let d = xd[base + ch * spatial] - mean;
                    var = var + d * d;
                }
                var = var * inv_c;
                let inv = T::one() / (var + eps).sqrt();
                inv_std[b * spatial + s] = inv;
                for ch in 0..c {
                    let off = base + ch * spatial;
                    let xh = (xd[off] - mean) * inv;
                    xhat[off] = xh;
                    let z = xh * gd[ch] + bd[ch];
                    out[off] = match act {
                        Act::Relu => {
                            if z > T::zero() {
                                z
                            } else {
                                T::zero()
                            }
                        }
                        Act::Identity => z,
                    };
                }
            }
        }
        let act_cost = match act {
            Act::Relu => c,
            Act::Identity => 0,
        };
        meter::bump((positions * (7 * c + 3 + act_cost)) as u64);

        let out = Tensor::new(xs.clone(), out)?;
        let xhat = Tensor::new(xs.clone(), xhat)?;
        let saved_inv = inv_std;

        Ok(self.push(
            out,
            vec![x.0, gamma.0, beta.0],
            Some(Box::new(move |g, pv, outv| {
                let gamma = pv[1];
                let gd_w = gamma.data();
                let gdat = g.data();
                let odat = outv.data();
                let xh = xhat.data();
                let mut dx = vec![T::zero(); xh.len()];
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for b in 0..batch {
                    for s in 0..spatial {
                        let base = b * c * spatial + s;
                        let inv = saved_inv[b * spatial + s];
                        // dz: activation backward (relu uses out > 0).
                        let mut sum_dz_g = T::zero(); // sum of dxhat
                        let mut sum_dz_gx = T::zero(); // sum of dxhat * xhat
                        let mut dxh = [T::zero(); 0].to_vec();
                        dxh.resize(c, T::zero());
                        for ch in 0..c {
                            let off = base + ch * spatial;
                            let dz = match act {
                                Act::Relu => {
                                    if odat[off] > T::zero() {
                                        gdat[off]
                                    } else {
                                        T::zero()
                                    }
                                }
                                Act::Identity => gdat[off],
                            };
                            dgamma[ch] = dgamma[ch] + dz * xh[off];
                            dbeta[ch] = dbeta[ch] + dz;
                            let dh = dz * gd_w[ch];
                            dxh[ch] = dh;
                            sum_dz_g = sum_dz_g + dh;
                            sum_dz_gx = sum_dz_gx + dh * xh[off];
                        }
                        let m1 = sum_dz_g * inv_c;
                        let m2 = sum_dz_gx * inv_c;
                        for ch in 0..c {
                            let off = base + ch * spatial;
                            dx[off] = inv * (dxh[ch] - m1 - xh[off] * m2);
                        }
                    }
                }
                vec![
                    Tensor::new(xs.clone(), dx).expect("ln dx"),
                    Tensor::new(vec![c], dgamma).expect("ln dgamma"),
                    Tensor::new(vec![c], dbeta).expect("ln dbeta"),
                ]
            })),
        ))
    }
}
