//! Training loss kernels: class-weighted cross-entropy and masked smooth-L1.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::tape::{Session, Var};
use crate::tensor::{meter, Element, Tensor};

impl<T: Element> Session<'_, T> {
    /// Class-weighted cross-entropy over `logits (frames, classes, voxels)`
    /// against `labels` (one class id per frame*voxel). Returns the scalar
    /// `sum(w_y * ce) / sum(w_y)`.
    pub fn ce_loss(
        &mut self,
        logits: Var,
        labels: Arc<Vec<u8>>,
        class_weights: &[f64],
    ) -> Result<Var> {
        let ls = self.value(logits).shape().to_vec();
        if ls.len() != 3 {
            return Err(Error::shape(format!(
                "ce_loss wants (frames, classes, voxels), got {:?}",
                ls
            )));
        }
        let (frames, k, n) = (ls[0], ls[1], ls[2]);
        if class_weights.len() != k {
            return Err(Error::shape(format!(
                "ce_loss: {k} classes vs {} weights",
                class_weights.len()
            )));
        }
        if labels.len() != frames * n {
            return Err(Error::shape(format!(
                "ce_loss: {} labels for {} voxels",
                labels.len(),
                frames * n
            )));
        }
        if labels.iter().any(|&y| y as usize >= k) {
            return Err(Error::shape("ce_loss: label id out of range".to_string()));
        }
        let w: Vec<T> = class_weights.iter().map(|&x| T::from_f64(x)).collect();

        let xd = self.value(logits).data();
        let mut acc = T::zero();
        let mut wacc = T::zero();
        for f in 0..frames {
            for vx in 0..n {
                let base = f * k * n + vx;
                let y = labels[f * n + vx] as usize;
                let mut m = xd[base];
                for ch in 1..k {
                    let v = xd[base + ch * n];
                    if v > m {
                        m = v;
                    }
                }
                let mut sum = T::zero();
                for ch in 0..k {
                    sum = sum + (xd[base + ch * n] - m).exp();
                }
                let lse = m + sum.ln();
                let ce = lse - xd[base + y * n];
                acc = acc + w[y] * ce;
                wacc = wacc + w[y];
            }
        }
        let loss = acc / wacc;
        meter::bump((frames * n * (4 * k + 4)) as u64 + 1);
        let out = Tensor::scalar(loss);

        let wsum = wacc;
        Ok(self.push(
            out,
            vec![logits.0],
            Some(Box::new(move |g, pv, _| {
                let gs = g.data()[0];
                let xd = pv[0].data();
                let mut dx = vec![T::zero(); xd.len()];
                let coef = gs / wsum;
                for f in 0..frames {
                    for vx in 0..n {
                        let base = f * k * n + vx;
                        let y = labels[f * n + vx] as usize;
                        let mut m = xd[base];
                        for ch in 1..k {
                            let v = xd[base + ch * n];
                            if v > m {
                                m = v;
                            }
                        }
                        let mut sum = T::zero();
                        for ch in 0..k {
                            sum = sum + (xd[base + ch * n] - m).exp();
                        }
                        let wy = w[y] * coef;
                        for ch in 0..k {
                            let p = (xd[base + ch * n] - m).exp() / sum;
                            let ind = if ch == y { T::one() } else { T::zero() };
                            dx[base + ch * n] = wy * (p - ind);
                        }
                    }
                }
                vec![Tensor::new(vec![frames, k, n], dx).expect("ce grad")]
            })),
        ))
    }

    /// Smooth-L1 (Huber, delta = 1) between `pred` and `target`, averaged
    /// over the components of masked voxels. With no masked voxel the loss
    /// is defined as 0.
    pub fn smooth_l1_masked(
        &mut self,
        pred: Var,
        target: &Tensor<T>,
        mask: Arc<Vec<u8>>,
    ) -> Result<Var> {
        let ps = self.value(pred).shape().to_vec();
        if ps.len() != 3 {
            return Err(Error::shape(format!(
                "smooth_l1 wants (frames, components, voxels), got {:?}",
                ps
            )));
        }
        if target.shape() != ps.as_slice() {
            return Err(Error::shape(format!(
                "smooth_l1: pred {:?} vs target {:?}",
                ps,
                target.shape()
            )));
        }
        let (frames, comps, n) = (ps[0], ps[1], ps[2]);
        if mask.len() != frames * n {
            return Err(Error::shape(format!(
                "smooth_l1: {} mask entries for {} voxels",
                mask.len(),
                frames * n
            )));
        }
        let m_count = mask.iter().filter(|&&m| m != 0).count();

        let pd = self.value(pred).data();
        let td = target.data();
        let half = T::from_f64(0.5);
        let mut acc = T::zero();
        for f in 0..frames {
            for vx in 0..n {
                if mask[f * n + vx] == 0 {
                    continue;
                }
                for c in 0..comps {
                    let off = (f * comps + c) * n + vx;
                    let d = pd[off] - td[off];
                    let a = d.abs();
                    let q = if a < T::one() { a } else { T::one() };
                    acc = acc + (q * a - half * q * q);
                }
            }
        }
        let denom = (comps * m_count) as f64;
        let loss = if m_count == 0 {
            T::zero()
        } else {
            acc / T::from_f64(denom)
        };
        meter::bump((8 * comps * m_count) as u64 + 1);
        let out = Tensor::scalar(loss);

        let target = target.clone();
        Ok(self.push(
            out,
            vec![pred.0],
            Some(Box::new(move |g, pv, _| {
                let gs = g.data()[0];
                let pd = pv[0].data();
                let td = target.data();
                let mut dx = vec![T::zero(); pd.len()];
                if m_count > 0 {
                    let coef = gs / T::from_f64(denom);
                    for f in 0..frames {
                        for vx in 0..n {
                            if mask[f * n + vx] == 0 {
                                continue;
                            }
                            for c in 0..comps {
                                let off = (f * comps + c) * n + vx;
                                let d = pd[off] - td[off];
                                // d/dd huber = clamp(d, -1, 1)
                                let cl = if d > T::one() {
                                    T::one()
                                } else if d < -T::one() {
                                    -T::one()
                                } else {
                                    d
                                };
                                dx[off] = coef * cl;
                            }
                        }
                    }
                }
                vec![Tensor::new(vec![frames, comps, n], dx).expect("smooth_l1 grad")]
            })),
        ))
    }
}
