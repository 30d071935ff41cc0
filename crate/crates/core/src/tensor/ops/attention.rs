//! Batched scaled dot-product attention.

use crate::error::{Error, Result};
use crate::tensor::tape::{Session, Var};
use crate::tensor::{meter, Element, Tensor};

impl<T: Element> Session<'_, T> {
    /// `softmax(q k^T / sqrt(d)) v` per group: `q (g, nq, d)`, `k (g, nk, d)`,
    /// `v (g, nk, dv)` -> `(g, nq, dv)`. Softmax rows sum to 1.
    pub fn sdpa(&mut self, q: Var, k: Var, v: Var) -> Result<Var> {
        let qs = self.value(q).shape().to_vec();
        let ks = self.value(k).shape().to_vec();
        let vs = self.value(v).shape().to_vec();
        if qs.len() != 3 || ks.len() != 3 || vs.len() != 3 {
            return Err(Error::shape(format!(
                "sdpa wants rank-3 (group, token, width): q {:?} k {:?} v {:?}",
                qs, ks, vs
            )));
        }
        if qs[0] != ks[0] || qs[0] != vs[0] || qs[2] != ks[2] || ks[1] != vs[1] {
            return Err(Error::shape(format!(
                "sdpa mismatch: q {:?} k {:?} v {:?}",
                qs, ks, vs
            )));
        }
        let (groups, nq, d) = (qs[0], qs[1], qs[2]);
        let (nk, dv) = (ks[1], vs[2]);
        let scale = T::one() / T::from_f64((d as f64).sqrt());

        let qd = self.value(q).data();
        let kd = self.value(k).data();
        let vd = self.value(v).data();
        let mut probs = vec![T::zero(); groups * nq * nk];
        let mut out = vec![T::zero(); groups * nq * dv];
        for g in 0..groups {
            let qg = &qd[g * nq * d..][..nq * d];
            let kg = &kd[g * nk * d..][..nk * d];
            let vg = &vd[g * nk * dv..][..nk * dv];
            let pg = &mut probs[g * nq * nk..][..nq * nk];
            let og = &mut out[g * nq * dv..][..nq * dv];
            for i in 0..nq {
                let qrow = &qg[i * d..][..d];
                let prow = &mut pg[i * nk..][..nk];
                for (j, slot) in prow.iter_mut().enumerate() {
                    let krow = &kg[j * d..][..d];
                    let mut acc = T::zero();
                    for (qv, kv) in qrow.iter().zip(krow.iter()) {
                        acc = acc + *qv * *kv;
                    }
                    *slot = acc * scale;
                }
                // softmax row: max, exp, normalize
                let mut m = prow[0];
                for &p in prow.iter().skip(1) {
                    if p > m {
                        m = p;
                    }
                }
                let mut sum = T::zero();
                for p in prow.iter_mut() {
                    *p = (*p - m).exp();
                    sum = sum + *p;
                }
                for p in prow.iter_mut() {
                    *p = *p / sum;
                }
                let orow = &mut og[i * dv..][..dv];
                for (j, &p) in prow.iter().enumerate() {
                    let vrow = &vg[j * dv..][..dv];
                    for (o, &vv) in orow.iter_mut().zip(vrow.iter()) {
                        *o = *o + p * vv;
                    }
                }
            }
        }
        let rows = (groups * nq) as u64;
        meter::bump(
            rows * (nk * d) as u64 * 2       // q k^T
                + rows * nk as u64           // scale
                + rows * (5 * nk - 2) as u64 // softmax
                + rows * (nk * dv) as u64 * 2, // weights @ v
        );
        let out = Tensor::new(vec![groups, nq, dv], out)?;
        let probs = Tensor::new(vec![groups, nq, nk], probs)?;

        Ok(self.push(
            out,
            vec![q.0, k.0, v.0],
            Some(Box::new(move |g_out, pv, _| {
                let (qt, kt, vt) = (pv[0], pv[1], pv[2]);
                let qd = qt.data();
                let kd = kt.data();
                let vd = vt.data();
                let pd = probs.data();
                let gd = g_out.data();
                let mut dq = vec![T::zero(); qd.len()];
                let mut dk = vec![T::zero(); kd.len()];
                let mut dv_ = vec![T::zero(); vd.len()];
                for g in 0..groups {
                    let qg = &qd[g * nq * d..][..nq * d];
                    let kg = &kd[g * nk * d..][..nk * d];
                    let vg = &vd[g * nk * dv..][..nk * dv];
                    let pg = &pd[g * nq * nk..][..nq * nk];
                    let gg = &gd[g * nq * dv..][..nq * dv];
                    let dqg = &mut dq[g * nq * d..][..nq * d];
                    let dkg = &mut dk[g * nk * d..][..nk * d];
                    let dvg = &mut dv_[g * nk * dv..][..nk * dv];
                    for i in 0..nq {
                        let grow = &gg[i * dv..][..dv];
                        let prow = &pg[i * nk..][..nk];
                        // dP and the softmax correction
                        let mut dp = vec![T::zero(); nk];
                        for (j, slot) in dp.iter_mut().enumerate() {
                            let vrow = &vg[j * dv..][..dv];
                            let mut acc = T::zero();
                            for (gv, vv) in grow.iter().zip(vrow.iter()) {
                                acc = acc + *gv * *vv;
                            }
                            *slot = acc;
                        }
                        let mut dot = T::zero();
                        for j in 0..nk {
                            dot = dot + dp[j] * prow[j];
                        }
                        for j in 0..nk {
                            let dl = prow[j] * (dp[j] - dot) * scale;
                            let krow = &kg[j * d..][..d];
                            let qrow = &qg[i * d..][..d];
                            let dqrow = &mut dqg[i * d..][..d];
                            let dkrow = &mut dkg[j * d..][..d];
                            for c in 0..d {
                                dqrow[c] = dqrow[c] + dl * krow[c];
                                dkrow[c] = dkrow[c] + dl * qrow[c];
                            }
                            let dvrow = &mut dvg[j * dv..][..dv];
                            for (slot, &gv) in dvrow.iter_mut().zip(grow.iter()) {
                                *slot = *slot + prow[j] * gv;
                            }
                        }
                    }
                }
                vec![
                    Tensor::new(vec![groups, nq, d], dq).expect("sdpa dq"),
                    Tensor::new(vec![groups, nk, d], dk).expect("sdpa dk"),
                    Tensor::new(vec![groups, nk, dv], dv_).expect("sdpa dv"),
                ]
            })),
        ))
    }
}
