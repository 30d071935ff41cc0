//! Affine map over the last axis, and plain matrix multiplication.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::ops::allow_parallel;
use crate::tensor::tape::{Session, Var};
use crate::tensor::{meter, Element, Tensor};

/// `y[r, :] = sum_i x[r, i] * w[i, :] + b`, sequential rows.
fn linear_rows<T: Element>(x: &[T], w: &[T], b: &[T], out: &mut [T], in_w: usize, out_w: usize) {
    for (row_out, row_in) in out.chunks_exact_mut(out_w).zip(x.chunks_exact(in_w)) {
        row_out.copy_from_slice(b);
        for (i, &xv) in row_in.iter().enumerate() {
            let wrow = &w[i * out_w..(i + 1) * out_w];
            for (o, &wv) in row_out.iter_mut().zip(wrow.iter()) {
                *o = *o + xv * wv;
            }
        }
    }
}

impl<T: Element> Session<'_, T> {
    /// Affine map over the last axis: `y = x W + b` with `w: (in, out)`,
    /// `b: (out)`. Leading axes are batch.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        let bs = self.value(b).shape().to_vec();
        if ws.len() != 2 || bs.len() != 1 || bs[0] != ws[1] {
            return Err(Error::shape(format!(
                "linear: weight {:?} bias {:?}",
                ws, bs
            )));
        }
        let (in_w, out_w) = (ws[0], ws[1]);
        if xs.is_empty() || *xs.last().unwrap() != in_w {
            return Err(Error::shape(format!(
                "linear: input {:?} does not end in width {in_w}",
                xs
            )));
        }
        let rows = self.value(x).numel() / in_w;
        let mut out_shape = xs.clone();
        *out_shape.last_mut().unwrap() = out_w;

        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let bd = self.value(b).data();
        let mut out = vec![T::zero(); rows * out_w];
        let work = (rows * in_w * out_w) as u64;
        if allow_parallel(work) {
            let rows_per = rows.div_ceil(rayon::current_num_threads().max(1) * 4).max(1);
            out.par_chunks_mut(rows_per * out_w)
                .zip(xd.par_chunks(rows_per * in_w))
                .for_each(|(oc, xc)| linear_rows(xc, wd, bd, oc, in_w, out_w));
        } else {
            linear_rows(xd, wd, bd, &mut out, in_w, out_w);
        }
        meter::bump(2 * work + (rows * out_w) as u64);
        let out = Tensor::new(out_shape, out)?;

        Ok(self.push(
            out,
            vec![x.0, w.0, b.0],
            Some(Box::new(move |g, pv, _| {
                let (x, w) = (pv[0], pv[1]);
                let gd = g.data();
                let xd = x.data();
                let wd = w.data();
                // dx[r, i] = sum_o g[r, o] * w[i, o]
                let mut dx = vec![T::zero(); rows * in_w];
                for r in 0..rows {
                    let grow = &gd[r * out_w..(r + 1) * out_w];
                    let dxrow = &mut dx[r * in_w..(r + 1) * in_w];
                    for (i, slot) in dxrow.iter_mut().enumerate() {
                        let wrow = &wd[i * out_w..(i + 1) * out_w];
                        let mut acc = T::zero();
                        for (gv, wv) in grow.iter().zip(wrow.iter()) {
                            acc = acc + *gv * *wv;
                        }
                        *slot = acc;
                    }
                }
                // dw[i, o] = sum_r x[r, i] * g[r, o];  db[o] = sum_r g[r, o]
                let mut dw = vec![T::zero(); in_w * out_w];
                let mut db = vec![T::zero(); out_w];
                for r in 0..rows {
                    let grow = &gd[r * out_w..(r + 1) * out_w];
                    let xrow = &xd[r * in_w..(r + 1) * in_w];
                    for (i, &xv) in xrow.iter().enumerate() {
                        let dwrow = &mut dw[i * out_w..(i + 1) * out_w];
                        for (slot, &gv) in dwrow.iter_mut().zip(grow.iter()) {
                            *slot = *slot + xv * gv;
                        }
                    }
                    for (slot, &gv) in db.iter_mut().zip(grow.iter()) {
                        *slot = *slot + gv;
                    }
                }
                vec![
                    Tensor::new(x.shape().to_vec(), dx).expect("linear dx"),
                    Tensor::new(vec![in_w, out_w], dw).expect("linear dw"),
                    Tensor::new(vec![out_w], db).expect("linear db"),
                ]
            })),
        ))
    }

    /// Plain matrix product `(m, k) @ (k, n) -> (m, n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ash = self.value(a).shape().to_vec();
        let bsh = self.value(b).shape().to_vec();
        if ash.len() != 2 || bsh.len() != 2 || ash[1] != bsh[0] {
            return Err(Error::shape(format!("matmul: {:?} @ {:?}", ash, bsh)));
        }
        let (m, k, n) = (ash[0], ash[1], bsh[1]);
        let ad = self.value(a).data();
        let bd = self.value(b).data();
        let mut out = vec![T::zero(); m * n];
        let row_op = |i: usize, orow: &mut [T]| {
            for kk in 0..k {
                let av = ad[i * k + kk];
                let brow = &bd[kk * n..(kk + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                    *o = *o + av * bv;
                }
            }
        };
        if allow_parallel((m * n * k) as u64) {
            out.par_chunks_mut(n)
                .enumerate()
                .for_each(|(i, orow)| row_op(i, orow));
        } else {
            for (i, orow) in out.chunks_exact_mut(n).enumerate() {
                row_op(i, orow);
            }
        }
        meter::bump(2 * (m * n * k) as u64);
        let out = Tensor::new(vec![m, n], out)?;

        Ok(self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(move |g, pv, _| {
                let (a, b) = (pv[0], pv[1]);
                let gd = g.data();
                let ad = a.data();
                let bd = b.data();
                // da = g @ b^T
                let mut da = vec![T::zero(); m * k];
                for i in 0..m {
                    let grow = &gd[i * n..(i + 1) * n];
                    let darow = &mut da[i * k..(i + 1) * k];
                    for (kk, slot) in darow.iter_mut().enumerate() {
                        let brow = &bd[kk * n..(kk + 1) * n];
                        let mut acc = T::zero();
                        for (gv, bv) in grow.iter().zip(brow.iter()) {
                            acc = acc + *gv * *bv;
                        }
                        *slot = acc;
                    }
                }
                // db = a^T @ g
                let mut db = vec![T::zero(); k * n];
                for i in 0..m {
                    let grow = &gd[i * n..(i + 1) * n];
                    for kk in 0..k {
                        let av = ad[i * k + kk];
                        let dbrow = &mut db[kk * n..(kk + 1) * n];
                        for (slot, &gv) in dbrow.iter_mut().zip(grow.iter()) {
                            *slot = *slot + av * gv;
                        }
                    }
                }
                vec![
                    Tensor::new(vec![m, k], da).expect("matmul da"),
                    Tensor::new(vec![k, n], db).expect("matmul db"),
                ]
            })),
        ))
    }
}
