//! Elementwise and broadcast ops.

use crate::error::{Error, Result};
use crate::tensor::tape::{Session, Var};
use crate::tensor::{meter, Element, Tensor};

impl<T: Element> Session<'_, T> {
    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::shape(format!(
                "add: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let (xa, xb) = (self.value(a), self.value(b));
        let out = Tensor::new(
            xa.shape().to_vec(),
            xa.data()
                .iter()
                .zip(xb.data().iter())
                .map(|(&p, &q)| p + q)
                .collect(),
        )?;
        meter::bump(out.numel() as u64);
        Ok(self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(|g, _, _| vec![g.clone(), g.clone()])),
        ))
    }

    /// Multiplication by a compile-time-known scalar.
    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let cc = T::from_f64(c);
        let xv = self.value(x);
        let out = Tensor::new(
            xv.shape().to_vec(),
            xv.data().iter().map(|&v| v * cc).collect(),
        )
        .expect("scale preserves shape");
        meter::bump(out.numel() as u64);
        self.push(
            out,
            vec![x.0],
            Some(Box::new(move |g, _, _| {
                let mut dg = g.clone();
                dg.scale_assign(cc);
                vec![dg]
            })),
        )
    }

    /// Rectified linear unit.
    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let out = Tensor::new(
            xv.shape().to_vec(),
            xv.data()
                .iter()
                .map(|&v| if v > T::zero() { v } else { T::zero() })
                .collect(),
        )
        .expect("relu preserves shape");
        meter::bump(out.numel() as u64);
        self.push(
            out,
            vec![x.0],
            Some(Box::new(|g, pv, _| {
                let x = pv[0];
                let dx: Vec<T> = g
                    .data()
                    .iter()
                    .zip(x.data().iter())
                    .map(|(&gv, &xv)| if xv > T::zero() { gv } else { T::zero() })
                    .collect();
                vec![Tensor::new(x.shape().to_vec(), dx).expect("relu grad")]
            })),
        )
    }

    /// Adds a `(n, c)` table to a `(groups, n, c)` tensor, broadcast over
    /// groups. Used for learned additive temporal embeddings.
    pub fn embed_add(&mut self, x: Var, table: Var) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let es = self.value(table).shape().to_vec();
        if xs.len() != 3 || es.len() != 2 || xs[1] != es[0] || xs[2] != es[1] {
            return Err(Error::shape(format!(
                "embed_add: tokens {:?} vs table {:?}",
                xs, es
            )));
        }
        let (g_, n, c) = (xs[0], xs[1], xs[2]);
        let xd = self.value(x).data();
        let ed = self.value(table).data();
        let mut data = Vec::with_capacity(xd.len());
        for gi in 0..g_ {
            let base = gi * n * c;
            for i in 0..n * c {
                data.push(xd[base + i] + ed[i]);
            }
        }
        meter::bump((g_ * n * c) as u64);
        let out = Tensor::new(xs, data)?;
        Ok(self.push(
            out,
            vec![x.0, table.0],
            Some(Box::new(move |g, _, _| {
                let gd = g.data();
                let mut de = vec![T::zero(); n * c];
                for gi in 0..g_ {
                    let base = gi * n * c;
                    for i in 0..n * c {
                        de[i] = de[i] + gd[base + i];
                    }
                }
                vec![
                    g.clone(),
                    Tensor::new(vec![n, c], de).expect("embed grad"),
                ]
            })),
        ))
    }

    /// Fused broadcast sum of the three pooled branches:
    /// `(t,c,1,1,1) + (t,c,1,1,z) + (t,c,x,y,1) -> (t,c,x,y,z)`.
    pub fn broadcast_sum3(&mut self, scene: Var, height: Var, bev: Var) -> Result<Var> {
        let ss = self.value(scene).shape().to_vec();
        let hs = self.value(height).shape().to_vec();
        let bs = self.value(bev).shape().to_vec();
        let ok = ss.len() == 5
            && hs.len() == 5
            && bs.len() == 5
            && ss[..2] == hs[..2]
            && ss[..2] == bs[..2]
            && ss[2..] == [1, 1, 1]
            && hs[2..4] == [1, 1]
            && bs[4] == 1;
        if !ok {
            return Err(Error::shape(format!(
                "broadcast_sum3: scene {:?}, height {:?}, bev {:?}",
                ss, hs, bs
            )));
        }
        let (t, c, z) = (ss[0], ss[1], hs[4]);
        let (x, y) = (bs[2], bs[3]);
        let out_shape = vec![t, c, x, y, z];
        let sd = self.value(scene).data();
        let hd = self.value(height).data();
        let bd = self.value(bev).data();
        let mut data = Vec::with_capacity(t * c * x * y * z);
        for tc in 0..t * c {
            let sv = sd[tc];
            let hrow = &hd[tc * z..(tc + 1) * z];
            let brow = &bd[tc * x * y..(tc + 1) * x * y];
            for xy in 0..x * y {
                let bv = brow[xy];
                for zi in 0..z {
                    data.push(sv + hrow[zi] + bv);
                }
            }
        }
        meter::bump(2 * (t * c * x * y * z) as u64);
        let out = Tensor::new(out_shape, data)?;
        Ok(self.push(
            out,
            vec![scene.0, height.0, bev.0],
            Some(Box::new(move |g, _, _| {
                let gd = g.data();
                let mut ds = vec![T::zero(); t * c];
                let mut dh = vec![T::zero(); t * c * z];
                let mut db = vec![T::zero(); t * c * x * y];
                for tc in 0..t * c {
                    let gblock = &gd[tc * x * y * z..(tc + 1) * x * y * z];
                    let mut s_acc = T::zero();
                    for xy in 0..x * y {
                        let row = &gblock[xy * z..(xy + 1) * z];
                        let mut row_sum = T::zero();
                        for zi in 0..z {
                            row_sum = row_sum + row[zi];
                            dh[tc * z + zi] = dh[tc * z + zi] + row[zi];
                        }
                        db[tc * x * y + xy] = row_sum;
                        s_acc = s_acc + row_sum;
                    }
                    ds[tc] = s_acc;
                }
                vec![
                    Tensor::new(vec![t, c, 1, 1, 1], ds).expect("scene grad"),
                    Tensor::new(vec![t, c, 1, 1, z], dh).expect("height grad"),
                    Tensor::new(vec![t, c, x, y, 1], db).expect("bev grad"),
                ]
            })),
        ))
    }
}
