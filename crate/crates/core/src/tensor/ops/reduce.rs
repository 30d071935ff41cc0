//! Global average pooling over an axis set.

use crate::error::{Error, Result};
use crate::tensor::tape::{Session, Var};
use crate::tensor::{meter, numel, strides, Element, Tensor};

impl<T: Element> Session<'_, T> {
    /// Arithmetic mean over `reduce_axes`, keeping reduced extents as 1.
    /// An empty axis set returns the input unchanged (identity, documented).
    pub fn gap(&mut self, x: Var, reduce_axes: &[usize]) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        let rank = shape.len();
        for &ax in reduce_axes {
            if ax >= rank {
                return Err(Error::shape(format!(
                    "gap axis {ax} out of range for {:?}",
                    shape
                )));
            }
        }
        let mut reduced = vec![false; rank];
        for &ax in reduce_axes {
            reduced[ax] = true;
        }
        if reduce_axes.is_empty() {
            let out = self.value(x).clone();
            return Ok(self.push(
                out,
                vec![x.0],
                Some(Box::new(|g, _, _| vec![g.clone()])),
            ));
        }

        let out_shape: Vec<usize> = shape
            .iter()
            .enumerate()
            .map(|(i, &e)| if reduced[i] { 1 } else { e })
            .collect();
        // Reduced sub-space walked per output element.
        let red_shape: Vec<usize> = (0..rank).filter(|&i| reduced[i]).map(|i| shape[i]).collect();
        let in_strides = strides(&shape);
        let red_strides: Vec<usize> = (0..rank)
            .filter(|&i| reduced[i])
            .map(|i| in_strides[i])
            .collect();
        let keep_shape: Vec<usize> = (0..rank)
            .filter(|&i| !reduced[i])
            .map(|i| shape[i])
            .collect();
        let keep_strides: Vec<usize> = (0..rank)
            .filter(|&i| !reduced[i])
            .map(|i| in_strides[i])
            .collect();

        let n_red = numel(&red_shape);
        let n_out = numel(&out_shape);
        let inv = T::one() / T::from_f64(n_red as f64);
        let src = self.value(x).data();

        let mut data = Vec::with_capacity(n_out);
        let mut keep_idx = vec![0usize; keep_shape.len()];
        let mut base = 0usize;
        for _ in 0..n_out {
            // First element by assignment, remaining n_red-1 by addition.
            let mut acc = src[base];
            let mut red_idx = vec![0usize; red_shape.len()];
            let mut off = base;
            for _ in 1..n_red {
                for ax in (0..red_shape.len()).rev() {
                    red_idx[ax] += 1;
                    off += red_strides[ax];
                    if red_idx[ax] < red_shape[ax] {
                        break;
                    }
                    off -= red_strides[ax] * red_shape[ax];
                    red_idx[ax] = 0;
                }
                acc = acc + src[off];
            }
            data.push(acc * inv);
            for ax in (0..keep_shape.len()).rev() {
                keep_idx[ax] += 1;
                base += keep_strides[ax];
                if keep_idx[ax] < keep_shape[ax] {
                    break;
                }
                base -= keep_strides[ax] * keep_shape[ax];
                keep_idx[ax] = 0;
            }
        }
        // n_red - 1 adds plus one divide per output element.
        meter::bump((n_out * n_red) as u64);
        let out = Tensor::new(out_shape.clone(), data)?;

        let in_shape = shape;
        Ok(self.push(
            out,
            vec![x.0],
            Some(Box::new(move |g, _, _| {
                // Each input element receives grad_out / n_red.
                let gd = g.data();
                let out_strides_full: Vec<usize> = {
                    let os = strides(&out_shape);
                    (0..rank)
                        .map(|i| if reduced[i] { 0 } else { os[i] })
                        .collect()
                };
                let mut dx = vec![T::zero(); numel(&in_shape)];
                let mut idx = vec![0usize; rank];
                let mut goff = 0usize;
                for slot in dx.iter_mut() {
                    *slot = gd[goff] * inv;
                    for ax in (0..rank).rev() {
                        idx[ax] += 1;
                        goff += out_strides_full[ax];
                        if idx[ax] < in_shape[ax] {
                            break;
                        }
                        goff -= out_strides_full[ax] * in_shape[ax];
                        idx[ax] = 0;
                    }
                }
                vec![Tensor::new(in_shape.clone(), dx).expect("gap grad")]
            })),
        ))
    }
}
