//! Data-movement ops: reshape, permute, slice, concat, nearest upsampling.
//! None of these perform arithmetic; they count zero FLOPs.

use crate::error::{Error, Result};
use crate::tensor::tape::{Session, Var};
use crate::tensor::{numel, strides, Element, Tensor};

/// Odometer-driven gather: `dst[i] = src[offset(i)]` where the offset walks
/// `out_shape` with the given per-axis strides into `src`.
pub(crate) fn gather_strided<T: Copy>(
    src: &[T],
    out_shape: &[usize],
    src_stride_for_out_axis: &[usize],
    base: usize,
) -> Vec<T> {
    let rank = out_shape.len();
    let n = numel(out_shape);
    let mut dst = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    let mut off = base;
    for _ in 0..n {
        dst.push(src[off]);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off += src_stride_for_out_axis[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            off -= src_stride_for_out_axis[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    dst
}

pub(crate) fn permute_kernel<T: Element>(x: &Tensor<T>, perm: &[usize]) -> Tensor<T> {
    let in_strides = strides(x.shape());
    let out_shape: Vec<usize> = perm.iter().map(|&p| x.shape()[p]).collect();
    let stride_for_out: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let data = gather_strided(x.data(), &out_shape, &stride_for_out, 0);
    Tensor::new(out_shape, data).expect("permute preserves element count")
}

fn invert_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0usize; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

impl<T: Element> Session<'_, T> {
    /// Same data, new extents (element count preserved).
    pub fn reshape(&mut self, x: Var, new_shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshaped(new_shape)?;
        let in_shape = self.value(x).shape().to_vec();
        Ok(self.push(
            out,
            vec![x.0],
            Some(Box::new(move |g, _, _| {
                vec![g.reshaped(&in_shape).expect("grad reshape")]
            })),
        ))
    }

    /// Axis permutation: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let rank = self.value(x).rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::shape(format!(
                "invalid permutation {:?} for rank {rank}",
                perm
            )));
        }
        let out = permute_kernel(self.value(x), perm);
        let inv = invert_perm(perm);
        Ok(self.push(
            out,
            vec![x.0],
            Some(Box::new(move |g, _, _| vec![permute_kernel(g, &inv)])),
        ))
    }

    /// Contiguous slice `[start, start+len)` along one axis.
    pub fn slice_axis(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        if axis >= shape.len() || start + len > shape[axis] || len == 0 {
            return Err(Error::shape(format!(
                "slice [{start}, {start}+{len}) on axis {axis} of {:?}",
                shape
            )));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out_shape = shape.clone();
        out_shape[axis] = len;

        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * shape[axis] + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let out = Tensor::new(out_shape, data)?;

        let full = shape.clone();
        Ok(self.push(
            out,
            vec![x.0],
            Some(Box::new(move |g, _, _| {
                let mut dx = Tensor::zeros(&full);
                let dst = dx.data_mut();
                let gsrc = g.data();
                for o in 0..outer {
                    let base = (o * full[axis] + start) * inner;
                    dst[base..base + len * inner]
                        .copy_from_slice(&gsrc[o * len * inner..(o + 1) * len * inner]);
                }
                vec![dx]
            })),
        ))
    }

    /// Concatenation along one axis.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat of zero tensors".to_string()));
        }
        let first = self.value(parts[0]).shape().to_vec();
        if axis >= first.len() {
            return Err(Error::shape(format!(
                "concat axis {axis} out of range for {:?}",
                first
            )));
        }
        let mut extents = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != first.len()
                || s.iter()
                    .enumerate()
                    .any(|(i, &e)| i != axis && e != first[i])
            {
                return Err(Error::shape(format!(
                    "concat mismatch: {:?} vs {:?} on axis {axis}",
                    s, first
                )));
            }
            extents.push(s[axis]);
        }
        let total: usize = extents.iter().sum();
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out_shape = first.clone();
        out_shape[axis] = total;

        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (i, &p) in parts.iter().enumerate() {
                let src = self.value(p).data();
                let e = extents[i];
                data.extend_from_slice(&src[o * e * inner..(o + 1) * e * inner]);
            }
        }
        let out = Tensor::new(out_shape, data)?;

        let ext = extents.clone();
        Ok(self.push(
            out,
            parts.iter().map(|v| v.0).collect(),
            Some(Box::new(move |g, pv, _| {
                let gsrc = g.data();
                let mut grads: Vec<Tensor<T>> =
                    pv.iter().map(|p| Tensor::zeros(p.shape())).collect();
                for o in 0..outer {
                    let mut cursor = o * total * inner;
                    for (i, &e) in ext.iter().enumerate() {
                        let dst = grads[i].data_mut();
                        dst[o * e * inner..(o + 1) * e * inner]
                            .copy_from_slice(&gsrc[cursor..cursor + e * inner]);
                        cursor += e * inner;
                    }
                }
                grads
            })),
        ))
    }

    /// Nearest-neighbor x2 upsampling of the trailing `dims` axes.
    pub fn upsample2(&mut self, x: Var, dims: usize) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        if dims == 0 || dims > shape.len() {
            return Err(Error::shape(format!(
                "upsample2 dims {dims} invalid for {:?}",
                shape
            )));
        }
        let lead = shape.len() - dims;
        let mut out_shape = shape.clone();
        for e in out_shape[lead..].iter_mut() {
            *e *= 2;
        }
        let in_strides = strides(&shape);
        // Walk the output, reading in[oi/2] on the upsampled axes.
        let src = self.value(x).data();
        let n = numel(&out_shape);
        let rank = shape.len();
        let mut data = Vec::with_capacity(n);
        let mut idx = vec![0usize; rank];
        for _ in 0..n {
            let mut off = 0usize;
            for ax in 0..rank {
                let i = if ax < lead { idx[ax] } else { idx[ax] / 2 };
                off += i * in_strides[ax];
            }
            data.push(src[off]);
            for ax in (0..rank).rev() {
                idx[ax] += 1;
                if idx[ax] < out_shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        let out = Tensor::new(out_shape.clone(), data)?;

        let in_shape = shape;
        Ok(self.push(
            out,
            vec![x.0],
            Some(Box::new(move |g, _, _| {
                let mut dx = Tensor::zeros(&in_shape);
                let dst = dx.data_mut();
                let gsrc = g.data();
                let rank = in_shape.len();
                let mut idx = vec![0usize; rank];
                for gi in 0..gsrc.len() {
                    let mut off = 0usize;
                    for ax in 0..rank {
                        let i = if ax < lead { idx[ax] } else { idx[ax] / 2 };
                        off += i * in_strides[ax];
                    }
                    dst[off] = dst[off] + gsrc[gi];
                    for ax in (0..rank).rev() {
                        idx[ax] += 1;
                        if idx[ax] < out_shape[ax] {
                            break;
                        }
                        idx[ax] = 0;
                    }
                }
                vec![dx]
            })),
        ))
    }
}
