//! N-dimensional cross-correlation (1, 2, or 3 trailing spatial axes).
//!
//! Every variant is normalized to a single 3-D path by prepending unit
//! spatial axes. Inputs are zero-padded into a scratch buffer once, so the
//! arithmetic is dense: every output element performs exactly
//! `cin * prod(kernel)` multiply-accumulates, which is also the counting
//! convention of the cost model.
//!
//! Compute runs over cache-resident column blocks of the per-frame patch
//! matrix (im2col): a block of output voxels is gathered once and consumed by
//! every output channel as long contiguous axpy/dot loops.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::ops::allow_parallel;
use crate::tensor::tape::{Session, Var};
use crate::tensor::{meter, Element, Tensor};

/// Output extent of a convolution along one axis.
pub fn conv_out_extent(ext: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = ext + 2 * pad;
    if padded < k || stride == 0 {
        return Err(Error::shape(format!(
            "conv: extent {ext} with pad {pad} shorter than kernel {k}"
        )));
    }
    let out = (padded - k) / stride + 1;
    if out == 0 {
        return Err(Error::shape(format!(
            "conv: empty output for extent {ext}, kernel {k}, stride {stride}, pad {pad}"
        )));
    }
    Ok(out)
}

/// Target size (scalars) of one patch-matrix column block.
const BLOCK_SCALARS: usize = 96 * 1024;

#[derive(Clone, Copy)]
struct Geom {
    batch: usize,
    cin: usize,
    cout: usize,
    sp: [usize; 3],
    pad_sp: [usize; 3],
    out_sp: [usize; 3],
    k: [usize; 3],
    stride: [usize; 3],
    pad: [usize; 3],
}

impl Geom {
    fn in_plane(&self) -> usize {
        self.pad_sp.iter().product()
    }
    fn out_plane(&self) -> usize {
        self.out_sp.iter().product()
    }
    fn k_total(&self) -> usize {
        self.k.iter().product()
    }
    fn patch_rows(&self) -> usize {
        self.cin * self.k_total()
    }
    /// Whole output z-rows per block, so blocked gathers stay contiguous.
    fn block_cols(&self) -> usize {
        let o2 = self.out_sp[2];
        let rows = self.patch_rows();
        let target_rows_of_z = (BLOCK_SCALARS / rows.max(1) / o2.max(1)).max(1);
        (target_rows_of_z * o2).min(self.out_plane())
    }
}

/// Zero-pads the trailing three spatial axes into a fresh buffer.
fn pad_input<T: Element>(x: &[T], g: &Geom) -> Vec<T> {
    let [s0, s1, s2] = g.sp;
    let [p0, p1, p2] = g.pad;
    let [q0, q1, q2] = g.pad_sp;
    let planes = g.batch * g.cin;
    let mut out = vec![T::zero(); planes * q0 * q1 * q2];
    for pl in 0..planes {
        let src = &x[pl * s0 * s1 * s2..];
        let dst = &mut out[pl * q0 * q1 * q2..];
        for i0 in 0..s0 {
            for i1 in 0..s1 {
                let s_off = (i0 * s1 + i1) * s2;
                let d_off = ((i0 + p0) * q1 + (i1 + p1)) * q2 + p2;
                dst[d_off..d_off + s2].copy_from_slice(&src[s_off..s_off + s2]);
            }
        }
    }
    out
}

/// Gathers patch rows for output columns `[col0, col0+cols)` of one frame.
/// Blocks are whole z-rows, so each (i, j) segment is contiguous for unit
/// stride. Pure data movement.
fn im2col_block<T: Element>(padded_frame: &[T], g: &Geom, col0: usize, cols: usize, out: &mut [T]) {
    let [q1, q2] = [g.pad_sp[1], g.pad_sp[2]];
    let [_, o1, o2] = g.out_sp;
    let [k0e, k1e, k2e] = g.k;
    let [s0, s1, s2] = g.stride;
    let in_plane = g.in_plane();
    debug_assert_eq!(col0 % o2, 0);
    debug_assert_eq!(cols % o2, 0);
    let zrow0 = col0 / o2;
    let zrows = cols / o2;
    let mut row = 0usize;
    for ci in 0..g.cin {
        let ip = &padded_frame[ci * in_plane..][..in_plane];
        for k0 in 0..k0e {
            for k1 in 0..k1e {
                for k2 in 0..k2e {
                    let dst = &mut out[row * cols..][..cols];
                    for zr in 0..zrows {
                        let flat = zrow0 + zr;
                        let (i, j) = (flat / o1, flat % o1);
                        let x0 = i * s0 + k0;
                        let x1 = j * s1 + k1;
                        let src = &ip[(x0 * q1 + x1) * q2 + k2..];
                        let d = &mut dst[zr * o2..][..o2];
                        if s2 == 1 {
                            d.copy_from_slice(&src[..o2]);
                        } else {
                            for (z, slot) in d.iter_mut().enumerate() {
                                *slot = src[z * s2];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Scatter-adds a gradient patch block back through the padding (col2im).
fn col2im_block<T: Element>(
    dpatch: &[T],
    g: &Geom,
    col0: usize,
    cols: usize,
    dpad_frame: &mut [T],
) {
    let [q1, q2] = [g.pad_sp[1], g.pad_sp[2]];
    let [_, o1, o2] = g.out_sp;
    let [k0e, k1e, k2e] = g.k;
    let [s0, s1, s2] = g.stride;
    let in_plane = g.in_plane();
    let zrow0 = col0 / o2;
    let zrows = cols / o2;
    let mut row = 0usize;
    for ci in 0..g.cin {
        let dp = &mut dpad_frame[ci * in_plane..][..in_plane];
        for k0 in 0..k0e {
            for k1 in 0..k1e {
                for k2 in 0..k2e {
                    let src_row = &dpatch[row * cols..][..cols];
                    for zr in 0..zrows {
                        let flat = zrow0 + zr;
                        let (i, j) = (flat / o1, flat % o1);
                        let x0 = i * s0 + k0;
                        let x1 = j * s1 + k1;
                        let base = (x0 * q1 + x1) * q2 + k2;
                        let s = &src_row[zr * o2..][..o2];
                        if s2 == 1 {
                            let d = &mut dp[base..base + o2];
                            for (dv, &sv) in d.iter_mut().zip(s.iter()) {
                                *dv = *dv + sv;
                            }
                        } else {
                            for (z, &sv) in s.iter().enumerate() {
                                dp[base + z * s2] = dp[base + z * s2] + sv;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

#[inline]
fn axpy<T: Element>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi = *yi + alpha * *xi;
    }
}

#[inline]
fn dot<T: Element>(a: &[T], b: &[T]) -> T {
    // four independent accumulators so the reduction pipelines; the lane
    // split is a fixed function of the length (deterministic result).
    let n4 = a.len() / 4 * 4;
    let mut acc = [T::zero(); 4];
    let mut i = 0;
    while i < n4 {
        acc[0] = acc[0] + a[i] * b[i];
        acc[1] = acc[1] + a[i + 1] * b[i + 1];
        acc[2] = acc[2] + a[i + 2] * b[i + 2];
        acc[3] = acc[3] + a[i + 3] * b[i + 3];
        i += 4;
    }
    let mut tail = T::zero();
    for j in n4..a.len() {
        tail = tail + a[j] * b[j];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + tail
}

/// Forward over one (frame, column-block): gather patches, then one axpy
/// sweep per (cout, patch row).
fn forward_block<T: Element>(
    out_planes: &mut [T], // cout planes of this frame, full out_plane each
    padded_frame: &[T],
    w: &[T],
    bias: &[T],
    g: &Geom,
    col0: usize,
    cols: usize,
    scratch: &mut Vec<T>,
) {
    let rows = g.patch_rows();
    let out_plane = g.out_plane();
    scratch.resize(rows * cols, T::zero());
    im2col_block(padded_frame, g, col0, cols, scratch);
    for co in 0..g.cout {
        let dst = &mut out_planes[co * out_plane + col0..][..cols];
        dst.fill(bias[co]);
        let wrow = &w[co * rows..][..rows];
        for (r, &wv) in wrow.iter().enumerate() {
            axpy(wv, &scratch[r * cols..][..cols], dst);
        }
    }
}

impl<T: Element> Session<'_, T> {
    /// Cross-correlation over the trailing `dims` spatial axes of
    /// `x: (batch, cin, spatial...)` with `w: (cout, cin, kernel...)` and a
    /// per-output-channel bias.
    pub fn conv(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        dims: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        if !(1..=3).contains(&dims) {
            return Err(Error::shape(format!("conv dims must be 1..=3, got {dims}")));
        }
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        let bs = self.value(b).shape().to_vec();
        if xs.len() != 2 + dims || ws.len() != 2 + dims {
            return Err(Error::shape(format!(
                "conv{dims}d: input {:?}, weight {:?}",
                xs, ws
            )));
        }
        if xs[1] != ws[1] || bs != [ws[0]] {
            return Err(Error::shape(format!(
                "conv: channels {:?} vs weight {:?} / bias {:?}",
                xs[1], ws, bs
            )));
        }

        let mut sp = [1usize; 3];
        let mut k = [1usize; 3];
        let mut st = [1usize; 3];
        let mut pd = [0usize; 3];
        for d in 0..dims {
            let slot = 3 - dims + d;
            sp[slot] = xs[2 + d];
            k[slot] = ws[2 + d];
            st[slot] = stride;
            pd[slot] = pad;
        }
        let mut out_sp = [1usize; 3];
        let mut pad_sp = [1usize; 3];
        for d in 0..3 {
            out_sp[d] = conv_out_extent(sp[d], k[d], st[d], pd[d])?;
            pad_sp[d] = sp[d] + 2 * pd[d];
        }
        let geom = Geom {
            batch: xs[0],
            cin: xs[1],
            cout: ws[0],
            sp,
            pad_sp,
            out_sp,
            k,
            stride: st,
            pad: pd,
        };

        let padded = pad_input(self.value(x).data(), &geom);
        let wd = self.value(w).data();
        let bd = self.value(b).data();
        let out_plane = geom.out_plane();
        let frame_span = geom.cin * geom.in_plane();
        let block = geom.block_cols();
        let work = (geom.batch * geom.cout * out_plane) as u64 * geom.patch_rows() as u64;

        let mut out = vec![T::zero(); geom.batch * geom.cout * out_plane];
        let frame_out = geom.cout * out_plane;
        let run_frame = |(bi, planes): (usize, &mut [T])| {
            let pf = &padded[bi * frame_span..][..frame_span];
            let mut scratch = Vec::new();
            let mut col0 = 0;
            while col0 < out_plane {
                let cols = block.min(out_plane - col0);
                forward_block(planes, pf, wd, bd, &geom, col0, cols, &mut scratch);
                col0 += cols;
            }
        };
        if allow_parallel(work) && geom.batch > 1 {
            out.par_chunks_mut(frame_out)
                .enumerate()
                .for_each(run_frame);
        } else {
            for pair in out.chunks_exact_mut(frame_out).enumerate() {
                run_frame(pair);
            }
        }
        meter::bump(2 * work + (geom.batch * geom.cout * out_plane) as u64);

        let mut out_shape = vec![geom.batch, geom.cout];
        out_shape.extend_from_slice(&out_sp[3 - dims..]);
        let out = Tensor::new(out_shape, out)?;

        let in_shape = xs.clone();
        let w_shape = ws.clone();
        Ok(self.push(
            out,
            vec![x.0, w.0, b.0],
            Some(Box::new(move |gout, pv, _| {
                let (xt, wt) = (pv[0], pv[1]);
                let g = &geom;
                let rows = g.patch_rows();
                let out_plane = g.out_plane();
                let frame_span = g.cin * g.in_plane();
                let in_plane = g.in_plane();
                let gd = gout.data();
                let wd = wt.data();
                let padded = pad_input(xt.data(), g);
                let block = g.block_cols();

                // One blocked sweep per frame: dw partials + db partials from
                // patch blocks, dx via gradient patch blocks scattered back.
                struct FrameGrads<T> {
                    dw: Vec<T>,
                    db: Vec<T>,
                    dpad: Vec<T>,
                }
                let frame_pass = |bi: usize| -> FrameGrads<T> {
                    let pf = &padded[bi * frame_span..][..frame_span];
                    let gframe = &gd[bi * g.cout * out_plane..][..g.cout * out_plane];
                    let mut dw = vec![T::zero(); wd.len()];
                    let mut db = vec![T::zero(); g.cout];
                    let mut dpad = vec![T::zero(); frame_span];
                    let mut scratch = vec![T::zero(); 0];
                    let mut dpatch = vec![T::zero(); 0];
                    let mut col0 = 0;
                    while col0 < out_plane {
                        let cols = block.min(out_plane - col0);
                        scratch.resize(rows * cols, T::zero());
                        im2col_block(pf, g, col0, cols, &mut scratch);
                        // dw[co, r] += dot(g[co, block], patches[r, block])
                        for co in 0..g.cout {
                            let grow = &gframe[co * out_plane + col0..][..cols];
                            let dwrow = &mut dw[co * rows..][..rows];
                            for (r, slot) in dwrow.iter_mut().enumerate() {
                                *slot = *slot + dot(grow, &scratch[r * cols..][..cols]);
                            }
                            let mut acc = T::zero();
                            for &gv in grow {
                                acc = acc + gv;
                            }
                            db[co] = db[co] + acc;
                        }
                        // dpatch[r, block] = sum_co w[co, r] * g[co, block]
                        dpatch.clear();
                        dpatch.resize(rows * cols, T::zero());
                        for co in 0..g.cout {
                            let grow = &gframe[co * out_plane + col0..][..cols];
                            for r in 0..rows {
                                axpy(wd[co * rows + r], grow, &mut dpatch[r * cols..][..cols]);
                            }
                        }
                        col2im_block(&dpatch, g, col0, cols, &mut dpad);
                        col0 += cols;
                    }
                    FrameGrads { dw, db, dpad }
                };
                let frames: Vec<FrameGrads<T>> = if allow_parallel(2 * work) && g.batch > 1 {
                    (0..g.batch).into_par_iter().map(frame_pass).collect()
                } else {
                    (0..g.batch).map(frame_pass).collect()
                };

                // reduce frame partials in frame order
                let mut dw = vec![T::zero(); wd.len()];
                let mut db = vec![T::zero(); g.cout];
                for fr in &frames {
                    for (slot, &v) in dw.iter_mut().zip(fr.dw.iter()) {
                        *slot = *slot + v;
                    }
                    for (slot, &v) in db.iter_mut().zip(fr.db.iter()) {
                        *slot = *slot + v;
                    }
                }

                // crop the padding off per frame
                let [q1, q2] = [g.pad_sp[1], g.pad_sp[2]];
                let [sp0, sp1, sp2] = g.sp;
                let [p0, p1, p2] = g.pad;
                let mut dx = vec![T::zero(); g.batch * g.cin * sp0 * sp1 * sp2];
                for (bi, fr) in frames.iter().enumerate() {
                    for ci in 0..g.cin {
                        let src = &fr.dpad[ci * in_plane..];
                        let dst = &mut dx[(bi * g.cin + ci) * sp0 * sp1 * sp2..];
                        for i0 in 0..sp0 {
                            for i1 in 0..sp1 {
                                let s_off = ((i0 + p0) * q1 + (i1 + p1)) * q2 + p2;
                                let d_off = (i0 * sp1 + i1) * sp2;
                                dst[d_off..d_off + sp2]
                                    .copy_from_slice(&src[s_off..s_off + sp2]);
                            }
                        }
                    }
                }
                vec![
                    Tensor::new(in_shape.clone(), dx).expect("conv dx"),
                    Tensor::new(w_shape.clone(), dw).expect("conv dw"),
                    Tensor::new(vec![g.cout], db).expect("conv db"),
                ]
            })),
        ))
    }
}
