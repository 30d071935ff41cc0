//! Differentiable tensor operations.
//!
//! Each op pushes one tape node: a forward kernel plus a VJP closure. Forward
//! kernels report their scalar-op counts to [`crate::tensor::meter`]; pure
//! data movement (reshape, permute, slice, concat, padding, nearest
//! upsampling) counts zero. The documented FLOP convention: one
//! multiply-accumulate = 2, every other scalar op (add, mul, div, compare,
//! exp, ln, sqrt) = 1.

mod attention;
mod basic;
mod conv;
mod linalg;
mod loss;
mod norm;
mod reduce;
mod shape;

pub use conv::conv_out_extent;

use serde::{Deserialize, Serialize};

/// Elementwise activation used by normalization blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Act {
    #[default]
    Relu,
    Identity,
}

/// Work threshold below which kernels stay sequential.
pub(crate) const PAR_THRESHOLD: u64 = 1 << 15;

/// True when this kernel invocation may use the thread pool: large enough and
/// not running under a FLOP meter (metered runs stay on the calling thread).
pub(crate) fn allow_parallel(work: u64) -> bool {
    work >= PAR_THRESHOLD && !crate::tensor::meter::active()
}
