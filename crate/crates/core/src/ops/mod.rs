//! Differentiable operations.
//!
//! Every op validates shapes, computes its output eagerly, and — when an
//! input is tracked on a tape — records a backward closure mapping the
//! output gradient to per-parent contributions. Closures capture shared
//! buffer handles, never the tape itself.

mod activation;
mod conv;
mod elementwise;
mod norm;
mod reduce;
mod shape_ops;
mod softmax;

pub use activation::{gelu, leaky_relu};
pub use conv::{
    conv3d, conv3d_depthwise_multiplier, conv_transpose3d, Conv3dSpec,
};
pub use elementwise::{add, add_scalar, div, elementwise, mul, mul_scalar, neg, sub, BinaryOp};
pub use norm::{instance_norm, layer_norm_channel};
pub use reduce::{mean_all, reduce, sum_all, Reduction};
pub use shape_ops::{concat_channels, nearest_upsample3d, slice_channels};
pub use softmax::{cross_entropy_channels, softmax_channels};

use crate::element::Element;
use crate::error::CoreError;
use crate::tape::{BackwardFn, Tape};
use crate::tensor::Tensor;
use crate::Result;

/// Resolves the single tape shared by the tracked inputs (if any). Mixing
/// tensors recorded on different tapes is a caller bug.
pub(crate) fn unify_tape<T: Element>(inputs: &[&Tensor<T>]) -> Result<Option<Tape<T>>> {
    let mut found: Option<Tape<T>> = None;
    for t in inputs {
        if let (Some(tape), Some(_)) = (t.tape(), t.node()) {
            match &found {
                None => found = Some(tape.clone()),
                Some(existing) if existing.same_as(tape) => {}
                Some(_) => {
                    return Err(CoreError::invalid(
                        "ops",
                        "operands were recorded on different tapes",
                    ))
                }
            }
        }
    }
    Ok(found)
}

/// Attaches a backward closure to `out` when a tape is active. The builder
/// only runs in the tracked case, so untracked forwards pay nothing.
pub(crate) fn finish<T: Element>(
    tape: Option<Tape<T>>,
    out: Tensor<T>,
    build: impl FnOnce() -> BackwardFn<T>,
) -> Tensor<T> {
    match tape {
        Some(tape) => {
            let node = tape.record(out.numel(), build());
            out.with_history(tape, node)
        }
        None => out,
    }
}

/// `y[lo..hi] += alpha * x[lo+shift..hi+shift]` over the valid overlap of a
/// shifted row pair. The workhorse of every stride-1 convolution loop.
#[inline]
pub(crate) fn axpy_window<T: Element>(alpha: T, x: &[T], y: &mut [T], shift: isize) {
    let lo = (-shift).max(0) as usize;
    let hi = (y.len() as isize).min(x.len() as isize - shift).max(0) as usize;
    if hi > lo {
        let xlo = (lo as isize + shift) as usize;
        T::axpy(alpha, &x[xlo..xlo + (hi - lo)], &mut y[lo..hi]);
    }
}

/// Dot product of `a[lo..hi]` with `b[lo+shift..hi+shift]` over the valid
/// overlap (zero when the windows are disjoint).
#[inline]
pub(crate) fn dot_window<T: Element>(a: &[T], b: &[T], shift: isize) -> T {
    let lo = (-shift).max(0) as usize;
    let hi = (a.len() as isize).min(b.len() as isize - shift).max(0) as usize;
    if hi > lo {
        let blo = (lo as isize + shift) as usize;
        T::dot(&a[lo..hi], &b[blo..blo + (hi - lo)])
    } else {
        T::ZERO
    }
}

fn expect_rank5<T: Element>(x: &Tensor<T>, context: &str) -> Result<[usize; 5]> {
    if x.rank() != 5 {
        return Err(CoreError::shape(context, "rank-5 (N, C, H, W, D)", format!("{:?}", x.shape())));
    }
    let s = x.shape();
    Ok([s[0], s[1], s[2], s[3], s[4]])
}
