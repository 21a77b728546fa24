//! Reductions over a set of axes, with sum/mean flavors.
//!
//! Reducing every axis (or passing an empty surviving shape) yields the
//! engine's scalar convention: shape `[1]`. Accumulation is a single serial
//! pass in index order, so results never depend on thread count.

use super::{finish, unify_tape};
use crate::element::Element;
use crate::error::CoreError;
use crate::tensor::Tensor;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
}

/// Reduces `x` over `axes`. With `keepdims` the reduced axes stay as extent
/// 1; otherwise they are dropped (an all-axes reduce yields shape `[1]`).
pub fn reduce<T: Element>(
    x: &Tensor<T>,
    axes: &[usize],
    keepdims: bool,
    reduction: Reduction,
) -> Result<Tensor<T>> {
    let rank = x.rank();
    let mut reduced = vec![false; rank];
    for &a in axes {
        if a >= rank {
            return Err(CoreError::invalid(
                "reduce",
                format!("axis {a} out of range for rank {rank}"),
            ));
        }
        if reduced[a] {
            return Err(CoreError::invalid("reduce", format!("axis {a} listed twice")));
        }
        reduced[a] = true;
    }

    let in_shape = x.shape().to_vec();
    let count: usize = (0..rank).filter(|&a| reduced[a]).map(|a| in_shape[a]).product();
    let scale = match reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean => 1.0 / (count.max(1) as f64),
    };

    // Output shape and row-major strides into the output for each input axis
    // (stride 0 on reduced axes — the broadcast trick used both directions).
    let kept_shape: Vec<usize> = (0..rank)
        .filter_map(|a| if reduced[a] { keepdims.then_some(1) } else { Some(in_shape[a]) })
        .collect();
    let out_shape = if kept_shape.is_empty() { vec![1] } else { kept_shape };

    let mut out_stride = vec![0usize; rank];
    {
        let mut s = 1usize;
        for a in (0..rank).rev() {
            if !reduced[a] {
                out_stride[a] = s;
                s *= in_shape[a];
            }
        }
    }

    let out_numel: usize = (0..rank).filter(|&a| !reduced[a]).map(|a| in_shape[a]).product::<usize>().max(1);
    let mut data = vec![T::ZERO; out_numel];
    let sv = T::from_f64(scale);
    for_each_mapped(&in_shape, &out_stride, |i, o| data[o] += x.data()[i]);
    if scale != 1.0 {
        for v in &mut data {
            *v *= sv;
        }
    }
    let out = Tensor::from_vec(out_shape, data)?;

    let tape = unify_tape(&[x])?;
    Ok(finish(tape, out, || {
        let xn = x.node().expect("tracked input");
        let in_shape = in_shape.clone();
        let out_stride = out_stride.clone();
        let numel = x.numel();
        Box::new(move |gy| {
            let mut gx = vec![T::ZERO; numel];
            for_each_mapped(&in_shape, &out_stride, |i, o| gx[i] = gy[o] * sv);
            vec![(xn, gx)]
        })
    }))
}

/// Walks the input linearly, passing `(input_index, output_index)` pairs.
fn for_each_mapped(in_shape: &[usize], out_stride: &[usize], mut f: impl FnMut(usize, usize)) {
    let rank = in_shape.len();
    let numel: usize = in_shape.iter().product();
    let mut idx = vec![0usize; rank];
    let mut o = 0usize;
    for i in 0..numel {
        f(i, o);
        // Odometer increment, updating the output offset incrementally.
        for a in (0..rank).rev() {
            idx[a] += 1;
            o += out_stride[a];
            if idx[a] < in_shape[a] {
                break;
            }
            o -= out_stride[a] * in_shape[a];
            idx[a] = 0;
        }
    }
}

/// Sum of every element, as a `[1]`-shaped scalar.
pub fn sum_all<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let total: T = x.data().iter().copied().sum();
    let out = Tensor::scalar(total);
    let tape = unify_tape(&[x])?;
    Ok(finish(tape, out, || {
        let xn = x.node().expect("tracked input");
        let numel = x.numel();
        Box::new(move |gy| vec![(xn, vec![gy[0]; numel])])
    }))
}

/// Mean of every element, as a `[1]`-shaped scalar.
pub fn mean_all<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let n = x.numel().max(1);
    let total: T = x.data().iter().copied().sum();
    let inv = T::from_f64(1.0 / n as f64);
    let out = Tensor::scalar(total * inv);
    let tape = unify_tape(&[x])?;
    Ok(finish(tape, out, || {
        let xn = x.node().expect("tracked input");
        Box::new(move |gy| vec![(xn, vec![gy[0] * inv; n])])
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::{backward, Tape};

    #[test]
    fn sum_over_middle_axis() {
        // (2, 3, 2) summed over axis 1.
        let x = Tensor::<f64>::from_vec(vec![2, 3, 2], (1..=12).map(f64::from).collect()).unwrap();
        let r = reduce(&x, &[1], false, Reduction::Sum).unwrap();
        assert_eq!(r.shape(), &[2, 2]);
        // slices [1,2],[3,4],[5,6] -> [9,12]; [7,8],[9,10],[11,12] -> [27,30]
        assert_eq!(r.data(), &[9.0, 12.0, 27.0, 30.0]);
    }

    #[test]
    fn keepdims_and_mean() {
        let x = Tensor::<f64>::from_vec(vec![2, 4], (0..8).map(f64::from).collect()).unwrap();
        let r = reduce(&x, &[1], true, Reduction::Mean).unwrap();
        assert_eq!(r.shape(), &[2, 1]);
        assert_eq!(r.data(), &[1.5, 5.5]);
    }

    #[test]
    fn reduce_all_axes_yields_scalar_shape() {
        let x = Tensor::<f64>::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = reduce(&x, &[0, 1], false, Reduction::Sum).unwrap();
        assert_eq!(r.shape(), &[1]);
        assert_eq!(r.item(), 10.0);
        assert_eq!(sum_all(&x).unwrap().item(), 10.0);
        assert_eq!(mean_all(&x).unwrap().item(), 2.5);
    }

    #[test]
    fn invalid_axes_rejected() {
        let x = Tensor::<f64>::zeros(vec![2, 2]);
        assert!(reduce(&x, &[2], false, Reduction::Sum).is_err());
        assert!(reduce(&x, &[1, 1], false, Reduction::Sum).is_err());
    }

    #[test]
    fn gradients_broadcast_back() {
        let tape = Tape::new();
        let x = tape.leaf(&Tensor::<f64>::from_vec(vec![2, 3], (1..=6).map(f64::from).collect()).unwrap());
        // loss = sum over axis 0 -> (3,), then weighted sum to scalar.
        let r = reduce(&x, &[0], false, Reduction::Mean).unwrap();
        let w = Tensor::from_vec(vec![3], vec![1.0, 10.0, 100.0]).unwrap();
        let loss = sum_all(&crate::ops::mul(&r, &w).unwrap()).unwrap();
        let grads = backward(&tape, &loss).unwrap();
        // d r_j / d x_ij = 1/2; grad = w_j / 2 at every (i, j).
        assert_eq!(grads.of(&x).unwrap(), &[0.5, 5.0, 50.0, 0.5, 5.0, 50.0]);
    }
}
