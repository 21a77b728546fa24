//! Finite-difference verification harness for every differentiable op.
//!
//! Each case builds a scalar loss `sum(op(inputs) ⊙ W)` with fixed random
//! weights `W`, computes analytic gradients via the tape, and compares them
//! against [`crate::finite_diff::finite_diff_grad`] in f64. A deliberately
//! mis-scaled backward serves as the negative control proving the harness
//! can fail.

use crate::finite_diff::finite_diff_grad;
use crate::ops;
use crate::rng::Rng;
use crate::tape::{backward, Tape};
use crate::tensor::Tensor;

/// Default central-difference step. Small enough that truncation error
/// (`~|f'''| h^2 / 6`) stays under the tolerances even for normalization
/// ops, whose higher derivatives blow up as channel variance shrinks;
/// still large enough that f64 roundoff (`~eps |f| / h`) is negligible.
pub const FD_STEP: f64 = 1e-5;
/// Relative tolerance on each gradient component.
pub const REL_TOL: f64 = 1e-4;
/// Absolute tolerance when both gradients are near zero.
pub const ABS_TOL: f64 = 1e-7;

/// Outcome of one gradcheck case.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub op: String,
    /// Largest absolute difference over all gradient components.
    pub max_abs_err: f64,
    /// Largest relative difference among components that fail the absolute
    /// tolerance (0 when everything is absolutely close).
    pub max_rel_err: f64,
    pub components: usize,
    pub passed: bool,
}

impl GradCheckReport {
    fn from_comparison(op: &str, analytic: &[f64], numeric: &[f64]) -> Self {
        assert_eq!(analytic.len(), numeric.len());
        let mut max_abs = 0.0f64;
        let mut max_rel = 0.0f64;
        let mut passed = true;
        for (&a, &n) in analytic.iter().zip(numeric) {
            let abs = (a - n).abs();
            max_abs = max_abs.max(abs);
            if abs <= ABS_TOL {
                continue;
            }
            let rel = abs / a.abs().max(n.abs());
            max_rel = max_rel.max(rel);
            if rel > REL_TOL {
                passed = false;
            }
        }
        GradCheckReport {
            op: op.to_string(),
            max_abs_err: max_abs,
            max_rel_err: max_rel,
            components: analytic.len(),
            passed,
        }
    }
}

fn split_point(point: &[f64], shapes: &[Vec<usize>]) -> Vec<Tensor<f64>> {
    let mut out = Vec::with_capacity(shapes.len());
    let mut off = 0;
    for s in shapes {
        let n: usize = s.iter().product();
        out.push(Tensor::from_vec(s.clone(), point[off..off + n].to_vec()).unwrap());
        off += n;
    }
    debug_assert_eq!(off, point.len());
    out
}

/// Checks `f`'s gradients w.r.t. every input against central differences.
/// `f` must be a pure function of its inputs built from tape-recording ops.
pub fn check_op<F>(name: &str, seed: u64, input_shapes: &[Vec<usize>], f: F) -> GradCheckReport
where
    F: Fn(&[Tensor<f64>]) -> Tensor<f64>,
{
    let mut rng = Rng::for_path(seed, &[0x6772, name.len() as u64]);
    let inputs: Vec<Tensor<f64>> = input_shapes
        .iter()
        .map(|s| Tensor::randn(s.clone(), 1.0, &mut rng))
        .collect();

    // Probe output shape, then fix the weighting tensor.
    let probe = f(&inputs);
    let weights = Tensor::randn(probe.shape().to_vec(), 1.0, &mut rng);

    // Analytic pass.
    let tape = Tape::new();
    let tracked: Vec<Tensor<f64>> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let out = f(&tracked);
    let loss = ops::sum_all(&ops::mul(&out, &weights).expect("weighting")).expect("loss");
    let grads = backward(&tape, &loss).expect("backward");
    let mut analytic = Vec::new();
    for t in &tracked {
        match grads.of(t) {
            Some(g) => analytic.extend_from_slice(g),
            None => analytic.extend(std::iter::repeat(0.0).take(t.numel())),
        }
    }

    // Numeric pass over the flattened inputs.
    let point: Vec<f64> = inputs.iter().flat_map(|t| t.data().to_vec()).collect();
    let shapes = input_shapes.to_vec();
    let wbuf = weights.clone();
    let numeric = finite_diff_grad(
        move |p| {
            let xs = split_point(p, &shapes);
            let y = f(&xs);
            y.data().iter().zip(wbuf.data()).map(|(a, b)| a * b).sum()
        },
        &point,
        FD_STEP,
    );

    GradCheckReport::from_comparison(name, &analytic, &numeric)
}

/// The op-level suite: every differentiable kernel in this crate, each in
/// the configurations the network uses.
pub fn run_op_suite(seed: u64) -> Vec<GradCheckReport> {
    use ops::Conv3dSpec;
    let mut reports = Vec::new();
    let shape5 = vec![2usize, 3, 2, 2, 3];

    reports.push(check_op("add", seed, &[shape5.clone(), shape5.clone()], |x| {
        ops::add(&x[0], &x[1]).unwrap()
    }));
    reports.push(check_op("sub", seed, &[shape5.clone(), shape5.clone()], |x| {
        ops::sub(&x[0], &x[1]).unwrap()
    }));
    reports.push(check_op("mul", seed, &[shape5.clone(), shape5.clone()], |x| {
        ops::mul(&x[0], &x[1]).unwrap()
    }));
    reports.push(check_op("div", seed, &[shape5.clone(), shape5.clone()], |x| {
        // Keep the denominator >= 0.5 while still differentiating through it.
        let den = ops::add_scalar(&ops::mul(&x[1], &x[1]).unwrap(), 0.5).unwrap();
        ops::div(&x[0], &den).unwrap()
    }));
    reports.push(check_op("add_scalar", seed, &[shape5.clone()], |x| {
        ops::add_scalar(&x[0], 0.7).unwrap()
    }));
    reports.push(check_op("mul_scalar", seed, &[shape5.clone()], |x| {
        ops::mul_scalar(&x[0], -1.3).unwrap()
    }));
    reports.push(check_op("reduce_sum_axes", seed, &[shape5.clone()], |x| {
        ops::reduce(&x[0], &[0, 2], false, ops::Reduction::Sum).unwrap()
    }));
    reports.push(check_op("reduce_mean_keepdims", seed, &[shape5.clone()], |x| {
        ops::reduce(&x[0], &[1, 4], true, ops::Reduction::Mean).unwrap()
    }));
    reports.push(check_op("sum_all", seed, &[shape5.clone()], |x| {
        ops::sum_all(&x[0]).unwrap()
    }));
    reports.push(check_op("mean_all", seed, &[shape5.clone()], |x| {
        ops::mean_all(&x[0]).unwrap()
    }));
    reports.push(check_op(
        "concat_channels",
        seed,
        &[vec![2, 2, 2, 2, 2], vec![2, 3, 2, 2, 2], vec![2, 1, 2, 2, 2]],
        |x| ops::concat_channels(&[&x[0], &x[1], &x[2]]).unwrap(),
    ));
    reports.push(check_op("slice_channels", seed, &[vec![1, 5, 2, 2, 2]], |x| {
        ops::slice_channels(&x[0], 1, 4).unwrap()
    }));
    reports.push(check_op("softmax_channels", seed, &[vec![2, 4, 2, 2, 2]], |x| {
        ops::softmax_channels(&x[0]).unwrap()
    }));
    reports.push(check_op("gelu", seed, &[shape5.clone()], |x| ops::gelu(&x[0]).unwrap()));
    reports.push(check_op("leaky_relu", seed, &[shape5.clone()], |x| {
        ops::leaky_relu(&x[0], 0.01).unwrap()
    }));
    reports.push(check_op(
        "layer_norm_channel",
        seed,
        &[vec![2, 5, 2, 2, 2], vec![5], vec![5]],
        |x| ops::layer_norm_channel(&x[0], &x[1], &x[2], 1e-6).unwrap(),
    ));
    reports.push(check_op(
        "instance_norm",
        seed,
        &[vec![2, 3, 3, 2, 2], vec![3], vec![3]],
        |x| ops::instance_norm(&x[0], &x[1], &x[2], 1e-5).unwrap(),
    ));
    reports.push(check_op(
        "conv3d_k3",
        seed,
        &[vec![2, 3, 4, 4, 4], vec![4, 3, 3, 3, 3], vec![4]],
        |x| ops::conv3d(&x[0], &x[1], Some(&x[2]), Conv3dSpec::cubic(3, 4, 3)).unwrap(),
    ));
    reports.push(check_op(
        "conv3d_stride2",
        seed,
        &[vec![1, 2, 5, 5, 5], vec![3, 2, 3, 3, 3], vec![3]],
        |x| ops::conv3d(&x[0], &x[1], Some(&x[2]), Conv3dSpec::isotropic(2, 3, 3, 2, 1)).unwrap(),
    ));
    reports.push(check_op(
        "conv3d_grouped",
        seed,
        &[vec![1, 4, 3, 3, 3], vec![6, 2, 3, 3, 3]],
        |x| ops::conv3d(&x[0], &x[1], None, Conv3dSpec::cubic(4, 6, 3).with_groups(2)).unwrap(),
    ));
    reports.push(check_op(
        "conv3d_depthwise_k7",
        seed,
        &[vec![1, 3, 4, 4, 4], vec![3, 1, 7, 7, 7], vec![3]],
        |x| ops::conv3d(&x[0], &x[1], Some(&x[2]), Conv3dSpec::depthwise(3, 7)).unwrap(),
    ));
    reports.push(check_op(
        "conv3d_multiplier",
        seed,
        &[vec![1, 3, 2, 2, 2], vec![12, 1, 1, 1, 1], vec![12]],
        |x| ops::conv3d_depthwise_multiplier(&x[0], &x[1], Some(&x[2]), 4).unwrap(),
    ));
    reports.push(check_op(
        "conv_transpose3d_k2s2",
        seed,
        &[vec![1, 3, 3, 3, 3], vec![3, 2, 2, 2, 2], vec![2]],
        |x| {
            ops::conv_transpose3d(&x[0], &x[1], Some(&x[2]), Conv3dSpec::isotropic(3, 2, 2, 2, 0))
                .unwrap()
        },
    ));
    reports.push(check_op(
        "conv_transpose3d_k3s2p1",
        seed,
        &[vec![1, 2, 3, 3, 3], vec![2, 2, 3, 3, 3]],
        |x| {
            ops::conv_transpose3d(&x[0], &x[1], None, Conv3dSpec::isotropic(2, 2, 3, 2, 1))
                .unwrap()
        },
    ));
    reports.push(check_op("nearest_upsample3d", seed, &[vec![1, 2, 2, 2, 2]], |x| {
        ops::nearest_upsample3d(&x[0], 2).unwrap()
    }));
    reports.push(check_op("cross_entropy_channels", seed, &[vec![1, 3, 2, 2, 2]], |x| {
        // Fixed one-hot target: class = (h + w + d) mod 3.
        let mut y = vec![0.0f64; 1 * 3 * 8];
        for h in 0..2 {
            for w in 0..2 {
                for d in 0..2 {
                    let c = (h + w + d) % 3;
                    y[c * 8 + (h * 2 + w) * 2 + d] = 1.0;
                }
            }
        }
        let target = Tensor::from_vec(vec![1, 3, 2, 2, 2], y).unwrap();
        ops::cross_entropy_channels(&x[0], &target).unwrap()
    }));
    reports.push(check_op(
        "composite_norm_conv_gelu_residual",
        seed,
        &[vec![1, 4, 4, 4, 4], vec![4], vec![4], vec![4, 1, 3, 3, 3]],
        |x| {
            // LN -> depthwise conv -> GELU -> residual add: the spine of an
            // encoder block, exercising closure composition end to end.
            let normed = ops::layer_norm_channel(&x[0], &x[1], &x[2], 1e-6).unwrap();
            let conv = ops::conv3d(&normed, &x[3], None, Conv3dSpec::depthwise(4, 3)).unwrap();
            let act = ops::gelu(&conv).unwrap();
            ops::add(&act, &x[0]).unwrap()
        },
    ));
    reports
}

/// Negative control: an op whose recorded backward is deliberately scaled by
/// 1.02. A healthy harness must report this as a failure.
pub fn negative_control(seed: u64) -> GradCheckReport {
    check_op("negative_control_mis_scaled", seed, &[vec![2, 2, 2, 2, 2]], |x| {
        buggy_double(&x[0])
    })
}

/// Forward `y = 2x`, backward deliberately `2.02 · gy`.
fn buggy_double(x: &Tensor<f64>) -> Tensor<f64> {
    let data: Vec<f64> = x.data().iter().map(|&v| 2.0 * v).collect();
    let out = Tensor::from_vec(x.shape().to_vec(), data).unwrap();
    let tape = crate::ops::unify_tape(&[x]).unwrap();
    crate::ops::finish(tape, out, || {
        let xn = x.node().expect("tracked");
        Box::new(move |gy: &[f64]| vec![(xn, gy.iter().map(|&g| 2.02 * g).collect())])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_control_fails_as_designed() {
        let r = negative_control(1234);
        assert!(!r.passed, "mis-scaled backward must be caught");
        assert!(r.max_rel_err > 1e-3);
    }

    #[test]
    fn spot_check_two_cheap_cases() {
        // The full suite runs as an integration test; keep unit scope small.
        let r = check_op("mul_spot", 7, &[vec![2, 2], vec![2, 2]], |x| {
            crate::ops::mul(&x[0], &x[1]).unwrap()
        });
        assert!(r.passed, "mul: rel {} abs {}", r.max_rel_err, r.max_abs_err);
        let r = check_op("gelu_spot", 7, &[vec![9]], |x| crate::ops::gelu(&x[0]).unwrap());
        assert!(r.passed, "gelu: rel {} abs {}", r.max_rel_err, r.max_abs_err);
    }
}
