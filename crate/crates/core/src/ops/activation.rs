//! Pointwise activations: exact-erf GELU and leaky ReLU.

use super::{finish, unify_tape};
use crate::element::Element;
use crate::tensor::Tensor;
use crate::Result;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_TAU: f64 = 0.398_942_280_401_432_7; // 1/sqrt(2π)

/// Gaussian error linear unit, `x · Φ(x)`, with Φ evaluated via `erf`
/// (the exact form, not the tanh approximation).
pub fn gelu<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let data: Vec<T> = x
        .data()
        .iter()
        .map(|&v| {
            let z = v.to_f64();
            T::from_f64(0.5 * z * (1.0 + libm::erf(z * FRAC_1_SQRT_2)))
        })
        .collect();
    let out = Tensor::from_vec(x.shape().to_vec(), data)?;
    let tape = unify_tape(&[x])?;
    Ok(finish(tape, out, || {
        let xn = x.node().expect("tracked input");
        let xd = x.buffer();
        Box::new(move |gy| {
            // d/dx [x Φ(x)] = Φ(x) + x φ(x).
            let gx: Vec<T> = gy
                .iter()
                .zip(xd.iter())
                .map(|(&g, &v)| {
                    let z = v.to_f64();
                    let phi = 0.5 * (1.0 + libm::erf(z * FRAC_1_SQRT_2));
                    let pdf = INV_SQRT_TAU * (-0.5 * z * z).exp();
                    g * T::from_f64(phi + z * pdf)
                })
                .collect();
            vec![(xn, gx)]
        })
    }))
}

/// Leaky ReLU: identity for positive inputs, `slope · x` otherwise.
pub fn leaky_relu<T: Element>(x: &Tensor<T>, slope: f64) -> Result<Tensor<T>> {
    let s = T::from_f64(slope);
    let data: Vec<T> = x.data().iter().map(|&v| if v > T::ZERO { v } else { v * s }).collect();
    let out = Tensor::from_vec(x.shape().to_vec(), data)?;
    let tape = unify_tape(&[x])?;
    Ok(finish(tape, out, || {
        let xn = x.node().expect("tracked input");
        let xd = x.buffer();
        Box::new(move |gy| {
            let gx: Vec<T> = gy
                .iter()
                .zip(xd.iter())
                .map(|(&g, &v)| if v > T::ZERO { g } else { g * s })
                .collect();
            vec![(xn, gx)]
        })
    }))
}
