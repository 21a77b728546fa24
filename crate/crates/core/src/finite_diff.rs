//! Central-difference gradient oracle.
//!
//! Independent of the tape: evaluates `f` at `x ± h·e_i` and never touches
//! an analytic derivative, so it can referee the backward implementations.

/// Central-difference gradient of a scalar function at `point`:
/// `g_i ≈ (f(x + h·e_i) - f(x - h·e_i)) / (2h)`.
pub fn finite_diff_grad<F>(mut f: F, point: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(h > 0.0, "step must be positive");
    let mut x = point.to_vec();
    let mut grad = vec![0.0; point.len()];
    for i in 0..point.len() {
        let orig = x[i];
        x[i] = orig + h;
        let fp = f(&x);
        x[i] = orig - h;
        let fm = f(&x);
        x[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_exact_for_central_differences() {
        // f(x) = Σ a_i x_i², exact under central differences (O(h²) term is
        // zero for quadratics).
        let a = [1.0, -2.0, 0.5];
        let x = [3.0, 1.0, -4.0];
        let g = finite_diff_grad(
            |v| v.iter().zip(a).map(|(&vi, ai)| ai * vi * vi).sum(),
            &x,
            1e-3,
        );
        for i in 0..3 {
            assert!((g[i] - 2.0 * a[i] * x[i]).abs() < 1e-9, "component {i}");
        }
    }

    #[test]
    fn transcendental_gradient_matches_to_h_squared() {
        let x = [0.3, -1.2];
        let g = finite_diff_grad(|v| v[0].sin() * v[1].exp(), &x, 1e-4);
        let expect = [x[0].cos() * x[1].exp(), x[0].sin() * x[1].exp()];
        for i in 0..2 {
            assert!((g[i] - expect[i]).abs() < 1e-8);
        }
    }
}
