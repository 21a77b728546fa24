//! Runtime-dispatched f32 kernels for the two inner loops every convolution
//! reduces to: `y += a*x` over a contiguous row, and a row dot product.
//!
//! Dispatch is decided once per process from CPU features, so a given
//! machine/build always takes the same code path — results stay bitwise
//! reproducible across runs. The dot kernel reduces its lanes in a fixed
//! order for the same reason.

#[cfg(target_arch = "x86_64")]
use std::sync::OnceLock;

#[cfg(target_arch = "x86_64")]
fn fma_available() -> bool {
    static FMA: OnceLock<bool> = OnceLock::new();
    *FMA.get_or_init(|| is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma"))
}

/// `y[i] += alpha * x[i]`. Slices must be the same length.
#[inline]
pub fn axpy_f32(alpha: f32, x: &[f32], y: &mut [f32]) {
    assert_eq!(x.len(), y.len());
    #[cfg(target_arch = "x86_64")]
    {
        if fma_available() {
            // SAFETY: fma_available checked avx2+fma on this CPU.
            unsafe { axpy_f32_fma(alpha, x, y) };
            return;
        }
    }
    axpy_f32_scalar(alpha, x, y);
}

/// Dot product with a fixed lane-combination order.
#[inline]
pub fn dot_f32(x: &[f32], y: &[f32]) -> f32 {
    assert_eq!(x.len(), y.len());
    #[cfg(target_arch = "x86_64")]
    {
        if fma_available() {
            // SAFETY: fma_available checked avx2+fma on this CPU.
            return unsafe { dot_f32_fma(x, y) };
        }
    }
    dot_f32_scalar(x, y)
}

fn axpy_f32_scalar(alpha: f32, x: &[f32], y: &mut [f32]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn dot_f32_scalar(x: &[f32], y: &[f32]) -> f32 {
    let mut acc = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        acc += xi * yi;
    }
    acc
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn axpy_f32_fma(alpha: f32, x: &[f32], y: &mut [f32]) {
    use std::arch::x86_64::*;
    let n = x.len();
    let a = _mm256_set1_ps(alpha);
    let mut i = 0;
    while i + 8 <= n {
        let xv = _mm256_loadu_ps(x.as_ptr().add(i));
        let yv = _mm256_loadu_ps(y.as_ptr().add(i));
        _mm256_storeu_ps(y.as_mut_ptr().add(i), _mm256_fmadd_ps(a, xv, yv));
        i += 8;
    }
    while i < n {
        *y.get_unchecked_mut(i) += alpha * x.get_unchecked(i);
        i += 1;
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn dot_f32_fma(x: &[f32], y: &[f32]) -> f32 {
    use std::arch::x86_64::*;
    let n = x.len();
    let mut acc = _mm256_setzero_ps();
    let mut i = 0;
    while i + 8 <= n {
        let xv = _mm256_loadu_ps(x.as_ptr().add(i));
        let yv = _mm256_loadu_ps(y.as_ptr().add(i));
        acc = _mm256_fmadd_ps(xv, yv, acc);
        i += 8;
    }
    // Fixed-order lane reduction: lane 0 + lane 1 + ... + lane 7.
    let mut lanes = [0.0f32; 8];
    _mm256_storeu_ps(lanes.as_mut_ptr(), acc);
    let mut total = lanes.iter().sum::<f32>();
    while i < n {
        total += x.get_unchecked(i) * y.get_unchecked(i);
        i += 1;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_scalar_within_rounding() {
        let x: Vec<f32> = (0..203).map(|i| ((i * 37 % 101) as f32 - 50.0) * 0.01).collect();
        let mut y: Vec<f32> = (0..203).map(|i| ((i * 53 % 97) as f32 - 48.0) * 0.02).collect();
        let mut y_ref = y.clone();
        axpy_f32(1.25, &x, &mut y);
        axpy_f32_scalar(1.25, &x, &mut y_ref);
        for (a, b) in y.iter().zip(&y_ref) {
            assert!((a - b).abs() < 1e-6);
        }
        let d = dot_f32(&x, &y);
        let d_ref = dot_f32_scalar(&x, &y_ref);
        assert!((d - d_ref).abs() < 1e-3 * d_ref.abs().max(1.0));
    }

    #[test]
    fn repeated_calls_are_bitwise_identical() {
        let x: Vec<f32> = (0..515).map(|i| (i as f32 * 0.113).sin()).collect();
        let y: Vec<f32> = (0..515).map(|i| (i as f32 * 0.071).cos()).collect();
        let d1 = dot_f32(&x, &y);
        let d2 = dot_f32(&x, &y);
        assert_eq!(d1.to_bits(), d2.to_bits());
        let mut y1 = y.clone();
        let mut y2 = y.clone();
        axpy_f32(0.37, &x, &mut y1);
        axpy_f32(0.37, &x, &mut y2);
        assert_eq!(
            y1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            y2.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
