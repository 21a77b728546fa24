//! Intensity preprocessing: clipping and percentile normalization.

use crate::{DataError, Result, Volume};

/// Clamps every sample into `[lo, hi]`.
pub fn clip_intensity(vol: &Volume, lo: f32, hi: f32) -> Result<Volume> {
    if !(lo < hi) {
        return Err(DataError::Preprocess(format!(
            "clip bounds must satisfy lo < hi, got {lo} and {hi}"
        )));
    }
    let data = vol.data.iter().map(|&v| v.clamp(lo, hi)).collect();
    Volume::new(vol.extents, vol.spacing, data)
}

/// The `q`-th percentile of `values` with linear interpolation between
/// order statistics: rank `q/100 * (n - 1)`, fractional ranks blended
/// between the two neighbouring sorted samples.
pub fn percentile(values: &[f32], q: f64) -> Result<f32> {
    if values.is_empty() {
        return Err(DataError::Preprocess("percentile of empty slice".to_string()));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(DataError::Preprocess(format!(
            "percentile rank {q} outside 0..=100"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    let value = if frac == 0.0 {
        f64::from(sorted[lo])
    } else {
        f64::from(sorted[lo]) * (1.0 - frac) + f64::from(sorted[lo + 1]) * frac
    };
    Ok(value as f32)
}

/// Rescales intensities to `[0, 1]` by the 1st and 99th percentiles:
/// `(x - p1) / (p99 - p1)`, clamped. A volume whose percentile window is
/// degenerate (near-constant intensities) is rejected.
pub fn percentile_normalize(vol: &Volume) -> Result<Volume> {
    let p1 = percentile(&vol.data, 1.0)?;
    let p99 = percentile(&vol.data, 99.0)?;
    let range = p99 - p1;
    if !(range > f32::EPSILON) {
        return Err(DataError::Preprocess(format!(
            "percentile window [{p1}, {p99}] is degenerate; volume is near-constant"
        )));
    }
    let data = vol
        .data
        .iter()
        .map(|&v| ((v - p1) / range).clamp(0.0, 1.0))
        .collect();
    Volume::new(vol.extents, vol.spacing, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_matches_linear_interpolation() {
        let values = [10.0f32, 0.0, 20.0, 30.0, 40.0];
        // Sorted: 0 10 20 30 40; rank(25) = 0.25 * 4 = 1.0 exactly.
        assert_eq!(percentile(&values, 25.0).unwrap(), 10.0);
        // rank(10) = 0.4 -> 0 * 0.6 + 10 * 0.4 = 4.
        assert!((percentile(&values, 10.0).unwrap() - 4.0).abs() < 1e-6);
        assert_eq!(percentile(&values, 0.0).unwrap(), 0.0);
        assert_eq!(percentile(&values, 100.0).unwrap(), 40.0);
        assert_eq!(percentile(&[7.5], 50.0).unwrap(), 7.5);
    }

    #[test]
    fn normalize_maps_percentile_window_to_unit_interval() {
        // A ramp over 0..=1000 has p1 = 10 and p99 = 990 exactly.
        let data: Vec<f32> = (0..=1000).map(|i| i as f32).collect();
        let vol = Volume::new([1, 7, 143], [1.0; 3], data).unwrap();
        let norm = percentile_normalize(&vol).unwrap();
        assert_eq!(norm.data[0], 0.0);
        assert_eq!(norm.data[1000], 1.0);
        assert_eq!(norm.data[10], 0.0);
        assert_eq!(norm.data[990], 1.0);
        let mid = norm.data[500];
        assert!((mid - (500.0 - 10.0) / 980.0).abs() < 1e-6, "mid was {mid}");
        assert!(norm.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn constant_volume_is_rejected() {
        let vol = Volume::new([2, 2, 2], [1.0; 3], vec![3.5; 8]).unwrap();
        assert!(percentile_normalize(&vol).is_err());
    }

    #[test]
    fn clip_clamps_and_validates_bounds() {
        let vol = Volume::new([1, 1, 4], [1.0; 3], vec![-5.0, 0.0, 2.0, 9.0]).unwrap();
        let clipped = clip_intensity(&vol, -1.0, 3.0).unwrap();
        assert_eq!(clipped.data, vec![-1.0, 0.0, 2.0, 3.0]);
        assert!(clip_intensity(&vol, 3.0, -1.0).is_err());
    }
}
