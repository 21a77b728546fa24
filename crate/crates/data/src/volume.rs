//! Dense volumetric grids for images and integer label maps.

use crate::{DataError, Result};

/// A scalar image volume over `(H, W, D)` with `D` contiguous.
///
/// `spacing` records the physical voxel size along each axis in the same
/// `(H, W, D)` order; it is carried through I/O but does not affect any
/// array math.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub extents: [usize; 3],
    pub spacing: [f32; 3],
    pub data: Vec<f32>,
}

/// An integer class-label volume aligned with an image [`Volume`].
///
/// Every value must lie in `0..num_classes`, with `0` conventionally the
/// background class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    pub extents: [usize; 3],
    pub spacing: [f32; 3],
    pub num_classes: usize,
    pub data: Vec<i32>,
}

impl Volume {
    /// Builds a volume after checking the element count and that every
    /// sample is finite.
    pub fn new(extents: [usize; 3], spacing: [f32; 3], data: Vec<f32>) -> Result<Self> {
        let numel = extents.iter().product::<usize>();
        if data.len() != numel {
            return Err(DataError::Volume(format!(
                "data length {} does not match extents {:?} ({} voxels)",
                data.len(),
                extents,
                numel
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(DataError::Volume(format!(
                "non-finite sample {} at linear index {}",
                data[pos], pos
            )));
        }
        Ok(Self { extents, spacing, data })
    }

    /// Number of voxels.
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Linear index of voxel `(h, w, d)`.
    #[inline]
    pub fn index(&self, h: usize, w: usize, d: usize) -> usize {
        (h * self.extents[1] + w) * self.extents[2] + d
    }

    /// Value at voxel `(h, w, d)`.
    #[inline]
    pub fn at(&self, h: usize, w: usize, d: usize) -> f32 {
        self.data[self.index(h, w, d)]
    }
}

impl LabelVolume {
    /// Builds a label volume after checking the element count and that every
    /// label lies in `0..num_classes`.
    pub fn new(
        extents: [usize; 3],
        spacing: [f32; 3],
        num_classes: usize,
        data: Vec<i32>,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(DataError::Volume(format!(
                "num_classes must be at least 2, got {num_classes}"
            )));
        }
        let numel = extents.iter().product::<usize>();
        if data.len() != numel {
            return Err(DataError::Volume(format!(
                "data length {} does not match extents {:?} ({} voxels)",
                data.len(),
                extents,
                numel
            )));
        }
        if let Some(pos) = data
            .iter()
            .position(|&v| v < 0 || v as usize >= num_classes)
        {
            return Err(DataError::Volume(format!(
                "label {} at linear index {} outside 0..{}",
                data[pos], pos, num_classes
            )));
        }
        Ok(Self { extents, spacing, num_classes, data })
    }

    /// Number of voxels.
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Linear index of voxel `(h, w, d)`.
    #[inline]
    pub fn index(&self, h: usize, w: usize, d: usize) -> usize {
        (h * self.extents[1] + w) * self.extents[2] + d
    }

    /// Label at voxel `(h, w, d)`.
    #[inline]
    pub fn at(&self, h: usize, w: usize, d: usize) -> i32 {
        self.data[self.index(h, w, d)]
    }

    /// Voxel count per class, length `num_classes`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for &v in &self.data {
            counts[v as usize] += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volume_rejects_wrong_length_and_non_finite() {
        assert!(Volume::new([2, 2, 2], [1.0; 3], vec![0.0; 7]).is_err());
        let mut data = vec![0.0f32; 8];
        data[3] = f32::NAN;
        assert!(Volume::new([2, 2, 2], [1.0; 3], data).is_err());
    }

    #[test]
    fn label_rejects_out_of_range_values() {
        assert!(LabelVolume::new([2, 2, 2], [1.0; 3], 3, vec![0, 1, 2, 0, 1, 2, 0, 3]).is_err());
        assert!(LabelVolume::new([2, 2, 2], [1.0; 3], 3, vec![0, 1, 2, 0, -1, 2, 0, 1]).is_err());
        assert!(LabelVolume::new([2, 2, 2], [1.0; 3], 3, vec![0, 1, 2, 0, 1, 2, 0, 1]).is_ok());
    }

    #[test]
    fn indexing_is_row_major_with_depth_contiguous() {
        let data: Vec<f32> = (0..24).map(|i| i as f32).collect();
        let vol = Volume::new([2, 3, 4], [1.0; 3], data).unwrap();
        assert_eq!(vol.at(0, 0, 0), 0.0);
        assert_eq!(vol.at(0, 0, 3), 3.0);
        assert_eq!(vol.at(0, 1, 0), 4.0);
        assert_eq!(vol.at(1, 0, 0), 12.0);
        assert_eq!(vol.at(1, 2, 3), 23.0);
    }

    #[test]
    fn class_counts_cover_all_classes() {
        let lab = LabelVolume::new([1, 2, 3], [1.0; 3], 3, vec![0, 0, 1, 1, 2, 0]).unwrap();
        assert_eq!(lab.class_counts(), vec![3, 2, 1]);
    }
}
