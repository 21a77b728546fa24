//! Patch sampling for training: foreground-biased random crops.

use uxnet_core::Rng;

use crate::{DataError, LabelVolume, Result, Volume};

/// A cubic training patch cut from an aligned image/label pair.
///
/// Both buffers are `(patch, patch, patch)` with `D` contiguous, ready to be
/// copied into `[1, 1, p, p, p]` tensors.
#[derive(Debug, Clone)]
pub struct Patch {
    pub extent: usize,
    pub image: Vec<f32>,
    pub label: Vec<i32>,
}

/// Linear indices of every non-background voxel, in scan order.
pub fn foreground_voxels(label: &LabelVolume) -> Vec<usize> {
    label
        .data
        .iter()
        .enumerate()
        .filter_map(|(i, &v)| (v > 0).then_some(i))
        .collect()
}

/// Cuts one `patch`-cubed crop from an image/label pair.
///
/// With probability 2/3 the crop is centred on a uniformly chosen
/// foreground voxel (when any exists); otherwise the centre is uniform over
/// the volume. The window is shifted to stay inside the volume along axes
/// long enough to hold it; along shorter axes the volume is centred in the
/// window and the margins are zero-filled (class 0 for labels).
pub fn random_crop(
    image: &Volume,
    label: &LabelVolume,
    patch: usize,
    foreground: &[usize],
    rng: &mut Rng,
) -> Result<Patch> {
    if image.extents != label.extents {
        return Err(DataError::Volume(format!(
            "image extents {:?} do not match label extents {:?}",
            image.extents, label.extents
        )));
    }
    if patch == 0 {
        return Err(DataError::Volume("patch extent must be positive".to_string()));
    }
    let extents = image.extents;

    let centre_index = if !foreground.is_empty() && rng.chance(2.0 / 3.0) {
        foreground[rng.below(foreground.len())]
    } else {
        rng.below(image.numel())
    };
    let centre = [
        centre_index / (extents[1] * extents[2]),
        centre_index / extents[2] % extents[1],
        centre_index % extents[2],
    ];

    // Per axis: where the window starts in the volume (src) and where the
    // volume's contribution starts in the patch (dst), plus the overlap.
    let mut src = [0usize; 3];
    let mut dst = [0usize; 3];
    let mut len = [0usize; 3];
    for axis in 0..3 {
        if extents[axis] >= patch {
            src[axis] = (centre[axis].saturating_sub(patch / 2)).min(extents[axis] - patch);
            len[axis] = patch;
        } else {
            dst[axis] = (patch - extents[axis]) / 2;
            len[axis] = extents[axis];
        }
    }

    let mut out_image = vec![0.0f32; patch * patch * patch];
    let mut out_label = vec![0i32; patch * patch * patch];
    for h in 0..len[0] {
        for w in 0..len[1] {
            let src_row = image.index(src[0] + h, src[1] + w, src[2]);
            let dst_row = ((dst[0] + h) * patch + dst[1] + w) * patch + dst[2];
            out_image[dst_row..dst_row + len[2]]
                .copy_from_slice(&image.data[src_row..src_row + len[2]]);
            out_label[dst_row..dst_row + len[2]]
                .copy_from_slice(&label.data[src_row..src_row + len[2]]);
        }
    }

    Ok(Patch { extent: patch, image: out_image, label: out_label })
}
