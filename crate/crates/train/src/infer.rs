//! Sliding-window inference over whole volumes: tile the volume with
//! patch-sized windows, average the class probabilities where windows
//! overlap, and trim away any padding that was needed to fit the model's
//! patch extent.

use uxnet_core::{Element, Tensor};
use uxnet_data::Volume;
use uxnet_model::UXNet3d;

use crate::{Result, TrainError};

/// Window origins along one axis: step by `stride` and clamp the final
/// window flush against the end so all `extent` voxels are covered.
pub fn window_starts(extent: usize, patch: usize, stride: usize) -> Vec<usize> {
    assert!(stride >= 1, "stride must be at least 1");
    if extent <= patch {
        return vec![0];
    }
    let mut starts = Vec::new();
    let mut s = 0;
    loop {
        if s + patch >= extent {
            starts.push(extent - patch);
            return starts;
        }
        starts.push(s);
        s += stride;
    }
}

/// Full-volume class probabilities `[1, C, H, W, D]` by sliding-window
/// inference at the model's patch size.
///
/// `overlap` in `[0, 1)` sets the stride to `patch * (1 - overlap)`.
/// Overlapping predictions are averaged with uniform weights in f64. Axes
/// shorter than the patch are zero-padded symmetrically and the padding is
/// cut away again, so the output always matches the input extents. A
/// volume exactly one patch in size reduces to a single forward pass.
pub fn sliding_window_infer<T: Element>(
    model: &UXNet3d<T>,
    image: &Volume,
    overlap: f64,
) -> Result<Tensor<T>> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(TrainError::Config(format!(
            "overlap {overlap} outside [0, 1)"
        )));
    }
    let patch = model.config().patch_size;
    let classes = model.config().num_classes;
    let stride = ((patch as f64 * (1.0 - overlap)).floor() as usize).max(1);

    // Pad short axes up to the patch extent, volume centred.
    let padded_extents = [
        image.extents[0].max(patch),
        image.extents[1].max(patch),
        image.extents[2].max(patch),
    ];
    let offsets = [
        (padded_extents[0] - image.extents[0]) / 2,
        (padded_extents[1] - image.extents[1]) / 2,
        (padded_extents[2] - image.extents[2]) / 2,
    ];
    let padded: Vec<f32> = if padded_extents == image.extents {
        image.data.clone()
    } else {
        let mut buf = vec![0.0f32; padded_extents.iter().product()];
        for h in 0..image.extents[0] {
            for w in 0..image.extents[1] {
                let src = image.index(h, w, 0);
                let dst = ((offsets[0] + h) * padded_extents[1] + offsets[1] + w)
                    * padded_extents[2]
                    + offsets[2];
                buf[dst..dst + image.extents[2]]
                    .copy_from_slice(&image.data[src..src + image.extents[2]]);
            }
        }
        buf
    };

    let [ph, pw, pd] = padded_extents;
    let voxels = ph * pw * pd;
    let mut prob_sum = vec![0.0f64; classes * voxels];
    let mut counts = vec![0u32; voxels];
    let mut window = vec![T::ZERO; patch * patch * patch];

    for &hs in &window_starts(ph, patch, stride) {
        for &ws in &window_starts(pw, patch, stride) {
            for &ds in &window_starts(pd, patch, stride) {
                for h in 0..patch {
                    for w in 0..patch {
                        let src = ((hs + h) * pw + ws + w) * pd + ds;
                        let dst = (h * patch + w) * patch;
                        for d in 0..patch {
                            window[dst + d] = T::from_f64(f64::from(padded[src + d]));
                        }
                    }
                }
                let x = Tensor::from_vec(
                    vec![1, 1, patch, patch, patch],
                    window.clone(),
                )?;
                let probs = model.predict(&x)?;
                let pdata = probs.data();
                for c in 0..classes {
                    for h in 0..patch {
                        for w in 0..patch {
                            let dst = (c * ph + hs + h) * pw * pd + (ws + w) * pd + ds;
                            let src = (c * patch + h) * patch * patch + w * patch;
                            for d in 0..patch {
                                prob_sum[dst + d] += pdata[src + d].to_f64();
                            }
                        }
                    }
                }
                for h in 0..patch {
                    for w in 0..patch {
                        let dst = ((hs + h) * pw + ws + w) * pd + ds;
                        for d in 0..patch {
                            counts[dst + d] += 1;
                        }
                    }
                }
            }
        }
    }

    debug_assert!(counts.iter().all(|&c| c >= 1), "windows must cover the volume");

    // Average and trim the padding away.
    let [oh, ow, od] = image.extents;
    let mut out = vec![T::ZERO; classes * oh * ow * od];
    for c in 0..classes {
        for h in 0..oh {
            for w in 0..ow {
                for d in 0..od {
                    let src = (c * ph + offsets[0] + h) * pw * pd
                        + (offsets[1] + w) * pd
                        + offsets[2]
                        + d;
                    let n = counts[((offsets[0] + h) * pw + offsets[1] + w) * pd + offsets[2] + d];
                    let val = prob_sum[src] / f64::from(n);
                    out[((c * oh + h) * ow + w) * od + d] = T::from_f64(val);
                }
            }
        }
    }
    Ok(Tensor::from_vec(vec![1, classes, oh, ow, od], out)?)
}
