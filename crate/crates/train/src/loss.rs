//! Segmentation losses composed from tape ops, so every term is
//! differentiable end to end: soft Dice, Dice plus cross-entropy, and the
//! deep-supervision combination.

use uxnet_core::ops;
use uxnet_core::{Element, Tensor};

use crate::{Result, TrainError};

/// Soft-Dice settings. The smooth term guards empty classes; background
/// (class 0) participates unless excluded.
#[derive(Debug, Clone)]
pub struct DiceConfig {
    pub include_background: bool,
    pub smooth: f64,
}

impl Default for DiceConfig {
    fn default() -> Self {
        Self { include_background: true, smooth: 1e-5 }
    }
}

/// Expands integer labels into a one-hot `[N, C, H, W, D]` tensor.
pub fn one_hot<T: Element>(
    labels: &[i32],
    batch: usize,
    spatial: (usize, usize, usize),
    classes: usize,
) -> Result<Tensor<T>> {
    let (h, w, d) = spatial;
    let voxels = h * w * d;
    if labels.len() != batch * voxels {
        return Err(TrainError::Config(format!(
            "one_hot: {} labels for batch {batch} of {voxels} voxels",
            labels.len()
        )));
    }
    let mut data = vec![T::ZERO; batch * classes * voxels];
    for n in 0..batch {
        for (v, &label) in labels[n * voxels..(n + 1) * voxels].iter().enumerate() {
            if label < 0 || label as usize >= classes {
                return Err(TrainError::Config(format!(
                    "one_hot: label {label} outside 0..{classes}"
                )));
            }
            data[(n * classes + label as usize) * voxels + v] = T::ONE;
        }
    }
    Ok(Tensor::from_vec(vec![batch, classes, h, w, d], data)?)
}

/// Soft Dice loss: `1 - mean_c dice_c` with
/// `dice_c = (2 * sum(p_c * y_c) + s) / (sum(p_c) + sum(y_c) + s)`,
/// probabilities from a channel softmax and sums taken over batch and
/// space. `target` is a detached one-hot tensor of the same shape.
pub fn dice_loss<T: Element>(
    logits: &Tensor<T>,
    target: &Tensor<T>,
    config: &DiceConfig,
) -> Result<Tensor<T>> {
    let p = ops::softmax_channels(logits)?;
    let classes = p.dim(1);
    let (p, y) = if config.include_background {
        (p, target.clone())
    } else {
        if classes < 2 {
            return Err(TrainError::Config(
                "cannot exclude background with a single class".to_string(),
            ));
        }
        (
            ops::slice_channels(&p, 1, classes)?,
            ops::slice_channels(target, 1, classes)?,
        )
    };

    let spatial_and_batch = [0usize, 2, 3, 4];
    let intersect = ops::reduce(
        &ops::mul(&p, &y)?,
        &spatial_and_batch,
        false,
        ops::Reduction::Sum,
    )?;
    let p_sum = ops::reduce(&p, &spatial_and_batch, false, ops::Reduction::Sum)?;
    let y_sum = ops::reduce(&y, &spatial_and_batch, false, ops::Reduction::Sum)?;

    let numer = ops::add_scalar(&ops::mul_scalar(&intersect, 2.0)?, config.smooth)?;
    let denom = ops::add_scalar(&ops::add(&p_sum, &y_sum)?, config.smooth)?;
    let dice_per_class = ops::div(&numer, &denom)?;
    let mean_dice = ops::mean_all(&dice_per_class)?;
    Ok(ops::add_scalar(&ops::mul_scalar(&mean_dice, -1.0)?, 1.0)?)
}

/// Equal-weight sum of soft Dice and mean voxel cross-entropy.
pub fn dice_ce_loss<T: Element>(
    logits: &Tensor<T>,
    target: &Tensor<T>,
    config: &DiceConfig,
) -> Result<Tensor<T>> {
    let dice = dice_loss(logits, target, config)?;
    let ce = ops::cross_entropy_channels(logits, target)?;
    Ok(ops::add(&dice, &ce)?)
}

/// Relative weight of the main output and each auxiliary output, main
/// first. Normalized to sum to one before use.
pub const DEEP_SUPERVISION_WEIGHTS: [f64; 4] = [1.0, 0.5, 0.25, 0.125];

/// Deep-supervision objective: the weighted mean of [`dice_ce_loss`] over
/// the main output and the three auxiliary outputs, all at full resolution
/// against the same target. `outputs[0]` must be the main head.
pub fn deep_supervised_loss<T: Element>(
    outputs: &[&Tensor<T>],
    target: &Tensor<T>,
    config: &DiceConfig,
) -> Result<Tensor<T>> {
    if outputs.len() != DEEP_SUPERVISION_WEIGHTS.len() {
        return Err(TrainError::Config(format!(
            "deep supervision expects {} outputs (main first), got {}",
            DEEP_SUPERVISION_WEIGHTS.len(),
            outputs.len()
        )));
    }
    let total: f64 = DEEP_SUPERVISION_WEIGHTS.iter().sum();
    let mut acc: Option<Tensor<T>> = None;
    for (out, weight) in outputs.iter().zip(DEEP_SUPERVISION_WEIGHTS) {
        let term = ops::mul_scalar(&dice_ce_loss(out, target, config)?, weight / total)?;
        acc = Some(match acc {
            Some(a) => ops::add(&a, &term)?,
            None => term,
        });
    }
    Ok(acc.expect("at least one output"))
}
