//! Hard-Dice evaluation over dataset splits: argmax predictions from
//! sliding-window probabilities, per-class overlap in f64, and the
//! foreground mean that training quality gates read.

use std::path::Path;

use serde::Serialize;
use uxnet_core::{Element, Tensor};
use uxnet_data::{load_label, load_volume, percentile_normalize, DatasetManifest, Split};
use uxnet_model::UXNet3d;

use crate::{sliding_window_infer, Result, TrainError};

/// Per-voxel argmax over the channel axis of `[1, C, H, W, D]`
/// probabilities. Ties resolve to the lowest class index.
pub fn argmax_channels<T: Element>(probs: &Tensor<T>) -> Vec<i32> {
    let classes = probs.dim(1);
    let voxels: usize = probs.shape()[2..].iter().product();
    let data = probs.data();
    let mut out = Vec::with_capacity(voxels);
    for v in 0..voxels {
        let (mut best_class, mut best) = (0i32, data[v].to_f64());
        for c in 1..classes {
            let p = data[c * voxels + v].to_f64();
            if p > best {
                best = p;
                best_class = c as i32;
            }
        }
        out.push(best_class);
    }
    out
}

/// Hard Dice per class: `2|P ∩ G| / (|P| + |G|)` over binarized masks,
/// computed in f64. A class absent from both volumes scores 1.
pub fn hard_dice(pred: &[i32], truth: &[i32], classes: usize) -> Vec<f64> {
    assert_eq!(pred.len(), truth.len(), "prediction/truth voxel counts differ");
    let mut intersect = vec![0u64; classes];
    let mut pred_count = vec![0u64; classes];
    let mut truth_count = vec![0u64; classes];
    for (&p, &t) in pred.iter().zip(truth) {
        pred_count[p as usize] += 1;
        truth_count[t as usize] += 1;
        if p == t {
            intersect[p as usize] += 1;
        }
    }
    (0..classes)
        .map(|c| {
            let denom = pred_count[c] + truth_count[c];
            if denom == 0 {
                1.0
            } else {
                2.0 * intersect[c] as f64 / denom as f64
            }
        })
        .collect()
}

/// Split-level evaluation summary. `per_class` averages each class's Dice
/// over cases; `foreground_mean` averages `per_class` without class 0.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub per_class: Vec<f64>,
    pub foreground_mean: f64,
    pub cases: usize,
}

/// Evaluates `model` on every case of `split` under `data_dir`:
/// percentile-normalize, sliding-window infer, argmax, hard Dice. Cases
/// are visited sorted by image path so the aggregate is order-stable.
pub fn evaluate<T: Element>(
    model: &UXNet3d<T>,
    data_dir: &Path,
    split: Split,
    overlap: f64,
) -> Result<EvalReport> {
    let manifest = DatasetManifest::load(data_dir)?;
    let classes = manifest.classes;
    if classes != model.config().num_classes {
        return Err(TrainError::Config(format!(
            "manifest has {} classes but the model predicts {}",
            classes,
            model.config().num_classes
        )));
    }
    let mut cases = manifest.cases_in(split);
    if cases.is_empty() {
        return Err(TrainError::Config(format!("split {split:?} has no cases")));
    }
    cases.sort_by(|a, b| a.image.cmp(&b.image));

    let mut sums = vec![0.0f64; classes];
    for case in &cases {
        let image = load_volume(&case.image_path(data_dir))?;
        let label = load_label(&case.label_path(data_dir))?;
        let normalized = percentile_normalize(&image)?;
        let probs = sliding_window_infer(model, &normalized, overlap)?;
        let pred = argmax_channels(&probs);
        for (c, d) in hard_dice(&pred, &label.data, classes).into_iter().enumerate() {
            sums[c] += d;
        }
    }
    let per_class: Vec<f64> = sums.iter().map(|s| s / cases.len() as f64).collect();
    let foreground_mean =
        per_class[1..].iter().sum::<f64>() / (classes - 1) as f64;
    Ok(EvalReport { per_class, foreground_mean, cases: cases.len() })
}
