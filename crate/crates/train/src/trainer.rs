//! The training loop: foreground-biased patch batches, Dice+CE (optionally
//! deep-supervised) loss, AdamW with plateau scheduling, JSON-lines
//! metrics, and periodic/best checkpoints that a later run can resume
//! from with bit-identical results.
//!
//! Determinism comes from drawing each step's randomness from
//! `Rng::for_path(seed, [STEP_TAG, step])` — a pure function of the seed
//! and step index, never of loop history — and from keeping all optimizer
//! and scheduler state either in the parameter dtype or in exactly
//! reconstructible integers.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use uxnet_core::tape::{backward, Tape};
use uxnet_core::{Element, Rng, Tensor};
use uxnet_data::{
    augment, foreground_voxels, load_label, load_volume, percentile_normalize, random_crop,
    AugmentConfig, DatasetManifest, LabelVolume, Split, Volume,
};
use uxnet_model::{Checkpoint, UXNet3d, UXNetConfig};

use crate::loss::{deep_supervised_loss, dice_ce_loss, one_hot, DiceConfig};
use crate::optim::{AdamW, AdamWConfig, PlateauScheduler};
use crate::{evaluate, Result, TrainError};

/// Stream tag separating the training loop's randomness from other
/// consumers of the seed.
const STEP_TAG: u64 = u64::from_le_bytes(*b"trainstp");

/// Everything a training run needs beyond the dataset location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub model: UXNetConfig,
    /// Total optimization steps (including any completed before a resume).
    pub steps: usize,
    /// Volumes sampled per step.
    pub batch_size: usize,
    /// Patches cut from each sampled volume.
    pub crops_per_volume: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Steps between validation evaluations; 0 disables them.
    pub eval_every: usize,
    /// Steps between `last.ckpt` writes; the final step always writes one.
    pub checkpoint_every: usize,
    pub seed: u64,
    /// Omit wall-clock fields from metrics so logs are comparable.
    pub deterministic: bool,
    pub augment: bool,
    /// Rotation/scale/intensity ranges applied when `augment` is on.
    pub augment_params: AugmentConfig,
    /// Include class 0 in the soft-Dice loss.
    pub include_background: bool,
    /// Sliding-window overlap used for validation inference.
    pub overlap: f64,
}

impl Default for TrainConfig {
    /// The published direct-training recipe: 40k steps of AdamW at 1e-4 on
    /// batches of two volumes with two foreground crops each.
    fn default() -> Self {
        Self {
            model: UXNetConfig::default(),
            steps: 40_000,
            batch_size: 2,
            crops_per_volume: 2,
            lr: 1e-4,
            weight_decay: 0.08,
            eval_every: 50,
            checkpoint_every: 50,
            seed: 0,
            deterministic: false,
            augment: true,
            augment_params: AugmentConfig::default(),
            include_background: true,
            overlap: 0.25,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.steps == 0 || self.batch_size == 0 || self.crops_per_volume == 0 {
            return Err(TrainError::Config(
                "steps, batch_size, and crops_per_volume must be positive".to_string(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(TrainError::Config(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(TrainError::Config(format!(
                "overlap {} outside [0, 1)",
                self.overlap
            )));
        }
        Ok(())
    }
}

/// One JSON line of `metrics.jsonl`. `dice` appears on evaluation steps;
/// `wall_ms` is omitted in deterministic mode so logs are comparable
/// across runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricLine {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dice: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<u64>,
}

/// Summary of one `train` invocation.
#[derive(Debug)]
pub struct TrainReport {
    /// Steps executed by this invocation (excludes resumed history).
    pub steps_run: usize,
    pub final_loss: f64,
    /// Best validation foreground Dice seen, if any evaluation ran.
    pub best_val_dice: Option<f64>,
    pub metrics: Vec<MetricLine>,
    pub last_checkpoint: PathBuf,
    pub best_checkpoint: Option<PathBuf>,
}

struct LoadedCase {
    image: Volume,
    label: LabelVolume,
    foreground: Vec<usize>,
}

fn load_training_cases(data_dir: &Path, classes: usize) -> Result<Vec<LoadedCase>> {
    let manifest = DatasetManifest::load(data_dir)?;
    if manifest.classes != classes {
        return Err(TrainError::Config(format!(
            "manifest has {} classes but the model predicts {classes}",
            manifest.classes
        )));
    }
    let mut entries = manifest.cases_in(Split::Train);
    if entries.is_empty() {
        return Err(TrainError::Config("train split has no cases".to_string()));
    }
    entries.sort_by(|a, b| a.image.cmp(&b.image));
    let mut cases = Vec::with_capacity(entries.len());
    for entry in entries {
        let image = percentile_normalize(&load_volume(&entry.image_path(data_dir))?)?;
        let label = load_label(&entry.label_path(data_dir))?;
        let foreground = foreground_voxels(&label);
        cases.push(LoadedCase { image, label, foreground });
    }
    Ok(cases)
}

/// Cuts and optionally augments one training patch, appending it to the
/// batch buffers.
fn append_patch<T: Element>(
    case: &LoadedCase,
    patch_extent: usize,
    augment_with: Option<&AugmentConfig>,
    classes: usize,
    rng: &mut Rng,
    x_data: &mut Vec<T>,
    labels: &mut Vec<i32>,
) -> Result<()> {
    let patch = random_crop(&case.image, &case.label, patch_extent, &case.foreground, rng)?;
    if let Some(params) = augment_with {
        let extents = [patch_extent; 3];
        let image = Volume::new(extents, [1.0; 3], patch.image)?;
        let label = LabelVolume::new(extents, [1.0; 3], classes, patch.label)?;
        let (aug_image, aug_label) = augment(&image, &label, params, rng)?;
        x_data.extend(aug_image.data.iter().map(|&v| T::from_f64(f64::from(v))));
        labels.extend_from_slice(&aug_label.data);
    } else {
        x_data.extend(patch.image.iter().map(|&v| T::from_f64(f64::from(v))));
        labels.extend_from_slice(&patch.label);
    }
    Ok(())
}

fn save_state<T: Element>(
    model: &UXNet3d<T>,
    opt: &AdamW<T>,
    sched: &PlateauScheduler,
    path: &Path,
) -> Result<()> {
    let mut ckpt = model.to_checkpoint()?;
    opt.add_sections(&mut ckpt)?;
    sched.add_sections(&mut ckpt)?;
    ckpt.save(path)?;
    Ok(())
}

/// Runs (or resumes) a training run against the dataset in `data_dir`,
/// writing `metrics.jsonl`, `last.ckpt`, and `best.ckpt` into `out_dir`.
///
/// With `resume` pointing at a checkpoint written by this function, the
/// run continues from the recorded step with bit-identical behavior to a
/// single uninterrupted run of the same total length.
pub fn train<T: Element>(
    config: &TrainConfig,
    data_dir: &Path,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<TrainReport> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let classes = config.model.num_classes;
    let patch_extent = config.model.patch_size;
    let cases = load_training_cases(data_dir, classes)?;

    let model: UXNet3d<T> = UXNet3d::build(&config.model, config.seed)?;
    let opt_config = AdamWConfig {
        lr: config.lr,
        weight_decay: config.weight_decay,
        ..AdamWConfig::default()
    };
    let mut opt = AdamW::new(model.registry(), opt_config);
    let mut sched = PlateauScheduler::new(config.lr);

    let mut start_step = 0usize;
    if let Some(path) = resume {
        let ckpt = Checkpoint::<T>::load(path)?;
        if ckpt.config != config.model {
            return Err(TrainError::Config(format!(
                "checkpoint architecture does not match the configured model ({} vs {})",
                ckpt.config.to_json(),
                config.model.to_json()
            )));
        }
        model.restore(&ckpt)?;
        opt.restore(&ckpt)?;
        sched.restore(&ckpt)?;
        start_step = opt.steps_taken() as usize;
        if start_step >= config.steps {
            return Err(TrainError::Config(format!(
                "checkpoint is already at step {start_step} of {}",
                config.steps
            )));
        }
    }

    let metrics_path = out_dir.join("metrics.jsonl");
    let mut metrics_file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&metrics_path)?;
    let last_path = out_dir.join("last.ckpt");
    let best_path = out_dir.join("best.ckpt");
    let mut best_saved = false;

    let dice_config = DiceConfig {
        include_background: config.include_background,
        ..DiceConfig::default()
    };
    let batch = config.batch_size * config.crops_per_volume;
    let voxels = patch_extent * patch_extent * patch_extent;

    let mut metrics = Vec::new();
    let mut final_loss = f64::NAN;
    for step in start_step + 1..=config.steps {
        let started = std::time::Instant::now();
        let mut rng = Rng::for_path(config.seed, &[STEP_TAG, step as u64]);

        let mut x_data: Vec<T> = Vec::with_capacity(batch * voxels);
        let mut labels: Vec<i32> = Vec::with_capacity(batch * voxels);
        for _ in 0..config.batch_size {
            let case = &cases[rng.below(cases.len())];
            for _ in 0..config.crops_per_volume {
                append_patch(
                    case,
                    patch_extent,
                    config.augment.then_some(&config.augment_params),
                    classes,
                    &mut rng,
                    &mut x_data,
                    &mut labels,
                )?;
            }
        }
        let x = Tensor::from_vec(
            vec![batch, 1, patch_extent, patch_extent, patch_extent],
            x_data,
        )?;
        let target: Tensor<T> = one_hot(
            &labels,
            batch,
            (patch_extent, patch_extent, patch_extent),
            classes,
        )?;

        let tape = Tape::new();
        let loss = if config.model.deep_supervision {
            let (main, aux) = model.forward_with_aux(&x, Some(&tape))?;
            let mut outputs: Vec<&Tensor<T>> = vec![&main];
            outputs.extend(aux.iter());
            deep_supervised_loss(&outputs, &target, &dice_config)?
        } else {
            let logits = model.forward(&x, Some(&tape))?;
            dice_ce_loss(&logits, &target, &dice_config)?
        };
        let loss_value = loss.item().to_f64();
        if !loss_value.is_finite() {
            return Err(TrainError::NonFiniteLoss { step, value: loss_value });
        }
        final_loss = loss_value;

        let grads = backward(&tape, &loss)?;
        for p in model.registry().params() {
            p.accumulate_grad(&grads);
        }
        let lr = sched.lr();
        opt.step(model.registry(), lr)?;
        for p in model.registry().params() {
            p.zero_grad();
        }

        // Validation, scheduling, and best-checkpoint tracking.
        let mut dice = None;
        let eval_due = config.eval_every > 0
            && (step % config.eval_every == 0 || step == config.steps);
        if eval_due {
            let report = evaluate(&model, data_dir, Split::Val, config.overlap)?;
            // Quantize to the parameter dtype so a resumed run compares the
            // scheduler's stored best against identical values.
            let value = T::from_f64(report.foreground_mean).to_f64();
            let improved = sched_best_improved(&sched, value);
            sched.observe(value);
            if improved {
                save_state(&model, &opt, &sched, &best_path)?;
                best_saved = true;
            }
            dice = Some(value);
        }

        let wall_ms = if config.deterministic {
            None
        } else {
            Some(started.elapsed().as_millis() as u64)
        };
        let line = MetricLine { step, loss: loss_value, lr, dice, wall_ms };
        writeln!(metrics_file, "{}", serde_json::to_string(&line)?)?;
        metrics.push(line);

        let checkpoint_due = (config.checkpoint_every > 0
            && step % config.checkpoint_every == 0)
            || step == config.steps;
        if checkpoint_due {
            save_state(&model, &opt, &sched, &last_path)?;
        }
    }
    metrics_file.flush()?;

    Ok(TrainReport {
        steps_run: config.steps - start_step,
        final_loss,
        best_val_dice: sched.best(),
        metrics,
        last_checkpoint: last_path,
        best_checkpoint: best_saved.then_some(best_path),
    })
}

/// Whether `value` strictly beats the scheduler's recorded best.
fn sched_best_improved(sched: &PlateauScheduler, value: f64) -> bool {
    sched.best().map_or(true, |b| value > b)
}
