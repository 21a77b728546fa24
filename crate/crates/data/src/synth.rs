//! Synthetic segmentation datasets: random ellipsoids and cuboids with
//! class-dependent intensity bands, written out as volume pairs plus a
//! train/val/test manifest. The generator is fully determined by its seed,
//! so two runs with the same configuration produce identical bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use uxnet_core::Rng;

use crate::{
    save_label, save_volume, CaseEntry, DataError, DatasetManifest, LabelVolume, Result, Split,
    Volume,
};

/// Stream tag separating dataset generation from other consumers of the seed.
const SYNTH_TAG: u64 = u64::from_le_bytes(*b"synthgen");

/// Fewest voxels a class may occupy before the case is re-rolled.
const MIN_CLASS_VOXELS: usize = 8;

/// Geometry and noise parameters for [`generate_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Number of image/label pairs to write.
    pub cases: usize,
    /// Cubic volume extent per case.
    pub extent: usize,
    /// Label classes including background 0.
    pub classes: usize,
    /// Voxel spacing recorded in the sidecars.
    pub spacing: [f32; 3],
    /// Standard deviation of the additive Gaussian intensity noise.
    pub noise_std: f64,
    /// Attempts at drawing a case before missing classes are force-placed.
    pub max_attempts: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            cases: 20,
            extent: 64,
            classes: 3,
            spacing: [1.0; 3],
            noise_std: 0.03,
            max_attempts: 8,
        }
    }
}

impl SynthConfig {
    /// Rejects geometry that cannot hold every class: fewer than 3 cases
    /// (the split needs one per bucket), fewer than 2 classes, or volumes
    /// too small for the per-class shapes.
    pub fn validate(&self) -> Result<()> {
        if self.cases < 3 {
            return Err(DataError::Synth(format!(
                "need at least 3 cases to populate every split, got {}",
                self.cases
            )));
        }
        if self.classes < 2 {
            return Err(DataError::Synth(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.extent < 8 || self.extent < 3 * self.classes {
            return Err(DataError::Synth(format!(
                "extent {} too small for {} classes",
                self.extent, self.classes
            )));
        }
        if !self.noise_std.is_finite() || self.noise_std < 0.0 {
            return Err(DataError::Synth(format!("bad noise_std {}", self.noise_std)));
        }
        Ok(())
    }

    /// Mean intensity of each class's band, evenly spread over [0.15, 0.85].
    fn class_intensity(&self, class: usize) -> f64 {
        0.15 + 0.7 * class as f64 / (self.classes - 1) as f64
    }
}

enum ShapeKind {
    Ellipsoid,
    Cuboid,
}

struct Shape {
    kind: ShapeKind,
    centre: [f64; 3],
    radii: [f64; 3],
}

impl Shape {
    fn draw(extent: usize, rng: &mut Rng) -> Self {
        let kind = if rng.chance(0.5) {
            ShapeKind::Ellipsoid
        } else {
            ShapeKind::Cuboid
        };
        // Radii of an eighth to a quarter of the extent keep single shapes
        // well inside the volume while giving each class a foreground
        // fraction in the percents, enough to train against.
        let lo = (extent as f64 / 8.0).max(2.0);
        let hi = (extent as f64 / 4.0).max(lo + 0.5);
        let mut centre = [0.0; 3];
        let mut radii = [0.0; 3];
        for axis in 0..3 {
            radii[axis] = rng.uniform_in(lo, hi);
            centre[axis] = rng.uniform_in(radii[axis], extent as f64 - 1.0 - radii[axis]);
        }
        Shape { kind, centre, radii }
    }

    /// Writes `class` into every covered voxel, overwriting earlier classes.
    fn rasterize(&self, extent: usize, class: i32, label: &mut [i32]) {
        let clamp = |v: f64| (v.max(0.0) as usize).min(extent - 1);
        let lo: Vec<usize> = (0..3).map(|a| clamp(self.centre[a] - self.radii[a])).collect();
        let hi: Vec<usize> = (0..3).map(|a| clamp(self.centre[a] + self.radii[a])).collect();
        for h in lo[0]..=hi[0] {
            for w in lo[1]..=hi[1] {
                for d in lo[2]..=hi[2] {
                    let rel = [
                        (h as f64 - self.centre[0]) / self.radii[0],
                        (w as f64 - self.centre[1]) / self.radii[1],
                        (d as f64 - self.centre[2]) / self.radii[2],
                    ];
                    let inside = match self.kind {
                        ShapeKind::Ellipsoid => {
                            rel[0] * rel[0] + rel[1] * rel[1] + rel[2] * rel[2] <= 1.0
                        }
                        ShapeKind::Cuboid => rel.iter().all(|r| r.abs() <= 1.0),
                    };
                    if inside {
                        label[(h * extent + w) * extent + d] = class;
                    }
                }
            }
        }
    }
}

fn draw_label(config: &SynthConfig, rng: &mut Rng) -> Vec<i32> {
    let extent = config.extent;
    let mut label = vec![0i32; extent * extent * extent];
    for class in 1..config.classes {
        let shapes = 1 + rng.below(2);
        for _ in 0..shapes {
            Shape::draw(extent, rng).rasterize(extent, class as i32, &mut label);
        }
    }
    label
}

fn class_counts(label: &[i32], classes: usize) -> Vec<usize> {
    let mut counts = vec![0usize; classes];
    for &v in label {
        counts[v as usize] += 1;
    }
    counts
}

/// Stamps a small cube of `class` into its slab of the volume. Used only
/// when random drawing repeatedly fails to produce the class.
fn force_place(extent: usize, classes: usize, class: usize, label: &mut [i32]) {
    let slab = extent / classes;
    let h0 = class * slab + (slab.saturating_sub(3)) / 2;
    for h in h0..(h0 + 3).min(extent) {
        for w in 0..3 {
            for d in 0..3 {
                label[(h * extent + w) * extent + d] = class as i32;
            }
        }
    }
}

/// One case's label map: redraw until every class holds at least
/// [`MIN_CLASS_VOXELS`], then fall back to force-placing whatever is still
/// missing (with a warning on stderr).
fn draw_case_label(config: &SynthConfig, seed: u64, case: usize) -> Vec<i32> {
    let mut label = Vec::new();
    for attempt in 0..config.max_attempts.max(1) {
        let mut rng = Rng::for_path(seed, &[SYNTH_TAG, case as u64, attempt as u64]);
        label = draw_label(config, &mut rng);
        let counts = class_counts(&label, config.classes);
        if counts.iter().all(|&c| c >= MIN_CLASS_VOXELS) {
            return label;
        }
    }
    let counts = class_counts(&label, config.classes);
    for class in 0..config.classes {
        if counts[class] < MIN_CLASS_VOXELS {
            eprintln!(
                "warning: case {case}: class {class} missing after {} attempts; force-placing a cube",
                config.max_attempts
            );
            force_place(config.extent, config.classes, class, &mut label);
        }
    }
    label
}

fn render_image(config: &SynthConfig, label: &[i32], rng: &mut Rng) -> Vec<f32> {
    label
        .iter()
        .map(|&class| {
            let v = config.class_intensity(class as usize) + config.noise_std * rng.normal();
            v.clamp(0.0, 1.0) as f32
        })
        .collect()
}

/// Split sizes for `n` cases: roughly 70/15/15 with every split non-empty.
fn split_sizes(n: usize) -> [usize; 3] {
    let val = ((n * 15 + 50) / 100).max(1);
    let test = ((n * 15 + 50) / 100).max(1);
    [n - val - test, val, test]
}

/// Generates `config.cases` image/label pairs under `out_dir` and writes the
/// accompanying `manifest.json`. Cases are assigned to train/val/test in
/// index order using [`split_sizes`].
pub fn generate_dataset(
    config: &SynthConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;

    let sizes = split_sizes(config.cases);
    let mut cases = Vec::with_capacity(config.cases);
    for case in 0..config.cases {
        let label_data = draw_case_label(config, seed, case);
        // The image stream is salted differently from the shape stream so
        // adding retry draws never perturbs the noise.
        let mut noise_rng = Rng::for_path(seed, &[SYNTH_TAG ^ 0x01, case as u64]);
        let image_data = render_image(config, &label_data, &mut noise_rng);

        let extents = [config.extent; 3];
        let image = Volume::new(extents, config.spacing, image_data)?;
        let label = LabelVolume::new(extents, config.spacing, config.classes, label_data)?;

        let name = format!("case_{case:03}");
        let image_file = format!("{name}_img.uxv");
        let label_file = format!("{name}_lab.uxv");
        save_volume(&image, &out_dir.join(&image_file))?;
        save_label(&label, &out_dir.join(&label_file))?;

        let split = if case < sizes[0] {
            Split::Train
        } else if case < sizes[0] + sizes[1] {
            Split::Val
        } else {
            Split::Test
        };
        cases.push(CaseEntry { name, image: image_file, label: label_file, split });
    }

    let manifest = DatasetManifest { classes: config.classes, cases };
    manifest.save(out_dir)?;
    Ok(manifest)
}
