//! End-to-end data pipeline: generate a dataset, load cases back, normalize,
//! augment, and cut training patches — the exact path the training loop
//! takes.

use uxnet_core::Rng;
use uxnet_data::{
    augment, foreground_voxels, generate_dataset, load_label, load_volume, percentile_normalize,
    random_crop, AugmentConfig, DatasetManifest, Split, SynthConfig,
};

#[test]
fn synth_to_patch_pipeline_produces_training_ready_crops() {
    let dir = tempfile::tempdir().unwrap();
    let config = SynthConfig { cases: 5, extent: 32, ..SynthConfig::default() };
    generate_dataset(&config, 123, dir.path()).unwrap();

    let manifest = DatasetManifest::load(dir.path()).unwrap();
    let train_cases = manifest.cases_in(Split::Train);
    assert!(!train_cases.is_empty());

    let mut rng = Rng::for_path(123, &[99]);
    for case in train_cases {
        let image = load_volume(&case.image_path(dir.path())).unwrap();
        let label = load_label(&case.label_path(dir.path())).unwrap();

        let norm = percentile_normalize(&image).unwrap();
        assert!(norm.data.iter().all(|&v| (0.0..=1.0).contains(&v)));

        let (aug_img, aug_lab) = augment(&norm, &label, &AugmentConfig::default(), &mut rng).unwrap();
        assert_eq!(aug_img.extents, norm.extents);
        assert!(aug_lab.data.iter().all(|&v| (0..3).contains(&v)));

        let fg = foreground_voxels(&aug_lab);
        assert!(!fg.is_empty(), "augmentation must not erase all foreground");
        let patch = random_crop(&aug_img, &aug_lab, 16, &fg, &mut rng).unwrap();
        assert_eq!(patch.image.len(), 16 * 16 * 16);
        assert_eq!(patch.label.len(), 16 * 16 * 16);
        assert!(patch.image.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn patch_sampling_is_reproducible_from_the_stream_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = SynthConfig { cases: 3, extent: 24, ..SynthConfig::default() };
    let manifest = generate_dataset(&config, 5, dir.path()).unwrap();
    let case = &manifest.cases[0];
    let image = load_volume(&case.image_path(dir.path())).unwrap();
    let label = load_label(&case.label_path(dir.path())).unwrap();
    let fg = foreground_voxels(&label);

    let cut = |seed: u64| {
        let mut rng = Rng::for_path(seed, &[7, 3]);
        random_crop(&image, &label, 8, &fg, &mut rng).unwrap()
    };
    let a = cut(1);
    let b = cut(1);
    let c = cut(2);
    assert_eq!(a.image, b.image);
    assert_eq!(a.label, b.label);
    assert_ne!(a.image, c.image);
}
