//! Sliding-window inference contracts: a patch-sized volume reduces to one
//! forward pass, padding round-trips short axes, and overlapping windows
//! still produce a normalized probability field.

use uxnet_core::{Rng, Tensor};
use uxnet_data::Volume;
use uxnet_model::{ConvKind, ScalingKind, UXNet3d, UXNetConfig};
use uxnet_train::{argmax_channels, sliding_window_infer};

fn micro_model() -> UXNet3d<f32> {
    let config = UXNetConfig {
        in_channels: 1,
        num_classes: 3,
        stage_channels: [4, 8, 16, 32],
        depths: [1, 1, 1, 1],
        kernel_size: 3,
        patch_embed_kernel: Some(3),
        scaling: ScalingKind::Dcs,
        conv: ConvKind::Depthwise,
        bottleneck_channels: None,
        deep_supervision: false,
        patch_size: 16,
    };
    UXNet3d::build(&config, 3).unwrap()
}

fn noise_volume(extents: [usize; 3], seed: u64) -> Volume {
    let mut rng = Rng::new(seed);
    let numel = extents.iter().product::<usize>();
    let data = (0..numel).map(|_| rng.uniform() as f32).collect();
    Volume::new(extents, [1.0; 3], data).unwrap()
}

#[test]
fn patch_sized_volume_matches_a_single_forward_pass() {
    let model = micro_model();
    let vol = noise_volume([16, 16, 16], 1);

    let windowed = sliding_window_infer(&model, &vol, 0.25).unwrap();

    let x = Tensor::<f32>::from_vec(
        vec![1, 1, 16, 16, 16],
        vol.data.clone(),
    )
    .unwrap();
    let direct = model.predict(&x).unwrap();

    assert_eq!(windowed.shape(), direct.shape());
    for (w, d) in windowed.data().iter().zip(direct.data()) {
        assert!((w - d).abs() < 1e-6, "{w} vs {d}");
    }
}

#[test]
fn larger_volume_with_overlap_yields_normalized_probabilities() {
    let model = micro_model();
    let vol = noise_volume([24, 20, 28], 2);

    let probs = sliding_window_infer(&model, &vol, 0.5).unwrap();
    assert_eq!(probs.shape(), &[1, 3, 24, 20, 28]);

    // Averaged probabilities still sum to one per voxel.
    let voxels = 24 * 20 * 28;
    let data = probs.data();
    for v in (0..voxels).step_by(97) {
        let sum: f32 = (0..3).map(|c| data[c * voxels + v]).sum();
        assert!((sum - 1.0).abs() < 1e-5, "voxel {v}: sum {sum}");
    }
    let pred = argmax_channels(&probs);
    assert_eq!(pred.len(), voxels);
    assert!(pred.iter().all(|&p| (0..3).contains(&p)));
}

#[test]
fn short_axes_are_padded_and_trimmed_back() {
    let model = micro_model();
    // One axis shorter than the patch, one equal, one longer.
    let vol = noise_volume([10, 16, 20], 3);
    let probs = sliding_window_infer(&model, &vol, 0.25).unwrap();
    assert_eq!(probs.shape(), &[1, 3, 10, 16, 20]);
    assert!(probs.data().iter().all(|p| p.is_finite()));
}

#[test]
fn bad_overlap_is_rejected() {
    let model = micro_model();
    let vol = noise_volume([16, 16, 16], 4);
    assert!(sliding_window_infer(&model, &vol, 1.0).is_err());
    assert!(sliding_window_infer(&model, &vol, -0.1).is_err());
}
