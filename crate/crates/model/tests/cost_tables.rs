//! Frozen-value tests for the cost tables: exact parameter counts, MAC
//! totals, kernel-sweep deltas, and receptive fields, plus agreement with
//! the built network at full scale.

use uxnet_model::analysis::{costs, count_params, receptive_field, receptive_field_extent};
use uxnet_model::{ConvKind, ScalingKind, UXNet3d, UXNetConfig};

fn sweep_config(k: usize) -> UXNetConfig {
    UXNetConfig { kernel_size: k, patch_embed_kernel: Some(7), ..UXNetConfig::default() }
}

#[test]
fn default_and_optimized_costs_are_frozen_and_inside_reference_windows() {
    let d = costs(&UXNetConfig::default(), 96);
    assert_eq!(d.params, 54_192_053);
    assert_eq!(d.macs, 303_771_949_056);
    assert_eq!(d.flops, 607_543_898_112);

    // Reference windows: 53.0M params +-10%, 639.4 GFLOPs +-20%.
    let p = d.params as f64;
    assert!((47.7e6..=58.3e6).contains(&p), "default params {p} outside window");
    let f = d.flops as f64;
    assert!((511.5e9..=767.3e9).contains(&f), "default flops {f} outside window");

    let o = costs(&UXNetConfig::optimized(), 96);
    assert_eq!(o.params, 33_073_205);
    assert_eq!(o.flops, 603_152_510_976);
    // 32.1M +-10%, 536.8 GFLOPs +-20%.
    let p = o.params as f64;
    assert!((28.89e6..=35.31e6).contains(&p), "optimized params {p} outside window");
    let f = o.flops as f64;
    assert!((429.4e9..=644.2e9).contains(&f), "optimized flops {f} outside window");
}

#[test]
fn kernel_sweep_params_are_frozen() {
    let frozen: [(usize, u64); 6] = [
        (3, 53_737_013),
        (5, 53_878_133),
        (7, 54_192_053),
        (9, 54_747_893),
        (11, 55_614_773),
        (13, 56_861_813),
    ];
    for (k, want) in frozen {
        assert_eq!(count_params(&sweep_config(k)), want, "params for kernel {k}");
    }
}

#[test]
fn kernel_sweep_deltas_match_reference_increments() {
    // Reference table: growing the kernel adds +0.5M (3->7), then +0.6M,
    // +0.8M, +1.3M per 2-step, each within +-10%.
    let p = |k: usize| count_params(&sweep_config(k)) as f64;
    let within = |delta: f64, target: f64| (delta - target).abs() <= 0.10 * target;
    assert!(within(p(7) - p(3), 0.5e6), "3->7 delta {}", p(7) - p(3));
    assert!(within(p(9) - p(7), 0.6e6), "7->9 delta {}", p(9) - p(7));
    assert!(within(p(11) - p(9), 0.8e6), "9->11 delta {}", p(11) - p(9));
    assert!(within(p(13) - p(11), 1.3e6), "11->13 delta {}", p(13) - p(11));
}

#[test]
fn scaling_and_conv_variant_deltas_match_reference() {
    let base = count_params(&UXNetConfig::default()) as f64;
    let mlp = count_params(&UXNetConfig { scaling: ScalingKind::Mlp, ..UXNetConfig::default() });
    // Dense pointwise MLP costs ~3.3M more than depthwise scaling (+-15%).
    let d_mlp = mlp as f64 - base;
    assert_eq!(mlp, 57_313_973);
    assert!((d_mlp - 3.3e6).abs() <= 0.15 * 3.3e6, "mlp-dcs delta {d_mlp}");

    let std = count_params(&UXNetConfig { conv: ConvKind::Standard, ..UXNetConfig::default() });
    // Standard convolution costs ~133.9M more than depthwise (+-10%).
    let d_std = std as f64 - base;
    assert_eq!(std, 188_044_373);
    assert!((d_std - 133.9e6).abs() <= 0.10 * 133.9e6, "std-dw delta {d_std}");

    let none = count_params(&UXNetConfig { scaling: ScalingKind::None, ..UXNetConfig::default() });
    assert_eq!(none, 54_170_453);

    // Exact closed forms. Per encoder block at width c with kernel k:
    // dcs = c*k^3 + 18c, mlp = c*k^3 + 8c^2 + 10c, none = c*k^3 + 3c,
    // standard conv swaps c*k^3 for c^2*k^3. Two blocks per stage.
    let base = count_params(&UXNetConfig::default());
    let chans = [48u64, 96, 192, 384];
    let dcs_minus_none: u64 = chans.iter().map(|c| 2 * 15 * c).sum();
    assert_eq!(base - none, dcs_minus_none);
    let mlp_minus_none: u64 = chans.iter().map(|c| 2 * (8 * c * c + 7 * c)).sum();
    assert_eq!(mlp - none, mlp_minus_none);
    let std_minus_dcs: u64 = chans.iter().map(|c| 2 * (c * c - c) * 343).sum();
    assert_eq!(std - base, std_minus_dcs);
}

#[test]
fn receptive_field_sweep_is_frozen() {
    let finals: [(usize, u64); 6] =
        [(3, 221), (5, 341), (7, 461), (9, 581), (11, 701), (13, 821)];
    for (k, want) in finals {
        assert_eq!(receptive_field_extent(&sweep_config(k)), want, "rf for kernel {k}");
    }

    // Full default trace, layer by layer.
    let trace: Vec<u64> = receptive_field(&UXNetConfig::default()).iter().map(|e| e.rf).collect();
    assert_eq!(trace, vec![7, 19, 31, 33, 57, 81, 85, 133, 181, 189, 285, 381, 397, 461]);

    // Optimized: deeper stage 3, no bottleneck level.
    assert_eq!(receptive_field_extent(&UXNetConfig::optimized()), 669);
}

#[test]
fn full_scale_registry_matches_analytic_counts() {
    // Builds the real 54M/33M-parameter networks and compares allocation
    // against the closed forms.
    let d = UXNet3d::<f32>::build(&UXNetConfig::default(), 1).unwrap();
    assert_eq!(d.registry().total_numel(), 54_192_053);
    let o = UXNet3d::<f32>::build(&UXNetConfig::optimized(), 1).unwrap();
    assert_eq!(o.registry().total_numel(), 33_073_205);
}
