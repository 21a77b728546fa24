//! Structural tests of the encoder block: the two residual sums are the
//! block's only outputs (nothing normalizes or activates after them), and
//! the second branch vanishes exactly when its parameters do.

use uxnet_core::{Rng, Tape, Tensor};
use uxnet_model::blocks::UXNetBlock;
use uxnet_model::{ParamRegistry, ScalingKind, UXNet3d, UXNetConfig};

fn zero_params(reg: &ParamRegistry<f32>, prefix: &str) {
    for p in reg.params() {
        if p.name().starts_with(prefix) {
            p.set_value(Tensor::zeros(p.shape()));
        }
    }
}

#[test]
fn block_with_all_zero_parameters_is_bitwise_identity() {
    // With gamma = 0 the normalized input is zeroed, the convolutions of
    // zero stay zero, and each residual sum returns its input unchanged.
    // If any norm or activation followed the sums, this would not hold.
    let mut reg = ParamRegistry::<f32>::new();
    let mut rng = Rng::new(41);
    let block =
        UXNetBlock::new(&mut reg, "blk", 6, 7, ScalingKind::Dcs, true, &mut rng).unwrap();
    zero_params(&reg, "blk");

    let x = Tensor::randn(vec![2, 6, 5, 5, 5], 1.0, &mut rng);
    let y = block.forward(&x, None).unwrap();
    assert!(y.bit_eq(&x), "zeroed block must be the identity, bit for bit");
}

#[test]
fn zeroed_second_branch_equals_first_residual_only() {
    // A DCS block whose second branch is zeroed must agree bitwise with a
    // scaling-free block carrying the same norm1/dwc weights: the block is
    // exactly z_hat = dwc(norm(z)) + z followed by an optional second
    // residual, not some fused variant.
    let mut reg = ParamRegistry::<f32>::new();
    let mut rng = Rng::new(17);
    let full =
        UXNetBlock::new(&mut reg, "full", 4, 3, ScalingKind::Dcs, true, &mut rng).unwrap();
    let mut rng2 = Rng::new(99);
    let bare =
        UXNetBlock::new(&mut reg, "bare", 4, 3, ScalingKind::None, true, &mut rng2).unwrap();

    // Copy the shared first-branch weights, zero the second branch.
    for name in ["norm1.gamma", "norm1.beta", "dwc.weight", "dwc.bias"] {
        let src = reg.get(&format!("full.{name}")).unwrap().value();
        reg.get(&format!("bare.{name}")).unwrap().set_value(src);
    }
    for p in reg.params() {
        let n = p.name();
        if n.starts_with("full.norm2") || n.starts_with("full.scale") {
            p.set_value(Tensor::zeros(p.shape()));
        }
    }

    let x = Tensor::randn(vec![1, 4, 6, 6, 6], 1.0, &mut rng);
    let a = full.forward(&x, None).unwrap();
    let b = bare.forward(&x, None).unwrap();
    assert!(a.bit_eq(&b));
}

#[test]
fn every_parameter_of_a_tracked_block_receives_gradient() {
    let mut reg = ParamRegistry::<f64>::new();
    let mut rng = Rng::new(3);
    let block =
        UXNetBlock::new(&mut reg, "blk", 4, 3, ScalingKind::Dcs, true, &mut rng).unwrap();

    let tape = Tape::new();
    let x = tape.leaf(&Tensor::randn(vec![1, 4, 4, 4, 4], 1.0, &mut rng));
    let y = block.forward(&x, Some(&tape)).unwrap();
    let loss = uxnet_core::ops::mean_all(&uxnet_core::ops::mul(&y, &y).unwrap()).unwrap();
    let grads = uxnet_core::tape::backward(&tape, &loss).unwrap();

    for p in reg.params() {
        p.accumulate_grad(&grads);
        let g = p.grad();
        assert!(
            g.iter().any(|&v| v != 0.0),
            "{} received no gradient",
            p.name()
        );
    }
    assert!(grads.of(&x).is_some(), "input gradient must exist");
}

#[test]
fn whole_tiny_model_trains_every_parameter() {
    // One tracked forward/backward through the full network: every
    // registered parameter must participate in the loss.
    let cfg = UXNetConfig::tiny();
    let model = UXNet3d::<f32>::build(&cfg, 5).unwrap();
    let tape = Tape::new();
    let mut rng = Rng::new(6);
    let x = Tensor::randn(vec![1, 1, 32, 32, 32], 1.0, &mut rng);
    let logits = model.forward(&x, Some(&tape)).unwrap();
    let loss = uxnet_core::ops::mean_all(&uxnet_core::ops::mul(&logits, &logits).unwrap()).unwrap();
    let grads = uxnet_core::tape::backward(&tape, &loss).unwrap();

    let mut silent = Vec::new();
    for p in model.registry().params() {
        p.accumulate_grad(&grads);
        if p.grad().iter().all(|&v| v == 0.0) {
            silent.push(p.name().to_string());
        }
    }
    assert!(silent.is_empty(), "parameters without gradient: {silent:?}");
}
