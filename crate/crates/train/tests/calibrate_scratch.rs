//! Temporary calibration harness (deleted before shipping): measures step
//! time and Dice trajectory for the tiny-config training recipe.

use uxnet_data::{generate_dataset, SynthConfig};
use uxnet_model::UXNetConfig;
use uxnet_train::{train, TrainConfig};

fn run_500(kernel_size: usize, deep_supervision: bool) {
    let data = tempfile::tempdir().unwrap();
    let t0 = std::time::Instant::now();
    generate_dataset(&SynthConfig::default(), 42, data.path()).unwrap();
    eprintln!("synth 20x64^3: {:?}", t0.elapsed());

    let config = TrainConfig {
        model: UXNetConfig {
            kernel_size,
            deep_supervision,
            ..UXNetConfig::tiny()
        },
        steps: 500,
        batch_size: 1,
        crops_per_volume: 2,
        eval_every: 50,
        checkpoint_every: 0,
        seed: 0,
        deterministic: false,
        augment: false,
        include_background: false,
        ..TrainConfig::default()
    };
    let out = tempfile::tempdir().unwrap();
    let t1 = std::time::Instant::now();
    let report = train::<f32>(&config, data.path(), out.path(), None).unwrap();
    eprintln!("500 steps k{kernel_size}: {:?}", t1.elapsed());
    for m in &report.metrics {
        if m.dice.is_some() || m.step % 25 == 0 {
            eprintln!(
                "step {:>3} loss {:.4} dice {:?} wall_ms {:?}",
                m.step, m.loss, m.dice, m.wall_ms
            );
        }
    }
    eprintln!("best_val_dice k{kernel_size}: {:?}", report.best_val_dice);
}

#[test]
#[ignore]
fn calibrate_tiny_training_k7() {
    run_500(7, false);
}

#[test]
#[ignore]
fn calibrate_tiny_training_k3() {
    run_500(3, false);
}

#[test]
#[ignore]
fn calibrate_tiny_training_k7_ds() {
    run_500(7, true);
}
