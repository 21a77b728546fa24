//! Subcommand implementations over the library crates. The flow is the
//! same everywhere: load the config file (or defaults), fold command-line
//! overrides into it, honor `--print-config`, then run. The single run
//! seed lives at `train.seed`; `--seed` overrides it for every subcommand,
//! including dataset synthesis.

use std::path::{Path, PathBuf};

use uxnet_core::gradcheck::{self, GradCheckReport};
use uxnet_data::{
    generate_dataset, load_volume, percentile_normalize, read_nifti, save_label, LabelVolume,
    Split, Volume, MANIFEST_NAME,
};
use uxnet_model::analysis::{
    ablation_row, ablation_rows, format_ablation_rows, AblationRow, TableFormat,
};
use uxnet_model::{Checkpoint, UXNet3d, UXNetConfig};
use uxnet_train::{argmax_channels, evaluate, sliding_window_infer, train, TrainError};

use crate::args::{Cli, Command};
use crate::config::CliConfig;
use crate::CliError;

/// Training-library errors split by blame: bad configuration is a usage
/// error, everything else happened at runtime.
fn classify(e: TrainError) -> CliError {
    match e {
        TrainError::Config(msg) => CliError::Usage(format!("config: {msg}")),
        other => CliError::Runtime(other.to_string()),
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn dispatch(args: Cli) -> Result<(), CliError> {
    let mut config = CliConfig::load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    if args.deterministic {
        config.train.deterministic = true;
    }
    // Fold subcommand flags into the config so --print-config shows the
    // exact values the run would use.
    if let Some(command) = &args.command {
        merge_overrides(&mut config, command);
    }
    if args.print_config {
        println!("{}", config.to_pretty_json());
        return Ok(());
    }
    let Some(command) = args.command else {
        return Err(CliError::Usage(
            "no subcommand given (see --help for synth, train, eval, infer, analyze, gradcheck)"
                .into(),
        ));
    };
    match command {
        Command::Synth { out, .. } => cmd_synth(&config, out),
        Command::Train { data, out, resume, .. } => cmd_train(&config, data, out, resume),
        Command::Eval { checkpoint, data, split } => cmd_eval(&config, &checkpoint, data, &split),
        Command::Infer { checkpoint, input, output } => cmd_infer(&config, &checkpoint, &input, &output),
        Command::Analyze { sweep_kernel, variant, format } => {
            cmd_analyze(&config, sweep_kernel.as_deref(), variant.as_deref(), &format)
        }
        Command::Gradcheck { scope, negative_control } => {
            cmd_gradcheck(&config, &scope, negative_control)
        }
    }
}

fn merge_overrides(config: &mut CliConfig, command: &Command) {
    match command {
        Command::Synth { volumes, extent, classes, .. } => {
            if let Some(n) = volumes {
                config.synth.cases = *n;
            }
            if let Some(e) = extent {
                config.synth.extent = *e;
            }
            if let Some(c) = classes {
                config.synth.classes = *c;
            }
        }
        Command::Train { steps, .. } => {
            if let Some(s) = steps {
                config.train.steps = *s;
            }
        }
        _ => {}
    }
}

fn cmd_synth(config: &CliConfig, out: Option<PathBuf>) -> Result<(), CliError> {
    let out = config.require_out_dir(out)?;
    config
        .synth
        .validate()
        .map_err(|e| CliError::Usage(format!("config: {e}")))?;
    let manifest = generate_dataset(&config.synth, config.train.seed, &out).map_err(runtime)?;
    let counts = manifest.split_counts();
    println!(
        "wrote {} cases ({} classes, {}^3 voxels): {} train / {} val / {} test",
        manifest.cases.len(),
        manifest.classes,
        config.synth.extent,
        counts[0],
        counts[1],
        counts[2],
    );
    println!("manifest: {}", out.join(MANIFEST_NAME).display());
    Ok(())
}

fn cmd_train(
    config: &CliConfig,
    data: Option<PathBuf>,
    out: Option<PathBuf>,
    resume: Option<PathBuf>,
) -> Result<(), CliError> {
    let data = config.require_data_dir(data)?;
    let out = config.require_out_dir(out)?;
    config.train.validate().map_err(classify)?;
    let report = train::<f32>(&config.train, &data, &out, resume.as_deref()).map_err(|e| {
        // Whatever went wrong mid-run, the metrics written so far are the
        // diagnostic trail; point at them.
        let metrics = out.join("metrics.jsonl");
        match classify(e) {
            CliError::Usage(m) => CliError::Usage(m),
            CliError::Runtime(m) => {
                CliError::Runtime(format!("{m} (metrics log: {})", metrics.display()))
            }
        }
    })?;
    println!(
        "trained {} steps: final loss {:.6}, best val Dice {}",
        report.steps_run,
        report.final_loss,
        match report.best_val_dice {
            Some(d) => format!("{d:.4}"),
            None => "n/a (no evaluations)".to_string(),
        },
    );
    println!("last checkpoint: {}", report.last_checkpoint.display());
    if let Some(best) = &report.best_checkpoint {
        println!("best checkpoint: {}", best.display());
    }
    println!("metrics: {}", out.join("metrics.jsonl").display());
    Ok(())
}

fn load_model(path: &Path) -> Result<UXNet3d<f32>, CliError> {
    let ckpt = Checkpoint::<f32>::load(path)
        .map_err(|e| CliError::Runtime(format!("checkpoint {}: {e}", path.display())))?;
    UXNet3d::from_checkpoint(&ckpt)
        .map_err(|e| CliError::Runtime(format!("checkpoint {}: {e}", path.display())))
}

fn parse_split(name: &str) -> Result<Split, CliError> {
    match name {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(CliError::Usage(format!(
            "unknown split {other:?} (expected train, val, or test)"
        ))),
    }
}

fn cmd_eval(
    config: &CliConfig,
    checkpoint: &Path,
    data: Option<PathBuf>,
    split: &str,
) -> Result<(), CliError> {
    let data = config.require_data_dir(data)?;
    let split = parse_split(split)?;
    let model = load_model(checkpoint)?;
    let report = evaluate(&model, &data, split, config.train.overlap).map_err(classify)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

/// Reads an image volume by extension: the raw codec for `.uxv`,
/// uncompressed NIfTI-1 for `.nii`.
fn read_image(path: &Path) -> Result<Volume, CliError> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    if name.ends_with(".nii.gz") {
        return Err(CliError::Usage(format!(
            "{}: gzip-compressed NIfTI is not supported; decompress to .nii first",
            path.display()
        )));
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("uxv") => load_volume(path).map_err(runtime),
        Some("nii") => read_nifti(path).map_err(runtime),
        _ => Err(CliError::Usage(format!(
            "{}: unrecognized image extension (expected .uxv or .nii)",
            path.display()
        ))),
    }
}

fn cmd_infer(
    config: &CliConfig,
    checkpoint: &Path,
    input: &Path,
    output: &Path,
) -> Result<(), CliError> {
    let model = load_model(checkpoint)?;
    let image = read_image(input)?;
    let normalized = percentile_normalize(&image).map_err(runtime)?;
    let probs =
        sliding_window_infer(&model, &normalized, config.train.overlap).map_err(classify)?;
    let labels = argmax_channels(&probs);
    let prediction = LabelVolume::new(
        image.extents,
        image.spacing,
        model.config().num_classes,
        labels,
    )
    .map_err(runtime)?;
    save_label(&prediction, output).map_err(runtime)?;
    println!(
        "wrote {} ({}x{}x{} voxels, {} classes)",
        output.display(),
        prediction.extents[0],
        prediction.extents[1],
        prediction.extents[2],
        prediction.num_classes,
    );
    Ok(())
}

fn parse_format(name: &str) -> Result<TableFormat, CliError> {
    match name {
        "markdown" | "md" => Ok(TableFormat::Markdown),
        "csv" => Ok(TableFormat::Csv),
        "json" => Ok(TableFormat::Json),
        other => Err(CliError::Usage(format!(
            "unknown format {other:?} (expected markdown, csv, or json)"
        ))),
    }
}

fn preset(name: &str) -> Result<UXNetConfig, CliError> {
    match name {
        "default" => Ok(UXNetConfig::default()),
        "optimized" => Ok(UXNetConfig::optimized()),
        "tiny" => Ok(UXNetConfig::tiny()),
        other => Err(CliError::Usage(format!(
            "unknown variant {other:?} (expected default, optimized, or tiny)"
        ))),
    }
}

fn cmd_analyze(
    config: &CliConfig,
    sweep_kernel: Option<&str>,
    variant: Option<&str>,
    format: &str,
) -> Result<(), CliError> {
    let format = parse_format(format)?;
    let base = match variant {
        Some(name) => preset(name)?,
        None => config.train.model.clone(),
    };
    let rows: Vec<AblationRow> = match (sweep_kernel, variant) {
        // Bare `analyze` emits the full ablation grid over the published
        // architecture; rows for a specific model come from the flags.
        (None, None) => ablation_rows(),
        (None, Some(name)) => {
            base.validate().map_err(|e| CliError::Usage(format!("config: {e}")))?;
            vec![ablation_row(name, &base)]
        }
        (Some(list), _) => {
            let mut rows = Vec::new();
            let mut failures = Vec::new();
            for item in list.split(',') {
                let k: usize = item.trim().parse().map_err(|_| {
                    CliError::Usage(format!("--sweep-kernel: {item:?} is not an integer"))
                })?;
                let cfg = UXNetConfig {
                    kernel_size: k,
                    patch_embed_kernel: Some(base.stem_kernel()),
                    ..base.clone()
                };
                match cfg.validate() {
                    Ok(()) => rows.push(ablation_row(&format!("k={k}"), &cfg)),
                    Err(e) => {
                        eprintln!("k={k}: {e}");
                        failures.push(k);
                    }
                }
            }
            if !failures.is_empty() {
                return Err(CliError::Usage(format!(
                    "invalid kernel sizes in sweep: {failures:?}"
                )));
            }
            rows
        }
    };
    print!("{}", format_ablation_rows(&rows, format));
    // Markdown/CSV tables always end in a newline; JSON does not.
    if matches!(format, TableFormat::Json) {
        println!();
    }
    Ok(())
}

fn cmd_gradcheck(config: &CliConfig, scope: &str, negative_control: bool) -> Result<(), CliError> {
    let seed = config.train.seed;
    let mut reports = gradcheck::run_op_suite(seed);
    if scope != "all" {
        let all_ops: Vec<String> = reports.iter().map(|r| r.op.clone()).collect();
        reports.retain(|r| r.op.starts_with(scope));
        if reports.is_empty() {
            return Err(CliError::Usage(format!(
                "no op matches {scope:?}; available: {}",
                all_ops.join(", ")
            )));
        }
    }
    if negative_control {
        reports.push(gradcheck::negative_control(seed));
    }
    print_gradcheck_table(&reports);
    let failed: Vec<&str> =
        reports.iter().filter(|r| !r.passed).map(|r| r.op.as_str()).collect();
    if failed.is_empty() {
        println!("all checks passed ({})", reports.len());
        Ok(())
    } else {
        Err(CliError::Runtime(format!("gradient check failed: {}", failed.join(", "))))
    }
}

fn print_gradcheck_table(reports: &[GradCheckReport]) {
    let width = reports.iter().map(|r| r.op.len()).max().unwrap_or(2).max(2);
    println!("{:<width$}  {:>10}  {:>12}  {:>12}  status", "op", "components", "max abs err", "max rel err");
    for r in reports {
        println!(
            "{:<width$}  {:>10}  {:>12.3e}  {:>12.3e}  {}",
            r.op,
            r.components,
            r.max_abs_err,
            r.max_rel_err,
            if r.passed { "pass" } else { "FAIL" },
        );
    }
}
