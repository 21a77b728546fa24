//! Closed-form cost accounting: parameter counts, multiply-accumulates,
//! receptive field, and the ablation tables built from them.
//!
//! Conventions:
//! - `macs` counts convolution multiply-accumulates only (batch 1), the
//!   standard for reporting segmentation-network cost. Biases, norms, and
//!   activations are excluded from the headline but itemized separately.
//! - `flops` is the headline 2x-MAC figure (one multiply + one add each).
//! - Transposed k2s2 convolutions touch each output voxel with exactly one
//!   kernel tap, so their MACs are `out_voxels x out_ch x in_ch`.
//!
//! `count_params` is tested to agree exactly with what
//! [`UXNet3d::build`](crate::model::UXNet3d::build) registers, so the table
//! numbers cannot drift from the real network.

use serde::Serialize;

use crate::config::{ConvKind, ScalingKind, UXNetConfig};

/// Cost summary for one architecture at one input extent.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CostReport {
    /// Cubic input extent the MAC figures refer to (batch 1, `in_channels`).
    pub extent: usize,
    pub params: u64,
    /// Convolution multiply-accumulates.
    pub macs: u64,
    /// Headline figure: `2 * macs`.
    pub flops: u64,
    /// Normalization cost (8 flops per normalized element), itemized.
    pub norm_flops: u64,
    /// Activation cost (10 per GELU element, 2 per leaky-ReLU element).
    pub act_flops: u64,
}

fn cube(e: usize) -> u64 {
    (e as u64).pow(3)
}

/// Residual-block parameters: two k^3 convs with affine instance norms, plus
/// a 1x1x1 projection skip when the channel count changes.
fn resblock_params(i: u64, o: u64, k: u64) -> u64 {
    let mut p = k.pow(3) * i * o + 2 * o;
    p += k.pow(3) * o * o + 2 * o;
    if i != o {
        p += i * o + 2 * o;
    }
    p
}

fn resblock_macs(i: u64, o: u64, vox: u64, k: u64) -> u64 {
    let mut m = vox * o * i * k.pow(3);
    m += vox * o * o * k.pow(3);
    if i != o {
        m += vox * o * i;
    }
    m
}

/// Encoder-block parameters by scaling/conv kind.
fn block_params(c: u64, k: u64, scaling: ScalingKind, conv: ConvKind) -> u64 {
    let mix = match conv {
        ConvKind::Depthwise => c * k.pow(3) + c,
        ConvKind::Standard => c * c * k.pow(3) + c,
    };
    let (scale, norms) = match scaling {
        ScalingKind::Dcs => (13 * c, 4 * c),
        ScalingKind::Mlp => (8 * c * c + 5 * c, 4 * c),
        ScalingKind::None => (0, 2 * c),
    };
    mix + norms + scale
}

fn block_macs(c: u64, k: u64, vox: u64, scaling: ScalingKind, conv: ConvKind) -> u64 {
    let mix = match conv {
        ConvKind::Depthwise => vox * c * k.pow(3),
        ConvKind::Standard => vox * c * c * k.pow(3),
    };
    let scale = match scaling {
        ScalingKind::Dcs => vox * 8 * c,
        ScalingKind::Mlp => vox * 8 * c * c,
        ScalingKind::None => 0,
    };
    mix + scale
}

/// Parameters and conv MACs for a cubic input of `extent` voxels, walking
/// the exact wiring of [`UXNet3d`](crate::model::UXNet3d).
pub fn costs(config: &UXNetConfig, extent: usize) -> CostReport {
    let [c1, c2, c3, c4] = config.stage_channels.map(|c| c as u64);
    let chans = [c1, c2, c3, c4];
    let k = config.kernel_size as u64;
    let pe = config.stem_kernel() as u64;
    let inc = config.in_channels as u64;
    let cls = config.num_classes as u64;

    let mut params = 0u64;
    let mut macs = 0u64;
    let mut norm_elems = 0u64; // elements passing through any norm
    let mut gelu_elems = 0u64;
    let mut leaky_elems = 0u64;

    // Stem to half resolution.
    let s = extent / 2;
    let res = [s, s / 2, s / 4, s / 8];
    params += inc * c1 * pe.pow(3) + c1;
    macs += cube(s) * c1 * inc * pe.pow(3);

    // Encoder stages and downsamples.
    for i in 0..4 {
        let c = chans[i];
        let vox = cube(res[i]);
        for _ in 0..config.depths[i] {
            params += block_params(c, k, config.scaling, config.conv);
            macs += block_macs(c, k, vox, config.scaling, config.conv);
            norm_elems += vox * c * if config.scaling == ScalingKind::None { 1 } else { 2 };
            if config.scaling != ScalingKind::None {
                gelu_elems += vox * 4 * c;
            }
        }
        if i < 3 {
            let next = chans[i + 1];
            params += 8 * c * next + next;
            macs += cube(res[i + 1]) * next * c * 8;
        }
    }

    // Bottleneck level at 1/32.
    if let Some(b) = config.bottleneck_channels {
        let h = b as u64;
        let bres = res[3] / 2;
        let bvox = cube(bres);
        params += 8 * c4 * h + h;
        macs += bvox * h * c4 * 8;
        params += c4 * h + 2 * c4 + 27 * c4 * c4 + 2 * c4 + c4 * h + 2 * h;
        macs += bvox * (c4 * h + 27 * c4 * c4 + h * c4);
        norm_elems += bvox * (2 * c4 + h);
        leaky_elems += bvox * (2 * c4 + h);
    }

    // Skip refiners (full resolution first).
    let refine_io: [(u64, u64, u64); 5] = [
        (inc, c1, cube(extent)),
        (c1, 2 * c1, cube(res[0])),
        (c2, 2 * c2, cube(res[1])),
        (c3, 2 * c3, cube(res[2])),
        (c4, c4, cube(res[3])),
    ];
    for &(i, o, vox) in &refine_io {
        params += resblock_params(i, o, 3);
        macs += resblock_macs(i, o, vox, 3);
        norm_elems += vox * o * if i != o { 3 } else { 2 };
        leaky_elems += vox * o * 3;
    }

    // Decoder ladder.
    if let Some(b) = config.bottleneck_channels {
        let h = b as u64;
        let vox = cube(res[3]);
        params += 8 * h * c4; // up5, bias-free
        macs += vox * c4 * h;
        params += resblock_params(2 * c4, c4, 3);
        macs += resblock_macs(2 * c4, c4, vox, 3);
        norm_elems += vox * c4 * 3;
        leaky_elems += vox * c4 * 3;
    }
    let decoder_io: [(u64, u64, u64, u64, u64, u64); 4] = [
        // (up_in, up_out, merge_in, merge_out, vox, merge kernel)
        (c4, c3, 3 * c3, 2 * c3, cube(res[2]), 3),
        (2 * c3, 2 * c2, 4 * c2, 2 * c2, cube(res[1]), 3),
        (2 * c2, 2 * c1, 4 * c1, 2 * c1, cube(res[0]), 3),
        (2 * c1, c1, 2 * c1, c1, cube(extent), 1),
    ];
    for &(ui, uo, mi, mo, vox, mk) in &decoder_io {
        params += 8 * ui * uo;
        macs += vox * uo * ui;
        params += resblock_params(mi, mo, mk);
        macs += resblock_macs(mi, mo, vox, mk);
        norm_elems += vox * mo * 3;
        leaky_elems += vox * mo * 3;
    }

    // Head, plus aux heads under deep supervision.
    params += c1 * cls + cls;
    macs += cube(extent) * cls * c1;
    if config.deep_supervision {
        let aux_io = [(2 * c3, cube(res[2])), (2 * c2, cube(res[1])), (2 * c1, cube(res[0]))];
        for &(ic, vox) in &aux_io {
            params += ic * cls + cls;
            macs += vox * cls * ic;
        }
    }

    CostReport {
        extent,
        params,
        macs,
        flops: 2 * macs,
        norm_flops: 8 * norm_elems,
        act_flops: 10 * gelu_elems + 2 * leaky_elems,
    }
}

/// Parameter count alone (extent-independent).
pub fn count_params(config: &UXNetConfig) -> u64 {
    costs(config, config.patch_size).params
}

/// One step of the receptive-field recurrence.
#[derive(Clone, Debug, Serialize)]
pub struct RfEntry {
    pub layer: String,
    /// Receptive-field extent (voxels of the input, per axis).
    pub rf: u64,
    /// Stride product ("jump") after this layer.
    pub jump: u64,
}

/// Receptive-field trace along the encoder's main path: every layer `L`
/// with kernel `k` and stride `s` applies `rf += (k-1)*jump; jump *= s`.
/// Pointwise (1x1x1) layers are omitted — they add nothing.
pub fn receptive_field(config: &UXNetConfig) -> Vec<RfEntry> {
    let mut rf = 1u64;
    let mut jump = 1u64;
    let mut trace = Vec::new();
    let mut conv = |name: String, k: u64, s: u64, trace: &mut Vec<RfEntry>| {
        rf += (k - 1) * jump;
        jump *= s;
        trace.push(RfEntry { layer: name, rf, jump });
    };
    conv("stem".into(), config.stem_kernel() as u64, 2, &mut trace);
    for i in 0..4 {
        for b in 0..config.depths[i] {
            conv(
                format!("stage{}.block{b}.dwc", i + 1),
                config.kernel_size as u64,
                1,
                &mut trace,
            );
        }
        if i < 3 {
            conv(format!("down{}", i + 1), 2, 2, &mut trace);
        }
    }
    if config.bottleneck_channels.is_some() {
        conv("down4".into(), 2, 2, &mut trace);
        conv("bottleneck.conv".into(), 3, 1, &mut trace);
    }
    trace
}

/// Final receptive-field extent at the deepest encoder layer.
pub fn receptive_field_extent(config: &UXNetConfig) -> u64 {
    receptive_field(config).last().map(|e| e.rf).unwrap_or(1)
}

/// Output format of [`emit_ablation_table`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Csv,
    Json,
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub kernel: usize,
    pub params: u64,
    pub params_m: f64,
    pub gmacs: f64,
    pub gflops: f64,
    pub receptive_field: u64,
}

/// One table row for a named variant, costed at its own `patch_size`.
pub fn ablation_row(variant: &str, config: &UXNetConfig) -> AblationRow {
    let c = costs(config, config.patch_size);
    AblationRow {
        variant: variant.to_string(),
        kernel: config.kernel_size,
        params: c.params,
        params_m: c.params as f64 / 1e6,
        gmacs: c.macs as f64 / 1e9,
        gflops: c.flops as f64 / 1e9,
        receptive_field: receptive_field_extent(config),
    }
}

/// The ablation grid: the kernel-size sweep (stem pinned at 7), the scaling
/// and convolution variants at kernel 7, and the optimized architecture.
pub fn ablation_rows() -> Vec<AblationRow> {
    let mut rows = Vec::new();
    for k in [3usize, 5, 7, 9, 11, 13] {
        let cfg = UXNetConfig {
            kernel_size: k,
            patch_embed_kernel: Some(7),
            ..UXNetConfig::default()
        };
        let name = if k == 7 { "default (k=7)".to_string() } else { format!("kernel {k}") };
        rows.push(ablation_row(&name, &cfg));
    }
    let mlp = UXNetConfig { scaling: ScalingKind::Mlp, ..UXNetConfig::default() };
    rows.push(ablation_row("pointwise mlp", &mlp));
    let none = UXNetConfig { scaling: ScalingKind::None, ..UXNetConfig::default() };
    rows.push(ablation_row("no scaling branch", &none));
    let std = UXNetConfig { conv: ConvKind::Standard, ..UXNetConfig::default() };
    rows.push(ablation_row("standard conv", &std));
    rows.push(ablation_row("optimized", &UXNetConfig::optimized()));
    rows
}

pub fn emit_ablation_table(format: TableFormat) -> String {
    format_ablation_rows(&ablation_rows(), format)
}

/// Renders a set of rows in the requested format. Markdown and CSV carry
/// the same columns; JSON serializes the rows verbatim.
pub fn format_ablation_rows(rows: &[AblationRow], format: TableFormat) -> String {
    match format {
        TableFormat::Markdown => {
            let mut s = String::from(
                "| variant | kernel | params | params (M) | GMACs | GFLOPs | receptive field |\n\
                 |---|---|---|---|---|---|---|\n",
            );
            for r in rows {
                s.push_str(&format!(
                    "| {} | {} | {} | {:.2} | {:.1} | {:.1} | {} |\n",
                    r.variant, r.kernel, r.params, r.params_m, r.gmacs, r.gflops, r.receptive_field
                ));
            }
            s
        }
        TableFormat::Csv => {
            let mut s =
                String::from("variant,kernel,params,params_m,gmacs,gflops,receptive_field\n");
            for r in rows {
                s.push_str(&format!(
                    "{},{},{},{:.4},{:.3},{:.3},{}\n",
                    r.variant, r.kernel, r.params, r.params_m, r.gmacs, r.gflops, r.receptive_field
                ));
            }
            s
        }
        TableFormat::Json => serde_json::to_string_pretty(rows).expect("rows serialize"),
    }
}
