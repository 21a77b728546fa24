//! Network hyperparameters and the named presets used throughout.

use serde::{Deserialize, Serialize};

use crate::{ModelError, Result};

/// What follows the depthwise convolution inside an encoder block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalingKind {
    /// Depthwise channel scaling: per-channel 1x1x1 expansion to 4C,
    /// GELU, grouped compression back to C. 13C parameters per block.
    Dcs,
    /// Dense pointwise MLP C -> 4C -> C. 8C^2 + 5C parameters per block.
    Mlp,
    /// No second branch: the block is just the depthwise residual.
    None,
}

/// Spatial mixing convolution inside an encoder block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvKind {
    /// One k^3 filter per channel (the default large-kernel design).
    Depthwise,
    /// Dense C -> C convolution, used only to measure the cost gap.
    Standard,
}

/// Full architectural description. Serializes to strict JSON: unknown keys
/// are rejected, omitted keys take the defaults below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UXNetConfig {
    /// Input image channels (modalities).
    pub in_channels: usize,
    /// Segmentation classes, background included.
    pub num_classes: usize,
    /// Encoder widths per stage, at 1/2, 1/4, 1/8, 1/16 resolution.
    pub stage_channels: [usize; 4],
    /// Encoder blocks per stage.
    pub depths: [usize; 4],
    /// Depthwise kernel extent (odd).
    pub kernel_size: usize,
    /// Stem (patch embedding) kernel extent; `None` pins it at 7 so kernel
    /// sweeps change only the encoder blocks.
    pub patch_embed_kernel: Option<usize>,
    /// Second-branch design of each encoder block.
    pub scaling: ScalingKind,
    /// Spatial mixing convolution kind.
    pub conv: ConvKind,
    /// Width of the 1/32-resolution bottleneck level, or `None` to end the
    /// encoder at 1/16.
    pub bottleneck_channels: Option<usize>,
    /// Attach auxiliary heads at the 1/8, 1/4, 1/2 decoder merges.
    pub deep_supervision: bool,
    /// Training patch extent per axis.
    pub patch_size: usize,
}

impl Default for UXNetConfig {
    fn default() -> Self {
        UXNetConfig {
            in_channels: 1,
            num_classes: 5,
            stage_channels: [48, 96, 192, 384],
            depths: [2, 2, 2, 2],
            kernel_size: 7,
            patch_embed_kernel: None,
            scaling: ScalingKind::Dcs,
            conv: ConvKind::Depthwise,
            bottleneck_channels: Some(768),
            deep_supervision: false,
            patch_size: 96,
        }
    }
}

impl UXNetConfig {
    /// Deeper third stage, no bottleneck level: fewer parameters at the
    /// same accuracy band.
    pub fn optimized() -> Self {
        UXNetConfig {
            depths: [2, 2, 8, 2],
            bottleneck_channels: None,
            ..Self::default()
        }
    }

    /// Desk-scale preset for smoke training: narrow widths, 3 classes,
    /// 32-voxel patches, no bottleneck.
    pub fn tiny() -> Self {
        UXNetConfig {
            num_classes: 3,
            stage_channels: [8, 16, 32, 64],
            bottleneck_channels: None,
            patch_size: 32,
            ..Self::default()
        }
    }

    /// Stem kernel extent after applying the pin-at-7 default.
    pub fn stem_kernel(&self) -> usize {
        self.patch_embed_kernel.unwrap_or(7)
    }

    /// Factor between input extent and the coarsest feature map.
    pub fn total_downsampling(&self) -> usize {
        if self.bottleneck_channels.is_some() {
            32
        } else {
            16
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(ModelError::Config(m));
        if self.in_channels == 0 {
            return err("in_channels must be positive".into());
        }
        if self.num_classes < 2 {
            return err(format!("num_classes must be >= 2, got {}", self.num_classes));
        }
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return err(format!("kernel_size must be odd, got {}", self.kernel_size));
        }
        let pe = self.stem_kernel();
        if pe == 0 || pe % 2 == 0 {
            return err(format!("patch_embed_kernel must be odd, got {pe}"));
        }
        if self.stage_channels.iter().any(|&c| c == 0) {
            return err(format!("stage_channels must be positive, got {:?}", self.stage_channels));
        }
        if self.depths.iter().any(|&d| d == 0) {
            return err(format!("depths must be positive, got {:?}", self.depths));
        }
        if let Some(b) = self.bottleneck_channels {
            if b == 0 {
                return err("bottleneck_channels must be positive when present".into());
            }
        }
        let div = self.total_downsampling();
        if self.patch_size == 0 || self.patch_size % div != 0 {
            return err(format!(
                "patch_size {} must be a positive multiple of {div} \
                 (the total downsampling factor)",
                self.patch_size
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: UXNetConfig =
            serde_json::from_str(s).map_err(|e| ModelError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
