//! The single JSON configuration every subcommand reads: the training
//! recipe (which embeds the architecture and augmentation parameters), the
//! synthetic-dataset geometry, and optional dataset/output directories so
//! sweeps can be driven entirely from files. Parsing is strict — unknown
//! keys are rejected rather than silently ignored — and every default is
//! visible via `--print-config`, whose output parses back to the same
//! configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uxnet_data::SynthConfig;
use uxnet_train::TrainConfig;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    /// Training recipe: model architecture, optimizer constants, schedule,
    /// augmentation ranges, seed, and determinism flag.
    pub train: TrainConfig,
    /// Synthetic-dataset geometry used by `synth`.
    pub synth: SynthConfig,
    /// Dataset directory; `--data` overrides it where accepted.
    pub data_dir: Option<PathBuf>,
    /// Output directory; `--out` overrides it where accepted.
    pub out_dir: Option<PathBuf>,
}

impl CliConfig {
    /// Loads a config file, or the defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(CliConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    /// The merged configuration as pretty JSON, suitable for reuse as a
    /// config file.
    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The dataset directory after flag overrides, or a usage error naming
    /// both ways to provide one.
    pub fn require_data_dir(&self, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        flag.or_else(|| self.data_dir.clone()).ok_or_else(|| {
            CliError::Usage("no dataset directory (pass --data or set data_dir)".into())
        })
    }

    /// The output directory after flag overrides, or a usage error naming
    /// both ways to provide one.
    pub fn require_out_dir(&self, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        flag.or_else(|| self.out_dir.clone()).ok_or_else(|| {
            CliError::Usage("no output directory (pass --out or set out_dir)".into())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_json() {
        let config = CliConfig::default();
        let text = config.to_pretty_json();
        let back: CliConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn defaults_mirror_published_recipe() {
        let config = CliConfig::default();
        assert_eq!(config.train.steps, 40_000);
        assert_eq!(config.train.batch_size, 2);
        assert_eq!(config.train.crops_per_volume, 2);
        assert_eq!(config.train.lr, 1e-4);
        assert_eq!(config.train.weight_decay, 0.08);
        assert_eq!(config.train.model.stage_channels, [48, 96, 192, 384]);
        assert_eq!(config.train.model.bottleneck_channels, Some(768));
        assert_eq!(config.train.model.patch_size, 96);
        assert_eq!(config.train.augment_params.max_rotate_deg, 30.0);
        assert_eq!(config.train.augment_params.max_intensity_offset, 0.1);
        assert_eq!(config.train.augment_params.scale_lo, 0.9);
        assert_eq!(config.train.augment_params.scale_hi, 1.1);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<CliConfig>(r#"{"trian": {}}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"));
        let err =
            serde_json::from_str::<CliConfig>(r#"{"train": {"learning_rate": 1.0}}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"));
    }
}
