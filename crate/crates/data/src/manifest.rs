//! Dataset manifest: the case list and split assignment for a directory of
//! volumes, stored as `manifest.json` alongside the data files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{DataError, Result};

/// Which partition a case belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One image/label pair. Paths are stored relative to the manifest's
/// directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseEntry {
    pub name: String,
    pub image: String,
    pub label: String,
    pub split: Split,
}

impl CaseEntry {
    /// Absolute image path given the dataset directory.
    pub fn image_path(&self, dir: &Path) -> PathBuf {
        dir.join(&self.image)
    }

    /// Absolute label path given the dataset directory.
    pub fn label_path(&self, dir: &Path) -> PathBuf {
        dir.join(&self.label)
    }
}

/// The case list for one dataset directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub classes: usize,
    pub cases: Vec<CaseEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl DatasetManifest {
    fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(DataError::Manifest(format!(
                "classes must be at least 2, got {}",
                self.classes
            )));
        }
        if self.cases.is_empty() {
            return Err(DataError::Manifest("manifest lists no cases".to_string()));
        }
        let mut names: Vec<&str> = self.cases.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if let Some(dup) = names.windows(2).find(|p| p[0] == p[1]) {
            return Err(DataError::Manifest(format!("duplicate case name {}", dup[0])));
        }
        Ok(())
    }

    /// Writes `manifest.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join(MANIFEST_NAME), text)?;
        Ok(())
    }

    /// Reads and validates `dir/manifest.json`.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_NAME);
        let text = std::fs::read_to_string(&path).map_err(|e| {
            DataError::Manifest(format!("cannot read {}: {e}", path.display()))
        })?;
        let manifest: Self = serde_json::from_str(&text)?;
        manifest.validate()?;
        Ok(manifest)
    }

    /// Cases belonging to `split`, in manifest order.
    pub fn cases_in(&self, split: Split) -> Vec<&CaseEntry> {
        self.cases.iter().filter(|c| c.split == split).collect()
    }

    /// Number of cases in each of train/val/test.
    pub fn split_counts(&self) -> [usize; 3] {
        let mut counts = [0usize; 3];
        for case in &self.cases {
            let slot = match case.split {
                Split::Train => 0,
                Split::Val => 1,
                Split::Test => 2,
            };
            counts[slot] += 1;
        }
        counts
    }
}
