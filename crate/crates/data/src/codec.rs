//! On-disk volume format: raw little-endian samples plus a JSON sidecar.
//!
//! A volume named `case.uxv` is stored as two files: `case.uxv` holding the
//! raw sample bytes in `(H, W, D)` order with `D` fastest, and
//! `case.uxv.json` describing the geometry:
//!
//! ```json
//! {"extents": [64, 64, 64], "dtype": "f32", "spacing": [1.0, 1.0, 1.0], "kind": "image"}
//! ```
//!
//! Label volumes use `"dtype": "i32"`, `"kind": "label"`, and an extra
//! `"num_classes"` field. Loads are strict: extents, dtype, kind, and byte
//! counts must all agree, and samples are validated on the way in.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{DataError, LabelVolume, Result, Volume};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    extents: [usize; 3],
    dtype: String,
    spacing: [f32; 3],
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num_classes: Option<usize>,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".json");
    std::path::PathBuf::from(name)
}

fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let text = fs::read_to_string(sidecar_path(path)).map_err(|e| {
        DataError::Codec(format!("missing sidecar for {}: {e}", path.display()))
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn check_payload(path: &Path, bytes: &[u8], numel: usize) -> Result<()> {
    if bytes.len() != numel * 4 {
        return Err(DataError::Codec(format!(
            "{}: payload is {} bytes, expected {} ({} samples of 4 bytes)",
            path.display(),
            bytes.len(),
            numel * 4,
            numel
        )));
    }
    Ok(())
}

/// Writes an image volume as `path` plus its `path.json` sidecar.
pub fn save_volume(vol: &Volume, path: &Path) -> Result<()> {
    let sidecar = Sidecar {
        extents: vol.extents,
        dtype: "f32".to_string(),
        spacing: vol.spacing,
        kind: "image".to_string(),
        num_classes: None,
    };
    let mut bytes = Vec::with_capacity(vol.data.len() * 4);
    for v in &vol.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

/// Reads an image volume written by [`save_volume`].
pub fn load_volume(path: &Path) -> Result<Volume> {
    let sidecar = read_sidecar(path)?;
    if sidecar.dtype != "f32" || sidecar.kind != "image" {
        return Err(DataError::Codec(format!(
            "{}: expected dtype f32 / kind image, found {} / {}",
            path.display(),
            sidecar.dtype,
            sidecar.kind
        )));
    }
    let numel = sidecar.extents.iter().product::<usize>();
    let bytes = fs::read(path)?;
    check_payload(path, &bytes, numel)?;
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Volume::new(sidecar.extents, sidecar.spacing, data)
}

/// Writes a label volume as `path` plus its `path.json` sidecar.
pub fn save_label(lab: &LabelVolume, path: &Path) -> Result<()> {
    let sidecar = Sidecar {
        extents: lab.extents,
        dtype: "i32".to_string(),
        spacing: lab.spacing,
        kind: "label".to_string(),
        num_classes: Some(lab.num_classes),
    };
    let mut bytes = Vec::with_capacity(lab.data.len() * 4);
    for v in &lab.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

/// Reads a label volume written by [`save_label`].
pub fn load_label(path: &Path) -> Result<LabelVolume> {
    let sidecar = read_sidecar(path)?;
    if sidecar.dtype != "i32" || sidecar.kind != "label" {
        return Err(DataError::Codec(format!(
            "{}: expected dtype i32 / kind label, found {} / {}",
            path.display(),
            sidecar.dtype,
            sidecar.kind
        )));
    }
    let num_classes = sidecar.num_classes.ok_or_else(|| {
        DataError::Codec(format!("{}: label sidecar lacks num_classes", path.display()))
    })?;
    let numel = sidecar.extents.iter().product::<usize>();
    let bytes = fs::read(path)?;
    check_payload(path, &bytes, numel)?;
    let data: Vec<i32> = bytes
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    LabelVolume::new(sidecar.extents, sidecar.spacing, num_classes, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_volume() -> Volume {
        let data: Vec<f32> = (0..60).map(|i| i as f32 * 0.25).collect();
        Volume::new([3, 4, 5], [1.0, 2.0, 3.0], data).unwrap()
    }

    #[test]
    fn image_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("case.uxv");
        let vol = ramp_volume();
        save_volume(&vol, &path).unwrap();
        let back = load_volume(&path).unwrap();
        assert_eq!(back, vol);
    }

    #[test]
    fn label_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("case_lab.uxv");
        let lab = LabelVolume::new(
            [2, 3, 2],
            [1.0; 3],
            4,
            vec![0, 1, 2, 3, 0, 1, 2, 3, 0, 1, 2, 3],
        )
        .unwrap();
        save_label(&lab, &path).unwrap();
        let back = load_label(&path).unwrap();
        assert_eq!(back, lab);
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("case.uxv");
        save_volume(&ramp_volume(), &path).unwrap();
        assert!(load_label(&path).is_err());
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("case.uxv");
        save_volume(&ramp_volume(), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(load_volume(&path).is_err());
    }

    #[test]
    fn missing_sidecar_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("case.uxv");
        save_volume(&ramp_volume(), &path).unwrap();
        fs::remove_file(sidecar_path(&path)).unwrap();
        assert!(load_volume(&path).is_err());
    }
}
