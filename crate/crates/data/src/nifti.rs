//! Minimal NIfTI-1 reader for single-file (`.nii`) volumes.
//!
//! Supports the subset needed to ingest real scans: little-endian files,
//! three spatial dimensions, `int16` or `float32` samples, and the
//! `scl_slope`/`scl_inter` affine rescale. Compressed files, detached
//! `.hdr`/`.img` pairs, and other sample types are rejected with a
//! descriptive error rather than guessed at.
//!
//! NIfTI stores voxel `(i, j, k)` with `i` fastest; the returned [`Volume`]
//! keeps the bytes in file order and exposes extents `[nz, ny, nx]` and
//! spacing `[pixdim3, pixdim2, pixdim1]` so the contiguous file axis stays
//! the contiguous `D` axis.

use std::path::Path;

use crate::{DataError, Result, Volume};

const HEADER_LEN: usize = 348;
/// Minimum size of a single-file NIfTI: header plus the 4-byte extension flag.
const MIN_FILE_LEN: usize = HEADER_LEN + 4;

const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;

fn read_i32(bytes: &[u8], offset: usize) -> i32 {
    i32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

fn read_i16(bytes: &[u8], offset: usize) -> i16 {
    i16::from_le_bytes(bytes[offset..offset + 2].try_into().unwrap())
}

fn read_f32(bytes: &[u8], offset: usize) -> f32 {
    f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

/// Reads a little-endian single-file NIfTI-1 volume from `path`.
pub fn read_nifti(path: &Path) -> Result<Volume> {
    let bytes = std::fs::read(path)?;
    let err = |msg: String| DataError::Nifti(format!("{}: {msg}", path.display()));

    if bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b {
        return Err(err(
            "gzip-compressed file; decompress to a plain .nii first".to_string(),
        ));
    }
    if bytes.len() < MIN_FILE_LEN {
        return Err(err(format!(
            "file is {} bytes, shorter than the {MIN_FILE_LEN}-byte minimum",
            bytes.len()
        )));
    }

    let sizeof_hdr = read_i32(&bytes, 0);
    if sizeof_hdr != HEADER_LEN as i32 {
        // 348 with its bytes swapped is the signature of a big-endian file.
        if sizeof_hdr.swap_bytes() == HEADER_LEN as i32 {
            return Err(err("big-endian file; only little-endian is supported".to_string()));
        }
        return Err(err(format!("sizeof_hdr is {sizeof_hdr}, expected 348")));
    }

    let magic = &bytes[344..348];
    if magic == b"ni1\0" {
        return Err(err(
            "detached .hdr/.img pair; only single-file n+1 volumes are supported".to_string(),
        ));
    }
    if magic != b"n+1\0" {
        return Err(err(format!("bad magic {:?}, expected \"n+1\"", magic)));
    }

    let rank = read_i16(&bytes, 40);
    if !(3..=7).contains(&rank) {
        return Err(err(format!("dim[0] is {rank}, expected a 3-D volume")));
    }
    let mut dims = [0usize; 3];
    for (axis, dim) in dims.iter_mut().enumerate() {
        let v = read_i16(&bytes, 40 + 2 * (axis + 1));
        if v < 1 {
            return Err(err(format!("dim[{}] is {v}, must be positive", axis + 1)));
        }
        *dim = v as usize;
    }
    for axis in 4..=rank as usize {
        let v = read_i16(&bytes, 40 + 2 * axis);
        if v > 1 {
            return Err(err(format!(
                "dim[{axis}] is {v}; higher dimensions must be singleton"
            )));
        }
    }

    let datatype = read_i16(&bytes, 70);
    let bitpix = read_i16(&bytes, 72);
    let sample_bytes = match (datatype, bitpix) {
        (DT_INT16, 16) => 2usize,
        (DT_FLOAT32, 32) => 4usize,
        _ => {
            return Err(err(format!(
                "datatype {datatype} / bitpix {bitpix} unsupported; expected int16 (4/16) or float32 (16/32)"
            )))
        }
    };

    let vox_offset = read_f32(&bytes, 108);
    if !vox_offset.is_finite() || vox_offset.fract() != 0.0 || vox_offset < MIN_FILE_LEN as f32 {
        return Err(err(format!(
            "vox_offset {vox_offset} is not a whole number of at least {MIN_FILE_LEN}"
        )));
    }
    let data_start = vox_offset as usize;

    let raw_slope = read_f32(&bytes, 112);
    let raw_inter = read_f32(&bytes, 116);
    if !raw_slope.is_finite() || !raw_inter.is_finite() {
        return Err(err(format!(
            "non-finite scl_slope {raw_slope} / scl_inter {raw_inter}"
        )));
    }
    // A zero slope means "no rescale" by convention.
    let slope = if raw_slope == 0.0 { 1.0 } else { raw_slope };
    let inter = raw_inter;

    let mut spacing = [1.0f32; 3];
    for (axis, s) in spacing.iter_mut().enumerate() {
        let v = read_f32(&bytes, 76 + 4 * (axis + 1));
        if v.is_finite() && v > 0.0 {
            *s = v;
        }
    }

    let numel = dims[0] * dims[1] * dims[2];
    let payload_len = numel * sample_bytes;
    if bytes.len() < data_start + payload_len {
        return Err(err(format!(
            "file is {} bytes but the payload needs {} starting at {data_start}",
            bytes.len(),
            payload_len
        )));
    }
    let payload = &bytes[data_start..data_start + payload_len];

    let data: Vec<f32> = match datatype {
        DT_INT16 => payload
            .chunks_exact(2)
            .map(|c| slope * f32::from(i16::from_le_bytes([c[0], c[1]])) + inter)
            .collect(),
        _ => payload
            .chunks_exact(4)
            .map(|c| slope * f32::from_le_bytes([c[0], c[1], c[2], c[3]]) + inter)
            .collect(),
    };
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(err(format!("non-finite sample at voxel {pos} after rescale")));
    }

    // File order has i (dim[1]) fastest; exposing extents reversed keeps the
    // memory layout identical to our D-fastest convention.
    Volume::new(
        [dims[2], dims[1], dims[0]],
        [spacing[2], spacing[1], spacing[0]],
        data,
    )
}
