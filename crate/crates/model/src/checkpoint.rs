//! Binary checkpoint container: the architecture config plus named tensor
//! sections (model parameters, and whatever state a trainer appends).
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "UXCK" | version u32 | dtype u8
//! config_len u64 | config JSON (UXNetConfig)
//! section_count u64
//! per section: name_len u16 | name UTF-8 | rank u8 | extents u64 x rank | data
//! ```
//!
//! Loads are strict: wrong magic/version/dtype, non-finite payloads,
//! duplicate names, or trailing bytes all fail.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use uxnet_core::tensor::{read_elements, write_elements};
use uxnet_core::{Element, Tensor};

use crate::config::UXNetConfig;
use crate::model::UXNet3d;
use crate::{ModelError, Result};

const MAGIC: &[u8; 4] = b"UXCK";
const VERSION: u32 = 1;
const MAX_NAME: usize = 4096;
const MAX_RANK: u8 = 8;
const MAX_NUMEL: u64 = 1 << 40;

/// Prefix under which model parameters are stored; other prefixes (e.g.
/// optimizer state) pass through untouched.
pub const MODEL_SECTION_PREFIX: &str = "model.";

pub struct Checkpoint<T: Element> {
    pub config: UXNetConfig,
    sections: Vec<(String, Tensor<T>)>,
}

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

impl<T: Element> Checkpoint<T> {
    pub fn new(config: UXNetConfig) -> Self {
        Checkpoint { config, sections: Vec::new() }
    }

    /// Appends a named tensor. Names must be unique within the checkpoint.
    pub fn push(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<()> {
        let name = name.into();
        if name.is_empty() || name.len() > MAX_NAME {
            return Err(bad(format!("section name length {} out of range", name.len())));
        }
        if self.get(&name).is_some() {
            return Err(bad(format!("duplicate section {name:?}")));
        }
        self.sections.push((name, value));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.sections.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn sections(&self) -> &[(String, Tensor<T>)] {
        &self.sections
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[T::DTYPE])?;
        let cfg = serde_json::to_vec(&self.config).map_err(|e| bad(e.to_string()))?;
        w.write_all(&(cfg.len() as u64).to_le_bytes())?;
        w.write_all(&cfg)?;
        w.write_all(&(self.sections.len() as u64).to_le_bytes())?;
        for (name, tensor) in &self.sections {
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            let shape = tensor.shape();
            w.write_all(&[shape.len() as u8])?;
            for &e in shape {
                w.write_all(&(e as u64).to_le_bytes())?;
            }
            write_elements(w, tensor.data())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad(format!("bad magic {magic:?}")));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let mut dtype = [0u8; 1];
        r.read_exact(&mut dtype)?;
        if dtype[0] != T::DTYPE {
            return Err(bad(format!("dtype {} does not match expected {}", dtype[0], T::DTYPE)));
        }
        let cfg_len = read_u64(r)? as usize;
        if cfg_len > 1 << 20 {
            return Err(bad(format!("config section of {cfg_len} bytes is implausible")));
        }
        let mut cfg_bytes = vec![0u8; cfg_len];
        r.read_exact(&mut cfg_bytes)?;
        let cfg_str =
            String::from_utf8(cfg_bytes).map_err(|_| bad("config is not valid UTF-8"))?;
        let config = UXNetConfig::from_json(&cfg_str)?;

        let count = read_u64(r)?;
        let mut out = Checkpoint::new(config);
        for _ in 0..count {
            let name_len = read_u16(r)? as usize;
            if name_len == 0 || name_len > MAX_NAME {
                return Err(bad(format!("section name length {name_len} out of range")));
            }
            let mut name_bytes = vec![0u8; name_len];
            r.read_exact(&mut name_bytes)?;
            let name =
                String::from_utf8(name_bytes).map_err(|_| bad("section name is not UTF-8"))?;
            let mut rank = [0u8; 1];
            r.read_exact(&mut rank)?;
            if rank[0] == 0 || rank[0] > MAX_RANK {
                return Err(bad(format!("rank {} out of range in {name:?}", rank[0])));
            }
            let mut shape = Vec::with_capacity(rank[0] as usize);
            let mut numel = 1u64;
            for _ in 0..rank[0] {
                let e = read_u64(r)?;
                numel = numel.saturating_mul(e.max(1));
                shape.push(e as usize);
            }
            if numel > MAX_NUMEL {
                return Err(bad(format!("section {name:?} is implausibly large")));
            }
            let data = read_elements::<T, _>(r, shape.iter().product())?;
            let tensor = Tensor::from_vec(shape, data)?;
            tensor
                .ensure_finite(&format!("checkpoint section {name}"))
                .map_err(|e| bad(e.to_string()))?;
            out.push(name, tensor)?;
        }
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(bad("trailing bytes after final section"));
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

impl<T: Element> UXNet3d<T> {
    /// Snapshot of every parameter under `model.<name>` sections.
    pub fn to_checkpoint(&self) -> Result<Checkpoint<T>> {
        let mut ckpt = Checkpoint::new(self.config().clone());
        for p in self.registry().params() {
            ckpt.push(format!("{MODEL_SECTION_PREFIX}{}", p.name()), p.value())?;
        }
        Ok(ckpt)
    }

    /// Loads every parameter from the checkpoint's `model.*` sections.
    /// Missing parameters, unknown `model.*` sections, and shape mismatches
    /// are errors; sections under other prefixes are ignored.
    pub fn restore(&self, ckpt: &Checkpoint<T>) -> Result<()> {
        for p in self.registry().params() {
            let key = format!("{MODEL_SECTION_PREFIX}{}", p.name());
            let t = ckpt
                .get(&key)
                .ok_or_else(|| bad(format!("checkpoint is missing parameter {key:?}")))?;
            if t.shape() != p.shape() {
                return Err(bad(format!(
                    "shape mismatch for {key:?}: checkpoint {:?}, model {:?}",
                    t.shape(),
                    p.shape()
                )));
            }
            p.set_value(t.clone());
        }
        for (name, _) in ckpt.sections() {
            if let Some(stripped) = name.strip_prefix(MODEL_SECTION_PREFIX) {
                if self.registry().get(stripped).is_none() {
                    return Err(bad(format!(
                        "checkpoint section {name:?} has no matching model parameter"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Rebuilds a model from a checkpoint: construct from its config, then
    /// restore every parameter.
    pub fn from_checkpoint(ckpt: &Checkpoint<T>) -> Result<Self> {
        let model = Self::build(&ckpt.config, 0)?;
        model.restore(ckpt)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use uxnet_core::Rng;

    fn tiny_model() -> UXNet3d<f32> {
        UXNet3d::build(&UXNetConfig::tiny(), 21).unwrap()
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let model = tiny_model();
        let mut ckpt = model.to_checkpoint().unwrap();
        // A non-model section rides along untouched.
        let mut rng = Rng::new(3);
        ckpt.push("opt.step", Tensor::randn(vec![1], 1.0, &mut rng)).unwrap();

        let mut buf = Vec::new();
        ckpt.write_to(&mut buf).unwrap();
        let back = Checkpoint::<f32>::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.config, *model.config());
        assert_eq!(back.sections().len(), ckpt.sections().len());
        for ((na, ta), (nb, tb)) in ckpt.sections().iter().zip(back.sections()) {
            assert_eq!(na, nb);
            assert!(ta.bit_eq(tb), "section {na} not bitwise equal");
        }

        let rebuilt = UXNet3d::<f32>::from_checkpoint(&back).unwrap();
        for (p, q) in model.registry().params().iter().zip(rebuilt.registry().params()) {
            assert!(p.value().bit_eq(&q.value()), "{} differs after restore", p.name());
        }
    }

    #[test]
    fn strict_failures() {
        let model = tiny_model();
        let ckpt = model.to_checkpoint().unwrap();
        let mut buf = Vec::new();
        ckpt.write_to(&mut buf).unwrap();

        // Bad magic.
        let mut corrupt = buf.clone();
        corrupt[0] = b'X';
        assert!(Checkpoint::<f32>::read_from(&mut corrupt.as_slice()).is_err());
        // Wrong dtype on load.
        assert!(Checkpoint::<f64>::read_from(&mut buf.as_slice()).is_err());
        // Trailing bytes.
        let mut trailing = buf.clone();
        trailing.push(0);
        assert!(Checkpoint::<f32>::read_from(&mut trailing.as_slice()).is_err());
        // Truncation.
        let cut = buf.len() - 5;
        assert!(Checkpoint::<f32>::read_from(&mut &buf[..cut]).is_err());
    }

    #[test]
    fn restore_rejects_mismatched_architectures() {
        let model = tiny_model();
        let ckpt = model.to_checkpoint().unwrap();

        // A model with different widths cannot restore from it.
        let mut other_cfg = UXNetConfig::tiny();
        other_cfg.stage_channels = [4, 8, 16, 32];
        let other = UXNet3d::<f32>::build(&other_cfg, 21).unwrap();
        assert!(other.restore(&ckpt).is_err());

        // Unknown model.* section is rejected.
        let mut extra = model.to_checkpoint().unwrap();
        extra.push("model.ghost.weight", Tensor::zeros(vec![1])).unwrap();
        assert!(model.restore(&extra).is_err());

        // Duplicate section names are rejected at build time.
        let mut dup = Checkpoint::<f32>::new(UXNetConfig::tiny());
        dup.push("a", Tensor::zeros(vec![1])).unwrap();
        assert!(dup.push("a", Tensor::zeros(vec![1])).is_err());
    }
}
