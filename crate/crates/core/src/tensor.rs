//! Dense row-major tensor.
//!
//! Shapes are plain `Vec<usize>`; the network uses rank-5 `(N, C, H, W, D)`
//! with D innermost/contiguous. Buffers are `Arc`-shared so clones and
//! autodiff closures are cheap; all kernels allocate fresh output buffers.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::element::Element;
use crate::error::CoreError;
use crate::rng::Rng;
use crate::tape::{NodeId, Tape};
use crate::Result;

/// Magic for the standalone tensor codec.
pub const TENSOR_MAGIC: &[u8; 4] = b"UXT1";

#[derive(Clone)]
pub struct Tensor<T: Element> {
    shape: Vec<usize>,
    data: Arc<Vec<T>>,
    pub(crate) node: Option<NodeId>,
    pub(crate) tape: Option<Tape<T>>,
}

impl<T: Element> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("tracked", &self.node.is_some())
            .finish()
    }
}

impl<T: Element> Tensor<T> {
    /// Wraps `data` with `shape`; lengths must agree.
    pub fn from_vec(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(CoreError::shape(
                "Tensor::from_vec",
                format!("{numel} elements for shape {shape:?}"),
                format!("{}", data.len()),
            ));
        }
        Ok(Tensor { shape, data: Arc::new(data), node: None, tape: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor { shape, data: Arc::new(vec![T::ZERO; numel]), node: None, tape: None }
    }

    pub fn full(shape: Vec<usize>, value: T) -> Self {
        let numel = shape.iter().product();
        Tensor { shape, data: Arc::new(vec![value; numel]), node: None, tape: None }
    }

    /// Rank-1 single-element tensor (the engine's scalar convention).
    pub fn scalar(value: T) -> Self {
        Tensor::full(vec![1], value)
    }

    /// I.i.d. truncated-normal entries (zero mean, `std`, clipped at ±2·std).
    pub fn trunc_normal(shape: Vec<usize>, std: f64, rng: &mut Rng) -> Self {
        let numel: usize = shape.iter().product();
        let data: Vec<T> = (0..numel).map(|_| T::from_f64(rng.trunc_normal(std))).collect();
        Tensor { shape, data: Arc::new(data), node: None, tape: None }
    }

    /// I.i.d. standard-normal entries scaled by `std`.
    pub fn randn(shape: Vec<usize>, std: f64, rng: &mut Rng) -> Self {
        let numel: usize = shape.iter().product();
        let data: Vec<T> = (0..numel).map(|_| T::from_f64(rng.normal() * std)).collect();
        Tensor { shape, data: Arc::new(data), node: None, tape: None }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Shared handle to the raw buffer (cheap clone for backward closures).
    pub(crate) fn buffer(&self) -> Arc<Vec<T>> {
        Arc::clone(&self.data)
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.data.as_ref().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() requires a single-element tensor");
        self.data[0]
    }

    /// Same data, no autodiff history.
    pub fn detach(&self) -> Self {
        Tensor { shape: self.shape.clone(), data: Arc::clone(&self.data), node: None, tape: None }
    }

    /// Same buffer under a new shape with identical element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(CoreError::shape(
                "Tensor::reshape",
                format!("{} elements", self.numel()),
                format!("shape {shape:?} = {numel}"),
            ));
        }
        let mut out = self.clone();
        out.shape = shape;
        Ok(out)
    }

    pub(crate) fn with_history(mut self, tape: Tape<T>, node: NodeId) -> Self {
        self.tape = Some(tape);
        self.node = Some(node);
        self
    }

    pub(crate) fn node(&self) -> Option<NodeId> {
        self.node
    }

    pub(crate) fn tape(&self) -> Option<&Tape<T>> {
        self.tape.as_ref()
    }

    /// True when this tensor participates in the current tape.
    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }

    /// Errors if any element is NaN or infinite.
    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite { context: context.to_string() });
        }
        Ok(())
    }

    /// Bitwise equality of shape and buffer.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.to_f64().to_bits() == b.to_f64().to_bits())
    }

    /// Writes the `UXT1` framing: magic, dtype byte, rank byte, little-endian
    /// u64 extents, then the raw little-endian element buffer.
    pub fn write_uxt<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(TENSOR_MAGIC)?;
        w.write_u8(T::DTYPE)?;
        if self.rank() > u8::MAX as usize {
            return Err(CoreError::invalid("Tensor::write_uxt", "rank exceeds u8"));
        }
        w.write_u8(self.rank() as u8)?;
        for &e in &self.shape {
            w.write_u64::<LittleEndian>(e as u64)?;
        }
        write_elements(w, &self.data)?;
        Ok(())
    }

    /// Reads one `UXT1` tensor. Validates magic, dtype, extents, and that
    /// every element is finite.
    pub fn read_uxt<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != TENSOR_MAGIC {
            return Err(CoreError::Format(format!(
                "bad tensor magic {magic:?}, expected {TENSOR_MAGIC:?}"
            )));
        }
        let dtype = r.read_u8()?;
        if dtype != T::DTYPE {
            return Err(CoreError::Format(format!(
                "dtype tag {dtype} does not match element type (want {})",
                T::DTYPE
            )));
        }
        let rank = r.read_u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        let mut numel: u128 = 1;
        for _ in 0..rank {
            let e = r.read_u64::<LittleEndian>()?;
            numel = numel.saturating_mul(e as u128);
            shape.push(e as usize);
        }
        if numel > (1u128 << 40) {
            return Err(CoreError::Format(format!("tensor too large: {numel} elements")));
        }
        let data = read_elements(r, numel as usize)?;
        let t = Tensor::from_vec(shape, data)?;
        t.ensure_finite("Tensor::read_uxt")?;
        Ok(t)
    }

    pub fn save_uxt(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_uxt(&mut f)
    }

    pub fn load_uxt(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let t = Self::read_uxt(&mut f)?;
        let mut probe = [0u8; 1];
        if f.read(&mut probe)? != 0 {
            return Err(CoreError::Format("trailing bytes after tensor payload".into()));
        }
        Ok(t)
    }
}

/// Raw little-endian element buffer (shared with the checkpoint codec).
pub fn write_elements<T: Element, W: Write>(w: &mut W, data: &[T]) -> Result<()> {
    match T::DTYPE {
        0 => {
            for v in data {
                w.write_f32::<LittleEndian>(v.to_f64() as f32)?;
            }
        }
        _ => {
            for v in data {
                w.write_f64::<LittleEndian>(v.to_f64())?;
            }
        }
    }
    Ok(())
}

/// Reads `numel` little-endian elements (shared with the checkpoint codec).
pub fn read_elements<T: Element, R: Read>(r: &mut R, numel: usize) -> Result<Vec<T>> {
    let mut data = Vec::with_capacity(numel);
    match T::DTYPE {
        0 => {
            for _ in 0..numel {
                data.push(T::from_f64(r.read_f32::<LittleEndian>()? as f64));
            }
        }
        _ => {
            for _ in 0..numel {
                data.push(T::from_f64(r.read_f64::<LittleEndian>()?));
            }
        }
    }
    Ok(data)
}

/// Row-major offset of `(n, c, h, w, 0)` in a rank-5 tensor.
#[inline]
pub fn row_offset(shape: &[usize], n: usize, c: usize, h: usize, w: usize) -> usize {
    (((n * shape[1] + c) * shape[2] + h) * shape[3] + w) * shape[4]
}
