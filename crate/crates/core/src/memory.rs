//! Main memory, tensor layout and the on-disk tensor/filter formats.
//!
//! Feature maps are channel-planar and row-major within a plane. Every raw
//! value occupies one little-endian `i32` word, in memory and in files,
//! whatever the width of the Q format.
//!
//! Tensor file (`QTNS`):
//!
//! ```text
//! magic "QTNS" | u32 version=1 | u32 total_bits | u32 frac_bits
//!              | u32 width | u32 height | u32 depth | i32 raws...
//! ```
//!
//! Filter file (`QWGT`):
//!
//! ```text
//! magic "QWGT" | u32 version=1 | u32 total_bits | u32 frac_bits
//!              | u32 num_filters | u32 depth | u32 kernel
//!              | i32 weights in (filter, depth, row, col) order | i32 biases
//! ```

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::qformat::{QError, QFormat, QValue};

/// Bytes per stored value.
pub const WORD_BYTES: usize = 4;

pub const TENSOR_MAGIC: &[u8; 4] = b"QTNS";
pub const FILTER_MAGIC: &[u8; 4] = b"QWGT";
pub const FILE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("address space {space} exceeds memory of {size} bytes")]
    OutOfBounds { space: AddressSpace, size: usize },
    #[error("address space length {0} is not a multiple of {WORD_BYTES} bytes")]
    Unaligned(u32),
    #[error("size mismatch: expected {expected} bytes, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error(transparent)]
    Value(#[from] QError),
}

#[derive(Debug, Error)]
pub enum FileError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported file version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("invalid header: {0}")]
    Header(String),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A contiguous byte range of main memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AddressSpace {
    pub base: u32,
    pub length: u32,
}

impl AddressSpace {
    pub fn new(base: u32, length: u32) -> Result<Self, MemoryError> {
        if !(length as usize).is_multiple_of(WORD_BYTES) {
            return Err(MemoryError::Unaligned(length));
        }
        Ok(Self { base, length })
    }

    /// Space holding `count` consecutive words.
    pub fn words(base: u32, count: usize) -> Result<Self, MemoryError> {
        let length = u32::try_from(count * WORD_BYTES)
            .map_err(|_| MemoryError::Shape(format!("{count} words do not fit an address space")))?;
        Self::new(base, length)
    }

    pub fn end(&self) -> u64 {
        self.base as u64 + self.length as u64
    }

    pub fn word_count(&self) -> usize {
        self.length as usize / WORD_BYTES
    }

    pub fn overlaps(&self, other: &AddressSpace) -> bool {
        self.length > 0 && other.length > 0 && (self.base as u64) < other.end() && (other.base as u64) < self.end()
    }

    /// `count` words starting `offset_words` into this space.
    pub fn slice_words(&self, offset_words: usize, count: usize) -> Result<Self, MemoryError> {
        let base = self.base as u64 + (offset_words * WORD_BYTES) as u64;
        let sub = Self::words(
            u32::try_from(base).map_err(|_| MemoryError::Shape("base beyond 4 GiB".into()))?,
            count,
        )?;
        if sub.end() > self.end() {
            return Err(MemoryError::SizeMismatch {
                expected: (sub.end() - self.base as u64) as usize,
                found: self.length as usize,
            });
        }
        Ok(sub)
    }
}

impl std::fmt::Display for AddressSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{:#x}, +{})", self.base, self.length)
    }
}

/// Byte-addressable main memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryImage {
    bytes: Vec<u8>,
}

impl MemoryImage {
    pub fn new(size: usize) -> Self {
        Self { bytes: vec![0; size] }
    }

    pub fn size(&self) -> usize {
        self.bytes.len()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    fn range(&self, space: AddressSpace) -> Result<std::ops::Range<usize>, MemoryError> {
        if space.end() > self.bytes.len() as u64 {
            return Err(MemoryError::OutOfBounds {
                space,
                size: self.bytes.len(),
            });
        }
        Ok(space.base as usize..space.end() as usize)
    }

    pub fn bytes(&self, space: AddressSpace) -> Result<&[u8], MemoryError> {
        let r = self.range(space)?;
        Ok(&self.bytes[r])
    }

    pub fn write_bytes(&mut self, base: u32, data: &[u8]) -> Result<(), MemoryError> {
        let space = AddressSpace {
            base,
            length: u32::try_from(data.len()).map_err(|_| MemoryError::Shape("write too large".into()))?,
        };
        let r = self.range(space)?;
        self.bytes[r].copy_from_slice(data);
        Ok(())
    }

    pub fn read_words(&self, space: AddressSpace) -> Result<Vec<i32>, MemoryError> {
        Ok(self
            .bytes(space)?
            .chunks_exact(WORD_BYTES)
            .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    pub fn write_words(&mut self, space: AddressSpace, words: &[i32]) -> Result<(), MemoryError> {
        let expected = words.len() * WORD_BYTES;
        if space.length as usize != expected {
            return Err(MemoryError::SizeMismatch {
                expected,
                found: space.length as usize,
            });
        }
        let r = self.range(space)?;
        for (dst, w) in self.bytes[r].chunks_exact_mut(WORD_BYTES).zip(words) {
            dst.copy_from_slice(&w.to_le_bytes());
        }
        Ok(())
    }

    /// Bulk copy. The destination receives the bytes the source held before
    /// the transfer, even when the two ranges overlap.
    pub fn dma_copy(&mut self, src: AddressSpace, dst: AddressSpace) -> Result<(), MemoryError> {
        if src.length != dst.length {
            return Err(MemoryError::SizeMismatch {
                expected: src.length as usize,
                found: dst.length as usize,
            });
        }
        let s = self.range(src)?;
        self.range(dst)?;
        self.bytes.copy_within(s, dst.base as usize);
        Ok(())
    }

    pub fn read_tensor(
        &self,
        space: AddressSpace,
        width: usize,
        height: usize,
        depth: usize,
        format: QFormat,
    ) -> Result<Tensor, MemoryError> {
        let expected = width * height * depth * WORD_BYTES;
        if space.length as usize != expected {
            return Err(MemoryError::SizeMismatch {
                expected,
                found: space.length as usize,
            });
        }
        Tensor::from_raws(width, height, depth, format, self.read_words(space)?)
    }

    pub fn write_tensor(&mut self, space: AddressSpace, tensor: &Tensor) -> Result<(), MemoryError> {
        self.write_words(space, tensor.raws())
    }
}

fn check_raws(format: QFormat, raws: &[i32]) -> Result<(), MemoryError> {
    if let Some(&bad) = raws.iter().find(|&&r| !format.contains_raw(r as i64)) {
        return Err(QError::RawOutOfRange {
            raw: bad as i64,
            format,
        }
        .into());
    }
    Ok(())
}

/// A `depth x height x width` feature map in planar layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tensor {
    width: usize,
    height: usize,
    depth: usize,
    format: QFormat,
    data: Vec<i32>,
}

impl Tensor {
    pub fn zeros(width: usize, height: usize, depth: usize, format: QFormat) -> Self {
        Self {
            width,
            height,
            depth,
            format,
            data: vec![0; width * height * depth],
        }
    }

    pub fn from_raws(
        width: usize,
        height: usize,
        depth: usize,
        format: QFormat,
        data: Vec<i32>,
    ) -> Result<Self, MemoryError> {
        if data.len() != width * height * depth {
            return Err(MemoryError::Shape(format!(
                "{} raws for a {width}x{height}x{depth} tensor",
                data.len()
            )));
        }
        check_raws(format, &data)?;
        Ok(Self {
            width,
            height,
            depth,
            format,
            data,
        })
    }

    /// Encodes real values given in planar order.
    pub fn from_f64(
        width: usize,
        height: usize,
        depth: usize,
        format: QFormat,
        values: &[f64],
    ) -> Result<Self, MemoryError> {
        let data = values
            .iter()
            .map(|&v| format.encode_raw(v).map(|(r, _)| r))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_raws(width, height, depth, format, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn format(&self) -> QFormat {
        self.format
    }

    pub fn raws(&self) -> &[i32] {
        &self.data
    }

    pub fn into_raws(self) -> Vec<i32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn byte_len(&self) -> usize {
        self.data.len() * WORD_BYTES
    }

    #[inline]
    pub fn index(&self, plane: usize, y: usize, x: usize) -> usize {
        plane * self.height * self.width + y * self.width + x
    }

    #[inline]
    pub fn raw(&self, plane: usize, y: usize, x: usize) -> i32 {
        self.data[self.index(plane, y, x)]
    }

    pub fn get(&self, plane: usize, y: usize, x: usize) -> QValue {
        QValue::from_raw(self.raw(plane, y, x), self.format).expect("tensor raws are range-checked")
    }

    pub fn plane(&self, plane: usize) -> &[i32] {
        let n = self.width * self.height;
        &self.data[plane * n..(plane + 1) * n]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&r| self.format.decode_raw(r)).collect()
    }

    /// Stacks single- or multi-plane tensors of equal extent along depth.
    pub fn stack(parts: &[Tensor]) -> Result<Tensor, MemoryError> {
        let first = parts
            .first()
            .ok_or_else(|| MemoryError::Shape("nothing to stack".into()))?;
        let mut data = Vec::new();
        let mut depth = 0;
        for p in parts {
            if (p.width, p.height, p.format) != (first.width, first.height, first.format) {
                return Err(MemoryError::Shape("stacked tensors differ in extent or format".into()));
            }
            data.extend_from_slice(&p.data);
            depth += p.depth;
        }
        Ok(Tensor {
            width: first.width,
            height: first.height,
            depth,
            format: first.format,
            data,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(28 + self.byte_len());
        out.extend_from_slice(TENSOR_MAGIC);
        for v in [
            FILE_VERSION,
            self.format.total_bits(),
            self.format.frac_bits(),
            self.width as u32,
            self.height as u32,
            self.depth as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        push_raws(&mut out, &self.data);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FileError> {
        let mut r = Reader::new(bytes);
        let header = r.header(TENSOR_MAGIC)?;
        let [width, height, depth] = r.dims()?;
        let data = r.raws(width.checked_mul(height).and_then(|n| n.checked_mul(depth)))?;
        r.finish()?;
        Ok(Self::from_raws(width, height, depth, header, data)?)
    }
}

/// `N` filters of `depth x kernel x kernel` weights plus one bias each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterSet {
    num_filters: usize,
    depth: usize,
    kernel: usize,
    format: QFormat,
    weights: Vec<i32>,
    biases: Vec<i32>,
}

impl FilterSet {
    pub fn from_raws(
        num_filters: usize,
        depth: usize,
        kernel: usize,
        format: QFormat,
        weights: Vec<i32>,
        biases: Vec<i32>,
    ) -> Result<Self, MemoryError> {
        if num_filters == 0 || depth == 0 || kernel == 0 {
            return Err(MemoryError::Shape(format!(
                "filter set {num_filters}x{depth}x{kernel}x{kernel} has an empty dimension"
            )));
        }
        if weights.len() != num_filters * depth * kernel * kernel || biases.len() != num_filters {
            return Err(MemoryError::Shape(format!(
                "{} weights and {} biases for {num_filters} filters of {depth}x{kernel}x{kernel}",
                weights.len(),
                biases.len()
            )));
        }
        check_raws(format, &weights)?;
        check_raws(format, &biases)?;
        Ok(Self {
            num_filters,
            depth,
            kernel,
            format,
            weights,
            biases,
        })
    }

    pub fn from_f64(
        num_filters: usize,
        depth: usize,
        kernel: usize,
        format: QFormat,
        weights: &[f64],
        biases: &[f64],
    ) -> Result<Self, MemoryError> {
        let enc = |v: &[f64]| {
            v.iter()
                .map(|&x| format.encode_raw(x).map(|(r, _)| r))
                .collect::<Result<Vec<_>, _>>()
        };
        Self::from_raws(num_filters, depth, kernel, format, enc(weights)?, enc(biases)?)
    }

    pub fn num_filters(&self) -> usize {
        self.num_filters
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn format(&self) -> QFormat {
        self.format
    }

    pub fn weights(&self) -> &[i32] {
        &self.weights
    }

    pub fn biases(&self) -> &[i32] {
        &self.biases
    }

    pub fn weights_per_filter(&self) -> usize {
        self.depth * self.kernel * self.kernel
    }

    #[inline]
    pub fn index(&self, filter: usize, plane: usize, i: usize, j: usize) -> usize {
        ((filter * self.depth + plane) * self.kernel + i) * self.kernel + j
    }

    /// Weights of one filter in (depth, row, col) order.
    pub fn filter_weights(&self, filter: usize) -> &[i32] {
        let n = self.weights_per_filter();
        &self.weights[filter * n..(filter + 1) * n]
    }

    /// Filters `range` as their own set.
    pub fn select(&self, range: std::ops::Range<usize>) -> Result<FilterSet, MemoryError> {
        if range.start >= range.end || range.end > self.num_filters {
            return Err(MemoryError::Shape(format!(
                "filter range {range:?} of {}",
                self.num_filters
            )));
        }
        let n = self.weights_per_filter();
        Ok(FilterSet {
            num_filters: range.len(),
            depth: self.depth,
            kernel: self.kernel,
            format: self.format,
            weights: self.weights[range.start * n..range.end * n].to_vec(),
            biases: self.biases[range].to_vec(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + (self.weights.len() + self.biases.len()) * WORD_BYTES);
        out.extend_from_slice(FILTER_MAGIC);
        for v in [
            FILE_VERSION,
            self.format.total_bits(),
            self.format.frac_bits(),
            self.num_filters as u32,
            self.depth as u32,
            self.kernel as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        push_raws(&mut out, &self.weights);
        push_raws(&mut out, &self.biases);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FileError> {
        let mut r = Reader::new(bytes);
        let format = r.header(FILTER_MAGIC)?;
        let [num_filters, depth, kernel] = r.dims()?;
        let weights = r.raws(
            [depth, kernel, kernel]
                .iter()
                .try_fold(num_filters, |acc, &x| acc.checked_mul(x)),
        )?;
        let biases = r.raws(Some(num_filters))?;
        r.finish()?;
        Ok(Self::from_raws(num_filters, depth, kernel, format, weights, biases)?)
    }
}

fn push_raws(out: &mut Vec<u8>, raws: &[i32]) {
    for r in raws {
        out.extend_from_slice(&r.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FileError> {
        if self.bytes.len() - self.pos < n {
            let expected = self.pos.saturating_add(n);
            return Err(FileError::Truncated {
                expected,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, FileError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<QFormat, FileError> {
        let found = self.take(4)?;
        if found != magic {
            return Err(FileError::BadMagic {
                expected: *magic,
                found: found.try_into().expect("4 bytes"),
            });
        }
        let version = self.u32()?;
        if version != FILE_VERSION {
            return Err(FileError::UnsupportedVersion(version));
        }
        let total = self.u32()?;
        let frac = self.u32()?;
        QFormat::new(total, frac).map_err(|e| FileError::Header(e.to_string()))
    }

    fn dims(&mut self) -> Result<[usize; 3], FileError> {
        Ok([self.u32()? as usize, self.u32()? as usize, self.u32()? as usize])
    }

    fn raws(&mut self, count: Option<usize>) -> Result<Vec<i32>, FileError> {
        let b = self.take(count.and_then(|c| c.checked_mul(WORD_BYTES)).unwrap_or(usize::MAX))?;
        Ok(b.chunks_exact(4)
            .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn finish(&self) -> Result<(), FileError> {
        match self.bytes.len() - self.pos {
            0 => Ok(()),
            n => Err(FileError::TrailingBytes(n)),
        }
    }
}

pub fn save_tensor_file(path: impl AsRef<Path>, tensor: &Tensor) -> Result<(), FileError> {
    Ok(fs::write(path, tensor.to_bytes())?)
}

pub fn load_tensor_file(path: impl AsRef<Path>) -> Result<Tensor, FileError> {
    Tensor::from_bytes(&fs::read(path)?)
}

pub fn save_filter_file(path: impl AsRef<Path>, filters: &FilterSet) -> Result<(), FileError> {
    Ok(fs::write(path, filters.to_bytes())?)
}

pub fn load_filter_file(path: impl AsRef<Path>) -> Result<FilterSet, FileError> {
    FilterSet::from_bytes(&fs::read(path)?)
}
