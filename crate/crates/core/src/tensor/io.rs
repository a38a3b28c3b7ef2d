//! Binary tensor encoding used inside checkpoints.
//!
//! Layout, all little-endian: `u8` format version, `u32` rank, `rank` x `u64`
//! extents, then `f32` elements in row-major order.

use std::io::{Read, Write};

use super::Tensor;
use crate::error::{Error, Result};

pub const TENSOR_FORMAT_VERSION: u8 = 1;

/// Largest element count accepted on read; guards allocations against
/// corrupted extents.
const MAX_ELEMENTS: u64 = 1 << 32;

pub fn write_tensor<W: Write>(w: &mut W, t: &Tensor) -> std::io::Result<()> {
    w.write_all(&[TENSOR_FORMAT_VERSION])?;
    w.write_all(&(t.rank() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(t.len() * 4);
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

/// Reader that remembers how many bytes it has consumed, so decode errors can
/// report where they happened.
pub(crate) struct OffsetReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> OffsetReader<R> {
    pub(crate) fn new(inner: R) -> Self {
        OffsetReader { inner, offset: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.offset
    }

    pub(crate) fn fail(&self, message: impl Into<String>) -> Error {
        Error::Checkpoint {
            offset: self.offset,
            message: message.into(),
        }
    }

    pub(crate) fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        let mut filled = 0;
        while filled < n {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) => {
                    return Err(Error::Checkpoint {
                        offset: self.offset + filled as u64,
                        message: format!("truncated while reading {what}"),
                    })
                }
                Ok(k) => filled += k,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => {
                    return Err(Error::Checkpoint {
                        offset: self.offset + filled as u64,
                        message: format!("read error in {what}: {e}"),
                    })
                }
            }
        }
        self.offset += n as u64;
        Ok(buf)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.bytes(1, what)?[0])
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.bytes(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.bytes(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    /// True once the underlying stream is exhausted.
    pub(crate) fn at_end(&mut self) -> bool {
        let mut probe = [0u8; 1];
        matches!(self.inner.read(&mut probe), Ok(0))
    }
}

pub(crate) fn read_tensor_at<R: Read>(r: &mut OffsetReader<R>) -> Result<Tensor> {
    let start = r.offset();
    let version = r.u8("tensor version")?;
    if version != TENSOR_FORMAT_VERSION {
        return Err(Error::Checkpoint {
            offset: start,
            message: format!("unsupported tensor format version {version} (expected {TENSOR_FORMAT_VERSION})"),
        });
    }
    let rank = r.u32("tensor rank")?;
    if rank == 0 || rank > 8 {
        return Err(r.fail(format!("implausible tensor rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank as usize);
    let mut count: u64 = 1;
    for _ in 0..rank {
        let d = r.u64("tensor extent")?;
        count = count.saturating_mul(d);
        if d == 0 || count > MAX_ELEMENTS {
            return Err(r.fail(format!("implausible tensor extent {d}")));
        }
        shape.push(d as usize);
    }
    let raw = r.bytes(count as usize * 4, "tensor data")?;
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Tensor::new(shape, data).map_err(|e| Error::Checkpoint {
        offset: start,
        message: e.to_string(),
    })
}

pub fn read_tensor<R: Read>(r: R) -> Result<Tensor> {
    read_tensor_at(&mut OffsetReader::new(r))
}
