//! Little-endian primitives shared by the checkpoint and dataset containers.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Default)]
pub(crate) struct ByteWriter {
    pub buf: Vec<u8>,
}

impl ByteWriter {
    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn len_u32(&mut self, v: usize) {
        self.u32(u32::try_from(v).expect("length fits in u32"));
    }

    fn name(&mut self, name: &str) {
        self.len_u32(name.len());
        self.bytes(name.as_bytes());
    }

    /// `name_len, name, rank, dims..., f32 payload`.
    pub fn tensor_record(&mut self, name: &str, t: &Tensor) {
        self.name(name);
        self.len_u32(t.rank());
        for &d in t.dims() {
            self.len_u32(d);
        }
        self.buf.reserve(4 * t.len());
        for &v in t.data() {
            self.f32(v);
        }
    }

    /// `name_len, name, count, u32 values...`.
    pub fn index_record(&mut self, name: &str, values: &[u32]) {
        self.name(name);
        self.len_u32(values.len());
        for &v in values {
            self.u32(v);
        }
    }
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Truncated {
                offset: self.pos as u64,
                needed: (n - self.remaining()) as u64,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let found: [u8; 4] = self.take(4)?.try_into().unwrap();
        if &found != expected {
            return Err(Error::BadMagic {
                expected: *expected,
                found,
            });
        }
        Ok(())
    }

    pub fn name(&mut self) -> Result<String> {
        let at = self.offset();
        let len = self.u32()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Malformed {
            offset: at,
            reason: "record name is not UTF-8".into(),
        })
    }

    /// Reads a tensor record, requiring the given name.
    pub fn tensor_record(&mut self, expected_name: &str) -> Result<Tensor> {
        let at = self.offset();
        let name = self.name()?;
        if name != expected_name {
            return Err(Error::Malformed {
                offset: at,
                reason: format!("expected record {expected_name:?}, found {name:?}"),
            });
        }
        let rank = self.u32()? as usize;
        if rank > 8 {
            return Err(Error::Malformed {
                offset: at,
                reason: format!("record {name:?} has implausible rank {rank}"),
            });
        }
        let dims = (0..rank).map(|_| self.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let len: usize = dims.iter().product();
        let raw = self.take(len.checked_mul(4).ok_or_else(|| Error::Malformed {
            offset: at,
            reason: "record size overflows".into(),
        })?)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Tensor::from_vec(&dims, data).map_err(|_| Error::Malformed {
            offset: at,
            reason: format!("record {name:?} has a zero dimension in {dims:?}"),
        })
    }

    pub fn index_record(&mut self, expected_name: &str) -> Result<Vec<u32>> {
        let at = self.offset();
        let name = self.name()?;
        if name != expected_name {
            return Err(Error::Malformed {
                offset: at,
                reason: format!("expected record {expected_name:?}, found {name:?}"),
            });
        }
        let n = self.u32()? as usize;
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Malformed {
            offset: at,
            reason: "record size overflows".into(),
        })?)?;
        Ok(raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}
