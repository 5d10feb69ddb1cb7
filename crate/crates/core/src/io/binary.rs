//! Little-endian helpers shared by the binary formats.

use crate::error::{Error, Result};

pub(crate) struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Self { bytes, pos: 0, what }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated {} (need {n} bytes at offset {})", self.what, self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != expected {
            return Err(Error::Format(format!(
                "bad magic for {}: expected {:?}, got {:?}",
                self.what,
                String::from_utf8_lossy(expected),
                String::from_utf8_lossy(got)
            )));
        }
        Ok(())
    }

    pub(crate) fn version(&mut self, supported: u16) -> Result<()> {
        let v = self.u16()?;
        if v != supported {
            return Err(Error::Format(format!("unsupported {} version {v}", self.what)));
        }
        Ok(())
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    /// Reads `count` finite f32 values, widened to f64.
    pub(crate) fn f32s(&mut self, count: u64) -> Result<Vec<f64>> {
        let n = usize::try_from(count)
            .ok()
            .and_then(|c| c.checked_mul(4))
            .ok_or_else(|| Error::Format(format!("dimension overflow in {}", self.what)))?;
        let raw = self.take(n)?;
        raw.chunks_exact(4)
            .map(|b| {
                let v = f32::from_le_bytes(b.try_into().expect("4 bytes"));
                if v.is_finite() {
                    Ok(f64::from(v))
                } else {
                    Err(Error::Format(format!("non-finite value in {}", self.what)))
                }
            })
            .collect()
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after {}",
                self.bytes.len() - self.pos,
                self.what
            )));
        }
        Ok(())
    }
}

/// Element count `a·b·…` in u64, rejecting overflow.
pub(crate) fn checked_count(dims: &[u64], what: &str) -> Result<u64> {
    dims.iter()
        .try_fold(1u64, |acc, d| acc.checked_mul(*d))
        .ok_or_else(|| Error::Format(format!("dimension overflow in {what}")))
}

pub(crate) fn put_f32s(out: &mut Vec<u8>, values: &[f64]) -> Result<()> {
    out.reserve(values.len() * 4);
    for v in values {
        let f = *v as f32;
        if !f.is_finite() {
            return Err(Error::Format(format!("value {v} is not representable as a finite f32")));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(())
}
