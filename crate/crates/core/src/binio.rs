//! Little-endian helpers for the flat binary model and dataset formats.

use std::io::{Read, Write};

use crate::{Error, Result};

pub(crate) fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, vs: &[f64]) -> Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Sequential reader that tracks the byte offset for error messages.
pub(crate) struct Reader<R> {
    inner: R,
    offset: usize,
}

impl<R: Read> Reader<R> {
    pub(crate) fn new(inner: R) -> Self {
        Reader { inner, offset: 0 }
    }

    fn fill(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::parse(self.offset, format!("truncated file while reading {what}"))
            } else {
                Error::Io(e)
            }
        })?;
        self.offset += buf.len();
        Ok(())
    }

    pub(crate) fn expect_magic(&mut self, magic: &[u8]) -> Result<()> {
        let mut buf = vec![0u8; magic.len()];
        let at = self.offset;
        self.fill(&mut buf, "magic")?;
        if buf != magic {
            return Err(Error::parse(at, "bad magic"));
        }
        Ok(())
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        let mut b = [0u8; 8];
        self.fill(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }

    pub(crate) fn usize(&mut self, what: &str) -> Result<usize> {
        let at = self.offset;
        let v = self.u64(what)?;
        usize::try_from(v)
            .ok()
            .filter(|&v| v <= 1 << 32)
            .ok_or_else(|| Error::parse(at, format!("implausible {what}: {v}")))
    }

    pub(crate) fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        let mut b = [0u8; 8];
        for _ in 0..n {
            let at = self.offset;
            self.fill(&mut b, what)?;
            let v = f64::from_le_bytes(b);
            if !v.is_finite() {
                return Err(Error::parse(at, format!("non-finite value in {what}")));
            }
            out.push(v);
        }
        Ok(out)
    }

    pub(crate) fn expect_eof(&mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b)? {
            0 => Ok(()),
            _ => Err(Error::parse(self.offset, "trailing bytes after payload")),
        }
    }
}
