//! Little-endian helpers shared by the PROT, TOKE and ATTN formats.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub(crate) struct Reader<R> {
    inner: R,
    format: &'static str,
}

impl<R: Read> Reader<R> {
    pub(crate) fn new(inner: R, format: &'static str) -> Self {
        Reader { inner, format }
    }

    fn fill(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Truncated {
                format: self.format,
                detail: format!("eof while reading {what}"),
            },
            _ => Error::io(self.format, e),
        })
    }

    /// Checks the 4-byte magic and the version byte.
    pub(crate) fn header(&mut self, magic: &[u8; 4], version: u8) -> Result<()> {
        let mut m = [0u8; 4];
        self.fill(&mut m, "magic")?;
        if &m != magic {
            return Err(Error::BadMagic {
                format: self.format,
                found: m,
            });
        }
        let v = self.u8("version")?;
        if v != version {
            return Err(Error::BadVersion {
                format: self.format,
                version: v,
            });
        }
        Ok(())
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        let mut b = [0u8; 1];
        self.fill(&mut b, what)?;
        Ok(b[0])
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.fill(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        let mut b = [0u8; 8];
        self.fill(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }

    pub(crate) fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let mut buf = vec![0u8; len];
        self.fill(&mut buf, what)?;
        String::from_utf8(buf).map_err(|_| Error::Truncated {
            format: self.format,
            detail: format!("{what} is not valid utf-8"),
        })
    }

    pub(crate) fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let mut buf = vec![0u8; n * 4];
        self.fill(&mut buf, what)?;
        Ok(buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    /// Errors if any bytes remain.
    pub(crate) fn finish(mut self) -> Result<()> {
        let mut extra = [0u8; 1];
        match self.inner.read(&mut extra) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::Truncated {
                format: self.format,
                detail: "trailing bytes after last record".into(),
            }),
            Err(e) => Err(Error::io(self.format, e)),
        }
    }
}

pub(crate) fn write_all<W: Write>(w: &mut W, bytes: &[u8], format: &'static str) -> Result<()> {
    w.write_all(bytes).map_err(|e| Error::io(format, e))
}

pub(crate) fn write_str<W: Write>(w: &mut W, s: &str, format: &'static str) -> Result<()> {
    write_all(w, &(s.len() as u32).to_le_bytes(), format)?;
    write_all(w, s.as_bytes(), format)
}

pub(crate) fn write_f32s<W: Write>(w: &mut W, values: &[f32], format: &'static str) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    write_all(w, &buf, format)
}
