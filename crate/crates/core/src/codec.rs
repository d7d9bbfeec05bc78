//! Versioned little-endian containers for parameter files.
//!
//! Every record starts with four magic bytes and a `u32` format version;
//! counts and dimensions are `u64`, values are `f64`, all little-endian.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new(magic: &[u8; 4]) -> Self {
        let mut e = Encoder { buf: Vec::new() };
        e.buf.extend_from_slice(magic);
        e.u32(FORMAT_VERSION);
        e
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    /// Raw values only; the shape is implied by dims written earlier.
    pub fn values(&mut self, m: &Matrix) {
        self.buf.reserve(m.data().len() * 8);
        for v in m.data() {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.buf.extend_from_slice(b);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Decoder<'a> {
    /// Checks magic and version.
    pub fn new(buf: &'a [u8], magic: &[u8; 4], what: &'static str) -> Result<Self> {
        let mut d = Decoder { buf, pos: 0, what };
        let found = d.take(4)?;
        if found != magic {
            return Err(Error::Format(format!(
                "{what}: expected magic {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(found)
            )));
        }
        let version = d.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "{what}: unsupported format version {version}"
            )));
        }
        Ok(d)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!(
                "{}: truncated at byte {}",
                self.what, self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn dim(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|&d| d <= (1 << 40))
            .ok_or_else(|| Error::Format(format!("{}: implausible dimension {v}", self.what)))
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Format(format!("{}: dimension overflow", self.what)))?;
        let raw = self.take(n.saturating_mul(8))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Matrix::new(rows, cols, data)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.dim()?;
        self.take(n)
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{}: {} trailing bytes",
                self.what,
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Appends `name rows cols` followed by one line per row.
pub fn write_text_matrix(out: &mut String, name: &str, m: &Matrix) {
    let _ = writeln!(out, "{name} {} {}", m.rows(), m.cols());
    for r in 0..m.rows() {
        let line: Vec<String> = m.row(r).iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
}

pub fn read_text_matrix<'a>(
    lines: &mut impl Iterator<Item = &'a str>,
    name: &str,
) -> Result<Matrix> {
    let header = lines
        .next()
        .ok_or_else(|| Error::Format(format!("missing `{name}` block")))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    let bad_header = || Error::Format(format!("bad `{name}` header: `{header}`"));
    if parts.len() != 3 || parts[0] != name {
        return Err(bad_header());
    }
    let rows: usize = parts[1].parse().map_err(|_| bad_header())?;
    let cols: usize = parts[2].parse().map_err(|_| bad_header())?;
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let line = lines
            .next()
            .ok_or_else(|| Error::Format(format!("`{name}` ends at row {r}")))?;
        let before = data.len();
        for tok in line.split_whitespace() {
            data.push(
                tok.parse::<f64>()
                    .map_err(|_| Error::Format(format!("`{name}` row {r}: bad value `{tok}`")))?,
            );
        }
        if data.len() - before != cols {
            return Err(Error::Format(format!(
                "`{name}` row {r}: expected {cols} values"
            )));
        }
    }
    Matrix::new(rows, cols, data)
}
