//! The `.bagemb` container.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "BAGE"
//! 4       2     version (u16 LE) = 1
//! 6       2     flags (u16 LE): bit0 label present, bit1 caption present
//! 8       4     N_p (u32 LE)
//! 12      4     d_v (u32 LE)
//! 16      1     label (0 or 1; 0 when absent)
//! 17      4     caption byte length (u32 LE)
//! 21      ..    caption UTF-8
//! ..      2     patient-id byte length (u16 LE)
//! ..      ..    patient-id UTF-8
//! ..      ..    N_p * d_v f32 LE, row-major
//! ```

use std::path::Path;

use thiserror::Error;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const MAGIC: [u8; 4] = *b"BAGE";
pub const VERSION: u16 = 1;
pub const FLAG_LABEL: u16 = 1 << 0;
pub const FLAG_CAPTION: u16 = 1 << 1;
/// Fixed-size prefix up to and including the caption length field.
pub const FIXED_HEADER_LEN: usize = 21;

/// One patient's bag of patch embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct BagRecord {
    pub patient_id: String,
    /// N_p x d_v, one row per patch.
    pub embeddings: Matrix,
    pub label: Option<bool>,
    pub caption: Option<String>,
}

impl BagRecord {
    pub fn new(
        patient_id: impl Into<String>,
        embeddings: Matrix,
        label: Option<bool>,
        caption: Option<String>,
    ) -> Result<Self> {
        if embeddings.rows() == 0 {
            return Err(Error::Contract("a bag needs at least one patch".into()));
        }
        if embeddings.cols() == 0 {
            return Err(Error::Contract("embedding dimension must be at least 1".into()));
        }
        let patient_id = patient_id.into();
        if patient_id.len() > u16::MAX as usize {
            return Err(Error::Contract("patient id longer than 65535 bytes".into()));
        }
        Ok(Self {
            patient_id,
            embeddings,
            label,
            caption,
        })
    }

    /// Number of patches N_p.
    pub fn len(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn d_v(&self) -> usize {
        self.embeddings.cols()
    }

    /// Same bag with its patch rows reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            embeddings: self.embeddings.select_rows(order),
            ..self.clone()
        }
    }
}

/// Malformed-file classes, each with a stable code.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("bad magic {found:?}, expected \"BAGE\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported version {0}, expected 1")]
    UnsupportedVersion(u16),
    #[error("unknown flag bits {0:#06x}")]
    UnknownFlags(u16),
    #[error("truncated: {field} needs {needed} bytes at offset {offset}, file has {len}")]
    Truncated {
        field: &'static str,
        offset: usize,
        needed: usize,
        len: usize,
    },
    #[error("label byte {0} is not 0 or 1")]
    InvalidLabel(u8),
    #[error("{0} is not valid UTF-8")]
    InvalidUtf8(&'static str),
    #[error("bag has N_p = {n_p}, d_v = {d_v}; both must be at least 1")]
    EmptyBag { n_p: u32, d_v: u32 },
    #[error("non-finite embedding at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("{0} trailing bytes after the embedding payload")]
    TrailingBytes(usize),
}

impl FormatError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::BadMagic { .. } => "bad-magic",
            Self::UnsupportedVersion(_) => "version-mismatch",
            Self::UnknownFlags(_) => "unknown-flags",
            Self::Truncated { .. } => "truncated",
            Self::InvalidLabel(_) => "invalid-label",
            Self::InvalidUtf8(_) => "invalid-utf8",
            Self::EmptyBag { .. } => "empty-bag",
            Self::NonFinite { .. } => "non-finite",
            Self::TrailingBytes(_) => "trailing-bytes",
        }
    }
}

/// Exact encoded size of a bag.
pub fn encoded_len(bag: &BagRecord) -> usize {
    FIXED_HEADER_LEN
        + bag.caption.as_ref().map_or(0, String::len)
        + 2
        + bag.patient_id.len()
        + bag.len() * bag.d_v() * 4
}

pub fn encode(bag: &BagRecord) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(encoded_len(bag));
    let mut flags = 0u16;
    if bag.label.is_some() {
        flags |= FLAG_LABEL;
    }
    if bag.caption.is_some() {
        flags |= FLAG_CAPTION;
    }
    let caption = bag.caption.as_deref().unwrap_or("");
    let caption_len = u32::try_from(caption.len())
        .map_err(|_| Error::Contract("caption longer than u32::MAX bytes".into()))?;
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(&(bag.len() as u32).to_le_bytes());
    out.extend_from_slice(&(bag.d_v() as u32).to_le_bytes());
    out.push(u8::from(bag.label.unwrap_or(false)));
    out.extend_from_slice(&caption_len.to_le_bytes());
    out.extend_from_slice(caption.as_bytes());
    out.extend_from_slice(&(bag.patient_id.len() as u16).to_le_bytes());
    out.extend_from_slice(bag.patient_id.as_bytes());
    for (i, &v) in bag.embeddings.data().iter().enumerate() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::NonFinite(format!(
                "embedding ({}, {}) = {v} overflows f32",
                i / bag.d_v(),
                i % bag.d_v()
            )));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> std::result::Result<&'a [u8], FormatError> {
        if self.bytes.len() - self.pos < n {
            return Err(FormatError::Truncated {
                field,
                offset: self.pos,
                needed: n,
                len: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, field: &'static str) -> std::result::Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2, field)?.try_into().unwrap()))
    }

    fn u32(&mut self, field: &'static str) -> std::result::Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }
}

/// Header fields, readable without decoding the payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BagHeader {
    pub version: u16,
    pub flags: u16,
    pub n_p: u32,
    pub d_v: u32,
    pub label: Option<bool>,
    pub caption: Option<String>,
    pub patient_id: String,
    pub payload_offset: usize,
}

pub fn decode_header(bytes: &[u8]) -> std::result::Result<BagHeader, FormatError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if magic != MAGIC {
        return Err(FormatError::BadMagic { found: magic });
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let flags = r.u16("flags")?;
    if flags & !(FLAG_LABEL | FLAG_CAPTION) != 0 {
        return Err(FormatError::UnknownFlags(flags));
    }
    let n_p = r.u32("N_p")?;
    let d_v = r.u32("d_v")?;
    if n_p == 0 || d_v == 0 {
        return Err(FormatError::EmptyBag { n_p, d_v });
    }
    let label_byte = r.take(1, "label")?[0];
    if label_byte > 1 {
        return Err(FormatError::InvalidLabel(label_byte));
    }
    let caption_len = r.u32("caption length")? as usize;
    let caption_bytes = r.take(caption_len, "caption")?;
    let caption = String::from_utf8(caption_bytes.to_vec())
        .map_err(|_| FormatError::InvalidUtf8("caption"))?;
    let pid_len = r.u16("patient-id length")? as usize;
    let patient_id = String::from_utf8(r.take(pid_len, "patient id")?.to_vec())
        .map_err(|_| FormatError::InvalidUtf8("patient id"))?;
    Ok(BagHeader {
        version,
        flags,
        n_p,
        d_v,
        label: (flags & FLAG_LABEL != 0).then_some(label_byte == 1),
        caption: (flags & FLAG_CAPTION != 0).then_some(caption),
        patient_id,
        payload_offset: r.pos,
    })
}

pub fn decode(bytes: &[u8]) -> std::result::Result<BagRecord, FormatError> {
    let header = decode_header(bytes)?;
    let (n_p, d_v) = (header.n_p as usize, header.d_v as usize);
    let mut r = Reader {
        bytes,
        pos: header.payload_offset,
    };
    let payload = r.take(n_p * d_v * 4, "embeddings")?;
    if r.pos != bytes.len() {
        return Err(FormatError::TrailingBytes(bytes.len() - r.pos));
    }
    let mut data = Vec::with_capacity(n_p * d_v);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(FormatError::NonFinite {
                row: i / d_v,
                col: i % d_v,
            });
        }
        data.push(f64::from(v));
    }
    let embeddings = Matrix::new(n_p, d_v, data).expect("finite, sized payload");
    Ok(BagRecord {
        patient_id: header.patient_id,
        embeddings,
        label: header.label,
        caption: header.caption,
    })
}

pub fn write_bagemb(bag: &BagRecord, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(bag)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_bagemb(path: impl AsRef<Path>) -> Result<BagRecord> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|source| Error::Format {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_header(path: impl AsRef<Path>) -> Result<BagHeader> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = decode_header(&bytes).map_err(|source| Error::Format {
        path: path.to_path_buf(),
        source,
    })?;
    let expected = header.payload_offset + header.n_p as usize * header.d_v as usize * 4;
    if bytes.len() < expected {
        return Err(Error::Format {
            path: path.to_path_buf(),
            source: FormatError::Truncated {
                field: "embeddings",
                offset: header.payload_offset,
                needed: expected - header.payload_offset,
                len: bytes.len(),
            },
        });
    }
    Ok(header)
}
