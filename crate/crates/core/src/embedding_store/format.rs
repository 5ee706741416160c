//! `EMB1` embedding files, `LBL1` label files and plain-text id lists.
//!
//! `EMB1` layout, all integers little-endian:
//!
//! | offset | size | field                                           |
//! |-------:|-----:|-------------------------------------------------|
//! | 0      | 4    | magic `EMB1`                                    |
//! | 4      | 4    | format version, `u32` = 1                       |
//! | 8      | 1    | dtype code: 1 = f32, 2 = f64                    |
//! | 9      | 8    | `d`, `u64`                                      |
//! | 17     | 8    | `N`, `u64`                                      |
//! | 25     | 8    | payload length in bytes, `u64` (= N·d·width)    |
//! | 33     | 8    | FNV-1a 64 checksum of the payload bytes         |
//! | 41     | ...  | N·d values, sample-major (sample 0 first)       |
//!
//! `LBL1` layout: magic `LBL1`, version `u32` = 1, `C` as `u32`, `N` as `u64`,
//! then `N` labels as `u32`.
//!
//! Id lists are UTF-8 text with one decimal `u64` per line.

use std::fmt;
use std::path::Path;

use crate::codec::{read_file, Fnv64, Reader, Writer};
use crate::error::{Error, Result};

use super::{EmbeddingMatrix, LabelVector, SampleId};

pub const EMB1_MAGIC: &[u8; 4] = b"EMB1";
pub const LBL1_MAGIC: &[u8; 4] = b"LBL1";
pub const EMB1_HEADER_LEN: usize = 41;
const EMB1_VERSION: u32 = 1;
const LBL1_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn code(self) -> u8 {
        match self {
            Precision::F32 => 1,
            Precision::F64 => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Precision::F32),
            2 => Some(Precision::F64),
            _ => None,
        }
    }

    pub fn width(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(Error::InvalidArgument(format!("unknown precision {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbeddingHeader {
    pub version: u32,
    pub precision: Precision,
    pub dim: usize,
    pub count: usize,
    pub payload_bytes: u64,
    pub checksum: u64,
}

pub fn write_embeddings(matrix: &EmbeddingMatrix, dest: &Path, precision: Precision) -> Result<()> {
    let mut payload = Writer::new();
    let values = matrix.values();
    // Column-major storage is already sample-major.
    match precision {
        Precision::F64 => {
            for v in values.iter() {
                payload.f64(*v);
            }
        }
        Precision::F32 => {
            for (i, v) in values.iter().enumerate() {
                let narrow = *v as f32;
                if !narrow.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!(
                            "f32 conversion of sample {}, coordinate {}",
                            i / matrix.dim(),
                            i % matrix.dim()
                        ),
                    });
                }
                payload.bytes(&narrow.to_le_bytes());
            }
        }
    }
    let payload = payload.into_bytes();
    let mut checksum = Fnv64::default();
    checksum.update(&payload);

    let mut out = Writer::new();
    out.bytes(EMB1_MAGIC)
        .u32(EMB1_VERSION)
        .u8(precision.code())
        .u64(matrix.dim() as u64)
        .u64(matrix.count() as u64)
        .u64(payload.len() as u64)
        .u64(checksum.finish());
    debug_assert_eq!(out.len(), EMB1_HEADER_LEN);
    out.bytes(&payload);
    out.write_to(dest)
}

fn parse_header(r: &mut Reader<'_>) -> Result<EmbeddingHeader> {
    r.magic(EMB1_MAGIC)?;
    r.version("EMB1", EMB1_VERSION)?;
    let code = r.u8()?;
    let precision = Precision::from_code(code).ok_or_else(|| Error::DtypeMismatch {
        path: r.path().to_path_buf(),
        detail: format!("unknown dtype code {code}"),
    })?;
    let dim = r.usize()?;
    let count = r.usize()?;
    let payload_bytes = r.u64()?;
    let checksum = r.u64()?;
    Ok(EmbeddingHeader {
        version: EMB1_VERSION,
        precision,
        dim,
        count,
        payload_bytes,
        checksum,
    })
}

/// Header of an `EMB1` file, after checking it against the file length.
pub fn read_embedding_header(src: &Path) -> Result<EmbeddingHeader> {
    let data = read_file(src)?;
    let mut r = Reader::new(src, &data);
    let header = parse_header(&mut r)?;
    check_payload(&header, r.remaining(), src)?;
    Ok(header)
}

fn check_payload(header: &EmbeddingHeader, remaining: usize, src: &Path) -> Result<u64> {
    let expected = (header.dim as u128) * (header.count as u128) * header.precision.width() as u128;
    if header.dim == 0 || header.count == 0 {
        return Err(Error::InvalidArgument(format!(
            "{}: header declares an empty matrix ({}x{})",
            src.display(),
            header.dim,
            header.count
        )));
    }
    if (remaining as u128) < expected {
        return Err(Error::Truncated {
            path: src.to_path_buf(),
            expected: (EMB1_HEADER_LEN as u128 + expected).min(u64::MAX as u128) as u64,
            actual: (EMB1_HEADER_LEN + remaining) as u64,
        });
    }
    let expected = expected as u64;
    if header.payload_bytes != expected || remaining as u64 != expected {
        return Err(Error::DtypeMismatch {
            path: src.to_path_buf(),
            detail: format!(
                "{} values of {} need {expected} bytes; header declares {}, file holds {remaining}",
                header.dim * header.count,
                header.precision,
                header.payload_bytes
            ),
        });
    }
    Ok(expected)
}

pub fn read_embeddings(src: &Path) -> Result<EmbeddingMatrix> {
    let data = read_file(src)?;
    let mut r = Reader::new(src, &data);
    let header = parse_header(&mut r)?;
    let len = check_payload(&header, r.remaining(), src)? as usize;
    let payload = r.take(len)?;
    let mut checksum = Fnv64::default();
    checksum.update(payload);
    if checksum.finish() != header.checksum {
        return Err(Error::ChecksumMismatch {
            path: src.to_path_buf(),
            expected: header.checksum,
            actual: checksum.finish(),
        });
    }
    let values: Vec<f64> = match header.precision {
        Precision::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Precision::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    EmbeddingMatrix::from_sample_major(header.dim, header.count, &values)
}

pub fn write_labels(labels: &LabelVector, dest: &Path) -> Result<()> {
    let mut out = Writer::new();
    out.bytes(LBL1_MAGIC)
        .u32(LBL1_VERSION)
        .u32(labels.num_classes())
        .u64(labels.len() as u64);
    for l in labels.as_slice() {
        out.u32(*l);
    }
    out.write_to(dest)
}

pub fn read_labels(src: &Path) -> Result<LabelVector> {
    let data = read_file(src)?;
    let mut r = Reader::new(src, &data);
    r.magic(LBL1_MAGIC)?;
    r.version("LBL1", LBL1_VERSION)?;
    let classes = r.u32()?;
    let n = r.usize()?;
    if (r.remaining() as u128) < n as u128 * 4 {
        return Err(Error::Truncated {
            path: src.to_path_buf(),
            expected: 20 + n as u64 * 4,
            actual: data.len() as u64,
        });
    }
    let labels = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    LabelVector::new(labels, classes)
}

pub fn write_ids(ids: &[SampleId], dest: &Path) -> Result<()> {
    let mut text = String::with_capacity(ids.len() * 8);
    for id in ids {
        text.push_str(&id.0.to_string());
        text.push('\n');
    }
    std::fs::write(dest, text).map_err(|e| Error::io(dest, e))
}

pub fn read_ids(src: &Path) -> Result<Vec<SampleId>> {
    let text = std::fs::read_to_string(src).map_err(|e| Error::io(src, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<u64>().map(SampleId).map_err(|_| {
                Error::InvalidArgument(format!("{}:{}: bad sample id {l:?}", src.display(), i + 1))
            })
        })
        .collect()
}
