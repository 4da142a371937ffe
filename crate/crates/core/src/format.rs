//! EMB1 binary container and its JSON manifest.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "EMB1" | version u32 = 1 | n u32 | d u32 | class_count u32 | flags u32
//! n*d f32 features, row-major
//! [flags & 1] n i32 labels
//! [flags & 2] n u64 ids
//! [flags & 4] n*class_count f32 soft labels, row-major
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingSet;
use crate::error::FormatError;
use crate::scalar::Scalar;

pub const MAGIC: [u8; 4] = *b"EMB1";
pub const VERSION: u32 = 1;

pub const FLAG_LABELS: u32 = 1;
pub const FLAG_IDS: u32 = 1 << 1;
pub const FLAG_SOFT: u32 = 1 << 2;
const KNOWN_FLAGS: u32 = FLAG_LABELS | FLAG_IDS | FLAG_SOFT;
const HEADER_LEN: usize = 24;

/// Raw decoded contents of an EMB1 file, at storage precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Emb1Record {
    pub features: Array2<f32>,
    pub class_count: u32,
    pub labels: Option<Vec<i32>>,
    pub ids: Option<Vec<u64>>,
    pub soft: Option<Array2<f32>>,
}

impl Emb1Record {
    fn flags(&self) -> u32 {
        let mut flags = 0;
        if self.labels.is_some() {
            flags |= FLAG_LABELS;
        }
        if self.ids.is_some() {
            flags |= FLAG_IDS;
        }
        if self.soft.is_some() {
            flags |= FLAG_SOFT;
        }
        flags
    }

    pub fn encode(&self) -> Vec<u8> {
        let (n, d) = self.features.dim();
        let c = self.class_count as usize;
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * n * d + 12 * n + 4 * n * c);
        out.extend_from_slice(&MAGIC);
        for word in [VERSION, n as u32, d as u32, self.class_count, self.flags()] {
            out.extend_from_slice(&word.to_le_bytes());
        }
        for v in self.features.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(labels) = &self.labels {
            for l in labels {
                out.extend_from_slice(&l.to_le_bytes());
            }
        }
        if let Some(ids) = &self.ids {
            for id in ids {
                out.extend_from_slice(&id.to_le_bytes());
            }
        }
        if let Some(soft) = &self.soft {
            for v in soft.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut reader = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = reader.take(4)?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(FormatError::BadMagic {
                expected: MAGIC,
                found: magic,
            });
        }
        let version = reader.u32()?;
        if version != VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let n = reader.u32()? as usize;
        let d = reader.u32()? as usize;
        let class_count = reader.u32()?;
        let flags = reader.u32()?;
        if flags & !KNOWN_FLAGS != 0 {
            return Err(FormatError::InvalidHeader(format!("unknown flag bits {flags:#x}")));
        }
        if flags & (FLAG_LABELS | FLAG_SOFT) != 0 && class_count == 0 {
            return Err(FormatError::InvalidHeader(
                "labels or soft labels present with class_count 0".into(),
            ));
        }

        let features = reader.f32_matrix(n, d, "feature")?;
        let labels = if flags & FLAG_LABELS != 0 {
            let raw = reader.take(checked_len(n, 1, 4)?)?;
            let labels: Vec<i32> = raw
                .chunks_exact(4)
                .map(|c| i32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            if let Some((index, &label)) = labels
                .iter()
                .enumerate()
                .find(|(_, &l)| l < 0 || l as u32 >= class_count)
            {
                return Err(FormatError::LabelOutOfRange {
                    index,
                    label: i64::from(label),
                    class_count,
                });
            }
            Some(labels)
        } else {
            None
        };
        let ids = if flags & FLAG_IDS != 0 {
            let raw = reader.take(checked_len(n, 1, 8)?)?;
            Some(
                raw.chunks_exact(8)
                    .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            )
        } else {
            None
        };
        let soft = if flags & FLAG_SOFT != 0 {
            Some(reader.f32_matrix(n, class_count as usize, "soft-label")?)
        } else {
            None
        };
        let trailing = bytes.len() - reader.pos;
        if trailing != 0 {
            return Err(FormatError::TrailingBytes(trailing));
        }
        Ok(Self {
            features,
            class_count,
            labels,
            ids,
            soft,
        })
    }

    pub fn from_set<S: Scalar>(set: &EmbeddingSet<S>) -> Self {
        Self {
            features: set.features().mapv(Scalar::as_f32),
            class_count: set.class_count() as u32,
            labels: set
                .labels()
                .map(|l| l.iter().map(|&x| x as i32).collect()),
            ids: Some(set.ids().to_vec()),
            soft: None,
        }
    }

    pub fn into_set<S: Scalar>(self) -> Result<EmbeddingSet<S>, FormatError> {
        let n = self.features.nrows();
        let ids = self.ids.unwrap_or_else(|| (0..n as u64).collect());
        let labels = self
            .labels
            .map(|l| l.into_iter().map(|x| x as usize).collect());
        Ok(EmbeddingSet::new(
            self.features.mapv(S::of_f32),
            labels,
            self.class_count as usize,
            ids,
        )?)
    }
}

fn checked_len(rows: usize, cols: usize, width: usize) -> Result<usize, FormatError> {
    rows.checked_mul(cols)
        .and_then(|x| x.checked_mul(width))
        .ok_or_else(|| FormatError::InvalidHeader(format!("block of {rows}x{cols} overflows")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], FormatError> {
        let available = self.bytes.len() - self.pos;
        if len > available {
            return Err(FormatError::Truncated {
                needed: self.pos + len,
                available: self.bytes.len(),
            });
        }
        let slice = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32_matrix(
        &mut self,
        rows: usize,
        cols: usize,
        block: &'static str,
    ) -> Result<Array2<f32>, FormatError> {
        let raw = self.take(checked_len(rows, cols, 4)?)?;
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FormatError::NonFinite {
                block,
                row: i / cols.max(1),
                col: i % cols.max(1),
            });
        }
        Ok(Array2::from_shape_vec((rows, cols), values).expect("length checked"))
    }
}

pub fn write_embedding_file<S: Scalar>(
    set: &EmbeddingSet<S>,
    path: impl AsRef<Path>,
) -> Result<(), FormatError> {
    fs::write(path, Emb1Record::from_set(set).encode())?;
    Ok(())
}

pub fn read_embedding_file<S: Scalar>(path: impl AsRef<Path>) -> Result<EmbeddingSet<S>, FormatError> {
    let bytes = fs::read(path)?;
    Emb1Record::decode(&bytes)?.into_set()
}

/// Companion `<name>.manifest.json` metadata.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset_name: String,
    #[serde(default)]
    pub class_names: Vec<String>,
    #[serde(default)]
    pub source_model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_count: Option<usize>,
}

impl Manifest {
    pub fn path_for(data_path: impl AsRef<Path>) -> PathBuf {
        let data_path = data_path.as_ref();
        let stem = data_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        data_path.with_file_name(format!("{stem}.manifest.json"))
    }

    pub fn write(&self, data_path: impl AsRef<Path>) -> Result<(), FormatError> {
        fs::write(Self::path_for(data_path), serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn read(data_path: impl AsRef<Path>) -> Result<Self, FormatError> {
        Ok(serde_json::from_slice(&fs::read(Self::path_for(data_path))?)?)
    }
}
