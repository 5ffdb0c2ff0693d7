//! Binary embedding archives.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "RSUMEMB\0"
//! 8       2     format version (1)
//! 10      1     role (0 generic_features, 1 importance, 2 query_frame_emb, 3 query_segment_emb)
//! 11      1     reserved, zero
//! 12      8     rows
//! 20      4     dim
//! 24      4     stream rate numerator
//! 28      4     stream rate denominator
//! 32      8     segment length in seconds (f64, 0 for per-frame archives)
//! 40      2     provider id length P
//! 42      P     provider id, UTF-8 ("name@version")
//! 42+P    4*rows*dim  row-major f32 body
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EmbeddingMatrix, EmbeddingSpace, FrameRate, ImportanceCurve, ModelError};

pub const MAGIC: &[u8; 8] = b"RSUMEMB\0";
pub const VERSION: u16 = 1;
const FIXED_HEADER: usize = 42;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("not an embedding archive (bad magic)")]
    BadMagic,
    #[error("unsupported archive version {0}")]
    Version(u16),
    #[error("unknown archive role {0}")]
    UnknownRole(u8),
    #[error("archive truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("role {role} requires dim {expected}, archive has {actual}")]
    RoleContract { role: ArchiveRole, expected: usize, actual: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchiveRole {
    GenericFeatures,
    Importance,
    QueryFrameEmb,
    QuerySegmentEmb,
}

impl ArchiveRole {
    pub const ALL: [ArchiveRole; 4] = [
        ArchiveRole::GenericFeatures,
        ArchiveRole::Importance,
        ArchiveRole::QueryFrameEmb,
        ArchiveRole::QuerySegmentEmb,
    ];

    fn code(self) -> u8 {
        match self {
            ArchiveRole::GenericFeatures => 0,
            ArchiveRole::Importance => 1,
            ArchiveRole::QueryFrameEmb => 2,
            ArchiveRole::QuerySegmentEmb => 3,
        }
    }

    fn from_code(code: u8) -> Result<Self, ArchiveError> {
        Self::ALL.into_iter().find(|r| r.code() == code).ok_or(ArchiveError::UnknownRole(code))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ArchiveRole::GenericFeatures => "generic_features",
            ArchiveRole::Importance => "importance",
            ArchiveRole::QueryFrameEmb => "query_frame_emb",
            ArchiveRole::QuerySegmentEmb => "query_segment_emb",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.emb", self.as_str())
    }
}

impl std::fmt::Display for ArchiveRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub role: ArchiveRole,
    /// Rate of the stream the rows index (or the segments are cut from).
    pub rate: FrameRate,
    /// Segment length for per-segment archives, 0 otherwise.
    pub segment_len_s: f64,
    pub matrix: EmbeddingMatrix,
}

impl Archive {
    pub fn frames(role: ArchiveRole, rate: FrameRate, matrix: EmbeddingMatrix) -> Self {
        Self { role, rate, segment_len_s: 0.0, matrix }
    }

    pub fn segments(rate: FrameRate, segment_len_s: f64, matrix: EmbeddingMatrix) -> Self {
        Self { role: ArchiveRole::QuerySegmentEmb, rate, segment_len_s, matrix }
    }

    pub fn importance(rate: FrameRate, curve: &ImportanceCurve, provider: EmbeddingSpace) -> Self {
        let matrix = EmbeddingMatrix::new(curve.len(), 1, curve.scores().to_vec(), provider)
            .expect("importance curve is finite");
        Self::frames(ArchiveRole::Importance, rate, matrix)
    }

    pub fn to_curve(&self) -> Result<ImportanceCurve, ModelError> {
        ImportanceCurve::new(self.matrix.values().to_vec())
    }

    fn check_role(&self) -> Result<(), ArchiveError> {
        if self.role == ArchiveRole::Importance && self.matrix.dim() != 1 {
            return Err(ArchiveError::RoleContract { role: self.role, expected: 1, actual: self.matrix.dim() });
        }
        Ok(())
    }

    /// Checks the matrix width against the provider contract for the role.
    pub fn expect_dim(&self, dim: usize) -> Result<(), ArchiveError> {
        if self.matrix.dim() != dim {
            return Err(ArchiveError::RoleContract { role: self.role, expected: dim, actual: self.matrix.dim() });
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>, ArchiveError> {
        self.check_role()?;
        let provider = self.matrix.space().as_str().as_bytes();
        let mut out = Vec::with_capacity(FIXED_HEADER + provider.len() + self.matrix.values().len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.role.code());
        out.push(0);
        out.extend_from_slice(&(self.matrix.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(self.matrix.dim() as u32).to_le_bytes());
        out.extend_from_slice(&self.rate.num().to_le_bytes());
        out.extend_from_slice(&self.rate.den().to_le_bytes());
        out.extend_from_slice(&self.segment_len_s.to_le_bytes());
        out.extend_from_slice(&(provider.len() as u16).to_le_bytes());
        out.extend_from_slice(provider);
        for v in self.matrix.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ArchiveError> {
        if bytes.len() < FIXED_HEADER {
            return Err(ArchiveError::Truncated { expected: FIXED_HEADER, actual: bytes.len() });
        }
        if &bytes[..8] != MAGIC {
            return Err(ArchiveError::BadMagic);
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());

        let version = u16_at(8);
        if version != VERSION {
            return Err(ArchiveError::Version(version));
        }
        let role = ArchiveRole::from_code(bytes[10])?;
        let rows = u64_at(12) as usize;
        let dim = u32_at(20) as usize;
        let rate = FrameRate::new(u32_at(24), u32_at(28))?;
        let segment_len_s = f64::from_le_bytes(bytes[32..40].try_into().unwrap());
        let plen = u16_at(40) as usize;
        let body_start = FIXED_HEADER + plen;
        let expected = rows
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(body_start))
            .ok_or(ArchiveError::Truncated { expected: usize::MAX, actual: bytes.len() })?;
        if bytes.len() != expected {
            return Err(ArchiveError::Truncated { expected, actual: bytes.len() });
        }
        let provider = String::from_utf8_lossy(&bytes[FIXED_HEADER..body_start]).into_owned();
        let values = bytes[body_start..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let matrix = EmbeddingMatrix::new(rows, dim, values, EmbeddingSpace(provider))?;
        let archive = Self { role, rate, segment_len_s, matrix };
        archive.check_role()?;
        Ok(archive)
    }
}

/// Writes `archive` to `path` atomically and returns the path.
pub fn write_archive(path: &Path, archive: &Archive) -> Result<PathBuf, ArchiveError> {
    let bytes = archive.encode()?;
    let io = |source| ArchiveError::Io { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(&bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)?;
    Ok(path.to_path_buf())
}

pub fn read_archive(path: &Path) -> Result<Archive, ArchiveError> {
    let bytes = fs::read(path).map_err(|source| ArchiveError::Io { path: path.to_path_buf(), source })?;
    Archive::decode(&bytes)
}
