//! Checkpoint records on disk.
//!
//! File layout (`checkpoints/ckpt-<t>-<partition>.bin`, all little-endian):
//!
//! | bytes | content                                   |
//! |-------|-------------------------------------------|
//! | 0..4  | iteration `t` (u32)                       |
//! | 4..8  | partition id (u32)                        |
//! | 8..16 | row count (u64)                           |
//! | ..    | `row_count × width` f64 values            |
//! | last 8| CRC-64/ECMA-182 of everything before it   |
//!
//! Coordinator state (ξ, λ, μ) is stored in the same format under the partition
//! id [`COORDINATOR_PARTITION`] as `ckpt-<t>-coord.bin`, with rows ξ_1..ξ_M,
//! λ_1..λ_M, μ_1..μ_N, each of width J.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::checksum::crc64;

pub const COORDINATOR_PARTITION: u32 = u32::MAX;

const HEADER_LEN: usize = 16;
const TRAILER_LEN: usize = 8;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checksum-mismatch in {path}: stored {stored:016x}, computed {computed:016x}")]
    ChecksumMismatch { path: PathBuf, stored: u64, computed: u64 },
    #[error("missing-record: no checkpoint for iteration {iteration}, partition {partition} at {path}")]
    MissingRecord { iteration: u64, partition: u32, path: PathBuf },
    #[error("malformed checkpoint {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("checkpoint io error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRecord {
    pub iteration: u32,
    pub partition_id: u32,
    pub row_count: u64,
    /// Row-major values, `row_count × width`.
    pub values: Vec<f64>,
}

impl CheckpointRecord {
    pub fn width(&self) -> usize {
        if self.row_count == 0 {
            0
        } else {
            self.values.len() / self.row_count as usize
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(HEADER_LEN + 8 * self.values.len() + TRAILER_LEN);
        buf.extend_from_slice(&self.iteration.to_le_bytes());
        buf.extend_from_slice(&self.partition_id.to_le_bytes());
        buf.extend_from_slice(&self.row_count.to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc64(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self, CheckpointError> {
        let malformed = |reason: &str| CheckpointError::Malformed { path: path.to_path_buf(), reason: reason.to_string() };
        if bytes.len() < HEADER_LEN + TRAILER_LEN || (bytes.len() - HEADER_LEN - TRAILER_LEN) % 8 != 0 {
            return Err(malformed("truncated record"));
        }
        let body = &bytes[..bytes.len() - TRAILER_LEN];
        let stored = u64::from_le_bytes(bytes[bytes.len() - TRAILER_LEN..].try_into().unwrap());
        let computed = crc64(body);
        if stored != computed {
            return Err(CheckpointError::ChecksumMismatch { path: path.to_path_buf(), stored, computed });
        }
        let iteration = u32::from_le_bytes(body[0..4].try_into().unwrap());
        let partition_id = u32::from_le_bytes(body[4..8].try_into().unwrap());
        let row_count = u64::from_le_bytes(body[8..16].try_into().unwrap());
        let values: Vec<f64> = body[HEADER_LEN..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if row_count == 0 && !values.is_empty() || row_count > 0 && values.len() % row_count as usize != 0 {
            return Err(malformed("payload is not a whole number of rows"));
        }
        Ok(Self { iteration, partition_id, row_count, values })
    }
}

/// Permanent store for per-partition `X` rows and coordinator state.
#[derive(Debug, Clone)]
pub struct CheckpointStore {
    dir: PathBuf,
}

impl CheckpointStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, iteration: u64, partition: u32) -> PathBuf {
        if partition == COORDINATOR_PARTITION {
            self.dir.join(format!("ckpt-{iteration}-coord.bin"))
        } else {
            self.dir.join(format!("ckpt-{iteration}-{partition}.bin"))
        }
    }

    /// Writes via a temporary file and rename, so a record is either absent or complete.
    pub fn write(&self, record: &CheckpointRecord) -> Result<PathBuf, CheckpointError> {
        fs::create_dir_all(&self.dir).map_err(|source| CheckpointError::Io { path: self.dir.clone(), source })?;
        let path = self.path_for(u64::from(record.iteration), record.partition_id);
        let tmp = path.with_extension("bin.tmp");
        fs::write(&tmp, record.encode()).map_err(|source| CheckpointError::Io { path: tmp.clone(), source })?;
        fs::rename(&tmp, &path).map_err(|source| CheckpointError::Io { path: path.clone(), source })?;
        Ok(path)
    }

    pub fn read(&self, iteration: u64, partition: u32) -> Result<CheckpointRecord, CheckpointError> {
        let path = self.path_for(iteration, partition);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(CheckpointError::MissingRecord { iteration, partition, path })
            }
            Err(source) => return Err(CheckpointError::Io { path, source }),
        };
        let record = CheckpointRecord::decode(&bytes, &path)?;
        if u64::from(record.iteration) != iteration || record.partition_id != partition {
            return Err(CheckpointError::Malformed { path, reason: "header does not match file name".into() });
        }
        Ok(record)
    }

    /// Iterations that have a coordinator record, ascending.
    pub fn available(&self) -> Vec<u64> {
        let Ok(entries) = fs::read_dir(&self.dir) else { return Vec::new() };
        let mut out: Vec<u64> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_prefix("ckpt-")?.strip_suffix("-coord.bin")?.parse().ok()
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn latest(&self) -> Option<u64> {
        self.available().last().copied()
    }
}
