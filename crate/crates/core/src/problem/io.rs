//! On-disk problem directory.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/b.csv                  M rows × J columns
//! <dir>/c.csv                  N rows × J columns
//! <dir>/partitions/part-<p>.csv  item_id, ω_0..ω_{J-1}, u_0..u_{M-1}, v_0..v_{N-1}
//! ```
//!
//! Floats are written with 17 significant digits; inactive bounds as `inf`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{partition_items, validate, Integrality, ProblemError, ProblemSpec};
use crate::checksum::crc64;
use crate::objective::{ObjectiveKind, ObjectiveModel};
use crate::scalar::{format_full, parse_full, Scalar};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveEntry {
    pub kind: ObjectiveKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dominance: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionEntry {
    pub id: usize,
    pub lo: usize,
    pub hi: usize,
    pub file: String,
    /// CRC-64/ECMA-182 of the shard file, lowercase hex.
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(rename = "I")]
    pub items: usize,
    #[serde(rename = "J")]
    pub owners: usize,
    #[serde(rename = "M")]
    pub num_ineq: usize,
    #[serde(rename = "N")]
    pub num_eq: usize,
    pub objective: ObjectiveEntry,
    pub rho: f64,
    pub beta: f64,
    #[serde(default)]
    pub beta_override: bool,
    #[serde(default)]
    pub integrality: Integrality,
    pub partitions: Vec<PartitionEntry>,
    pub seed: Option<u64>,
    pub format_version: u32,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ProblemError + '_ {
    move |source| ProblemError::Io { path: path.to_path_buf(), source }
}

fn to_f64s<T: Scalar>(xs: &[T]) -> Vec<f64> {
    xs.iter().map(|x| x.as_f64()).collect()
}

fn from_f64s<T: Scalar>(xs: &[f64]) -> Vec<T> {
    xs.iter().map(|&x| T::lit(x)).collect()
}

fn write_matrix<T: Scalar>(path: &Path, data: &[T], cols: usize) -> Result<(), ProblemError> {
    let mut out = String::new();
    for row in data.chunks(cols) {
        let line: Vec<String> = row.iter().map(|&v| format_full(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

fn parse_line<T: Scalar>(path: &Path, lineno: usize, line: &str) -> Result<Vec<T>, ProblemError> {
    line.split(',')
        .map(|tok| {
            parse_full::<T>(tok).ok_or_else(|| {
                ProblemError::MalformedManifest(format!("{}:{}: bad number '{}'", path.display(), lineno + 1, tok.trim()))
            })
        })
        .collect()
}

fn read_matrix<T: Scalar>(path: &Path, rows: usize, cols: usize) -> Result<Vec<T>, ProblemError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::with_capacity(rows * cols);
    let mut count = 0;
    for (k, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let vals = parse_line::<T>(path, k, line)?;
        if vals.len() != cols {
            return Err(ProblemError::MalformedManifest(format!(
                "{}: row {} has {} columns, expected {}",
                path.display(),
                k + 1,
                vals.len(),
                cols
            )));
        }
        out.extend(vals);
        count += 1;
    }
    if count != rows {
        return Err(ProblemError::MalformedManifest(format!("{}: {} rows, expected {}", path.display(), count, rows)));
    }
    Ok(out)
}

/// Writes `spec` into `dir` split into `num_partitions` item shards.
pub fn save_problem<T: Scalar>(spec: &ProblemSpec<T>, dir: &Path, num_partitions: usize) -> Result<Manifest, ProblemError> {
    let parts = partition_items(spec.num_items, num_partitions)?;
    let part_dir = dir.join("partitions");
    fs::create_dir_all(&part_dir).map_err(io_err(&part_dir))?;
    write_matrix(&dir.join("b.csv"), &spec.ineq_bounds, spec.num_owners)?;
    write_matrix(&dir.join("c.csv"), &spec.eq_targets, spec.num_owners)?;

    let width = spec.row_width();
    let mut entries = Vec::with_capacity(parts.len());
    for p in &parts {
        let mut text = String::new();
        for (k, row) in p.rows(spec).chunks(width).enumerate() {
            text.push_str(&(p.lo + k).to_string());
            for &v in row {
                text.push(',');
                text.push_str(&format_full(v));
            }
            text.push('\n');
        }
        let file = format!("partitions/part-{}.csv", p.id);
        let path = dir.join(&file);
        fs::write(&path, text.as_bytes()).map_err(io_err(&path))?;
        entries.push(PartitionEntry {
            id: p.id,
            lo: p.lo,
            hi: p.hi,
            file,
            checksum: format!("{:016x}", crc64(text.as_bytes())),
        });
    }

    let params = to_f64s(&spec.objective.params);
    let objective = ObjectiveEntry {
        kind: spec.objective.kind,
        alpha: (spec.objective.kind == ObjectiveKind::Quadratic).then(|| params.clone()),
        a: (spec.objective.kind == ObjectiveKind::Logarithmic).then_some(params),
        dominance: spec.objective.dominance,
    };
    let manifest = Manifest {
        items: spec.num_items,
        owners: spec.num_owners,
        num_ineq: spec.num_ineq,
        num_eq: spec.num_eq,
        objective,
        rho: spec.rho.as_f64(),
        beta: spec.beta.as_f64(),
        beta_override: spec.beta_override,
        integrality: spec.integrality,
        partitions: entries,
        seed: spec.seed,
        format_version: FORMAT_VERSION,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(io_err(&path))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, ProblemError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| ProblemError::MalformedManifest(format!("{}: {e}", path.display())))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(ProblemError::MalformedManifest(format!(
            "unsupported format_version {} (expected {FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    Ok(manifest)
}

/// Reads and validates a problem directory written by [`save_problem`].
pub fn load_problem<T: Scalar>(dir: &Path) -> Result<ProblemSpec<T>, ProblemError> {
    let manifest = read_manifest(dir)?;
    let (items, owners, m, n) = (manifest.items, manifest.owners, manifest.num_ineq, manifest.num_eq);
    let width = owners + m + n;

    let mut parts = manifest.partitions.clone();
    parts.sort_by_key(|p| p.lo);
    let mut next = 0;
    for p in &parts {
        if p.lo != next || p.hi < p.lo {
            return Err(ProblemError::MalformedManifest(format!("partition {} range [{}, {}) leaves a gap", p.id, p.lo, p.hi)));
        }
        next = p.hi;
    }
    if next != items {
        return Err(ProblemError::MalformedManifest(format!("partitions cover {next} items but I = {items}")));
    }

    let mut rows = Vec::with_capacity(items * width);
    for p in &parts {
        let path: PathBuf = dir.join(&p.file);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        if format!("{:016x}", crc64(&bytes)) != p.checksum {
            return Err(ProblemError::ChecksumMismatch(path));
        }
        let text = String::from_utf8(bytes)
            .map_err(|_| ProblemError::MalformedManifest(format!("{}: not UTF-8", path.display())))?;
        let mut count = 0;
        for (k, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let (id, rest) = line
                .split_once(',')
                .ok_or_else(|| ProblemError::MalformedManifest(format!("{}:{}: missing fields", path.display(), k + 1)))?;
            let id: usize = id
                .trim()
                .parse()
                .map_err(|_| ProblemError::MalformedManifest(format!("{}:{}: bad item id", path.display(), k + 1)))?;
            if id != p.lo + count {
                return Err(ProblemError::MalformedManifest(format!(
                    "{}: item id {id} out of order (expected {})",
                    path.display(),
                    p.lo + count
                )));
            }
            let vals = parse_line::<T>(&path, k, rest)?;
            if vals.len() != width {
                return Err(ProblemError::MalformedManifest(format!(
                    "{}:{}: {} values, expected J+M+N = {width}",
                    path.display(),
                    k + 1,
                    vals.len()
                )));
            }
            rows.extend(vals);
            count += 1;
        }
        if count != p.hi - p.lo {
            return Err(ProblemError::MalformedManifest(format!(
                "{} holds {count} rows but the manifest declares {}",
                path.display(),
                p.hi - p.lo
            )));
        }
    }

    let ineq_bounds = read_matrix::<T>(&dir.join("b.csv"), m, owners)?;
    let eq_targets = read_matrix::<T>(&dir.join("c.csv"), n, owners)?;
    let obj = &manifest.objective;
    let mut objective = match obj.kind {
        ObjectiveKind::Quadratic => ObjectiveModel::quadratic(from_f64s(
            obj.alpha.as_deref().ok_or_else(|| ProblemError::MalformedManifest("quadratic objective without alpha".into()))?,
        )),
        ObjectiveKind::Logarithmic => ObjectiveModel::logarithmic(from_f64s(
            obj.a.as_deref().ok_or_else(|| ProblemError::MalformedManifest("logarithmic objective without a".into()))?,
        )),
        ObjectiveKind::Linear => ObjectiveModel::linear(),
    };
    objective.dominance = obj.dominance;

    validate(ProblemSpec {
        num_items: items,
        num_owners: owners,
        num_ineq: m,
        num_eq: n,
        rows,
        ineq_bounds,
        eq_targets,
        objective,
        rho: T::lit(manifest.rho),
        beta: T::lit(manifest.beta),
        beta_override: manifest.beta_override,
        integrality: manifest.integrality,
        seed: manifest.seed,
    })
}
