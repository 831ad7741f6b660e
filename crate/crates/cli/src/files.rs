use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use assign_core::scalar::{format_full, parse_full};
use assign_core::{BinaryAssignment, Scalar};
use serde::Serialize;

use crate::error::CliError;

/// `item_id,x_0,…,x_{J−1}` with every value written to round-trip exactly.
pub fn write_solution<T: Scalar>(path: &Path, x: &[T], owners: usize) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header: Vec<String> = (0..owners).map(|j| format!("x_{j}")).collect();
    let mut go = || -> std::io::Result<()> {
        writeln!(w, "item_id,{}", header.join(","))?;
        for (i, row) in x.chunks(owners).enumerate() {
            write!(w, "{i}")?;
            for &v in row {
                write!(w, ",{}", format_full(v))?;
            }
            writeln!(w)?;
        }
        w.flush()
    };
    go().map_err(|e| CliError::io(path, e))
}

pub fn read_solution<T: Scalar>(path: &Path, items: usize, owners: usize) -> Result<Vec<T>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut x = vec![T::zero(); items * owners];
    let mut seen = vec![false; items];
    for (lineno, line) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |what: &str| CliError::input(format!("{}:{}: {what}", path.display(), lineno + 1));
        let mut fields = line.split(',');
        let id: usize = fields.next().and_then(|f| f.trim().parse().ok()).ok_or_else(|| bad("bad item id"))?;
        if id >= items || seen[id] {
            return Err(bad("item id out of range or repeated"));
        }
        seen[id] = true;
        let vals: Vec<T> = fields.map(parse_full::<T>).collect::<Option<_>>().ok_or_else(|| bad("bad number"))?;
        if vals.len() != owners {
            return Err(bad(&format!("{} values, expected {owners}", vals.len())));
        }
        x[id * owners..(id + 1) * owners].copy_from_slice(&vals);
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(CliError::input(format!("{}: no row for item {missing}", path.display())));
    }
    Ok(x)
}

pub fn write_assignment(path: &Path, a: &BinaryAssignment) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    a.write_csv(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

pub fn read_assignment(path: &Path, items: usize, owners: usize) -> Result<BinaryAssignment, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut out = vec![None; items];
    let mut seen = vec![false; items];
    for (lineno, line) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()) {
        let bad = || CliError::input(format!("{}:{}: expected 'item_id,owner'", path.display(), lineno + 1));
        let (a, b) = line.split_once(',').ok_or_else(bad)?;
        let id: usize = a.trim().parse().map_err(|_| bad())?;
        let owner: i64 = b.trim().parse().map_err(|_| bad())?;
        if id >= items || seen[id] || owner < -1 || owner >= owners as i64 {
            return Err(bad());
        }
        seen[id] = true;
        out[id] = (owner >= 0).then_some(owner as u32);
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(CliError::input(format!("{}: no row for item {missing}", path.display())));
    }
    Ok(BinaryAssignment { owners: out })
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::input(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    path.with_file_name(name)
}

#[derive(Serialize)]
struct Sidecar<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    artifact: String,
    seed: Option<u64>,
    config: &'a C,
}

/// Writes `<artifact>.meta.json` holding the resolved run configuration.
pub fn write_sidecar<C: Serialize>(artifact: &Path, seed: Option<u64>, config: &C) -> Result<(), CliError> {
    let meta = Sidecar {
        tool: "assign",
        version: env!("CARGO_PKG_VERSION"),
        artifact: artifact.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        seed,
        config,
    };
    write_json(&sidecar_path(artifact), &meta)
}
