//! Persistence of fields, trajectories and tables.
//!
//! Binary trajectory layout (little endian):
//!
//! ```text
//! u64 n        grid size per axis
//! u64 M        number of recorded steps (snapshots − 1)
//! f64 T        final time
//! f64 × n²     snapshot 0, row-major (first index x₁)
//! …            snapshots 1 … M
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::{Field, TorusGrid, Trajectory};

/// Write `bytes` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = BufWriter::new(fs::File::create(&tmp)?);
        f.write_all(bytes)?;
        f.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn trajectory_to_bytes(traj: &Trajectory) -> Vec<u8> {
    let grid = traj.grid();
    let mut out = Vec::with_capacity(24 + 8 * grid.len() * traj.len());
    out.extend_from_slice(&(grid.n() as u64).to_le_bytes());
    out.extend_from_slice(&((traj.len() - 1) as u64).to_le_bytes());
    out.extend_from_slice(&traj.times.last().copied().unwrap_or(0.0).to_le_bytes());
    for snap in &traj.snapshots {
        for v in snap.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Inverse of [`trajectory_to_bytes`]; snapshot times are reconstructed as
/// uniform on `[0, T]`.
pub fn trajectory_from_bytes(bytes: &[u8]) -> Result<Trajectory> {
    let bad = |msg: &str| Error::InvalidArgument(format!("malformed trajectory file: {msg}"));
    if bytes.len() < 24 {
        return Err(bad("short header"));
    }
    let word = |i: usize| -> [u8; 8] { bytes[8 * i..8 * i + 8].try_into().expect("8 bytes") };
    let n = u64::from_le_bytes(word(0)) as usize;
    let m = u64::from_le_bytes(word(1)) as usize;
    let t = f64::from_le_bytes(word(2));
    let grid = TorusGrid::new(n)?;
    let expected = 24 + 8 * grid.len() * (m + 1);
    if bytes.len() != expected {
        return Err(bad(&format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let mut traj = Trajectory::new(1);
    for s in 0..=m {
        let base = 3 + s * grid.len();
        let values = (0..grid.len()).map(|i| f64::from_le_bytes(word(base + i))).collect();
        let time = if m == 0 { t } else { t * s as f64 / m as f64 };
        traj.push(time, Field::new(&grid, values)?);
    }
    Ok(traj)
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    write_atomic(path, &trajectory_to_bytes(traj))
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    trajectory_from_bytes(&fs::read(path)?)
}

/// One row per node: `x1,x2,value`.
pub fn field_to_csv(f: &Field) -> String {
    let grid = f.grid();
    let mut s = String::from("x1,x2,value\n");
    for i in 0..grid.n() {
        for j in 0..grid.n() {
            let (x1, x2) = grid.node(i, j);
            s.push_str(&format!("{x1},{x2},{}\n", f.at(i, j)));
        }
    }
    s
}

pub fn write_field_csv(path: &Path, f: &Field) -> Result<()> {
    write_atomic(path, field_to_csv(f).as_bytes())
}

/// Parse a CSV produced by [`field_to_csv`].
pub fn field_from_csv(text: &str) -> Result<Field> {
    let bad = |msg: String| Error::InvalidArgument(format!("malformed field CSV: {msg}"));
    let mut values = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let v = line
            .rsplit(',')
            .next()
            .and_then(|s| s.trim().parse::<f64>().ok())
            .ok_or_else(|| bad(format!("line {}", ln + 1)))?;
        values.push(v);
    }
    let n = (values.len() as f64).sqrt().round() as usize;
    if n * n != values.len() {
        return Err(bad(format!("{} values do not form a square grid", values.len())));
    }
    Field::new(&TorusGrid::new(n)?, values)
}

/// Numeric table with a header row.
pub fn table_to_csv<const K: usize>(header: &[&str; K], rows: &[[f64; K]]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}
