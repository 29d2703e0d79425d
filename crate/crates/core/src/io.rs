//! On-disk formats: NPL1 binary snapshots and the CSV modulation series.
//!
//! NPL1 layout (little-endian): magic `NPL1`, u64 Ny, u64 Ntheta, f64 L, f64 tau,
//! f64 t, f64 lambda, f64 a, f64 b, then the Ny*Ntheta values y-major.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::flow::{ModulationSeries, SeriesRow, SERIES_HEADER};
use crate::grid::{Field, Grid};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"NPL1";

/// A radius field with the frame scalars it was recorded at.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub field: Field,
    pub tau: f64,
    pub t: f64,
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
}

pub fn write_snapshot(w: &mut impl Write, s: &Snapshot) -> Result<()> {
    let g = s.field.grid();
    let mut buf = Vec::with_capacity(4 + 16 + 48 + 8 * g.len());
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&(g.ny as u64).to_le_bytes());
    buf.extend_from_slice(&(g.ntheta as u64).to_le_bytes());
    for x in [g.half_width, s.tau, s.t, s.lambda, s.a, s.b] {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    for x in s.field.values() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read, what: &str) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| Error::Snapshot(format!("truncated while reading {what}: {e}")))?;
    Ok(b)
}

pub fn read_snapshot(r: &mut impl Read) -> Result<Snapshot> {
    let magic: [u8; 4] = read_array(r, "magic")?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::Snapshot(format!("bad magic {magic:?}")));
    }
    let ny = u64::from_le_bytes(read_array(r, "Ny")?) as usize;
    let ntheta = u64::from_le_bytes(read_array(r, "Ntheta")?) as usize;
    let mut scalars = [0.0; 6];
    for (slot, name) in scalars.iter_mut().zip(["L", "tau", "t", "lambda", "a", "b"]) {
        *slot = f64::from_le_bytes(read_array(r, name)?);
    }
    let grid = Grid::new(scalars[0], ny, ntheta)?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        values.push(f64::from_le_bytes(read_array(r, "values")?));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Snapshot("trailing bytes after values".into()));
    }
    Ok(Snapshot {
        field: Field::from_values(grid, values)?,
        tau: scalars[1],
        t: scalars[2],
        lambda: scalars[3],
        a: scalars[4],
        b: scalars[5],
    })
}

/// One CSV line, every value with 17 significant digits.
pub fn format_row(row: &SeriesRow) -> String {
    row.to_array().iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(",")
}

pub fn write_series_header(w: &mut impl Write) -> Result<()> {
    writeln!(w, "{SERIES_HEADER}")?;
    Ok(())
}

pub fn write_series_row(w: &mut impl Write, row: &SeriesRow) -> Result<()> {
    writeln!(w, "{}", format_row(row))?;
    Ok(())
}

pub fn write_series(w: &mut impl Write, series: &ModulationSeries) -> Result<()> {
    write_series_header(w)?;
    for row in &series.rows {
        write_series_row(w, row)?;
    }
    Ok(())
}

pub fn read_series(r: impl BufRead) -> Result<ModulationSeries> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Config("empty series file".into()))??;
    if header.trim() != SERIES_HEADER {
        return Err(Error::Config(format!("unexpected series header: {header}")));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("series line {}: {e}", n + 2)))?;
        let arr: [f64; 16] = vals
            .try_into()
            .map_err(|v: Vec<f64>| Error::Config(format!("series line {}: {} columns, expected 16", n + 2, v.len())))?;
        rows.push(SeriesRow::from_array(arr));
    }
    Ok(ModulationSeries { rows })
}
