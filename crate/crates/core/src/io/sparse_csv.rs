//! Sparse depth as text: one `row,col,depth_m` per line. Blank lines and
//! lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::raster::DepthGrid;
use crate::scalar::Scalar;

pub fn read_sparse_csv<T: Scalar>(
    path: impl AsRef<Path>,
    height: usize,
    width: usize,
) -> Result<DepthGrid<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut grid = DepthGrid::new(height, width, 1)?;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: &str| Error::parse(path, format!("line {}: {msg}", lineno + 1));
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [row, col, depth] = fields[..] else {
            return Err(bad("expected row,col,depth_m"));
        };
        let row: usize = row.parse().map_err(|_| bad("bad row"))?;
        let col: usize = col.parse().map_err(|_| bad("bad col"))?;
        let depth: T = depth.parse().map_err(|_| bad("bad depth"))?;
        if row >= height || col >= width {
            return Err(bad(&format!("({row}, {col}) outside {height}x{width}")));
        }
        if !depth.is_finite() {
            return Err(bad("depth is not finite"));
        }
        if grid.get(row, col).is_some() {
            warn!(
                "{}: duplicate point ({row}, {col}) on line {}, keeping the last",
                path.display(),
                lineno + 1
            );
        }
        grid.set(row, col, depth);
    }
    Ok(grid)
}

/// Writes valid pixels in row-major order using shortest round-trip
/// formatting.
pub fn write_sparse_csv<T: Scalar>(path: impl AsRef<Path>, grid: &DepthGrid<T>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for i in grid.valid_indices() {
        let (row, col) = grid.coords(i);
        writeln!(out, "{row},{col},{}", grid.pixel(i)[0]).unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
