//! Raster and sparse-point file formats, plus the sparse sampling protocol.

mod pfm;
mod pgm;
mod sample;
mod sparse_csv;

use std::path::Path;

pub use pfm::{read_pfm, write_pfm};
pub use pgm::{read_pgm, write_pgm, GUIDE_PGM_SCALE, KITTI_DEPTH_SCALE};
pub use sample::sample_sparse;
pub use sparse_csv::{read_sparse_csv, write_sparse_csv};

use crate::error::{Error, Result};
use crate::raster::DepthGrid;
use crate::scalar::Scalar;

/// Reads a raster, choosing the format from the extension (`.pfm` or
/// `.pgm`). `pgm_scale` converts 16-bit PGM units to values.
pub fn read_raster<T: Scalar>(path: impl AsRef<Path>, pgm_scale: T) -> Result<DepthGrid<T>> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "pfm" => read_pfm(path),
        "pgm" => read_pgm(path, pgm_scale),
        other => Err(Error::parse(
            path,
            format!("unsupported raster extension {other:?} (expected pfm or pgm)"),
        )),
    }
}

pub fn write_raster<T: Scalar>(
    path: impl AsRef<Path>,
    grid: &DepthGrid<T>,
    pgm_scale: T,
) -> Result<()> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "pfm" => write_pfm(path, grid),
        "pgm" => write_pgm(path, grid, pgm_scale),
        "csv" => write_sparse_csv(path, grid),
        other => Err(Error::parse(
            path,
            format!("unsupported output extension {other:?} (expected pfm, pgm or csv)"),
        )),
    }
}

/// Reads sparse depth from `.csv` (needs the grid shape) or any raster format.
pub fn read_sparse<T: Scalar>(
    path: impl AsRef<Path>,
    height: usize,
    width: usize,
    pgm_scale: T,
) -> Result<DepthGrid<T>> {
    let path = path.as_ref();
    if extension(path) == "csv" {
        read_sparse_csv(path, height, width)
    } else {
        read_raster(path, pgm_scale)
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// Reads one whitespace-delimited header token, skipping `#` comments.
pub(crate) fn header_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}
