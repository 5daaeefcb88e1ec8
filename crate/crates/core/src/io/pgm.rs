//! 16-bit binary PGM (P5, maxval 65535). Value 0 marks an invalid pixel;
//! every other value maps to `value * scale`.

use std::fs;
use std::path::Path;

use log::warn;

use super::header_token;
use crate::error::{Error, Result};
use crate::raster::DepthGrid;
use crate::scalar::Scalar;

/// Meters per unit in KITTI-style 16-bit depth maps.
pub const KITTI_DEPTH_SCALE: f64 = 1.0 / 256.0;
/// Maps a full-range 16-bit guide image to `[0, 1]`.
pub const GUIDE_PGM_SCALE: f64 = 1.0 / 65535.0;

pub fn read_pgm<T: Scalar>(path: impl AsRef<Path>, scale: T) -> Result<DepthGrid<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut pos = 0;
    let mut next = |what: &str| {
        header_token(&bytes, &mut pos).ok_or_else(|| Error::parse(path, format!("missing {what}")))
    };
    if next("magic")? != "P5" {
        return Err(Error::parse(path, "not a binary PGM (expected P5)"));
    }
    let parse = |tok: String, what: &str| {
        tok.parse::<usize>()
            .map_err(|_| Error::parse(path, format!("bad {what} {tok:?}")))
    };
    let width = parse(next("width")?, "width")?;
    let height = parse(next("height")?, "height")?;
    let maxval = parse(next("maxval")?, "maxval")?;
    if maxval != 65535 {
        return Err(Error::parse(
            path,
            format!("maxval {maxval} unsupported, expected 65535"),
        ));
    }
    // exactly one whitespace byte separates the header from the payload
    pos += 1;
    let n = height
        .checked_mul(width)
        .ok_or_else(|| Error::parse(path, "dimensions overflow"))?;
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if payload.len() != n * 2 {
        return Err(Error::parse(
            path,
            format!(
                "{width}x{height} needs {} payload bytes, found {}",
                n * 2,
                payload.len()
            ),
        ));
    }
    let mut grid = DepthGrid::new(height, width, 1)?;
    for (i, px) in payload.chunks_exact(2).enumerate() {
        let v = u16::from_be_bytes([px[0], px[1]]);
        if v != 0 {
            grid.set_index(i, T::lit(v as f64) * scale);
        }
    }
    Ok(grid)
}

/// Writes the first channel quantized to `round(value / scale)`. Valid
/// values that quantize to 0 or overflow are clamped to 1 or 65535.
pub fn write_pgm<T: Scalar>(path: impl AsRef<Path>, grid: &DepthGrid<T>, scale: T) -> Result<()> {
    let path = path.as_ref();
    if !(scale > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "PGM scale must be positive, got {scale}"
        )));
    }
    let mut out = format!("P5\n{} {}\n65535\n", grid.width(), grid.height()).into_bytes();
    out.reserve(grid.len() * 2);
    let mut clamped = 0usize;
    for i in 0..grid.len() {
        let v = match grid.value(i) {
            None => 0u16,
            Some(x) => {
                let q = (x / scale).round().to_f64_lossy();
                if !(1.0..=65535.0).contains(&q) {
                    clamped += 1;
                }
                q.clamp(1.0, 65535.0) as u16
            }
        };
        out.extend_from_slice(&v.to_be_bytes());
    }
    if clamped > 0 {
        warn!("{clamped} valid pixels clamped to the 16-bit range in {}", path.display());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
