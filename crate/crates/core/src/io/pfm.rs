//! Portable float map. `Pf` is one channel, `PF` three; the sign of the
//! scale line selects endianness (negative means little-endian) and rows run
//! bottom to top. NaN marks an invalid pixel.

use std::fs;
use std::path::Path;

use super::header_token;
use crate::error::{Error, Result};
use crate::raster::DepthGrid;
use crate::scalar::Scalar;

pub fn read_pfm<T: Scalar>(path: impl AsRef<Path>) -> Result<DepthGrid<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut pos = 0;
    let mut next = |what: &str| {
        header_token(&bytes, &mut pos).ok_or_else(|| Error::parse(path, format!("missing {what}")))
    };
    let channels = match next("magic")?.as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(Error::parse(path, format!("bad PFM magic {other:?}"))),
    };
    let dim = |tok: String, what: &str| {
        tok.parse::<usize>()
            .map_err(|_| Error::parse(path, format!("bad {what} {tok:?}")))
    };
    let width = dim(next("width")?, "width")?;
    let height = dim(next("height")?, "height")?;
    let scale_tok = next("scale")?;
    let scale: f64 = scale_tok
        .parse()
        .map_err(|_| Error::parse(path, format!("bad scale {scale_tok:?}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::parse(path, format!("bad scale {scale_tok:?}")));
    }
    let little = scale < 0.0;
    pos += 1;

    let n = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::parse(path, "dimensions overflow"))?;
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if payload.len() != n * 4 {
        return Err(Error::parse(
            path,
            format!(
                "{width}x{height}x{channels} needs {} payload bytes, found {}",
                n * 4,
                payload.len()
            ),
        ));
    }
    let mut grid = DepthGrid::new(height, width, channels)?;
    let mut px = vec![T::zero(); channels];
    for file_row in 0..height {
        let row = height - 1 - file_row;
        for col in 0..width {
            let base = (file_row * width + col) * channels * 4;
            let mut ok = true;
            for (c, v) in px.iter_mut().enumerate() {
                let b: [u8; 4] = payload[base + 4 * c..base + 4 * c + 4].try_into().unwrap();
                let f = if little {
                    f32::from_le_bytes(b)
                } else {
                    f32::from_be_bytes(b)
                };
                ok &= f.is_finite();
                *v = T::lit(f as f64);
            }
            if ok {
                grid.set_pixel(row * width + col, &px);
            }
        }
    }
    Ok(grid)
}

/// Writes little-endian float32; invalid pixels become NaN.
pub fn write_pfm<T: Scalar>(path: impl AsRef<Path>, grid: &DepthGrid<T>) -> Result<()> {
    let path = path.as_ref();
    let magic = if grid.channels() == 3 { "PF" } else { "Pf" };
    let mut out = format!("{magic}\n{} {}\n-1.0\n", grid.width(), grid.height()).into_bytes();
    out.reserve(grid.len() * grid.channels() * 4);
    for row in (0..grid.height()).rev() {
        for col in 0..grid.width() {
            let i = grid.index(row, col);
            for &v in grid.pixel(i) {
                let f = if grid.is_valid(i) {
                    v.to_f64_lossy() as f32
                } else {
                    f32::NAN
                };
                out.extend_from_slice(&f.to_le_bytes());
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
