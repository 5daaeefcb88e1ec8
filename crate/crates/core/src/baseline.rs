//! Nearest-valid-pixel fill, the reference point for completion quality.

use crate::error::{Error, Result};
use crate::raster::DepthGrid;
use crate::scalar::Scalar;

/// Copies to every pixel the value of the closest valid sparse pixel
/// (Euclidean distance, ties to the lower row-major index).
pub fn nearest_fill<T: Scalar>(sparse: &DepthGrid<T>) -> Result<DepthGrid<T>> {
    let samples: Vec<(isize, isize, T)> = sparse
        .valid_indices()
        .map(|i| {
            let (r, c) = sparse.coords(i);
            (r as isize, c as isize, sparse.pixel(i)[0])
        })
        .collect();
    if samples.is_empty() {
        return Err(Error::EmptyValidSet);
    }
    DepthGrid::from_fn(sparse.height(), sparse.width(), |row, col| {
        let (row, col) = (row as isize, col as isize);
        let mut best = (isize::MAX, T::zero());
        for &(r, c, v) in &samples {
            let d = (r - row).pow(2) + (c - col).pow(2);
            if d < best.0 {
                best = (d, v);
            }
        }
        Some(best.1)
    })
}
