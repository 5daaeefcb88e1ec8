use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::DepthGrid;
use crate::scalar::Scalar;

/// Uniformly samples `n_points` valid pixels of `gt` without replacement.
/// Deterministic for a fixed seed.
pub fn sample_sparse<T: Scalar>(gt: &DepthGrid<T>, n_points: usize, seed: u64) -> Result<DepthGrid<T>> {
    let valid: Vec<usize> = gt.valid_indices().collect();
    if n_points > valid.len() {
        return Err(Error::InsufficientValid {
            requested: n_points,
            available: valid.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, valid.len(), n_points);
    let mut out = DepthGrid::new(gt.height(), gt.width(), 1)?;
    for k in picks {
        let i = valid[k];
        out.set_index(i, gt.pixel(i)[0]);
    }
    Ok(out)
}
