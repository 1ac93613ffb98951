//! Label-fraction subsampling of the training split.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{PipelineError, Result};
use crate::manifest::ManifestRow;

/// floor(fraction·N) rows drawn uniformly without replacement,
/// deterministic per seed; fraction 1.0 returns the full set in original
/// order. The complement stays hidden from the model.
pub fn sample_label_fraction<'a>(
    train_rows: &[&'a ManifestRow],
    fraction: f64,
    seed: u64,
) -> Result<Vec<&'a ManifestRow>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(PipelineError::Config(format!(
            "label fraction must be in (0, 1], got {fraction}"
        )));
    }
    if fraction == 1.0 {
        return Ok(train_rows.to_vec());
    }
    let n = train_rows.len();
    let k = (fraction * n as f64).floor() as usize;
    if k == 0 {
        return Err(PipelineError::Config(format!(
            "label fraction {fraction} of {n} rows selects nothing"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| train_rows[i]).collect())
}
