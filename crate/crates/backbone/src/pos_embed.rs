//! Fixed 2-D factorized sine-cosine positional embedding.

use mfvit_tensor::{Element, Tensor};

use crate::error::{BackboneError, Result};

/// Builds a (grid² × dim) position table: the first dim/2 channels encode
/// the row index, the second half the column index, each half alternating
/// sin/cos over a geometric frequency ladder with base 10000. Positions are
/// enumerated row-major.
pub fn sincos_pos_embed<E: Element>(grid: usize, dim: usize) -> Result<Tensor<E>> {
    if dim % 4 != 0 {
        return Err(BackboneError::Config(format!(
            "positional embedding dim {dim} must be divisible by 4"
        )));
    }
    if grid == 0 {
        return Err(BackboneError::Config("grid must be ≥ 1".into()));
    }
    let pairs = dim / 4;
    let freqs: Vec<f64> = (0..pairs)
        .map(|i| 1.0 / 10000f64.powf(i as f64 / pairs as f64))
        .collect();
    let mut data = Vec::with_capacity(grid * grid * dim);
    for r in 0..grid {
        for c in 0..grid {
            for &pos in &[r as f64, c as f64] {
                for &w in &freqs {
                    data.push(E::from_f64((pos * w).sin()));
                    data.push(E::from_f64((pos * w).cos()));
                }
            }
        }
    }
    Ok(Tensor::from_vec(&[grid * grid, dim], data)?)
}
