//! InfoNCE contrastive loss against the representation queue.

use mfvit_tensor::{Element, Tensor};

use crate::error::{MocoError, Result};
use crate::queue::RepresentationQueue;

fn check_unit_rows<E: Element>(t: &Tensor<E>, what: &str) -> Result<()> {
    let (rows, cols) = (t.rows(), t.cols());
    let v = t.value();
    for i in 0..rows {
        let norm: f64 = v[i * cols..(i + 1) * cols]
            .iter()
            .map(|x| x.to_f64() * x.to_f64())
            .sum::<f64>()
            .sqrt();
        if (norm - 1.0).abs() > 1e-3 {
            return Err(MocoError::Contract(format!(
                "{what} row {i} is not unit-normalized: ‖r‖ = {norm}"
            )));
        }
    }
    Ok(())
}

/// L = −log[ exp(r_q·r_k⁺/τ) / (exp(r_q·r_k⁺/τ) + Σᵢ exp(r_q·queueᵢ/τ)) ]
/// for a single query (1×d); differentiable w.r.t. both representations.
pub fn info_nce<E: Element>(
    r_q: &Tensor<E>,
    r_k_pos: &Tensor<E>,
    queue: &RepresentationQueue<E>,
    tau: f64,
) -> Result<Tensor<E>> {
    if r_q.shape() != r_k_pos.shape() || !r_q.is_matrix() || r_q.rows() != 1 {
        return Err(MocoError::Dimension(format!(
            "info_nce wants matching 1×d inputs, got {:?} and {:?}",
            r_q.shape(),
            r_k_pos.shape()
        )));
    }
    info_nce_batch(r_q, r_k_pos, queue, tau)
}

/// Batched InfoNCE over paired rows of (B×d) query/key matrices: per row,
/// the positive logit q·k plus the negatives q·queueᵀ go through a
/// cross-entropy with the positive at index 0.
pub fn info_nce_batch<E: Element>(
    queries: &Tensor<E>,
    keys: &Tensor<E>,
    queue: &RepresentationQueue<E>,
    tau: f64,
) -> Result<Tensor<E>> {
    if queries.shape() != keys.shape() || !queries.is_matrix() {
        return Err(MocoError::Dimension(format!(
            "query/key shapes differ: {:?} vs {:?}",
            queries.shape(),
            keys.shape()
        )));
    }
    if !(tau > 0.0) {
        return Err(MocoError::Config("tau must be > 0".into()));
    }
    check_unit_rows(queries, "query")?;
    check_unit_rows(keys, "key")?;
    let negatives = queue.as_tensor()?; // errors when empty
    if negatives.cols() != queries.cols() {
        return Err(MocoError::Dimension(format!(
            "queue width {} does not match representations {}",
            negatives.cols(),
            queries.cols()
        )));
    }

    let inv_tau = E::from_f64(1.0 / tau);
    let pos = queries.mul(keys)?.row_sums()?; // B×1
    let negs = queries.matmul(&negatives.transpose()?)?; // B×K
    let logits = Tensor::concat_cols(&[&pos, &negs])?.scale(inv_tau);
    let targets = vec![0usize; queries.rows()];
    Ok(logits.cross_entropy(&targets)?)
}
