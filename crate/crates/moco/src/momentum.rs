//! Momentum-coefficient schedule and the momentum parameter update.

use mfvit_tensor::{Element, Tensor};

use crate::config::MocoConfig;
use crate::error::{MocoError, Result};

/// m(t) = m_end − (m_end − m_start)·(1 + cos(πt))/2 for t ∈ [0, 1];
/// endpoints are exact.
pub fn momentum_at(t: f64, cfg: &MocoConfig) -> f64 {
    debug_assert!((0.0..=1.0).contains(&t));
    cfg.m_end - (cfg.m_end - cfg.m_start) * (1.0 + (std::f64::consts::PI * t).cos()) / 2.0
}

/// θ_k ← m·θ_k + (1−m)·θ_q elementwise over matched parameter lists.
pub fn momentum_update<E: Element>(
    query_params: &[(String, Tensor<E>)],
    key_params: &[(String, Tensor<E>)],
    m: f64,
) -> Result<()> {
    if query_params.len() != key_params.len() {
        return Err(MocoError::Dimension(format!(
            "parameter lists differ in length: {} vs {}",
            query_params.len(),
            key_params.len()
        )));
    }
    let m_e = E::from_f64(m);
    let one_minus = E::from_f64(1.0 - m);
    for ((qn, q), (kn, k)) in query_params.iter().zip(key_params) {
        if q.shape() != k.shape() {
            return Err(MocoError::Dimension(format!(
                "momentum pair {qn}/{kn} shapes differ: {:?} vs {:?}",
                q.shape(),
                k.shape()
            )));
        }
        let qv = q.value();
        let mut kv = k.value_mut();
        for (kx, &qx) in kv.iter_mut().zip(qv.iter()) {
            *kx = m_e * *kx + one_minus * qx;
        }
    }
    Ok(())
}
