//! Parameter-update rules: decoupled-weight-decay Adam and classical
//! momentum SGD. The optimizer consumes (and clears) leaf gradients.

use std::collections::BTreeMap;

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub enum OptimizerKind {
    AdamW {
        beta1: f64,
        beta2: f64,
        eps: f64,
        weight_decay: f64,
    },
    SgdMomentum {
        momentum: f64,
        weight_decay: f64,
    },
}

impl OptimizerKind {
    pub fn adamw(weight_decay: f64) -> Self {
        OptimizerKind::AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }

    pub fn sgd(momentum: f64) -> Self {
        OptimizerKind::SgdMomentum {
            momentum,
            weight_decay: 0.0,
        }
    }
}

struct Slot<E> {
    m: Vec<E>,
    v: Vec<E>,
}

pub struct Optimizer<E: Element> {
    pub kind: OptimizerKind,
    step: u64,
    slots: BTreeMap<String, Slot<E>>,
}

impl<E: Element> Optimizer<E> {
    pub fn new(kind: OptimizerKind) -> Self {
        Optimizer {
            kind,
            step: 0,
            slots: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over the named parameters at learning rate `lr`.
    /// Parameters without an accumulated gradient are skipped; any
    /// non-finite gradient aborts with the parameter's name. Gradients
    /// are cleared after being applied.
    pub fn step(&mut self, params: &[(String, Tensor<E>)], lr: f64) -> Result<()> {
        if lr < 0.0 {
            return Err(TensorError::Config(format!("negative learning rate {lr}")));
        }
        self.step += 1;
        let t = self.step as f64;
        for (name, p) in params {
            let Some(grad) = p.grad() else { continue };
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(TensorError::Numeric(format!(
                    "non-finite gradient for parameter {name}"
                )));
            }
            let slot = self.slots.entry(name.clone()).or_insert_with(|| Slot {
                m: vec![E::zero(); grad.len()],
                v: vec![E::zero(); grad.len()],
            });
            if slot.m.len() != grad.len() {
                return Err(TensorError::ShapeMismatch {
                    op: "optimizer_step",
                    lhs: vec![slot.m.len()],
                    rhs: vec![grad.len()],
                });
            }
            let mut value = p.value_mut();
            match self.kind {
                OptimizerKind::AdamW {
                    beta1,
                    beta2,
                    eps,
                    weight_decay,
                } => {
                    let b1 = E::from_f64(beta1);
                    let b2 = E::from_f64(beta2);
                    let one_m_b1 = E::from_f64(1.0 - beta1);
                    let one_m_b2 = E::from_f64(1.0 - beta2);
                    let bc1 = E::from_f64(1.0 - beta1.powi(t as i32));
                    let bc2 = E::from_f64(1.0 - beta2.powi(t as i32));
                    let lr_e = E::from_f64(lr);
                    let eps_e = E::from_f64(eps);
                    let decay = E::from_f64(1.0 - lr * weight_decay);
                    for ((pv, g), (m, v)) in value
                        .iter_mut()
                        .zip(grad.iter())
                        .zip(slot.m.iter_mut().zip(slot.v.iter_mut()))
                    {
                        // Decoupled decay acts on the parameter directly.
                        *pv *= decay;
                        *m = b1 * *m + one_m_b1 * *g;
                        *v = b2 * *v + one_m_b2 * *g * *g;
                        let mhat = *m / bc1;
                        let vhat = *v / bc2;
                        *pv -= lr_e * mhat / (vhat.sqrt() + eps_e);
                    }
                }
                OptimizerKind::SgdMomentum {
                    momentum,
                    weight_decay,
                } => {
                    let mu = E::from_f64(momentum);
                    let wd = E::from_f64(weight_decay);
                    let lr_e = E::from_f64(lr);
                    for ((pv, g), m) in value.iter_mut().zip(grad.iter()).zip(slot.m.iter_mut()) {
                        let g_eff = *g + wd * *pv;
                        *m = mu * *m + g_eff;
                        *pv -= lr_e * *m;
                    }
                }
            }
        }
        for (_, p) in params {
            p.zero_grad();
        }
        Ok(())
    }
}
