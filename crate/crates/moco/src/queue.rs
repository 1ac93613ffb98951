//! FIFO queue of L2-normalized key representations.

use mfvit_tensor::{Element, Tensor};

use crate::error::{MocoError, Result};

pub struct RepresentationQueue<E: Element> {
    capacity: usize,
    dim: usize,
    rows: Vec<Vec<E>>,
    cursor: usize,
    total_enqueued: usize,
}

impl<E: Element> RepresentationQueue<E> {
    pub fn new(capacity: usize, dim: usize) -> Self {
        RepresentationQueue {
            capacity,
            dim,
            rows: Vec::new(),
            cursor: 0,
            total_enqueued: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn total_enqueued(&self) -> usize {
        self.total_enqueued
    }

    /// Enqueues one unit-norm row, overwriting the oldest entry when full.
    pub fn push(&mut self, row: Vec<E>) -> Result<()> {
        if row.len() != self.dim {
            return Err(MocoError::Dimension(format!(
                "queue row has {} elements, expected {}",
                row.len(),
                self.dim
            )));
        }
        let norm: f64 = row
            .iter()
            .map(|v| v.to_f64() * v.to_f64())
            .sum::<f64>()
            .sqrt();
        if (norm - 1.0).abs() > 1e-3 {
            return Err(MocoError::Contract(format!(
                "queue rows must be unit-normalized, got ‖r‖ = {norm}"
            )));
        }
        if self.rows.len() < self.capacity {
            self.rows.push(row);
        } else {
            self.rows[self.cursor] = row;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        self.total_enqueued += 1;
        Ok(())
    }

    /// Current contents as a (len × dim) constant tensor.
    pub fn as_tensor(&self) -> Result<Tensor<E>> {
        if self.rows.is_empty() {
            return Err(MocoError::Config("queue is empty".into()));
        }
        let mut data = Vec::with_capacity(self.rows.len() * self.dim);
        for r in &self.rows {
            data.extend_from_slice(r);
        }
        Ok(Tensor::from_vec(&[self.rows.len(), self.dim], data)?)
    }

    pub fn rows(&self) -> &[Vec<E>] {
        &self.rows
    }
}
