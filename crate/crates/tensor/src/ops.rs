//! Differentiable tensor operations.
//!
//! All builders validate shapes eagerly and return `TensorError` on
//! mismatch. Backward closures are written against the saved parent
//! handles; every formula here is covered by the finite-difference suite.

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::tensor::{BackCtx, Tensor};

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

/// out[m×n] = a[m×k] · b[k×n]
pub(crate) fn matmul_nn<E: Element>(a: &[E], b: &[E], m: usize, k: usize, n: usize) -> Vec<E> {
    let mut out = vec![E::zero(); m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            let brow = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// out[m×n] = a[m×k] · b[n×k]ᵀ
pub(crate) fn matmul_nt<E: Element>(a: &[E], b: &[E], m: usize, k: usize, n: usize) -> Vec<E> {
    let mut out = vec![E::zero(); m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = E::zero();
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            orow[j] = acc;
        }
    }
    out
}

/// out[k×n] = a[m×k]ᵀ · b[m×n]
pub(crate) fn matmul_tn<E: Element>(a: &[E], b: &[E], m: usize, k: usize, n: usize) -> Vec<E> {
    let mut out = vec![E::zero(); k * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            let orow = &mut out[kk * n..(kk + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose_raw<E: Element>(a: &[E], m: usize, n: usize) -> Vec<E> {
    let mut out = vec![E::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

impl<E: Element> Tensor<E> {
    pub fn matmul(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        if !self.is_matrix() || !other.is_matrix() || self.cols() != other.rows() {
            return Err(shape_err("matmul", self.shape(), other.shape()));
        }
        let (m, k, n) = (self.rows(), self.cols(), other.cols());
        let value = matmul_nn(&self.value(), &other.value(), m, k, n);
        Ok(Tensor::from_op(
            vec![m, n],
            value,
            vec![self.clone(), other.clone()],
            Box::new(move |ctx: &BackCtx<'_, E>| {
                let a = ctx.parents[0].value();
                let b = ctx.parents[1].value();
                let da = matmul_nt(ctx.grad, &b, m, n, k);
                let db = matmul_tn(&a, ctx.grad, m, k, n);
                vec![Some(da), Some(db)]
            }),
        ))
    }

    pub fn transpose(&self) -> Result<Tensor<E>> {
        if !self.is_matrix() {
            return Err(shape_err("transpose", self.shape(), &[]));
        }
        let (m, n) = (self.rows(), self.cols());
        let value = transpose_raw(&self.value(), m, n);
        Ok(Tensor::from_op(
            vec![n, m],
            value,
            vec![self.clone()],
            Box::new(move |ctx| vec![Some(transpose_raw(ctx.grad, n, m))]),
        ))
    }

    pub fn add(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        if self.shape() != other.shape() {
            return Err(shape_err("add", self.shape(), other.shape()));
        }
        let value: Vec<E> = self
            .value()
            .iter()
            .zip(other.value().iter())
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            value,
            vec![self.clone(), other.clone()],
            Box::new(|ctx| vec![Some(ctx.grad.to_vec()), Some(ctx.grad.to_vec())]),
        ))
    }

    pub fn sub(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        if self.shape() != other.shape() {
            return Err(shape_err("sub", self.shape(), other.shape()));
        }
        let value: Vec<E> = self
            .value()
            .iter()
            .zip(other.value().iter())
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            value,
            vec![self.clone(), other.clone()],
            Box::new(|ctx| {
                vec![
                    Some(ctx.grad.to_vec()),
                    Some(ctx.grad.iter().map(|&g| -g).collect()),
                ]
            }),
        ))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        if self.shape() != other.shape() {
            return Err(shape_err("mul", self.shape(), other.shape()));
        }
        let value: Vec<E> = self
            .value()
            .iter()
            .zip(other.value().iter())
            .map(|(&a, &b)| a * b)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            value,
            vec![self.clone(), other.clone()],
            Box::new(|ctx| {
                let a = ctx.parents[0].value();
                let b = ctx.parents[1].value();
                let da: Vec<E> = ctx
                    .grad
                    .iter()
                    .zip(b.iter())
                    .map(|(&g, &v)| g * v)
                    .collect();
                let db: Vec<E> = ctx
                    .grad
                    .iter()
                    .zip(a.iter())
                    .map(|(&g, &v)| g * v)
                    .collect();
                vec![Some(da), Some(db)]
            }),
        ))
    }

    pub fn scale(&self, c: E) -> Tensor<E> {
        let value: Vec<E> = self.value().iter().map(|&a| a * c).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            value,
            vec![self.clone()],
            Box::new(move |ctx| vec![Some(ctx.grad.iter().map(|&g| g * c).collect())]),
        )
    }

    pub fn add_scalar(&self, c: E) -> Tensor<E> {
        let value: Vec<E> = self.value().iter().map(|&a| a + c).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            value,
            vec![self.clone()],
            Box::new(|ctx| vec![Some(ctx.grad.to_vec())]),
        )
    }

    pub fn neg(&self) -> Tensor<E> {
        self.scale(-E::one())
    }

    /// matrix[m×n] + row[1×n] broadcast over rows (bias add).
    pub fn add_row_broadcast(&self, row: &Tensor<E>) -> Result<Tensor<E>> {
        if !self.is_matrix() || row.shape() != [1, self.cols()] {
            return Err(shape_err("add_row_broadcast", self.shape(), row.shape()));
        }
        let (m, n) = (self.rows(), self.cols());
        let r = row.value();
        let value: Vec<E> = self
            .value()
            .iter()
            .enumerate()
            .map(|(idx, &a)| a + r[idx % n])
            .collect();
        drop(r);
        Ok(Tensor::from_op(
            vec![m, n],
            value,
            vec![self.clone(), row.clone()],
            Box::new(move |ctx| {
                let mut drow = vec![E::zero(); n];
                for i in 0..m {
                    for j in 0..n {
                        drow[j] += ctx.grad[i * n + j];
                    }
                }
                vec![Some(ctx.grad.to_vec()), Some(drow)]
            }),
        ))
    }

    pub fn concat_rows(parts: &[&Tensor<E>]) -> Result<Tensor<E>> {
        if parts.is_empty() {
            return Err(TensorError::Config("concat_rows of zero tensors".into()));
        }
        let n = parts[0].cols();
        for p in parts {
            if !p.is_matrix() || p.cols() != n {
                return Err(shape_err("concat_rows", parts[0].shape(), p.shape()));
            }
        }
        let total_rows: usize = parts.iter().map(|p| p.rows()).sum();
        let mut value = Vec::with_capacity(total_rows * n);
        for p in parts {
            value.extend_from_slice(&p.value());
        }
        let row_counts: Vec<usize> = parts.iter().map(|p| p.rows()).collect();
        Ok(Tensor::from_op(
            vec![total_rows, n],
            value,
            parts.iter().map(|p| (*p).clone()).collect(),
            Box::new(move |ctx| {
                let mut offset = 0;
                row_counts
                    .iter()
                    .map(|&r| {
                        let g = ctx.grad[offset * n..(offset + r) * n].to_vec();
                        offset += r;
                        Some(g)
                    })
                    .collect()
            }),
        ))
    }

    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Tensor<E>> {
        if !self.is_matrix() || start + len > self.rows() {
            return Err(TensorError::Index(format!(
                "slice_rows {start}..{} of {:?}",
                start + len,
                self.shape()
            )));
        }
        let n = self.cols();
        let total = self.rows();
        let value = self.value()[start * n..(start + len) * n].to_vec();
        Ok(Tensor::from_op(
            vec![len, n],
            value,
            vec![self.clone()],
            Box::new(move |ctx| {
                let mut g = vec![E::zero(); total * n];
                g[start * n..(start + len) * n].copy_from_slice(ctx.grad);
                vec![Some(g)]
            }),
        ))
    }

    pub fn concat_cols(parts: &[&Tensor<E>]) -> Result<Tensor<E>> {
        if parts.is_empty() {
            return Err(TensorError::Config("concat_cols of zero tensors".into()));
        }
        let m = parts[0].rows();
        for p in parts {
            if !p.is_matrix() || p.rows() != m {
                return Err(shape_err("concat_cols", parts[0].shape(), p.shape()));
            }
        }
        let widths: Vec<usize> = parts.iter().map(|p| p.cols()).collect();
        let total: usize = widths.iter().sum();
        let mut value = vec![E::zero(); m * total];
        let mut offset = 0;
        for p in parts {
            let w = p.cols();
            let v = p.value();
            for i in 0..m {
                value[i * total + offset..i * total + offset + w]
                    .copy_from_slice(&v[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        Ok(Tensor::from_op(
            vec![m, total],
            value,
            parts.iter().map(|p| (*p).clone()).collect(),
            Box::new(move |ctx| {
                let mut offset = 0;
                widths
                    .iter()
                    .map(|&w| {
                        let mut g = vec![E::zero(); m * w];
                        for i in 0..m {
                            g[i * w..(i + 1) * w].copy_from_slice(
                                &ctx.grad[i * total + offset..i * total + offset + w],
                            );
                        }
                        offset += w;
                        Some(g)
                    })
                    .collect()
            }),
        ))
    }

    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Tensor<E>> {
        if !self.is_matrix() || start + len > self.cols() {
            return Err(TensorError::Index(format!(
                "slice_cols {start}..{} of {:?}",
                start + len,
                self.shape()
            )));
        }
        let (m, n) = (self.rows(), self.cols());
        let v = self.value();
        let mut value = Vec::with_capacity(m * len);
        for i in 0..m {
            value.extend_from_slice(&v[i * n + start..i * n + start + len]);
        }
        drop(v);
        Ok(Tensor::from_op(
            vec![m, len],
            value,
            vec![self.clone()],
            Box::new(move |ctx| {
                let mut g = vec![E::zero(); m * n];
                for i in 0..m {
                    g[i * n + start..i * n + start + len]
                        .copy_from_slice(&ctx.grad[i * len..(i + 1) * len]);
                }
                vec![Some(g)]
            }),
        ))
    }

    /// Row-wise sums of a matrix: [m×n] -> [m×1].
    pub fn row_sums(&self) -> Result<Tensor<E>> {
        if !self.is_matrix() {
            return Err(shape_err("row_sums", self.shape(), &[]));
        }
        let (m, n) = (self.rows(), self.cols());
        let v = self.value();
        let value: Vec<E> = (0..m)
            .map(|i| {
                let mut acc = E::zero();
                for j in 0..n {
                    acc += v[i * n + j];
                }
                acc
            })
            .collect();
        drop(v);
        Ok(Tensor::from_op(
            vec![m, 1],
            value,
            vec![self.clone()],
            Box::new(move |ctx| {
                let mut g = vec![E::zero(); m * n];
                for i in 0..m {
                    for j in 0..n {
                        g[i * n + j] = ctx.grad[i];
                    }
                }
                vec![Some(g)]
            }),
        ))
    }

    pub fn sum_all(&self) -> Tensor<E> {
        let mut acc = E::zero();
        for &v in self.value().iter() {
            acc += v;
        }
        let numel = self.numel();
        Tensor::from_op(
            vec![1],
            vec![acc],
            vec![self.clone()],
            Box::new(move |ctx| vec![Some(vec![ctx.grad[0]; numel])]),
        )
    }

    pub fn mean_all(&self) -> Tensor<E> {
        let numel = self.numel();
        let inv = E::one() / E::from_f64(numel as f64);
        self.sum_all().scale(inv)
    }
}
