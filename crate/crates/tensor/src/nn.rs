//! Neural-network primitives and small layer containers.

use rand::Rng;

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

pub const LAYERNORM_EPS: f64 = 1e-6;
pub const BATCHNORM_EPS: f64 = 1e-5;

/// Forward mode for layers with batch statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Iterate lanes along `axis`: calls `f(base, stride)` once per lane, where
/// lane element i lives at `base + i * stride`.
fn for_each_lane(shape: &[usize], axis: usize, mut f: impl FnMut(usize, usize)) {
    let lane_len = shape[axis];
    let stride: usize = shape[axis + 1..].iter().product();
    let numel: usize = shape.iter().product();
    let num_lanes = numel / lane_len;
    for lane in 0..num_lanes {
        let outer = lane / stride;
        let inner = lane % stride;
        f(outer * lane_len * stride + inner, stride);
    }
}

impl<E: Element> Tensor<E> {
    /// Numerically stable softmax along `axis` (max-subtraction).
    pub fn softmax(&self, axis: usize) -> Result<Tensor<E>> {
        if axis >= self.shape().len() {
            return Err(TensorError::Config(format!(
                "softmax axis {axis} out of range for shape {:?}",
                self.shape()
            )));
        }
        let shape = self.shape().to_vec();
        let lane_len = shape[axis];
        let x = self.value();
        let mut value = vec![E::zero(); x.len()];
        for_each_lane(&shape, axis, |base, stride| {
            let mut m = x[base];
            for i in 1..lane_len {
                m = m.max_val(x[base + i * stride]);
            }
            let mut denom = E::zero();
            for i in 0..lane_len {
                let e = (x[base + i * stride] - m).exp();
                value[base + i * stride] = e;
                denom += e;
            }
            for i in 0..lane_len {
                value[base + i * stride] = value[base + i * stride] / denom;
            }
        });
        drop(x);
        let back_shape = shape.clone();
        Ok(Tensor::from_op(
            shape,
            value,
            vec![self.clone()],
            Box::new(move |ctx| {
                // dx = y ∘ (g − Σ g∘y) per lane
                let mut dx = vec![E::zero(); ctx.grad.len()];
                for_each_lane(&back_shape, axis, |base, stride| {
                    let mut dot = E::zero();
                    for i in 0..lane_len {
                        let idx = base + i * stride;
                        dot += ctx.grad[idx] * ctx.out[idx];
                    }
                    for i in 0..lane_len {
                        let idx = base + i * stride;
                        dx[idx] = ctx.out[idx] * (ctx.grad[idx] - dot);
                    }
                });
                vec![Some(dx)]
            }),
        ))
    }

    pub fn relu(&self) -> Tensor<E> {
        let value: Vec<E> = self
            .value()
            .iter()
            .map(|&v| if v > E::zero() { v } else { E::zero() })
            .collect();
        Tensor::from_op(
            self.shape().to_vec(),
            value,
            vec![self.clone()],
            Box::new(|ctx| {
                let x = ctx.parents[0].value();
                vec![Some(
                    ctx.grad
                        .iter()
                        .zip(x.iter())
                        .map(|(&g, &v)| if v > E::zero() { g } else { E::zero() })
                        .collect(),
                )]
            }),
        )
    }

    /// GELU, tanh form: 0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³))).
    pub fn gelu(&self) -> Tensor<E> {
        let c = E::from_f64((2.0 / std::f64::consts::PI).sqrt());
        let k = E::from_f64(0.044715);
        let half = E::from_f64(0.5);
        let value: Vec<E> = self
            .value()
            .iter()
            .map(|&x| {
                let u = c * (x + k * x.powi(3));
                half * x * (E::one() + u.tanh())
            })
            .collect();
        Tensor::from_op(
            self.shape().to_vec(),
            value,
            vec![self.clone()],
            Box::new(move |ctx| {
                let x = ctx.parents[0].value();
                let three_k = E::from_f64(3.0 * 0.044715);
                vec![Some(
                    ctx.grad
                        .iter()
                        .zip(x.iter())
                        .map(|(&g, &x)| {
                            let u = c * (x + k * x.powi(3));
                            let t = u.tanh();
                            let sech2 = E::one() - t * t;
                            let du = c * (E::one() + three_k * x * x);
                            let d = half * (E::one() + t) + half * x * sech2 * du;
                            g * d
                        })
                        .collect(),
                )]
            }),
        )
    }

    /// Layer normalization over the last axis, then affine `gain ∘ x̂ + bias`.
    pub fn layernorm(&self, gain: &Tensor<E>, bias: &Tensor<E>) -> Result<Tensor<E>> {
        let shape = self.shape().to_vec();
        let lane = *shape
            .last()
            .ok_or_else(|| TensorError::Config("layernorm on rank-0 tensor".into()))?;
        if gain.shape() != [lane] || bias.shape() != [lane] {
            return Err(TensorError::ShapeMismatch {
                op: "layernorm",
                lhs: shape,
                rhs: gain.shape().to_vec(),
            });
        }
        let axis = shape.len() - 1;
        let eps = E::from_f64(LAYERNORM_EPS);
        let inv_lane = E::one() / E::from_f64(lane as f64);
        let x = self.value();
        let g = gain.value();
        let b = bias.value();
        let mut value = vec![E::zero(); x.len()];
        let mut xhat = vec![E::zero(); x.len()];
        let mut inv_std = vec![E::zero(); x.len() / lane];
        let mut lane_no = 0usize;
        for_each_lane(&shape, axis, |base, stride| {
            let mut mean = E::zero();
            for i in 0..lane {
                mean += x[base + i * stride];
            }
            mean *= inv_lane;
            let mut var = E::zero();
            for i in 0..lane {
                let d = x[base + i * stride] - mean;
                var += d * d;
            }
            var *= inv_lane;
            let s = E::one() / (var + eps).sqrt();
            inv_std[lane_no] = s;
            lane_no += 1;
            for i in 0..lane {
                let idx = base + i * stride;
                let xh = (x[idx] - mean) * s;
                xhat[idx] = xh;
                value[idx] = g[i] * xh + b[i];
            }
        });
        drop(x);
        drop(g);
        drop(b);
        let back_shape = self.shape().to_vec();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            value,
            vec![self.clone(), gain.clone(), bias.clone()],
            Box::new(move |ctx| {
                let g = ctx.parents[1].value();
                let mut dx = vec![E::zero(); ctx.grad.len()];
                let mut dgain = vec![E::zero(); lane];
                let mut dbias = vec![E::zero(); lane];
                let mut lane_no = 0usize;
                for_each_lane(&back_shape, axis, |base, stride| {
                    let s = inv_std[lane_no];
                    lane_no += 1;
                    let mut mean_dxhat = E::zero();
                    let mut mean_dxhat_xhat = E::zero();
                    for i in 0..lane {
                        let idx = base + i * stride;
                        let go = ctx.grad[idx];
                        dgain[i] += go * xhat[idx];
                        dbias[i] += go;
                        let dxh = go * g[i];
                        mean_dxhat += dxh;
                        mean_dxhat_xhat += dxh * xhat[idx];
                    }
                    mean_dxhat *= inv_lane;
                    mean_dxhat_xhat *= inv_lane;
                    for i in 0..lane {
                        let idx = base + i * stride;
                        let dxh = ctx.grad[idx] * g[i];
                        dx[idx] = s * (dxh - mean_dxhat - xhat[idx] * mean_dxhat_xhat);
                    }
                });
                vec![Some(dx), Some(dgain), Some(dbias)]
            }),
        ))
    }

    /// Mean cross-entropy of logits [b×c] against class indices.
    pub fn cross_entropy(&self, targets: &[usize]) -> Result<Tensor<E>> {
        if !self.is_matrix() || self.cols() < 2 {
            return Err(TensorError::Config(format!(
                "cross_entropy needs [batch×classes] with ≥2 classes, got {:?}",
                self.shape()
            )));
        }
        let (b, c) = (self.rows(), self.cols());
        if targets.len() != b {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                lhs: vec![b],
                rhs: vec![targets.len()],
            });
        }
        for &t in targets {
            if t >= c {
                return Err(TensorError::Index(format!(
                    "cross_entropy target {t} out of range for {c} classes"
                )));
            }
        }
        let x = self.value();
        let mut loss = E::zero();
        let mut probs = vec![E::zero(); b * c];
        for i in 0..b {
            let row = &x[i * c..(i + 1) * c];
            let mut m = row[0];
            for &v in &row[1..] {
                m = m.max_val(v);
            }
            let mut denom = E::zero();
            for (j, &v) in row.iter().enumerate() {
                let e = (v - m).exp();
                probs[i * c + j] = e;
                denom += e;
            }
            for j in 0..c {
                probs[i * c + j] = probs[i * c + j] / denom;
            }
            loss += denom.ln() - (row[targets[i]] - m);
        }
        drop(x);
        loss = loss / E::from_f64(b as f64);
        let targets = targets.to_vec();
        Ok(Tensor::from_op(
            vec![1],
            vec![loss],
            vec![self.clone()],
            Box::new(move |ctx| {
                let inv_b = E::one() / E::from_f64(b as f64);
                let mut dx = vec![E::zero(); b * c];
                for i in 0..b {
                    for j in 0..c {
                        let onehot = if targets[i] == j { E::one() } else { E::zero() };
                        dx[i * c + j] = ctx.grad[0] * (probs[i * c + j] - onehot) * inv_b;
                    }
                }
                vec![Some(dx)]
            }),
        ))
    }

    /// Row-wise L2 normalization of a matrix.
    pub fn l2_normalize_rows(&self) -> Result<Tensor<E>> {
        if !self.is_matrix() {
            return Err(TensorError::Config(format!(
                "l2_normalize_rows needs a matrix, got {:?}",
                self.shape()
            )));
        }
        let (m, n) = (self.rows(), self.cols());
        let x = self.value();
        let mut value = vec![E::zero(); m * n];
        let mut norms = vec![E::zero(); m];
        for i in 0..m {
            let mut sq = E::zero();
            for j in 0..n {
                let v = x[i * n + j];
                sq += v * v;
            }
            let norm = sq.sqrt();
            if !(norm > E::zero()) {
                return Err(TensorError::Numeric(
                    "l2_normalize_rows: zero-norm row".into(),
                ));
            }
            norms[i] = norm;
            for j in 0..n {
                value[i * n + j] = x[i * n + j] / norm;
            }
        }
        drop(x);
        Ok(Tensor::from_op(
            vec![m, n],
            value,
            vec![self.clone()],
            Box::new(move |ctx| {
                // dx = (g − y·(g·y)) / ‖x‖ per row
                let mut dx = vec![E::zero(); m * n];
                for i in 0..m {
                    let mut dot = E::zero();
                    for j in 0..n {
                        dot += ctx.grad[i * n + j] * ctx.out[i * n + j];
                    }
                    for j in 0..n {
                        dx[i * n + j] = (ctx.grad[i * n + j] - ctx.out[i * n + j] * dot) / norms[i];
                    }
                }
                vec![Some(dx)]
            }),
        ))
    }
}

/// Fully connected layer `x·w + b` with `w: [in×out]`, `b: [1×out]`.
pub struct Linear<E: Element> {
    pub weight: Tensor<E>,
    pub bias: Tensor<E>,
}

impl<E: Element> Linear<E> {
    /// Uniform ±1/√fan_in initialization.
    pub fn new(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = Tensor::param(
            &[fan_in, fan_out],
            (0..fan_in * fan_out)
                .map(|_| E::from_f64(rng.gen_range(-bound..bound)))
                .collect(),
        )
        .expect("shape/data agree by construction");
        let bias = Tensor::param(&[1, fan_out], vec![E::zero(); fan_out])
            .expect("shape/data agree by construction");
        Linear { weight, bias }
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        x.matmul(&self.weight)?.add_row_broadcast(&self.bias)
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Tensor<E>)> {
        vec![
            (format!("{prefix}.w"), self.weight.clone()),
            (format!("{prefix}.b"), self.bias.clone()),
        ]
    }
}

/// Batch normalization over the batch axis of a [batch×features] matrix.
/// Running statistics (momentum 0.1) live outside the autodiff graph.
pub struct BatchNorm<E: Element> {
    pub gain: Tensor<E>,
    pub bias: Tensor<E>,
    pub running_mean: Tensor<E>,
    pub running_var: Tensor<E>,
    pub momentum: f64,
    features: usize,
}

impl<E: Element> BatchNorm<E> {
    pub fn new(features: usize) -> Self {
        BatchNorm {
            gain: Tensor::param(&[features], vec![E::one(); features]).expect("sized"),
            bias: Tensor::param(&[features], vec![E::zero(); features]).expect("sized"),
            running_mean: Tensor::from_vec(&[features], vec![E::zero(); features]).expect("sized"),
            running_var: Tensor::from_vec(&[features], vec![E::one(); features]).expect("sized"),
            momentum: 0.1,
            features,
        }
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Tensor<E>)> {
        vec![
            (format!("{prefix}.g"), self.gain.clone()),
            (format!("{prefix}.b"), self.bias.clone()),
        ]
    }

    pub fn named_buffers(&self, prefix: &str) -> Vec<(String, Tensor<E>)> {
        vec![
            (format!("{prefix}.running_mean"), self.running_mean.clone()),
            (format!("{prefix}.running_var"), self.running_var.clone()),
        ]
    }

    pub fn forward(&self, x: &Tensor<E>, mode: Mode) -> Result<Tensor<E>> {
        if !x.is_matrix() || x.cols() != self.features {
            return Err(TensorError::ShapeMismatch {
                op: "batchnorm",
                lhs: x.shape().to_vec(),
                rhs: vec![self.features],
            });
        }
        match mode {
            Mode::Train => self.forward_train(x),
            Mode::Eval => self.forward_eval(x),
        }
    }

    fn forward_train(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let (b, f) = (x.rows(), x.cols());
        if b < 2 {
            return Err(TensorError::Config(
                "batchnorm train mode requires batch size ≥ 2".into(),
            ));
        }
        let eps = E::from_f64(BATCHNORM_EPS);
        let inv_b = E::one() / E::from_f64(b as f64);
        let xv = x.value();
        let g = self.gain.value();
        let bb = self.bias.value();
        let mut mean = vec![E::zero(); f];
        let mut var = vec![E::zero(); f];
        for i in 0..b {
            for j in 0..f {
                mean[j] += xv[i * f + j];
            }
        }
        for m in mean.iter_mut() {
            *m *= inv_b;
        }
        for i in 0..b {
            for j in 0..f {
                let d = xv[i * f + j] - mean[j];
                var[j] += d * d;
            }
        }
        for v in var.iter_mut() {
            *v *= inv_b;
        }
        let inv_std: Vec<E> = var.iter().map(|&v| E::one() / (v + eps).sqrt()).collect();
        let mut value = vec![E::zero(); b * f];
        let mut xhat = vec![E::zero(); b * f];
        for i in 0..b {
            for j in 0..f {
                let xh = (xv[i * f + j] - mean[j]) * inv_std[j];
                xhat[i * f + j] = xh;
                value[i * f + j] = g[j] * xh + bb[j];
            }
        }
        drop(xv);
        drop(g);
        drop(bb);

        // Running stats: biased batch var rescaled to the unbiased estimate.
        {
            let mom = E::from_f64(self.momentum);
            let keep = E::one() - mom;
            let unbias = E::from_f64(b as f64 / (b as f64 - 1.0));
            let mut rm = self.running_mean.value_mut();
            let mut rv = self.running_var.value_mut();
            for j in 0..f {
                rm[j] = keep * rm[j] + mom * mean[j];
                rv[j] = keep * rv[j] + mom * (var[j] * unbias);
            }
        }

        let inv_std_b = inv_std;
        Ok(Tensor::from_op(
            vec![b, f],
            value,
            vec![x.clone(), self.gain.clone(), self.bias.clone()],
            Box::new(move |ctx| {
                let g = ctx.parents[1].value();
                let mut dgain = vec![E::zero(); f];
                let mut dbias = vec![E::zero(); f];
                let mut mean_g = vec![E::zero(); f];
                let mut mean_gx = vec![E::zero(); f];
                for i in 0..b {
                    for j in 0..f {
                        let go = ctx.grad[i * f + j];
                        dgain[j] += go * xhat[i * f + j];
                        dbias[j] += go;
                        mean_g[j] += go;
                        mean_gx[j] += go * xhat[i * f + j];
                    }
                }
                for j in 0..f {
                    mean_g[j] *= inv_b;
                    mean_gx[j] *= inv_b;
                }
                let mut dx = vec![E::zero(); b * f];
                for i in 0..b {
                    for j in 0..f {
                        let go = ctx.grad[i * f + j];
                        dx[i * f + j] =
                            g[j] * inv_std_b[j] * (go - mean_g[j] - xhat[i * f + j] * mean_gx[j]);
                    }
                }
                vec![Some(dx), Some(dgain), Some(dbias)]
            }),
        ))
    }

    fn forward_eval(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let (b, f) = (x.rows(), x.cols());
        let eps = E::from_f64(BATCHNORM_EPS);
        let rm = self.running_mean.value_vec();
        let rv = self.running_var.value_vec();
        let scale: Vec<E> = rv.iter().map(|&v| E::one() / (v + eps).sqrt()).collect();
        let xv = x.value();
        let g = self.gain.value();
        let bb = self.bias.value();
        let mut value = vec![E::zero(); b * f];
        for i in 0..b {
            for j in 0..f {
                value[i * f + j] = g[j] * (xv[i * f + j] - rm[j]) * scale[j] + bb[j];
            }
        }
        drop(xv);
        drop(g);
        drop(bb);
        let scale_b = scale;
        let rm_b = rm;
        Ok(Tensor::from_op(
            vec![b, f],
            value,
            vec![x.clone(), self.gain.clone(), self.bias.clone()],
            Box::new(move |ctx| {
                let g = ctx.parents[1].value();
                let xv = ctx.parents[0].value();
                let mut dx = vec![E::zero(); b * f];
                let mut dgain = vec![E::zero(); f];
                let mut dbias = vec![E::zero(); f];
                for i in 0..b {
                    for j in 0..f {
                        let go = ctx.grad[i * f + j];
                        dx[i * f + j] = go * g[j] * scale_b[j];
                        dgain[j] += go * (xv[i * f + j] - rm_b[j]) * scale_b[j];
                        dbias[j] += go;
                    }
                }
                vec![Some(dx), Some(dgain), Some(dbias)]
            }),
        ))
    }
}

/// Layer-normalization parameter pair.
pub struct LayerNorm<E: Element> {
    pub gain: Tensor<E>,
    pub bias: Tensor<E>,
}

impl<E: Element> LayerNorm<E> {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gain: Tensor::param(&[dim], vec![E::one(); dim]).expect("sized"),
            bias: Tensor::param(&[dim], vec![E::zero(); dim]).expect("sized"),
        }
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        x.layernorm(&self.gain, &self.bias)
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Tensor<E>)> {
        vec![
            (format!("{prefix}.g"), self.gain.clone()),
            (format!("{prefix}.b"), self.bias.clone()),
        ]
    }
}
