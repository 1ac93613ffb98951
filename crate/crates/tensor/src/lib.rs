//! Dense tensor math with reverse-mode automatic differentiation, the
//! neural-network primitive set, optimizers, learning-rate schedules and
//! the shared checkpoint format.

pub mod checkpoint;
mod element;
mod error;
pub mod nn;
mod ops;
pub mod optim;
pub mod schedule;
pub mod seeding;
mod tensor;

#[cfg(any(test, feature = "testutil"))]
pub mod testutil;

pub use element::{Dtype, Element};
pub use error::{Result, TensorError};
pub use tensor::Tensor;
