//! Minimal differentiable building blocks: dense layers, activations,
//! lookup tables, Adam, and a finite-difference gradient checker.
//!
//! All arithmetic is f32; reductions follow a fixed order so results are
//! bitwise reproducible.

mod adam;
mod gradcheck;
mod layers;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::{Activation, Dense, DenseCache, LookupTable, Mlp, MlpCache};
pub use tensor::Tensor;
