//! Microstructure synthesis at desk scale: Ising Monte Carlo datasets,
//! PSD-based structure-property inversion, and a small conditional
//! adversarial model whose continuous temperature label is embedded through
//! the binary representation of its float32 value.
//!
//! Modules follow the pipeline:
//! [`ising`] simulates labeled microstructures, [`psd`] fingerprints and
//! inverts them, [`floatbits`] decomposes labels, [`conditioning`] maps
//! labels to embeddings, [`gan`] trains the conditional generator pair,
//! [`stats`] diagnoses embedding health, [`eval`] runs the evaluation sweep
//! and sensitivity experiments.

pub mod conditioning;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod floatbits;
pub mod gan;
pub mod image;
pub mod ising;
pub mod nn;
pub mod psd;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
