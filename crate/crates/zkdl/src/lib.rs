//! Verifiable quantized training toolkit.
//!
//! A deterministic fixed-point trainer for fully-connected ReLU networks,
//! paired with a proof system that certifies every training step: tensors are
//! committed with a Hyrax-style Pedersen scheme, per-step arithmetic is proven
//! with aggregated sumchecks over multilinear extensions, and ReLU/rescale
//! nonlinearities are handled through committed bit decompositions. A verifier
//! needs only the proof bundle, the public hyperparameters, and the commitment
//! key seed.

pub mod commit;
pub mod bitops;
pub mod bundle;
pub mod cli;
pub mod field;
pub mod gadget;
pub mod matmul;
pub mod orchestrator;
pub mod pool;
pub mod dataset;
pub mod quant;
pub mod schema;
pub mod trainer;
pub mod sumcheck;
pub mod tensor;
pub mod transcript;

pub use field::Scalar;
