//! # ned-core
//!
//! Neural named-entity disambiguation over knowledge-graph neighborhoods:
//! decide whether the entity mentioned in a short text is consistent with a
//! candidate knowledge-graph entry.
//!
//! The crate provides:
//! - a from-scratch reverse-mode tensor engine with Adam ([`autodiff`])
//! - a word-embedding store with centroid pooling ([`embedding`])
//! - knowledge-graph neighborhoods: hop truncation, triplets, reification,
//!   adjacency ([`kg`])
//! - a Bi-LSTM text encoder with mention masking ([`text`])
//! - nine consistency-classification architectures ([`models`])
//! - the balanced pairing pipeline and splits ([`dataset`])
//! - training, evaluation and the multi-run protocol ([`train`])
//!
//! The numeric core is generic over the scalar type; the aliases below pin
//! the default `f64` instantiation.

pub mod autodiff;
pub mod dataset;
pub mod embedding;
pub mod kg;
pub mod lstm;
pub mod models;
pub mod scalar;
pub mod synth;
pub mod text;
pub mod train;

pub use scalar::Real;

/// Default-precision tensor.
pub type Tensor = autodiff::Tensor<f64>;
/// Default-precision tape.
pub type Tape = autodiff::Tape<f64>;
/// Default-precision trainable parameter.
pub type Param = autodiff::Param<f64>;
/// Default-precision parameter collection.
pub type ParamSet = autodiff::ParamSet<f64>;
/// Default-precision Adam optimizer.
pub type Adam = autodiff::Adam<f64>;
