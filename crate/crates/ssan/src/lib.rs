//! Selective self-attention networks (SSANs) at desk scale.
//!
//! A self-attention encoder whose attention can be gated by a learned
//! selector: selection energies are relaxed with Gumbel-Sigmoid noise during
//! training and hard-thresholded at inference. Around the model sit the
//! probing tasks used to study it (bigram order shift, word reordering,
//! tree-depth and top-constituent classification over a synthetic PCFG
//! corpus), unsupervised constituency-tree extraction from attention maps,
//! and attention-behavior analyses (distance histograms, word-class mass,
//! selection rates).
//!
//! Start from the `examples/` directory — one runnable example per
//! capability — or from the `ssan` CLI (`gen-data`, `train`, `eval`,
//! `probe`, `extract-trees`, `analyze-attention`, `grad-check`).

pub mod analysis;
pub mod attention;
pub mod checks;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod model;
pub mod selector;
pub mod tensor;
pub mod tree;

pub use error::{Error, Result};
