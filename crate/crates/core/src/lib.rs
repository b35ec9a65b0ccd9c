//! Bitext latent-variable sentence model with a semantic (von Mises-Fisher)
//! and a syntactic (Gaussian) latent variable.
//!
//! The crate covers the whole pipeline: corpus ingestion and a synthetic
//! bitext world with gold labels, BPE subwords, the two latent
//! distributions, a hand-differentiated recurrent network, the
//! ELBO/PRL/WPL training objective, exemplar-controlled generation, tree
//! metrics and the disentanglement probes.

pub mod control;
pub mod corpus;
pub mod error;
pub mod latent;
pub mod metrics;
pub mod network;
pub mod objective;
pub mod rng;
pub mod subword;
pub mod trees;

pub use error::{Error, Result};
