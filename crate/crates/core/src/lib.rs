//! Tabular VAE synthesis under data scarcity.
//!
//! Trains small variational autoencoders on mixed-type tabular data, builds a
//! weight-space inductive bias from an ensemble of training seeds (pre-training,
//! model averaging, MAML, or domain-randomized search over the pooled seed
//! data), fine-tunes from that bias on the scarce real sample, and validates
//! synthetic output with discriminator-based KL/JS divergence estimates.
//!
//! Module map:
//! - [`tabular`]: schemas, CSV ingestion, mixed-type encoding, subsampling.
//! - [`nn`]: dense MLPs, flat parameter sets, reverse-mode gradients, Adam.
//! - [`vae`]: ELBO training, latent Gaussian-mixture sampler, row generation.
//! - [`bias`]: the four initial-weight strategies and fine-tuning.
//! - [`validate`]: discriminator training and divergence estimation.
//! - [`harness`]: scenario orchestration, gain tables, estimator calibration.

pub mod bias;
pub mod error;
pub mod harness;
pub mod nn;
pub mod rng;
pub mod tabular;
pub mod vae;
pub mod validate;

pub use error::{Error, Result};
