//! Sparse transformation analysis.
//!
//! A sequence VAE whose latent dynamics are sparse, input-dependent
//! combinations of learned flow fields. Each field is the sum of the
//! gradient of a scalar potential and a (softly) divergence-free rotational
//! part. Codes follow a spike-and-slab prior with Markov spikes.
//!
//! Modules, bottom up:
//! - [`tensor`]: dense tensors with reverse-mode autodiff (double backward supported)
//! - [`priors`]: spike-chain and Laplace slab samplers, closed-form KLs, Gumbel-sigmoid
//! - [`transforms`]: sprite rendering, image transforms, sequence datasets
//! - [`flows`]: flow-field bank, physics losses, density bookkeeping
//! - [`model`]: encoder/decoder/code network, ELBO, two-stage trainer
//! - [`eval`]: equivariance error, flow matching, spike/slab accuracy

pub mod error;
pub mod eval;
pub mod flows;
pub mod model;
pub mod nn;
pub mod priors;
pub mod rng;
pub mod tensor;
pub mod transforms;

pub use error::{Result, StaError};
pub use tensor::{grad, no_grad, Parameter, Tensor};
