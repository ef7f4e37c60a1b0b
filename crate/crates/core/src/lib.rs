//! Trend analysis of noisily observed latent functions.
//!
//! A latent Gaussian Process is fitted to a scalar time series and the joint
//! posterior of the function and its first two derivatives drives two
//! measures of trendiness:
//!
//! * the Trend Direction Index, the posterior probability that the slope of
//!   the latent function is positive at a given time, and
//! * the Expected Trend Instability, the posterior expected number of sign
//!   changes of the slope on an interval (via the Kac-Rice crossing formula).
//!
//! Hyper-parameters are either fixed at their marginal maximum likelihood
//! values ([`estimation::fit_ml`]) or integrated over by MCMC
//! ([`estimation::fit_bayes`]).

pub mod data;
pub mod error;
pub mod estimation;
pub mod indices;
pub mod kernels;
pub mod posterior;
pub mod selection;
pub mod simulation;
pub mod stats;
pub mod transforms;

pub use data::Dataset;
pub use error::{Assumption, Error, Result};
pub use kernels::{KernelFamily, KernelSpec, MeanSpec};
pub use posterior::{GpPosterior, Hyperparams, JointPosterior};
