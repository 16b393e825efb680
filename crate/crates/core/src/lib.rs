//! Feature learning with hybrid-feature embedded stacked sparse autoencoders.
//!
//! The crate is organised around a three-stage pipeline:
//!
//! 1. [`hessae`] learns deep features with a stacked sparse autoencoder whose
//!    layers see a variance-ranked mix of original and hidden features.
//! 2. [`lasso`] fuses original and deep features and keeps the columns with
//!    non-zero L1-regularized regression weights.
//! 3. [`ensemble`] bags [`wlppd`] projections feeding [`svm`] base classifiers
//!    and combines them by training-accuracy weighted voting.
//!
//! [`baselines`] holds the comparison methods (PCA, LPP, SAE, SSAE).

pub mod baselines;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod hessae;
pub mod lasso;
pub mod linalg;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod rng;
pub mod svm;
pub mod wlppd;

pub use error::{Error, Result};
