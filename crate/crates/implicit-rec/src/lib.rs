//! Implicit-feedback product recommendation toolkit.
//!
//! Four latent-variable collaborative filtering models over a sparse
//! user-item purchase-count matrix:
//!
//! - [`als`]: matrix factorization by alternating least squares with
//!   confidence weighting
//! - [`bpr`]: matrix factorization trained on pairwise ranking triplets
//! - [`ncf`]: neural collaborative filtering (GMF + MLP fused into NeuMF)
//! - [`acf`]: a denoising autoencoder over user interaction vectors
//!
//! plus leave-one-out ranking evaluation ([`eval`]), Gaussian-process
//! Bayesian hyperparameter search ([`tune`]), and the data handling to feed
//! them ([`dataset`], [`io`]).

pub mod als;
pub mod bpr;
pub mod ncf;
pub mod acf;
pub mod eval;
pub mod dataset;
pub mod error;
pub mod io;
pub mod linalg;
pub mod neural;
pub mod tune;

pub use error::{Error, Result};
