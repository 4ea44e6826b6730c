//! High-rate scalar quantizer design for decentralized Neyman-Pearson
//! detection of hidden Markov processes.
//!
//! The crate models a Gauss-Markov signal observed in white Gaussian noise
//! (`H1`) against noise alone (`H0`), computes exact and quantized
//! log-likelihood ratios, and evaluates how the choice of quantizer point
//! density degrades the Neyman-Pearson error exponent:
//!
//! - [`model`]: the truncated AR(1)-in-noise model, its discretized state
//!   chain and path sampling.
//! - [`likelihood`]: innovations-form likelihoods, the LLR and the
//!   windowed score function.
//! - [`quantizer`]: point densities (uniform, i.i.d.-optimal, optimal) and
//!   companding quantizers.
//! - [`quantized_likelihood`]: the quantized-observation HMM and its
//!   forward filter.
//! - [`exponent`]: Monte Carlo and quadrature engines for `K`, `K_N`,
//!   `F(y)` and the loss `D_zeta`.
//! - [`detector`]: finite-n threshold calibration and miss-probability
//!   estimation.

pub mod detector;
pub mod error;
pub mod exponent;
pub mod gaussian;
pub mod likelihood;
pub mod model;
pub mod quadrature;
pub mod quantized_likelihood;
pub mod quantizer;
pub mod rng;

pub use error::{Error, Result};
pub use model::{Hypothesis, ModelParams, PathSample, StateGrid, Support};
pub use quantizer::{PointDensity, Quantizer};
