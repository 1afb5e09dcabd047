//! One-step-ahead stock price forecasting with technical-indicator features,
//! a sparse 1-D residual convolutional autoencoder, and an LSTM head.
//!
//! The pipeline runs in three stages:
//!
//! 1. [`indicators`] and [`dataset`] turn OHLCV bars plus two macroeconomic
//!    series into a normalized 17-channel feature matrix, windowed into
//!    one-step-ahead samples and split into yearly walk-forward folds.
//! 2. [`autoencoder`] learns to reconstruct feature windows through a
//!    residual convolutional bottleneck; only the encoder is kept.
//! 3. [`forecaster`] runs an LSTM over the encoded sequence and predicts the
//!    next close, either directly or as a rate of change.
//!
//! [`evaluation`] scores predictions (MAPE, correlation, Theil U) and
//! [`synthetic`] hosts the sine-bias experiment that compares de-noise-then-
//! predict against an end-to-end convolutional LSTM. Everything is
//! differentiated by the small tape in [`graph`].

pub mod autoencoder;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod forecaster;
pub mod gradcheck;
pub mod graph;
pub mod indicators;
pub mod optim;
pub mod parallel;
pub mod persist;
pub mod pipeline;
pub mod reference;
pub mod synthetic;
pub mod tensor;

pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use parallel::Execution;
pub use tensor::Tensor;
