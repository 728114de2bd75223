//! High-SNR analysis of the multi-user MIMO broadcast channel under linear
//! filtering.
//!
//! The crate evaluates exact and asymptotic rates in the dual multiple access
//! channel, builds the block-diagonalizing broadcast precoders that achieve
//! the asymptotically optimal linear sum rate, and quantifies the rate loss
//! against dirty paper coding both per channel realization and in the
//! ergodic sense for correlated near-far Gaussian channels.
//!
//! Modules:
//! - [`system`]: antenna profiles, correlation models, channel sampling.
//! - [`mac`]: dual-MAC rates, optimal power split, DPC asymptote, rate loss.
//! - [`bc`]: broadcast precoders, covariances and rates.
//! - [`ergodic`]: digamma closed forms, the rate-loss table, Monte Carlo.
//! - [`baseline`]: finite-power DPC sum capacity and ergodic rate curves.
//! - [`validation`]: property checks with measured margins.

pub mod baseline;
pub mod bc;
pub mod ergodic;
pub mod error;
pub mod linalg;
pub mod mac;
pub mod system;
pub mod validation;

pub use error::{Error, Result};
pub use system::{sample_channel, ChannelRealization, CorrelationModel, SystemProfile};
