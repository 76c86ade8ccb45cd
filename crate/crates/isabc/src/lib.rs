//! Link-level performance engine for a two-user NOMA downlink in which both
//! users carry planar fluid antenna systems (FAS) and a passive backscatter
//! tag assists both communication and base-station sensing.
//!
//! The crate computes, in closed form, the best-port channel statistics
//! (Gamma moment matching + Gaussian copula over Jake's spatial correlation),
//! outage probabilities with their high-SNR asymptotes, ergodic communication
//! rates via Gauss–Laguerre quadrature, and the ergodic sensing rate from the
//! mean echo SNR — and cross-validates every one of them against a seeded
//! Monte Carlo simulator. A batch CLI sweeps SNR, power split, and benchmark
//! modes, emitting CSV plus a reproducibility manifest.

pub mod analysis;
pub mod channel;
pub mod config;
pub mod copula;
pub mod error;
pub mod montecarlo;
pub mod specfun;
pub mod sweep;

pub use error::{Error, Result};
