//! # csmabench
//!
//! A workbench for estimating the downlink SINR and throughput of large-scale
//! CSMA (Wi-Fi-like) networks, implementing three analytical estimators and a
//! small discrete-event reference simulator over the same deployments:
//!
//! - [`sgm`] — a stochastic-geometry model: network-ensemble SINR/throughput
//!   CCDFs from coverage integrals over Poisson deployments, with Matérn-style
//!   medium access probabilities, plus an "enhanced" variant that folds the
//!   CSMA sensing overhead into the throughput mapping.
//! - [`hybrid`] — a per-link time-average model combining pairwise path loss,
//!   CSMA air-time sharing, and Bianchi MAC efficiency.
//! - [`des`] — a discrete-event CSMA/CA simulator (DIFS/backoff/SIFS/ACK,
//!   carrier sense over a sensing graph, SINR-threshold reception) serving as
//!   the desk-scale ground-truth stand-in for a full network simulator.
//!
//! Supporting modules: [`geometry`] (Poisson deployments, path loss, sensing
//! graphs), [`phy`] (IEEE 802.11ac rate map and frame timings), [`bianchi`]
//! (DCF transmission probability and MAC efficiency), and [`ccdf`] (the
//! common curve type all estimators emit).
//!
//! All internal power arithmetic is in linear milliwatts; dB and dBm appear
//! only at interfaces ([`units`]).

pub mod bianchi;
pub mod ccdf;
pub mod des;
pub mod error;
pub mod geometry;
pub mod hybrid;
pub mod phy;
pub mod sgm;
pub mod units;

pub use ccdf::CcdfCurve;
pub use error::Error;
pub use geometry::{Deployment, RadioConfig};
pub use phy::{FrameTimings, RateTable};

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
