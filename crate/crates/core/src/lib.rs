//! Cooperative downlink beamforming laboratory.
//!
//! Random multi-BS/multi-UE channel instances ([`scenario`]), the sum-rate
//! objective with per-BS power constraints ([`objective`]), two classical
//! iterative solvers ([`baselines`]) and an edge-updating graph neural network
//! ([`edge_gnn`]) trained without labels ([`trainer`]). All differentiation
//! runs on the tape in [`numerics`].

pub mod baselines;
pub mod checkpoint;
pub mod edge_gnn;
pub mod error;
pub mod numerics;
pub mod objective;
pub mod scenario;
pub mod trainer;

pub use error::{Error, Result};
