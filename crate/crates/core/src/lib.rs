//! Classic and refined mean-field analysis of the gossip shuffle protocol.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: population models, occupancy/count vectors, the one-step map;
//! - [`autodiff`]: forward-mode Jacobians and Hessians with a
//!   finite-difference cross-check;
//! - [`meanfield`] and [`refined`]: classic trajectories and the `1/N`
//!   refinement;
//! - [`gossip`]: the concrete shuffle-protocol kernels and measures;
//! - [`popsim`], [`agent`]: count-level and agent-level simulators;
//! - [`exact`]: exact transient law of small populations;
//! - [`experiment`]: config files, result tables, CSV output;
//! - [`verify`]: the built-in property suites.

pub mod agent;
pub mod autodiff;
pub mod error;
pub mod exact;
pub mod exec;
pub mod experiment;
pub mod gossip;
pub mod meanfield;
pub mod model;
pub mod popsim;
pub mod refined;
pub mod rng;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use exec::Execution;
pub use gossip::{build_model, GossipModel, GossipParams, ModelKind};
pub use model::{CountVector, Measure, OccupancyVector, PopulationModel};
