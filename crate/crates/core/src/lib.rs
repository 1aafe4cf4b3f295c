//! Deterministic simulator for synchronous decentralized stochastic
//! optimization over gossip topologies.
//!
//! Nodes hold local objectives and talk only to graph neighbors through a
//! doubly stochastic mixing matrix. The crate implements plain decentralized
//! SGD, its momentum variant, and Momentum Tracking (with Gradient Tracking
//! as its zero-momentum special case), plus a synthetic quadratic benchmark
//! whose gradient heterogeneity is a dial. Every random draw is counter
//! addressed, so runs are bit-reproducible and sweep results do not depend
//! on scheduling.

pub mod algorithms;
pub mod analysis;
pub mod engine;
pub mod error;
pub mod problem;
pub mod rng;
pub mod topology;

pub use error::{Result, SimError, StateField};
pub use rng::RandomStream;
pub use topology::{
    build_mixing_matrix, build_topology, spectral_gap, Graph, MixingMatrix, TopologyKind,
    WeightScheme,
};
