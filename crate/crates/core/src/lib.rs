//! Simulation of ant-inspired task allocation under noisy binary feedback.
//!
//! Ants repeatedly choose between idling and working on one of `k` tasks,
//! each with a demand. Every round each ant receives one lack/overload signal
//! per task about the previous round's deficit, and the algorithms in
//! [`algorithms`] turn these signals into assignments. The [`engine`] drives
//! the rounds, [`metrics`] measures regret, and [`oracle`] computes exact
//! distributions on tiny instances to check the engine against.

pub mod algorithms;
pub mod engine;
pub mod metrics;
pub mod model;
pub mod noise;
pub mod oracle;
pub mod rng;
pub mod suites;

pub use model::{Action, AlgorithmSpec, InitialAssignmentSpec, Signal, SimConfig};
pub use noise::{AdversaryStrategy, NoiseSpec};
