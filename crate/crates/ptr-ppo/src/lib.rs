//! Proximal policy optimization with prioritized trajectory replay.
//!
//! Trajectories collected from a set of small discrete-control environments
//! are scored with one of three priority schemes (max/mean absolute GAE
//! advantage, or normalized undiscounted return), stored in a sumtree memory,
//! and replayed with truncated importance-weight correction alongside the
//! usual on-policy PPO updates. The function approximator is a small
//! fully-connected policy/value network with hand-written, finite-difference
//! checked gradients; everything runs in 64-bit floats on the CPU.

pub mod approximator;
pub mod cli;
pub mod config;
pub mod envs;
pub mod gae;
pub mod heatmap;
pub mod losses;
pub mod metrics;
pub mod offpolicy;
pub mod priority;
pub mod replay;
pub mod rng;
pub mod trainer;
