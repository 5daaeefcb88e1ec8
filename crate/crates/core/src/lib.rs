//! Gaussian belief propagation on grid-structured Markov random fields,
//! packaged for guided depth completion.
//!
//! The pipeline is: build a [`GridGraph`] over the pixel lattice (optionally
//! with non-local patch-matched partners), derive [`MrfParams`] from a guide
//! image and sparse depth, then run the serial-sweep plus parallel non-local
//! message-passing schedule in [`gbp`] to get a per-pixel posterior mean and
//! precision. [`oracle`] solves the same quadratic energy exactly and is used
//! to certify the solver.
//!
//! All numerical modules are generic over [`Scalar`] (`f32` or `f64`). The
//! `*64` / `*32` aliases below fix the scalar for the common cases.

pub mod baseline;
pub mod config;
pub mod error;
pub mod gbp;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod potentials;
pub mod raster;
mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use gbp::{BeliefMap, MessageStore, Solution, Solver, SolverConfig};
pub use graph::{Connectivity, GridGraph, Sweep};
pub use metrics::EvalReport;
pub use oracle::InformationSystem;
pub use potentials::{MrfParams, PotentialConfig};
pub use raster::DepthGrid;
pub use scalar::Scalar;

pub type DepthGrid64 = DepthGrid<f64>;
pub type DepthGrid32 = DepthGrid<f32>;
pub type MrfParams64 = MrfParams<f64>;
pub type MrfParams32 = MrfParams<f32>;
pub type BeliefMap64 = BeliefMap<f64>;
pub type BeliefMap32 = BeliefMap<f32>;
pub type SolverConfig64 = SolverConfig<f64>;
pub type SolverConfig32 = SolverConfig<f32>;
pub type EvalReport64 = EvalReport<f64>;
