//! Density-dependent Markov chains and their fluid limits.
//!
//! The numerical core is generic over the scalar type through [`Real`]
//! (`f32` or `f64`); the aliases below fix it to `f64`, with `F32` variants.

pub mod bounds;
pub mod cli;
pub mod coupling;
pub mod ctmc;
pub mod error;
pub mod fluid;
pub mod hypergraph;
pub mod martingale;
pub mod models;
pub mod rng;
pub mod scalar;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Real;

pub type ChainSpec = ctmc::ChainSpec<f64>;
pub type Trajectory = ctmc::Trajectory<f64>;
pub type CoordPath = ctmc::CoordPath<f64>;
pub type FluidModel = fluid::FluidModel<f64>;
pub type FluidPath = fluid::FluidPath<f64>;
pub type ExitWindow = fluid::ExitWindow<f64>;
pub type ErrorBudget = bounds::ErrorBudget<f64>;
pub type ModulationSpec = coupling::ModulationSpec<f64>;
pub type CompensatedPath = martingale::CompensatedPath<f64>;
pub type BuiltModel = models::BuiltModel<f64>;

pub type ChainSpecF32 = ctmc::ChainSpec<f32>;
pub type TrajectoryF32 = ctmc::Trajectory<f32>;
pub type FluidModelF32 = fluid::FluidModel<f32>;
pub type FluidPathF32 = fluid::FluidPath<f32>;
pub type ErrorBudgetF32 = bounds::ErrorBudget<f32>;
pub type CompensatedPathF32 = martingale::CompensatedPath<f32>;
