//! Probabilistic stability certificates for constrained switching linear
//! systems, learned from sampled trajectories.
//!
//! The pipeline: [`sampling`] produces endpoint observations, [`scenario`]
//! solves the sampled quadratic-Lyapunov program, and [`bounds`] turns its
//! optimum into an upper bound on the constrained joint spectral radius that
//! holds with a chosen confidence. [`baseline`] computes model-based ground
//! truth for validation.

pub mod automaton;
pub mod baseline;
pub mod bounds;
pub mod cli;
mod ellipsoid;
pub mod error;
pub mod numerics;
pub mod products;
pub mod sampling;
pub mod scenario;
pub mod system;

pub use automaton::{Automaton, AutomatonStats, Edge, Word};
pub use baseline::{cjsr_bracket, cjsr_lower, gamma_model, CjsrBracket};
pub use bounds::{certify, delta, epsilon, BoundContext, BoundVariant, Certificate};
pub use ellipsoid::OracleStats;
pub use error::{Error, Result};
pub use numerics::{Matrix, SymMatrix};
pub use products::{barabanov_flag, enumerate_products, ProductSet};
pub use sampling::{ingest, synthesize, Observation, ObservationSet, SamplingConfig};
pub use scenario::{solve, ScenarioConfig, ScenarioSolution};
pub use system::SystemSpec;
