//! Collective decay of dipole-coupled Moessbauer nuclei after impulsive
//! excitation, modelled with a first-order cumulant expansion.
//!
//! The crate is organised bottom-up:
//!
//! - [`polylog`] and [`couplings`]: pair couplings on a linear chain and the
//!   collective coupling parameter `K` for finite and infinite chains.
//! - [`ode`]: adaptive Dormand-Prince and fixed-step RK4 integrators.
//! - [`dynamics`]: the cumulant equations of motion for finite chains and the
//!   translationally invariant three-variable model, plus closed-form limits.
//! - [`oracle`]: exact master-equation evolution for a handful of nuclei.
//! - [`observables`]: forward-scattered field, two-chain interference and
//!   quantum-beat minima, low-excitation fits.
//! - [`analysis`]: sweeps and finite-size studies.
//! - [`output`]: CSV/JSON serialization with metadata headers.
//!
//! All numerical code is generic over the scalar type through
//! [`scalar::Real`]; the `*64` aliases below fix it to `f64`.

pub mod analysis;
pub mod couplings;
pub mod dynamics;
pub mod error;
pub mod observables;
pub mod ode;
pub mod oracle;
pub mod output;
pub mod params;
pub mod polylog;
pub mod scalar;
pub mod trajectory;

pub use error::{Error, Result};
pub use scalar::Real;

pub type ChainGeometry64 = params::ChainGeometry<f64>;
pub type DecayParameters64 = params::DecayParameters<f64>;
pub type CouplingSummary64 = couplings::CouplingSummary<f64>;
pub type ExcitationSpec64 = dynamics::ExcitationSpec<f64>;
pub type EnsembleState64 = dynamics::EnsembleState<f64>;
pub type ReducedState64 = dynamics::ReducedState<f64>;
pub type Trajectory64 = trajectory::Trajectory<f64>;
pub type IntegratorSettings64 = ode::IntegratorSettings<f64>;

pub type ChainGeometry32 = params::ChainGeometry<f32>;
pub type DecayParameters32 = params::DecayParameters<f32>;
pub type Trajectory32 = trajectory::Trajectory<f32>;
