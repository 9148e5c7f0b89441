//! Harris flows on the line and the spectra of the noise they generate.
//!
//! The crate is organised around the objects that appear when one studies the
//! noise of a coalescing flow with correlation function `b`:
//!
//! * [`corrfn`] holds the correlation functions, the noise classifier and the
//!   scale/speed chart `ξ = ∫ (1-b)^{-1}` used by every dual diffusion.
//! * [`sde`] simulates the one-dimensional diffusions by exact time change of
//!   Brownian motion, with Brownian-bridge refinement near the origin.
//! * [`flows`] simulates n-point motions of the flow and of its joinings.
//! * [`semigroup`] solves the reflecting / absorbing / killed semigroups with a
//!   conservation-form finite-volume scheme, checks their duality and computes
//!   the resolvent density at the origin.
//! * [`spectra`] samples spectral sets and computes avoidance and nonemptiness
//!   probabilities by independent routes.
//! * [`dimension`] estimates the dimension of spectral sets by box counting and
//!   through the subordinator exponent.
//!
//! Monte Carlo work is split into replicas with independent counter-based
//! streams ([`rng::SeedStream`]) and always reduced in replica order, so
//! results are bit-identical whatever the size of the rayon pool.

pub mod corrfn;
pub mod dimension;
mod error;
pub mod flows;
pub mod rng;
pub mod sde;
pub mod semigroup;
pub mod spectra;
pub mod stats;

pub use corrfn::{CorrelationFunction, NoiseClass, ScaleSpeedChart};
pub use error::{Error, Result};
pub use rng::SeedStream;
pub use sde::{Path, RegimeSchedule};
pub use spectra::Estimate;

/// Version string embedded in every emitted artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
