//! Multiscale kinetic predator-prey model.
//!
//! The crate covers four levels of description of the same interacting populations:
//! binary microscopic interactions ([`microdyn`]), a Monte Carlo solver of the associated
//! Boltzmann-type equations ([`boltzmann_mc`]), the Fokker-Planck system obtained in the
//! quasi-invariant limit ([`fokker_planck`]) and the closed moment equations ([`moments`]).
//! [`equilibria`] holds the Gamma-type local equilibria and [`diagnostics`] compares
//! solutions against them.

pub mod boltzmann_mc;
pub mod config;
pub mod diagnostics;
pub mod equilibria;
pub mod fokker_planck;
pub mod io;
pub mod microdyn;
pub mod moments;
pub mod params;

pub use moments::{MeanState, MomentState};
pub use params::{ModelParams, NoiseExponent, Variant};
