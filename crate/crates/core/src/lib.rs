//! Linear and two-dimensional electronic spectroscopy of Frenkel exciton
//! aggregates whose environments are embedded as damped pseudomodes.
//!
//! The crate offers three propagators of increasing abstraction that are
//! cross-checked against each other:
//!
//! * [`dynamics`]: dense Lindblad master equation on the system plus
//!   pseudomode space;
//! * [`collision`]: the discrete collision map with fresh ancillae per step;
//! * [`circuit`]: Trotterized gate circuits emulated on a density matrix,
//!   read out through a Hadamard test.
//!
//! [`response`] assembles response functions from double-sided Feynman
//! pathways and [`spectra`] turns them into absorption and rephasing maps.

pub mod circuit;
pub mod collision;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod model;
pub mod response;
pub mod spectra;

pub use error::{Error, Result};
pub use linalg::{Operator, C64};
pub use model::{
    AncillaScheme, CollisionChannel, EnvironmentSpec, ExcitonSystem, LorentzianTerm, Model,
    RegisterLayout, HBAR_EV_FS,
};
