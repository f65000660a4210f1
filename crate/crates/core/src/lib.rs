//! Kahan discretization of quadratic vector fields, closed-form integrals of
//! the resulting maps, Hirota–Kimura basis analysis and property checks.

pub mod cli;
pub mod error;
pub mod hkbasis;
pub mod integrals;
pub mod numdiff;
pub mod quadfield;
pub mod systems;
pub mod verify;

pub use error::{Error, Result};
pub use quadfield::{KahanStep, QuadraticVectorField, StateVector};
pub use systems::{build_system, SystemConfig, SystemDescriptor, SystemKind};
