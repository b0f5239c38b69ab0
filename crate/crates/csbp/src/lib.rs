//! Continuous-state branching processes: branching mechanisms, the evolution
//! equation, path simulation of the baseline, spine, conditioned and skeleton
//! SDEs, and a Monte Carlo verification harness.

pub mod error;
pub mod evolution;
pub mod levy;
pub mod mechanism;
pub mod ode;
pub mod quad;
pub mod rng;
pub mod simulate;
pub mod skeleton;
pub mod special;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use levy::LevyMeasure;
pub use mechanism::{BranchingMechanism, Criticality, ImmigrationKind, ImmigrationLaw, OffspringLaw};
