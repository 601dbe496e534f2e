//! Coupled-cavity quantum-dot controlled-phase gate: operator algebra,
//! effective-model phase predictions and brute-force propagation with and
//! without cavity loss.

pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod generator;
pub mod hilbert;
pub mod model;
pub mod phases;

pub use error::{Error, Result};
pub use hilbert::{ComplexOperator, DensityMatrix, SpaceLayout, StateVector};
pub use model::{EffectiveCouplings, SystemParams};
pub use phases::{BranchLabel, GateSchedule};
