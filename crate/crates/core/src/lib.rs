//! Symbiotic control of uncertain linear plants: a fixed-gain loop and an
//! adaptive loop that shape each other, plus the nominal and classical
//! baselines, a fixed-step simulator and the diagnostics used to check them.

pub mod batch;
pub mod composite;
pub mod control;
pub mod error;
pub mod linalg;
pub mod plant;
pub mod sim;

pub use composite::{build_composite, CompositeFn, Kappa, KappaValue};
pub use control::{ControllerVariant, Gains, SymbioticParams};
pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use plant::{PlantSpec, ReferenceSignal, RegressorBasis};
pub use sim::{metrics, simulate, Metrics, SimConfig, Trajectory};
