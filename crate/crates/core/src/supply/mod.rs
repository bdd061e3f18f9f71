//! Cell-therapy supply-chain MILP: leukapheresis centers ship patient
//! samples to manufacturing facilities, which return finished therapies to
//! the hospital co-located with the originating center.
//!
//! The establishment vector `E1[m]` is the complicating variable that the
//! rest of the crate learns to predict. [`build_model`] can restrict the
//! facility set, which is how reduced models are produced.

mod config;
mod demand;
mod model;
mod solution;

use thiserror::Error;

use crate::milp::MilpError;

pub use config::{Center, Facility, Mode, SupplyChainConfig};
pub use demand::{Arrival, DemandProfile};
pub use model::{build_model, fix_facilities, model_stats, BuiltModel, ModelStats};
pub use solution::{extract_solution, PatientRoute, SupplyChainSolution};

#[derive(Debug, Error)]
pub enum SupplyError {
    #[error("invalid supply-chain configuration: {0}")]
    Config(String),
    #[error("invalid demand profile: {0}")]
    Demand(String),
    #[error("demand has no patients")]
    NoPatients,
    #[error("active facility set is empty")]
    EmptyFacilitySet,
    #[error("unknown facility index {0}")]
    UnknownFacility(usize),
    #[error("route from day {day} needs {needed} periods but NT is {nt}")]
    HorizonOverflow {
        day: usize,
        needed: usize,
        nt: usize,
    },
    #[error("solution has no incumbent (status {0})")]
    NoIncumbent(&'static str),
    #[error("recomputed total cost {recomputed} disagrees with model objective {objective}")]
    Inconsistent { recomputed: f64, objective: f64 },
    #[error("malformed solution: {0}")]
    Malformed(String),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
