//! Bayesian hyperparameter search: Sobol initial design, a Gaussian-process
//! surrogate on the unit cube, and upper-confidence-bound acquisition.

mod bo;
mod gp;
mod sobol;
mod tune;

use thiserror::Error;

pub use bo::{
    acquire_ucb, bo_run, history_header, history_row, incumbent_trace, BoConfig, BoResult,
    Evaluation, HyperDim, HyperSpace, Kind, Scale,
};
pub use gp::{gp_fit, gp_fit_fixed, GpModel};
pub use sobol::{direction_integers, sobol_points, Sobol, MAX_SOBOL_DIM};
pub use tune::{
    split_arrays, train_on_dataset, tune_network, Architecture, HyperParams, TuneSettings,
};

#[derive(Debug, Error, PartialEq)]
pub enum HpoError {
    #[error("Sobol dimension {dim} unsupported (1..={max})")]
    Dimension { dim: usize, max: usize },
    #[error("all GP inputs coincide")]
    Degenerate,
    #[error("invalid GP data: {0}")]
    Data(String),
    #[error("invalid search space: {0}")]
    Space(String),
}
