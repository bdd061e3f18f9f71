//! Generic MILP representation and a small exact solver stack: a
//! bounded-variable primal simplex for LP relaxations, best-bound
//! branch-and-bound over binary variables, a bound/row presolve and an LP
//! file writer for handing models to external solvers.
//!
//! The simplex keeps a dense basis inverse, so it is meant for desk-scale
//! models (a few thousand rows). Anything bigger should be exported with
//! [`export_lp_file`] and solved elsewhere.

mod branch;
mod lpfile;
mod presolve;
mod problem;
mod simplex;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use branch::solve_milp;
pub use lpfile::{export_lp_file, write_lp_string};
pub use presolve::{presolve, PresolveResult, Presolved};
pub use problem::{Constraint, MilpProblem, Objective, Relation, Sense, VarId, VarKind, Variable};
pub use simplex::solve_lp;

/// Largest number of rows (and of columns) accepted by the dense LP engine.
pub const DENSE_SIZE_CEILING: usize = 5_000;

#[derive(Debug, Error)]
pub enum MilpError {
    #[error("{context} references unknown variable index {index}")]
    UnknownVariable { context: String, index: usize },
    #[error("binary variable {name} has bounds outside [0, 1]")]
    BinaryBounds { name: String },
    #[error("general integer variable {name} is not supported (binary only)")]
    GeneralInteger { name: String },
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("variable {name} has lower bound {lower} above upper bound {upper}")]
    InvertedBounds {
        name: String,
        lower: f64,
        upper: f64,
    },
    #[error("numeric breakdown after {iterations} simplex iterations: {reason}")]
    NumericBreakdown { iterations: usize, reason: String },
    #[error("model with {rows} rows and {cols} columns exceeds the dense engine ceiling; export it instead")]
    TooLarge { rows: usize, cols: usize },
    #[error("LP relaxation is unbounded")]
    Unbounded,
    #[error("name collision in LP export: {name}")]
    NameCollision { name: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchingRule {
    MostFractional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeSelection {
    BestBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Relative optimality gap at which branch-and-bound stops.
    pub mipgap: f64,
    pub feasibility_tol: f64,
    pub integrality_tol: f64,
    pub node_limit: usize,
    /// Wall-clock limit in seconds for one MILP solve.
    pub time_limit: f64,
    pub branching: BranchingRule,
    pub node_selection: NodeSelection,
    /// Run [`presolve`] before branch-and-bound.
    pub presolve: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mipgap: 1e-4,
            feasibility_tol: 1e-7,
            integrality_tol: 1e-6,
            node_limit: 100_000,
            time_limit: 600.0,
            branching: BranchingRule::MostFractional,
            node_selection: NodeSelection::BestBound,
            presolve: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.mipgap >= 0.0) {
            return Err(format!("mipgap must be >= 0, got {}", self.mipgap));
        }
        if !(self.feasibility_tol > 0.0) || !(self.integrality_tol > 0.0) {
            return Err("tolerances must be > 0".into());
        }
        if !(self.time_limit > 0.0) {
            return Err("time limit must be > 0".into());
        }
        Ok(())
    }

    pub(crate) fn time_budget(&self) -> Duration {
        Duration::from_secs_f64(self.time_limit.min(1e9))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective in the problem's own sense, constant included. Only
    /// meaningful when `status` is optimal.
    pub objective: f64,
    /// One value per problem variable (empty unless optimal).
    pub values: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MilpStatus {
    /// Incumbent proven within `mipgap` of the best bound.
    Optimal,
    Infeasible,
    /// Time limit hit with an incumbent whose gap is still above `mipgap`.
    GapLimit,
    /// Node limit hit; an incumbent may or may not exist.
    NodeLimit,
}

impl MilpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            MilpStatus::Optimal => "optimal",
            MilpStatus::Infeasible => "infeasible",
            MilpStatus::GapLimit => "gap_limit",
            MilpStatus::NodeLimit => "node_limit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpSolution {
    pub status: MilpStatus,
    /// Incumbent objective in the problem's sense.
    pub objective: Option<f64>,
    /// Incumbent values, one per problem variable.
    pub values: Option<Vec<f64>>,
    pub best_bound: f64,
    pub gap: f64,
    pub nodes: usize,
}

impl MilpSolution {
    pub fn infeasible(nodes: usize) -> Self {
        Self {
            status: MilpStatus::Infeasible,
            objective: None,
            values: None,
            best_bound: f64::INFINITY,
            gap: 0.0,
            nodes,
        }
    }
}

/// Relative gap `(incumbent - bound) / max(|incumbent|, 1e-10)` for a
/// minimisation.
pub fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    ((incumbent - bound) / incumbent.abs().max(1e-10)).max(0.0)
}
