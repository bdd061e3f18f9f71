//! Randomised demand generation and oracle labelling.
//!
//! Profiles are sampled per (level, distribution, replicate) from a single
//! plan seed, solved exactly, and turned into rows of 90 daily totals with
//! one label per facility plus an `infeasible` label.

mod dataset;
mod sampler;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::supply::SupplyError;

pub use dataset::{
    label_instances, load_dataset, read_dataset, save_dataset, split_dataset, write_dataset,
    FeatureScaling, LabeledDataset, LabeledInstance, Split, Unresolved, DATASET_VERSION,
};
pub use sampler::{
    generate_instance_set, instance_seed, sample_demand_profile, spread_levels, GeneratedInstance,
};

/// Number of daily demand features per instance.
pub const FEATURE_DAYS: usize = 90;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("{patients} patients cannot fit {horizon} days x {centers} centers x {cap} per day")]
    CapacityImpossible {
        patients: usize,
        horizon: usize,
        centers: usize,
        cap: usize,
    },
    #[error("invalid generation plan: {0}")]
    Plan(String),
    #[error("instance (level {level}, {distribution}, replicate {replicate}): {source}")]
    Instance {
        level: usize,
        distribution: Distribution,
        replicate: usize,
        source: Box<DatagenError>,
    },
    #[error("invalid split: {0}")]
    Split(String),
    #[error("dataset version mismatch: expected {expected}, found {found}")]
    Version { expected: String, found: String },
    #[error("malformed dataset at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Supply(#[from] SupplyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Uniform,
    /// Mode on the first day, mass decreasing linearly.
    LeftTriangular,
    /// Mode on the last day, mass increasing linearly.
    RightTriangular,
}

impl Distribution {
    pub const ALL: [Distribution; 3] = [
        Distribution::Uniform,
        Distribution::LeftTriangular,
        Distribution::RightTriangular,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Distribution::Uniform => "uniform",
            Distribution::LeftTriangular => "left_triangular",
            Distribution::RightTriangular => "right_triangular",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.as_str() == s)
    }

    /// Relative weight of 1-based `day` in a `horizon`-day window. The
    /// triangular weights are the continuous density integrated over each
    /// day, up to a common factor.
    pub fn day_weight(self, day: usize, horizon: usize) -> f64 {
        match self {
            Distribution::Uniform => 1.0,
            Distribution::LeftTriangular => (2 * (horizon - day) + 1) as f64,
            Distribution::RightTriangular => (2 * day - 1) as f64,
        }
    }
}

impl std::fmt::Display for Distribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What to generate: every level is crossed with every distribution and
/// replicated `replicates` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationPlan {
    /// Patients per instance, one entry per demand level.
    pub levels: Vec<usize>,
    pub distributions: Vec<Distribution>,
    pub replicates: usize,
    /// Arrival window in days.
    pub horizon: usize,
    pub num_centers: usize,
    pub daily_cap: usize,
    pub seed: u64,
}

impl GenerationPlan {
    pub fn total_instances(&self) -> usize {
        self.levels.len() * self.distributions.len() * self.replicates
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        let bad = |m: &str| Err(DatagenError::Plan(m.into()));
        if self.levels.is_empty() || self.distributions.is_empty() || self.replicates == 0 {
            return bad("levels, distributions and replicates must be nonempty");
        }
        if self.levels.contains(&0) {
            return bad("every level needs at least one patient");
        }
        if self.horizon == 0 || self.horizon > FEATURE_DAYS {
            return bad("horizon must be within 1..=90 days");
        }
        if self.num_centers == 0 || self.daily_cap == 0 {
            return bad("centers and daily cap must be positive");
        }
        Ok(())
    }
}
