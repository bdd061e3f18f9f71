use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SupplyError;

/// Candidate manufacturing facility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facility {
    pub name: String,
    /// Parallel manufacturing lines (therapies in process at once).
    pub capacity: u32,
    /// Capital investment.
    pub cim: f64,
    /// Fixed-variable manufacturing cost.
    pub cfvm: f64,
    /// Unit transport cost per therapy-day from each center, indexed
    /// `[center][mode]`.
    pub u1: Vec<Vec<f64>>,
    /// Unit transport cost per therapy-day to each hospital, indexed
    /// `[hospital][mode]`. Hospitals follow center order.
    pub u2: Vec<Vec<f64>>,
}

/// Leukapheresis center and its co-located hospital.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Center {
    pub name: String,
    pub hospital: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub name: String,
    /// Days from center to facility.
    pub tt1: usize,
    /// Days from facility to hospital.
    pub tt2: usize,
}

fn default_nd() -> usize {
    21
}

fn default_fmax() -> f64 {
    1.0
}

fn default_daily_cap() -> usize {
    8
}

/// Static network and cost parameters. All monetary values share one
/// currency unit; durations are whole days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyChainConfig {
    pub facilities: Vec<Facility>,
    pub centers: Vec<Center>,
    pub modes: Vec<Mode>,
    /// Material cost per therapy.
    pub cvm: f64,
    /// Quality-control cost per therapy.
    pub cqc: f64,
    pub tls: usize,
    pub tmfe: usize,
    pub tqc: usize,
    /// Maximum vein-to-vein days.
    #[serde(default = "default_nd")]
    pub nd: usize,
    /// Upper bound on established facilities.
    pub max_facilities: usize,
    #[serde(default)]
    pub fmin: f64,
    #[serde(default = "default_fmax")]
    pub fmax: f64,
    /// Days over which patients may arrive.
    pub horizon: usize,
    /// Number of model periods. Derived from the lead times when absent.
    #[serde(default)]
    pub nt: Option<usize>,
    /// Arrivals a center accepts per day.
    #[serde(default = "default_daily_cap")]
    pub center_daily_cap: usize,
}

impl SupplyChainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SupplyError> {
        let cfg: Self = toml::from_str(text).map_err(|e| SupplyError::Parse {
            path: "<string>".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SupplyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = toml::from_str(&text).map_err(|e| SupplyError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Small network used for tests and desk-scale experiments. Costs are
    /// placeholders.
    pub fn desk() -> Self {
        Self::from_toml_str(include_str!("../../data/desk_params.toml"))
            .expect("bundled desk parameters are valid")
    }

    /// Four centers and the six candidate facilities at full capacity.
    /// Costs are placeholders.
    pub fn benchmark() -> Self {
        Self::from_toml_str(include_str!("../../data/benchmark_params.toml"))
            .expect("bundled benchmark parameters are valid")
    }

    pub fn num_facilities(&self) -> usize {
        self.facilities.len()
    }

    pub fn num_centers(&self) -> usize {
        self.centers.len()
    }

    pub fn facility_names(&self) -> Vec<String> {
        self.facilities.iter().map(|f| f.name.clone()).collect()
    }

    /// Days a therapy occupies a manufacturing line.
    pub fn manufacturing_days(&self) -> usize {
        self.tmfe + self.tqc
    }

    /// Days from check-in to delivery along modes `j1` then `j2`.
    pub fn lead_time(&self, j1: usize, j2: usize) -> usize {
        self.tls + self.modes[j1].tt1 + self.manufacturing_days() + self.modes[j2].tt2
    }

    fn max_lead(&self) -> usize {
        let tt1 = self.modes.iter().map(|m| m.tt1).max().unwrap_or(0);
        let tt2 = self.modes.iter().map(|m| m.tt2).max().unwrap_or(0);
        self.tls + tt1 + self.manufacturing_days() + tt2
    }

    /// Model periods: explicit `nt`, or the arrival horizon plus the
    /// slowest route.
    pub fn periods(&self) -> usize {
        self.nt.unwrap_or(self.horizon + self.max_lead())
    }

    /// Checks that the latest arrival can finish inside the model periods.
    pub fn check_horizon(&self, last_day: usize) -> Result<(), SupplyError> {
        let needed = last_day + self.max_lead();
        let nt = self.periods();
        if needed > nt {
            return Err(SupplyError::HorizonOverflow {
                day: last_day,
                needed,
                nt,
            });
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), SupplyError> {
        let bad = |msg: String| Err(SupplyError::Config(msg));
        if self.facilities.is_empty() || self.centers.is_empty() || self.modes.is_empty() {
            return bad("facilities, centers and modes must all be nonempty".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be at least one day".into());
        }
        let nc = self.centers.len();
        let nj = self.modes.len();
        let mut names = HashSet::new();
        for f in &self.facilities {
            if !names.insert(f.name.as_str()) {
                return bad(format!("duplicate facility {}", f.name));
            }
            if f.capacity == 0 {
                return bad(format!("facility {} has zero capacity", f.name));
            }
            if !(f.cim.is_finite() && f.cfvm.is_finite() && f.cim >= 0.0 && f.cfvm >= 0.0) {
                return bad(format!(
                    "facility {} needs finite non-negative costs",
                    f.name
                ));
            }
            for (label, table) in [("u1", &f.u1), ("u2", &f.u2)] {
                if table.len() != nc || table.iter().any(|row| row.len() != nj) {
                    return bad(format!("facility {} {label} must be {nc} x {nj}", f.name));
                }
                if table.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
                    return bad(format!(
                        "facility {} {label} needs finite non-negative entries",
                        f.name
                    ));
                }
            }
        }
        let mut centers = HashSet::new();
        let mut hospitals = HashSet::new();
        for c in &self.centers {
            if !centers.insert(c.name.as_str()) {
                return bad(format!("duplicate center {}", c.name));
            }
            if !hospitals.insert(c.hospital.as_str()) {
                return bad(format!(
                    "hospital {} is paired with more than one center",
                    c.hospital
                ));
            }
        }
        if !(self.cvm.is_finite() && self.cqc.is_finite() && self.cvm >= 0.0 && self.cqc >= 0.0) {
            return bad("cvm and cqc must be finite and non-negative".into());
        }
        if self.max_facilities == 0 {
            return bad("max_facilities must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.fmin) || !(self.fmin..=1.0).contains(&self.fmax) {
            return bad("flow bounds must satisfy 0 <= fmin <= fmax <= 1".into());
        }
        if self.center_daily_cap == 0 {
            return bad("center_daily_cap must be at least 1".into());
        }
        let fastest = (0..nj).map(|j| self.modes[j].tt1).min().unwrap_or(0)
            + (0..nj).map(|j| self.modes[j].tt2).min().unwrap_or(0)
            + self.tls
            + self.manufacturing_days();
        if self.nd < fastest {
            return bad(format!(
                "nd = {} is below the fastest possible turnaround of {fastest} days",
                self.nd
            ));
        }
        if let Some(nt) = self.nt {
            if nt == 0 {
                return bad("nt must be at least 1".into());
            }
        }
        Ok(())
    }
}
