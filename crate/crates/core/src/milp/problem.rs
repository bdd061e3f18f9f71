use std::fmt;

use serde::{Deserialize, Serialize};

use super::MilpError;

/// Index of a variable inside a [`MilpProblem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
    /// General integer. Representable so that it can be rejected with a
    /// clear message; the solver only branches on binaries.
    Integer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    /// Left-hand side activity for a full assignment.
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * values[v.0]).sum()
    }

    /// Amount by which `values` violates this row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub sense: Sense,
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl Objective {
    pub fn evaluate(&self, values: &[f64]) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|&(v, c)| c * values[v.0])
                .sum::<f64>()
    }
}

/// A mixed-integer linear program: bounded variables (continuous or
/// binary), sparse linear rows and a linear objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpProblem {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Objective,
}

impl Default for MilpProblem {
    fn default() -> Self {
        Self::new(Sense::Minimize)
    }
}

impl MilpProblem {
    pub fn new(sense: Sense) -> Self {
        Self {
            variables: Vec::new(),
            constraints: Vec::new(),
            objective: Objective {
                sense,
                terms: Vec::new(),
                constant: 0.0,
            },
        }
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        kind: VarKind,
    ) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
            kind,
        });
        VarId(self.variables.len() - 1)
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.add_var(name, lower, upper, VarKind::Continuous)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, 0.0, 1.0, VarKind::Binary)
    }

    /// Adds a row. Duplicate variables in `terms` are merged and exact
    /// zeros dropped.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: impl IntoIterator<Item = (VarId, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> usize {
        self.constraints.push(Constraint {
            name: name.into(),
            terms: merge_terms(terms),
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn set_objective(
        &mut self,
        sense: Sense,
        terms: impl IntoIterator<Item = (VarId, f64)>,
        constant: f64,
    ) {
        self.objective = Objective {
            sense,
            terms: merge_terms(terms),
            constant,
        };
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.variables
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .count()
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn find_var(&self, name: &str) -> Option<VarId> {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .map(VarId)
    }

    /// Checks the structural invariants: references, finiteness, bound
    /// order, binary bounds, and the absence of general integers.
    pub fn validate(&self) -> Result<(), MilpError> {
        let n = self.variables.len();
        for v in &self.variables {
            if v.lower.is_nan()
                || v.upper.is_nan()
                || v.lower == f64::INFINITY
                || v.upper == f64::NEG_INFINITY
            {
                return Err(MilpError::NonFinite {
                    context: format!("bounds of variable {}", v.name),
                });
            }
            if v.lower > v.upper {
                return Err(MilpError::InvertedBounds {
                    name: v.name.clone(),
                    lower: v.lower,
                    upper: v.upper,
                });
            }
            match v.kind {
                VarKind::Binary if v.lower < 0.0 || v.upper > 1.0 => {
                    return Err(MilpError::BinaryBounds {
                        name: v.name.clone(),
                    })
                }
                VarKind::Integer => {
                    return Err(MilpError::GeneralInteger {
                        name: v.name.clone(),
                    })
                }
                _ => {}
            }
        }
        for c in &self.constraints {
            if !c.rhs.is_finite() {
                return Err(MilpError::NonFinite {
                    context: format!("rhs of constraint {}", c.name),
                });
            }
            for &(v, a) in &c.terms {
                if v.0 >= n {
                    return Err(MilpError::UnknownVariable {
                        context: c.name.clone(),
                        index: v.0,
                    });
                }
                if !a.is_finite() {
                    return Err(MilpError::NonFinite {
                        context: format!("coefficient in constraint {}", c.name),
                    });
                }
            }
        }
        if !self.objective.constant.is_finite() {
            return Err(MilpError::NonFinite {
                context: "objective constant".into(),
            });
        }
        for &(v, a) in &self.objective.terms {
            if v.0 >= n {
                return Err(MilpError::UnknownVariable {
                    context: "objective".into(),
                    index: v.0,
                });
            }
            if !a.is_finite() {
                return Err(MilpError::NonFinite {
                    context: "objective coefficient".into(),
                });
            }
        }
        Ok(())
    }

    /// Largest bound or row violation of `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let rows = self
            .constraints
            .iter()
            .map(|c| c.violation(values))
            .fold(0.0, f64::max);
        let bounds = self
            .variables
            .iter()
            .zip(values)
            .map(|(v, &x)| (v.lower - x).max(x - v.upper).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    /// Copy of the problem with every binary relaxed to a continuous
    /// variable on the same bounds.
    pub fn relaxed(&self) -> MilpProblem {
        let mut out = self.clone();
        for v in &mut out.variables {
            if v.kind == VarKind::Binary {
                v.kind = VarKind::Continuous;
            }
        }
        out
    }
}

fn merge_terms(terms: impl IntoIterator<Item = (VarId, f64)>) -> Vec<(VarId, f64)> {
    let mut out: Vec<(VarId, f64)> = terms.into_iter().collect();
    out.sort_by_key(|&(v, _)| v);
    out.dedup_by(|b, a| {
        if a.0 == b.0 {
            a.1 += b.1;
            true
        } else {
            false
        }
    });
    out.retain(|&(_, a)| a != 0.0);
    out
}
