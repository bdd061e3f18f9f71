//! Bound and row presolve.
//!
//! Repeats until nothing changes:
//! - variables with equal bounds are fixed and substituted out;
//! - singleton rows become bounds;
//! - rows whose activity range already satisfies them are dropped;
//! - forcing rows (activity can only meet the rhs at one extreme) fix all
//!   their variables at that extreme;
//! - variables left in no row are fixed at their cheapest bound.

use std::collections::BTreeMap;

use super::{MilpError, MilpProblem, Relation, Sense, VarId, VarKind};

const BOUND_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Presolved {
    pub problem: MilpProblem,
    /// Eliminated variables and their values, keyed by original index.
    pub fixed: BTreeMap<VarId, f64>,
    /// Original index to reduced index (`None` when eliminated).
    pub kept: Vec<Option<VarId>>,
}

impl Presolved {
    /// Expands a solution of the reduced problem to the original variables.
    pub fn restore(&self, reduced: &[f64]) -> Vec<f64> {
        self.kept
            .iter()
            .enumerate()
            .map(|(j, k)| match k {
                Some(r) => reduced[r.0],
                None => self.fixed[&VarId(j)],
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub enum PresolveResult {
    Reduced(Presolved),
    Infeasible(String),
}

struct Row {
    terms: Vec<(usize, f64)>,
    relation: Relation,
    rhs: f64,
    active: bool,
}

pub fn presolve(problem: &MilpProblem) -> Result<PresolveResult, MilpError> {
    problem.validate()?;
    let n = problem.num_vars();
    let mut lo: Vec<f64> = problem.variables.iter().map(|v| v.lower).collect();
    let mut up: Vec<f64> = problem.variables.iter().map(|v| v.upper).collect();
    let binary: Vec<bool> = problem
        .variables
        .iter()
        .map(|v| v.kind == VarKind::Binary)
        .collect();
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    let mut rows: Vec<Row> = problem
        .constraints
        .iter()
        .map(|c| Row {
            terms: c.terms.iter().map(|&(v, a)| (v.0, a)).collect(),
            relation: c.relation,
            rhs: c.rhs,
            active: true,
        })
        .collect();
    let sign = if problem.objective.sense == Sense::Minimize {
        1.0
    } else {
        -1.0
    };
    let mut cost = vec![0.0; n];
    for &(v, c) in &problem.objective.terms {
        cost[v.0] += sign * c;
    }

    let infeasible = |msg: String| Ok(PresolveResult::Infeasible(msg));

    loop {
        let mut changed = false;

        for j in 0..n {
            if fixed[j].is_some() {
                continue;
            }
            if binary[j] {
                lo[j] = (lo[j] - BOUND_TOL).ceil().max(0.0);
                up[j] = (up[j] + BOUND_TOL).floor().min(1.0);
            }
            if lo[j] > up[j] + BOUND_TOL {
                return infeasible(format!(
                    "variable {} has contradictory bounds",
                    problem.variables[j].name
                ));
            }
            if up[j] - lo[j] <= BOUND_TOL {
                fixed[j] = Some(lo[j]);
                up[j] = lo[j];
                changed = true;
            }
        }

        for (i, row) in rows.iter_mut().enumerate() {
            if !row.active {
                continue;
            }
            let before = row.terms.len();
            let mut shift = 0.0;
            row.terms.retain(|&(j, a)| match fixed[j] {
                Some(v) => {
                    shift += a * v;
                    false
                }
                None => true,
            });
            row.rhs -= shift;
            if row.terms.len() != before {
                changed = true;
            }
            let name = &problem.constraints[i].name;
            let tol = 1e-7 * row.rhs.abs().max(1.0);

            if row.terms.is_empty() {
                let ok = match row.relation {
                    Relation::Le => 0.0 <= row.rhs + tol,
                    Relation::Ge => 0.0 >= row.rhs - tol,
                    Relation::Eq => row.rhs.abs() <= tol,
                };
                if !ok {
                    return infeasible(format!("row {name} reduces to an unsatisfiable constant"));
                }
                row.active = false;
                changed = true;
                continue;
            }

            if row.terms.len() == 1 {
                let (j, a) = row.terms[0];
                let bound = row.rhs / a;
                let (tighten_up, tighten_lo) = match (row.relation, a > 0.0) {
                    (Relation::Eq, _) => (true, true),
                    (Relation::Le, true) | (Relation::Ge, false) => (true, false),
                    (Relation::Le, false) | (Relation::Ge, true) => (false, true),
                };
                let (bound_up, bound_lo) = if binary[j] {
                    ((bound + BOUND_TOL).floor(), (bound - BOUND_TOL).ceil())
                } else {
                    (bound, bound)
                };
                if tighten_up && bound_up < up[j] {
                    up[j] = bound_up;
                }
                if tighten_lo && bound_lo > lo[j] {
                    lo[j] = bound_lo;
                }
                row.active = false;
                changed = true;
                continue;
            }

            let (mut min_act, mut max_act) = (0.0, 0.0);
            for &(j, a) in &row.terms {
                if a > 0.0 {
                    min_act += a * lo[j];
                    max_act += a * up[j];
                } else {
                    min_act += a * up[j];
                    max_act += a * lo[j];
                }
            }
            let force_min = |row: &Row, lo: &mut [f64], up: &mut [f64]| {
                for &(j, a) in &row.terms {
                    if a > 0.0 {
                        up[j] = lo[j];
                    } else {
                        lo[j] = up[j];
                    }
                }
            };
            let force_max = |row: &Row, lo: &mut [f64], up: &mut [f64]| {
                for &(j, a) in &row.terms {
                    if a > 0.0 {
                        lo[j] = up[j];
                    } else {
                        up[j] = lo[j];
                    }
                }
            };
            let rhs = row.rhs;
            match row.relation {
                Relation::Le => {
                    if min_act > rhs + tol {
                        return infeasible(format!("row {name} cannot be satisfied"));
                    }
                    if max_act <= rhs + tol {
                        row.active = false;
                        changed = true;
                    } else if min_act >= rhs - tol {
                        force_min(row, &mut lo, &mut up);
                        row.active = false;
                        changed = true;
                    }
                }
                Relation::Ge => {
                    if max_act < rhs - tol {
                        return infeasible(format!("row {name} cannot be satisfied"));
                    }
                    if min_act >= rhs - tol {
                        row.active = false;
                        changed = true;
                    } else if max_act <= rhs + tol {
                        force_max(row, &mut lo, &mut up);
                        row.active = false;
                        changed = true;
                    }
                }
                Relation::Eq => {
                    if min_act > rhs + tol || max_act < rhs - tol {
                        return infeasible(format!("row {name} cannot be satisfied"));
                    }
                    if min_act >= rhs - tol {
                        force_min(row, &mut lo, &mut up);
                        row.active = false;
                        changed = true;
                    } else if max_act <= rhs + tol {
                        force_max(row, &mut lo, &mut up);
                        row.active = false;
                        changed = true;
                    }
                }
            }
        }

        let mut in_row = vec![false; n];
        for row in rows.iter().filter(|r| r.active) {
            for &(j, _) in &row.terms {
                in_row[j] = true;
            }
        }
        for j in 0..n {
            if fixed[j].is_some() || in_row[j] {
                continue;
            }
            if lo[j] > up[j] + BOUND_TOL {
                return infeasible(format!(
                    "variable {} has contradictory bounds",
                    problem.variables[j].name
                ));
            }
            let target = if cost[j] > 0.0 {
                lo[j]
            } else if cost[j] < 0.0 {
                up[j]
            } else if lo[j].is_finite() {
                lo[j]
            } else if up[j].is_finite() {
                up[j]
            } else {
                0.0
            };
            if target.is_finite() {
                lo[j] = target;
                up[j] = target;
                changed = true;
            }
        }

        if !changed {
            break;
        }
    }

    let sense = problem.objective.sense;
    let mut reduced = MilpProblem::new(sense);
    let mut kept = vec![None; n];
    let mut fixed_map = BTreeMap::new();
    for j in 0..n {
        match fixed[j] {
            Some(v) => {
                fixed_map.insert(VarId(j), v);
            }
            None => {
                let var = &problem.variables[j];
                kept[j] = Some(reduced.add_var(var.name.clone(), lo[j], up[j], var.kind));
            }
        }
    }
    for (i, row) in rows.iter().enumerate() {
        if row.active {
            let terms = row
                .terms
                .iter()
                .map(|&(j, a)| (kept[j].expect("active row holds only kept vars"), a));
            reduced.add_constraint(
                problem.constraints[i].name.clone(),
                terms,
                row.relation,
                row.rhs,
            );
        }
    }
    let mut constant = problem.objective.constant;
    let mut terms = Vec::new();
    for &(v, c) in &problem.objective.terms {
        match kept[v.0] {
            Some(k) => terms.push((k, c)),
            None => constant += c * fixed_map[&v],
        }
    }
    reduced.set_objective(sense, terms, constant);
    Ok(PresolveResult::Reduced(Presolved {
        problem: reduced,
        fixed: fixed_map,
        kept,
    }))
}
