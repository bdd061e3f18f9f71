//! Best-bound branch-and-bound over binary variables.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use super::presolve::{presolve, PresolveResult};
use super::simplex::LpKernel;
use super::{
    relative_gap, LpStatus, MilpError, MilpProblem, MilpSolution, MilpStatus, Sense, SolverConfig,
    VarKind,
};

/// Solves `problem` to within `config.mipgap`.
///
/// Infeasibility is reported through [`MilpStatus::Infeasible`], not as an
/// error. Node and time limits return the incumbent found so far, if any.
pub fn solve_milp(problem: &MilpProblem, config: &SolverConfig) -> Result<MilpSolution, MilpError> {
    problem.validate()?;
    config
        .validate()
        .map_err(|reason| MilpError::NumericBreakdown {
            iterations: 0,
            reason,
        })?;
    if !config.presolve {
        return branch_and_bound(problem, config);
    }
    match presolve(problem)? {
        PresolveResult::Infeasible(reason) => {
            log::debug!("presolve proved infeasibility: {reason}");
            Ok(MilpSolution::infeasible(0))
        }
        PresolveResult::Reduced(pre) => {
            let mut sol = branch_and_bound(&pre.problem, config)?;
            sol.values = sol.values.map(|v| pre.restore(&v));
            Ok(sol)
        }
    }
}

struct Node {
    bound: f64,
    seq: u64,
    fixes: Vec<(usize, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap is a max-heap: invert so the lowest bound, then the oldest
    // node, comes out first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn branch_and_bound(
    problem: &MilpProblem,
    config: &SolverConfig,
) -> Result<MilpSolution, MilpError> {
    let start = Instant::now();
    let kernel = LpKernel::new(problem)?;
    let sign = match problem.objective.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let binaries: Vec<usize> = (0..problem.num_vars())
        .filter(|&j| problem.variables[j].kind == VarKind::Binary)
        .collect();
    let base_lo: Vec<f64> = problem.variables.iter().map(|v| v.lower).collect();
    let base_up: Vec<f64> = problem.variables.iter().map(|v| v.upper).collect();

    let prunable = |incumbent: f64, bound: f64| {
        relative_gap(incumbent, bound) <= config.mipgap
            || bound >= incumbent - 1e-9 * incumbent.abs().max(1.0)
    };

    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        seq: 0,
        fixes: Vec::new(),
    });
    let mut seq = 1u64;
    let mut nodes = 0usize;
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut lo = base_lo.clone();
    let mut up = base_up.clone();

    let finish =
        |status: MilpStatus, incumbent: Option<(f64, Vec<f64>)>, bound: f64, nodes: usize| {
            let gap = incumbent
                .as_ref()
                .map_or(f64::INFINITY, |(z, _)| relative_gap(*z, bound));
            let (objective, values) = match incumbent {
                Some((z, v)) => (Some(sign * z), Some(v)),
                None => (None, None),
            };
            MilpSolution {
                status,
                objective,
                values,
                best_bound: sign * bound,
                gap,
                nodes,
            }
        };

    loop {
        let Some(top) = heap.peek() else {
            return Ok(match incumbent {
                Some((z, _)) => finish(MilpStatus::Optimal, incumbent, z, nodes),
                None => MilpSolution::infeasible(nodes),
            });
        };
        if let Some((z, _)) = &incumbent {
            if prunable(*z, top.bound) {
                let bound = top.bound.min(*z);
                return Ok(finish(MilpStatus::Optimal, incumbent, bound, nodes));
            }
        }
        let open_bound = top.bound;
        if nodes >= config.node_limit {
            return Ok(finish(MilpStatus::NodeLimit, incumbent, open_bound, nodes));
        }
        if start.elapsed() >= config.time_budget() {
            return Ok(finish(MilpStatus::GapLimit, incumbent, open_bound, nodes));
        }

        let node = heap.pop().expect("peeked");
        nodes += 1;
        lo.copy_from_slice(&base_lo);
        up.copy_from_slice(&base_up);
        for &(j, v) in &node.fixes {
            lo[j] = v;
            up[j] = v;
        }
        let lp = kernel.solve(&lo, &up, config)?;
        match lp.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => return Err(MilpError::Unbounded),
            LpStatus::Optimal => {}
        }
        let z = sign * lp.objective;
        if let Some((best, _)) = &incumbent {
            if prunable(*best, z) {
                continue;
            }
        }

        // Most fractional binary, lowest index on ties.
        let mut branch_on: Option<(usize, f64)> = None;
        for &j in &binaries {
            let v = lp.values[j];
            let frac = (v - v.floor()).min(v.ceil() - v);
            if frac > config.integrality_tol && branch_on.map_or(true, |(_, f)| frac > f + 1e-12) {
                branch_on = Some((j, frac));
            }
        }
        match branch_on {
            None => {
                let mut values = lp.values;
                for &j in &binaries {
                    values[j] = values[j].round();
                }
                if incumbent.as_ref().map_or(true, |(best, _)| z < *best) {
                    incumbent = Some((z, values));
                }
            }
            Some((j, _)) => {
                for v in [0.0, 1.0] {
                    let mut fixes = node.fixes.clone();
                    fixes.push((j, v));
                    heap.push(Node {
                        bound: z,
                        seq,
                        fixes,
                    });
                    seq += 1;
                }
            }
        }
    }
}
