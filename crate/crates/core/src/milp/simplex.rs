//! Bounded-variable primal simplex on a dense explicit basis inverse.
//!
//! Every row gets either a logical (slack) column or, when the slack cannot
//! absorb the initial residual, an artificial column. Phase 1 minimises the
//! sum of artificials; phase 2 fixes them at zero and minimises the real
//! cost. Dantzig pricing with a Harris ratio test is used until the
//! objective stalls, after which Bland's rule takes over until progress
//! resumes.

use super::{
    LpSolution, LpStatus, MilpError, MilpProblem, Relation, Sense, SolverConfig, DENSE_SIZE_CEILING,
};

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const STALL_LIMIT: usize = 30;

/// Solves the LP relaxation of `problem` (binaries treated as continuous on
/// their bounds).
pub fn solve_lp(problem: &MilpProblem, config: &SolverConfig) -> Result<LpSolution, MilpError> {
    problem.validate()?;
    let kernel = LpKernel::new(problem)?;
    let lower: Vec<f64> = problem.variables.iter().map(|v| v.lower).collect();
    let upper: Vec<f64> = problem.variables.iter().map(|v| v.upper).collect();
    kernel.solve(&lower, &upper, config)
}

#[derive(Debug, Clone, Copy)]
enum ColMap {
    Direct(usize),
    Negated(usize),
    Split(usize, usize),
}

/// Internal minimisation form `min c'x, A x (rel) b, l <= x <= u` with all
/// lower bounds finite. Built once per problem and re-solved under
/// different variable bounds by branch-and-bound.
#[derive(Debug, Clone)]
pub(crate) struct LpKernel {
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    rhs: Vec<f64>,
    rel: Vec<Relation>,
    map: Vec<ColMap>,
    sign: f64,
    constant: f64,
}

impl LpKernel {
    pub(crate) fn new(problem: &MilpProblem) -> Result<Self, MilpError> {
        let sign = match problem.objective.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut map = Vec::with_capacity(problem.num_vars());
        let mut ncols = 0;
        for v in &problem.variables {
            let entry = if v.lower.is_finite() {
                ColMap::Direct(ncols)
            } else if v.upper.is_finite() {
                ColMap::Negated(ncols)
            } else {
                ncols += 1;
                ColMap::Split(ncols - 1, ncols)
            };
            ncols += 1;
            map.push(entry);
        }
        let m = problem.num_constraints();
        if m > DENSE_SIZE_CEILING || ncols > DENSE_SIZE_CEILING {
            return Err(MilpError::TooLarge {
                rows: m,
                cols: ncols,
            });
        }
        let mut cols = vec![Vec::new(); ncols];
        for (i, c) in problem.constraints.iter().enumerate() {
            for &(v, a) in &c.terms {
                match map[v.0] {
                    ColMap::Direct(j) => cols[j].push((i, a)),
                    ColMap::Negated(j) => cols[j].push((i, -a)),
                    ColMap::Split(p, q) => {
                        cols[p].push((i, a));
                        cols[q].push((i, -a));
                    }
                }
            }
        }
        let mut cost = vec![0.0; ncols];
        for &(v, c) in &problem.objective.terms {
            match map[v.0] {
                ColMap::Direct(j) => cost[j] += sign * c,
                ColMap::Negated(j) => cost[j] -= sign * c,
                ColMap::Split(p, q) => {
                    cost[p] += sign * c;
                    cost[q] -= sign * c;
                }
            }
        }
        Ok(Self {
            m,
            cols,
            cost,
            rhs: problem.constraints.iter().map(|c| c.rhs).collect(),
            rel: problem.constraints.iter().map(|c| c.relation).collect(),
            map,
            sign,
            constant: problem.objective.constant,
        })
    }

    /// Solves under the given problem-space bounds.
    pub(crate) fn solve(
        &self,
        lower: &[f64],
        upper: &[f64],
        config: &SolverConfig,
    ) -> Result<LpSolution, MilpError> {
        let ncols = self.cols.len();
        let mut lo = vec![0.0; ncols];
        let mut up = vec![f64::INFINITY; ncols];
        for (k, entry) in self.map.iter().enumerate() {
            if lower[k] > upper[k] {
                return Ok(LpSolution {
                    status: LpStatus::Infeasible,
                    objective: f64::NAN,
                    values: Vec::new(),
                    iterations: 0,
                });
            }
            match *entry {
                ColMap::Direct(j) => {
                    lo[j] = lower[k];
                    up[j] = upper[k];
                }
                ColMap::Negated(j) => {
                    lo[j] = -upper[k];
                    up[j] = f64::INFINITY;
                }
                ColMap::Split(..) => {}
            }
        }
        let mut sx = Simplex::new(self, lo, up, config.feasibility_tol);
        let outcome = sx.two_phase()?;
        let status = match outcome {
            Outcome::Optimal => LpStatus::Optimal,
            Outcome::Infeasible => LpStatus::Infeasible,
            Outcome::Unbounded => LpStatus::Unbounded,
        };
        if status != LpStatus::Optimal {
            return Ok(LpSolution {
                status,
                objective: f64::NAN,
                values: Vec::new(),
                iterations: sx.iterations,
            });
        }
        let values: Vec<f64> = self
            .map
            .iter()
            .enumerate()
            .map(|(k, entry)| {
                let raw = match *entry {
                    ColMap::Direct(j) => sx.x[j],
                    ColMap::Negated(j) => -sx.x[j],
                    ColMap::Split(p, q) => sx.x[p] - sx.x[q],
                };
                raw.clamp(lower[k], upper[k])
            })
            .collect();
        let internal: f64 = (0..ncols).map(|j| self.cost[j] * sx.x[j]).sum();
        Ok(LpSolution {
            status,
            objective: self.sign * internal + self.constant,
            values,
            iterations: sx.iterations,
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum Col {
    Structural(usize),
    Unit { row: usize, coef: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum State {
    Basic(usize),
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Outcome {
    Optimal,
    Infeasible,
    Unbounded,
}

struct Simplex<'a> {
    k: &'a LpKernel,
    m: usize,
    cols: Vec<Col>,
    lo: Vec<f64>,
    up: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    artificial: Vec<bool>,
    iterations: usize,
    max_iterations: usize,
    feas_tol: f64,
    since_refactor: usize,
    refactor_every: usize,
}

impl<'a> Simplex<'a> {
    fn new(k: &'a LpKernel, lo: Vec<f64>, up: Vec<f64>, feas_tol: f64) -> Self {
        let m = k.m;
        let n = k.cols.len();
        let mut cols: Vec<Col> = (0..n).map(Col::Structural).collect();
        let mut lo = lo;
        let mut up = up;
        let mut x: Vec<f64> = lo.clone();
        let mut state = vec![State::Lower; n];
        let mut artificial = vec![false; n];

        let mut residual = k.rhs.clone();
        for (j, col) in k.cols.iter().enumerate() {
            if x[j] != 0.0 {
                for &(i, a) in col {
                    residual[i] -= a * x[j];
                }
            }
        }

        let mut basis = vec![0; m];
        let mut binv = vec![0.0; m * m];
        let mut push_col = |col: Col, l: f64, u: f64, value: f64, st: State, art: bool| {
            artificial.push(art);
            cols.push(col);
            lo.push(l);
            up.push(u);
            x.push(value);
            state.push(st);
            cols.len() - 1
        };
        for i in 0..m {
            let r = residual[i];
            let logical = match k.rel[i] {
                Relation::Le => Some(1.0),
                Relation::Ge => Some(-1.0),
                Relation::Eq => None,
            };
            let (basic_col, basic_coef) = match logical {
                Some(coef) if r * coef >= 0.0 => (
                    push_col(
                        Col::Unit { row: i, coef },
                        0.0,
                        f64::INFINITY,
                        r * coef,
                        State::Basic(i),
                        false,
                    ),
                    coef,
                ),
                Some(coef) => {
                    push_col(
                        Col::Unit { row: i, coef },
                        0.0,
                        f64::INFINITY,
                        0.0,
                        State::Lower,
                        false,
                    );
                    let s = if r >= 0.0 { 1.0 } else { -1.0 };
                    (
                        push_col(
                            Col::Unit { row: i, coef: s },
                            0.0,
                            f64::INFINITY,
                            r.abs(),
                            State::Basic(i),
                            true,
                        ),
                        s,
                    )
                }
                None => {
                    let s = if r >= 0.0 { 1.0 } else { -1.0 };
                    (
                        push_col(
                            Col::Unit { row: i, coef: s },
                            0.0,
                            f64::INFINITY,
                            r.abs(),
                            State::Basic(i),
                            true,
                        ),
                        s,
                    )
                }
            };
            basis[i] = basic_col;
            binv[i * m + i] = 1.0 / basic_coef;
        }
        let ncols = cols.len();
        Self {
            k,
            m,
            cols,
            lo,
            up,
            x,
            state,
            basis,
            binv,
            artificial,
            iterations: 0,
            max_iterations: 50_000 + 50 * (m + ncols),
            feas_tol,
            since_refactor: 0,
            refactor_every: m.max(64),
        }
    }

    fn two_phase(&mut self) -> Result<Outcome, MilpError> {
        let artificial = self.artificial.clone();
        let rhs_scale = self.k.rhs.iter().fold(1.0_f64, |a, b| a.max(b.abs()));
        if artificial.iter().any(|&a| a) {
            let phase1: Vec<f64> = artificial
                .iter()
                .map(|&a| if a { 1.0 } else { 0.0 })
                .collect();
            self.iterate(&phase1)?;
            let infeas: f64 = (0..self.cols.len())
                .filter(|&j| artificial[j])
                .map(|j| self.x[j])
                .sum();
            if infeas > 10.0 * self.feas_tol * rhs_scale {
                return Ok(Outcome::Infeasible);
            }
            for j in 0..self.cols.len() {
                if artificial[j] {
                    self.up[j] = 0.0;
                    if !matches!(self.state[j], State::Basic(_)) {
                        self.state[j] = State::Lower;
                        self.x[j] = 0.0;
                    }
                }
            }
        }
        let mut cost = self.k.cost.clone();
        cost.resize(self.cols.len(), 0.0);
        let outcome = self.iterate(&cost)?;
        if outcome == Outcome::Optimal && self.since_refactor > 0 {
            self.refactor()?;
        }
        Ok(outcome)
    }

    fn column(&self, j: usize) -> ColumnIter<'_> {
        match self.cols[j] {
            Col::Structural(s) => ColumnIter::Sparse(self.k.cols[s].iter()),
            Col::Unit { row, coef } => ColumnIter::Unit(Some((row, coef))),
        }
    }

    fn ftran(&self, j: usize, out: &mut [f64]) {
        let m = self.m;
        out.iter_mut().for_each(|v| *v = 0.0);
        for (r, a) in self.column(j) {
            for i in 0..m {
                out[i] += self.binv[i * m + r] * a;
            }
        }
    }

    fn duals(&self, cost: &[f64], y: &mut [f64]) {
        let m = self.m;
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, b) in y.iter_mut().zip(row) {
                    *yk += cb * b;
                }
            }
        }
    }

    fn reduced_cost(&self, j: usize, cost: &[f64], y: &[f64]) -> f64 {
        cost[j] - self.column(j).map(|(r, a)| y[r] * a).sum::<f64>()
    }

    fn iterate(&mut self, cost: &[f64]) -> Result<Outcome, MilpError> {
        let m = self.m;
        let ncols = self.cols.len();
        let mut y = vec![0.0; m];
        let mut alpha = vec![0.0; m];
        let mut stall = 0usize;
        let mut bland = false;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(MilpError::NumericBreakdown {
                    iterations: self.iterations,
                    reason: "iteration limit reached".into(),
                });
            }
            if self.since_refactor >= self.refactor_every {
                self.refactor()?;
            }
            self.duals(cost, &mut y);

            // Pricing.
            let mut entering: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..ncols {
                let st = self.state[j];
                if matches!(st, State::Basic(_)) || self.lo[j] == self.up[j] {
                    continue;
                }
                let d = self.reduced_cost(j, cost, &y);
                let dir = match st {
                    State::Lower if d < -OPT_TOL => 1.0,
                    State::Upper if d > OPT_TOL => -1.0,
                    _ => continue,
                };
                if bland {
                    entering = Some((j, dir));
                    break;
                }
                if d.abs() > best {
                    best = d.abs();
                    entering = Some((j, dir));
                }
            }
            let Some((q, dir)) = entering else {
                return Ok(Outcome::Optimal);
            };

            self.ftran(q, &mut alpha);
            let flip = self.up[q] - self.lo[q];

            // Ratio test.
            let tol = self.feas_tol;
            let mut leaving: Option<usize> = None;
            let mut step = f64::INFINITY;
            if bland {
                for i in 0..m {
                    let g = dir * alpha[i];
                    let b = self.basis[i];
                    let ratio = if g > PIVOT_TOL {
                        (self.x[b] - self.lo[b]).max(0.0) / g
                    } else if g < -PIVOT_TOL && self.up[b].is_finite() {
                        (self.up[b] - self.x[b]).max(0.0) / -g
                    } else {
                        continue;
                    };
                    let better = match leaving {
                        None => true,
                        Some(l) => {
                            ratio < step - 1e-12 || (ratio <= step + 1e-12 && b < self.basis[l])
                        }
                    };
                    if better {
                        step = ratio;
                        leaving = Some(i);
                    }
                }
            } else {
                let mut relaxed = f64::INFINITY;
                for i in 0..m {
                    let g = dir * alpha[i];
                    let b = self.basis[i];
                    let r = if g > PIVOT_TOL {
                        (self.x[b] - self.lo[b] + tol) / g
                    } else if g < -PIVOT_TOL && self.up[b].is_finite() {
                        (self.up[b] - self.x[b] + tol) / -g
                    } else {
                        continue;
                    };
                    relaxed = relaxed.min(r);
                }
                if relaxed.is_finite() {
                    let mut best_pivot = 0.0;
                    for i in 0..m {
                        let g = dir * alpha[i];
                        let b = self.basis[i];
                        let ratio = if g > PIVOT_TOL {
                            (self.x[b] - self.lo[b]) / g
                        } else if g < -PIVOT_TOL && self.up[b].is_finite() {
                            (self.up[b] - self.x[b]) / -g
                        } else {
                            continue;
                        };
                        if ratio <= relaxed && g.abs() > best_pivot {
                            best_pivot = g.abs();
                            leaving = Some(i);
                            step = ratio.max(0.0);
                        }
                    }
                }
            }

            self.iterations += 1;
            if flip.is_finite() && flip <= step {
                // Bound flip, basis unchanged.
                for i in 0..m {
                    let b = self.basis[i];
                    self.x[b] -= dir * flip * alpha[i];
                }
                self.state[q] = if dir > 0.0 {
                    State::Upper
                } else {
                    State::Lower
                };
                self.x[q] = if dir > 0.0 { self.up[q] } else { self.lo[q] };
                stall = 0;
                bland = false;
                continue;
            }
            let Some(r) = leaving else {
                return Ok(Outcome::Unbounded);
            };

            if step <= 1e-12 {
                stall += 1;
                if stall > STALL_LIMIT {
                    bland = true;
                }
            } else {
                stall = 0;
                bland = false;
            }

            for i in 0..m {
                let b = self.basis[i];
                self.x[b] -= dir * step * alpha[i];
            }
            self.x[q] += dir * step;
            let out = self.basis[r];
            let g = dir * alpha[r];
            if g > 0.0 {
                self.x[out] = self.lo[out];
                self.state[out] = State::Lower;
            } else {
                self.x[out] = self.up[out];
                self.state[out] = State::Upper;
            }
            self.basis[r] = q;
            self.state[q] = State::Basic(r);

            let piv = alpha[r];
            {
                let (before, rest) = self.binv.split_at_mut(r * m);
                let (prow, after) = rest.split_at_mut(m);
                prow.iter_mut().for_each(|v| *v /= piv);
                for (i, row) in before
                    .chunks_exact_mut(m)
                    .chain(after.chunks_exact_mut(m))
                    .enumerate()
                {
                    let ai = if i < r { alpha[i] } else { alpha[i + 1] };
                    if ai != 0.0 {
                        for (v, p) in row.iter_mut().zip(prow.iter()) {
                            *v -= ai * p;
                        }
                    }
                }
            }
            self.since_refactor += 1;
            if piv.abs() < 1e-7 {
                self.refactor()?;
            }
        }
    }

    /// Rebuilds the basis inverse from scratch (Gauss-Jordan with partial
    /// pivoting) and recomputes basic values from the nonbasic ones.
    fn refactor(&mut self) -> Result<(), MilpError> {
        let m = self.m;
        self.since_refactor = 0;
        if m == 0 {
            return Ok(());
        }
        let mut b = vec![0.0; m * m];
        for (k, &j) in self.basis.iter().enumerate() {
            for (r, a) in self.column(j) {
                b[r * m + k] = a;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let (p, pv) = (c..m)
                .map(|r| (r, b[r * m + c].abs()))
                .fold((c, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
            if pv < 1e-11 {
                return Err(MilpError::NumericBreakdown {
                    iterations: self.iterations,
                    reason: "singular basis during refactorization".into(),
                });
            }
            if p != c {
                for k in 0..m {
                    b.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            let d = b[c * m + c];
            for k in 0..m {
                b[c * m + k] /= d;
                inv[c * m + k] /= d;
            }
            for r in 0..m {
                if r == c {
                    continue;
                }
                let f = b[r * m + c];
                if f != 0.0 {
                    for k in 0..m {
                        b[r * m + k] -= f * b[c * m + k];
                        inv[r * m + k] -= f * inv[c * m + k];
                    }
                }
            }
        }
        self.binv = inv;

        let mut rhs = self.k.rhs.clone();
        for j in 0..self.cols.len() {
            if !matches!(self.state[j], State::Basic(_)) && self.x[j] != 0.0 {
                for (r, a) in self.column(j) {
                    rhs[r] -= a * self.x[j];
                }
            }
        }
        for i in 0..m {
            let v: f64 = (0..m).map(|k| self.binv[i * m + k] * rhs[k]).sum();
            self.x[self.basis[i]] = v;
        }
        Ok(())
    }
}

enum ColumnIter<'a> {
    Sparse(std::slice::Iter<'a, (usize, f64)>),
    Unit(Option<(usize, f64)>),
}

impl Iterator for ColumnIter<'_> {
    type Item = (usize, f64);

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            ColumnIter::Sparse(it) => it.next().copied(),
            ColumnIter::Unit(u) => u.take(),
        }
    }
}
