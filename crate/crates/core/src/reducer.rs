//! Probability-threshold reduction of the facility dimension and the
//! predict, reduce, solve pipeline.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::milp::{solve_milp, MilpError, MilpStatus, SolverConfig};
use crate::neural::{NeuralError, TrainedModel};
use crate::supply::{
    build_model, extract_solution, fix_facilities, BuiltModel, DemandProfile, ModelStats,
    SupplyChainConfig, SupplyChainSolution, SupplyError,
};

#[derive(Debug, Error)]
pub enum ReducerError {
    #[error("predict: {0}")]
    Predict(#[from] NeuralError),
    #[error("reduce: {0}")]
    Reduce(String),
    #[error("build: {0}")]
    Build(#[from] SupplyError),
    #[error("solve: {0}")]
    Solve(#[from] MilpError),
    #[error("instance {instance}: {source}")]
    Instance {
        instance: String,
        #[source]
        source: Box<ReducerError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionMode {
    /// Rebuild the model over the selected facilities only.
    Reduce,
    /// Keep every facility but pin `E1` to the selection.
    Fix,
}

impl ReductionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ReductionMode::Reduce => "reduce",
            ReductionMode::Fix => "fix",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "reduce" => Some(ReductionMode::Reduce),
            "fix" => Some(ReductionMode::Fix),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Solve over the selected facilities.
    Proceed,
    PredictedInfeasible,
    /// No facility reached the threshold; handled like a predicted
    /// infeasibility.
    EmptyPrediction,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Proceed => "proceed",
            Verdict::PredictedInfeasible => "predicted_infeasible",
            Verdict::EmptyPrediction => "empty_prediction",
        }
    }

    pub fn is_skip(self) -> bool {
        self != Verdict::Proceed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionDecision {
    /// Facility probabilities followed by the infeasibility probability.
    pub probabilities: Vec<f64>,
    pub k_prob: f64,
    pub mode: ReductionMode,
    /// Facilities with probability at least `k_prob` (0-based, ascending),
    /// whatever the verdict.
    pub selected: Vec<usize>,
    pub verdict: Verdict,
}

/// Applies the threshold. The infeasibility probability is checked first
/// and, when it reaches `k_prob`, no model is solved regardless of the
/// facility probabilities.
pub fn threshold_reduce(
    probabilities: &[f64],
    k_prob: f64,
    mode: ReductionMode,
) -> Result<ReductionDecision, ReducerError> {
    if probabilities.len() < 2 {
        return Err(ReducerError::Reduce(format!(
            "need facility and infeasibility probabilities, got {}",
            probabilities.len()
        )));
    }
    if !(k_prob > 0.0 && k_prob < 1.0) {
        return Err(ReducerError::Reduce(format!(
            "k_prob {k_prob} outside (0, 1)"
        )));
    }
    if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(ReducerError::Reduce(format!(
            "probability {p} outside [0, 1]"
        )));
    }
    let (facilities, infeasible) = probabilities.split_at(probabilities.len() - 1);
    let selected: Vec<usize> = (0..facilities.len())
        .filter(|&m| facilities[m] >= k_prob)
        .collect();
    let verdict = if infeasible[0] >= k_prob {
        Verdict::PredictedInfeasible
    } else if selected.is_empty() {
        log::warn!("no facility reached k_prob {k_prob}; treating as infeasible");
        Verdict::EmptyPrediction
    } else {
        Verdict::Proceed
    };
    Ok(ReductionDecision {
        probabilities: probabilities.to_vec(),
        k_prob,
        mode,
        selected,
        verdict,
    })
}

/// How the reduced result compares with the full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Reduced objective equals the full optimum.
    GlobalMatch,
    /// Reduced model feasible but worse than the full optimum.
    Suboptimal,
    /// Reduced model infeasible while the full model is feasible.
    Infeasible,
    /// Skipped, and the full model is indeed infeasible.
    CorrectlySkipped,
    /// Skipped although the full model is feasible.
    WronglySkipped,
    /// Solved although the full model is infeasible.
    MissedInfeasible,
    /// A solve stopped at a limit, so the comparison is inconclusive.
    Unresolved,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::GlobalMatch => "global_match",
            Outcome::Suboptimal => "suboptimal",
            Outcome::Infeasible => "infeasible",
            Outcome::CorrectlySkipped => "correctly_skipped",
            Outcome::WronglySkipped => "wrongly_skipped",
            Outcome::MissedInfeasible => "missed_infeasible",
            Outcome::Unresolved => "unresolved",
        }
    }

    /// Full-model optimum reached, or an infeasible instance skipped.
    pub fn is_success(self) -> bool {
        matches!(self, Outcome::GlobalMatch | Outcome::CorrectlySkipped)
    }
}

/// Wall-clock seconds, kept apart from the deterministic report fields.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub predict: f64,
    pub reduced_solve: f64,
    pub full_solve: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub instance: String,
    pub decision: ReductionDecision,
    pub full_stats: Option<ModelStats>,
    pub reduced_stats: Option<ModelStats>,
    /// `1 - reduced/full` for constraints.
    pub constraint_reduction: Option<f64>,
    /// `1 - reduced/full` for binaries.
    pub binary_reduction: Option<f64>,
    /// Status of the reduced solve; none when skipped.
    pub status: Option<MilpStatus>,
    pub objective: Option<f64>,
    pub established: Vec<usize>,
    pub full_status: Option<MilpStatus>,
    pub full_objective: Option<f64>,
    pub outcome: Option<Outcome>,
    /// Models constructed while handling this instance.
    pub models_built: usize,
    pub timings: Timings,
}

fn build_counted(
    config: &SupplyChainConfig,
    demand: &DemandProfile,
    active: &[usize],
    count: &mut usize,
) -> Result<BuiltModel, ReducerError> {
    *count += 1;
    Ok(build_model(config, demand, active)?)
}

/// Builds and solves the model the decision asks for. A skip verdict builds
/// nothing. In fix mode the model keeps every facility, so its statistics
/// match the full model.
pub fn solve_reduced(
    decision: &ReductionDecision,
    demand: &DemandProfile,
    config: &SupplyChainConfig,
    solver: &SolverConfig,
) -> Result<(ReductionReport, Option<SupplyChainSolution>), ReducerError> {
    let mut report = ReductionReport {
        instance: String::new(),
        decision: decision.clone(),
        full_stats: None,
        reduced_stats: None,
        constraint_reduction: None,
        binary_reduction: None,
        status: None,
        objective: None,
        established: Vec::new(),
        full_status: None,
        full_objective: None,
        outcome: None,
        models_built: 0,
        timings: Timings::default(),
    };
    if decision.verdict.is_skip() {
        return Ok((report, None));
    }
    let selected = &decision.selected;
    let nm = config.num_facilities();
    if let Some(&m) = selected.iter().find(|&&m| m >= nm) {
        return Err(SupplyError::UnknownFacility(m).into());
    }
    let all: Vec<usize> = (0..nm).collect();
    let t0 = Instant::now();
    let mut built = build_counted(config, demand, &all, &mut report.models_built)?;
    let full_stats = built.stats;
    if decision.mode == ReductionMode::Fix {
        fix_facilities(&mut built, selected)?;
    } else if selected.len() < nm {
        built = build_counted(config, demand, selected, &mut report.models_built)?;
    }
    let (cr, br) = built.stats.reduction_vs(&full_stats);
    report.full_stats = Some(full_stats);
    report.reduced_stats = Some(built.stats);
    report.constraint_reduction = Some(cr);
    report.binary_reduction = Some(br);
    let sol = solve_milp(&built.problem, solver)?;
    report.status = Some(sol.status);
    let solution = if sol.values.is_some() {
        let s = extract_solution(&built, &sol)?;
        report.objective = Some(s.totcost);
        report.established = s.established.clone();
        Some(s)
    } else {
        None
    };
    report.timings.reduced_solve = t0.elapsed().as_secs_f64();
    Ok((report, solution))
}

/// Relative tolerance for calling two objectives equal.
fn objectives_match(a: f64, b: f64, mipgap: f64) -> bool {
    (a - b).abs() <= (1e-9 + mipgap) * a.abs().max(b.abs()).max(1.0)
}

fn classify(report: &ReductionReport, mipgap: f64) -> Outcome {
    let limited =
        |s: Option<MilpStatus>| matches!(s, Some(MilpStatus::GapLimit | MilpStatus::NodeLimit));
    if limited(report.full_status) || limited(report.status) {
        return Outcome::Unresolved;
    }
    let full_infeasible = report.full_status == Some(MilpStatus::Infeasible);
    if report.decision.verdict.is_skip() {
        return if full_infeasible {
            Outcome::CorrectlySkipped
        } else {
            Outcome::WronglySkipped
        };
    }
    if full_infeasible {
        return Outcome::MissedInfeasible;
    }
    match (report.objective, report.full_objective) {
        (Some(r), Some(f)) if objectives_match(r, f, mipgap) => Outcome::GlobalMatch,
        (Some(_), Some(_)) => Outcome::Suboptimal,
        _ => Outcome::Infeasible,
    }
}

/// Options for [`pipeline_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub k_prob: f64,
    pub mode: ReductionMode,
    /// Also solve the full model and classify the outcome.
    pub compare_full: bool,
}

/// Predicts facility probabilities from the demand profile, thresholds
/// them and solves the resulting model.
pub fn pipeline_solve(
    model: &TrainedModel,
    instance: &str,
    demand: &DemandProfile,
    config: &SupplyChainConfig,
    solver: &SolverConfig,
    opts: &PipelineOptions,
) -> Result<ReductionReport, ReducerError> {
    let wrap = |e: ReducerError| ReducerError::Instance {
        instance: instance.to_string(),
        source: Box::new(e),
    };
    let t0 = Instant::now();
    let features = demand
        .daily_totals(model.network.input_width())
        .map_err(|e| wrap(ReducerError::Predict(NeuralError::Shape(e.to_string()))))?;
    let probs = model
        .predict_probabilities(&features)
        .map_err(|e| wrap(e.into()))?;
    let predict = t0.elapsed().as_secs_f64();
    let decision = threshold_reduce(&probs, opts.k_prob, opts.mode).map_err(wrap)?;
    let (mut report, _) = solve_reduced(&decision, demand, config, solver).map_err(wrap)?;
    report.instance = instance.to_string();
    report.timings.predict = predict;
    if opts.compare_full {
        let t1 = Instant::now();
        let all: Vec<usize> = (0..config.num_facilities()).collect();
        let built = build_counted(config, demand, &all, &mut report.models_built).map_err(wrap)?;
        if report.full_stats.is_none() {
            report.full_stats = Some(built.stats);
        }
        let sol = solve_milp(&built.problem, solver).map_err(|e| wrap(e.into()))?;
        report.full_status = Some(sol.status);
        report.full_objective = sol.objective;
        report.timings.full_solve = Some(t1.elapsed().as_secs_f64());
        report.outcome = Some(classify(&report, solver.mipgap));
    }
    Ok(report)
}

/// Runs [`pipeline_solve`] over many instances in parallel, keeping input
/// order.
pub fn pipeline_batch(
    model: &TrainedModel,
    instances: &[(String, DemandProfile)],
    config: &SupplyChainConfig,
    solver: &SolverConfig,
    opts: &PipelineOptions,
) -> Result<Vec<ReductionReport>, ReducerError> {
    instances
        .par_iter()
        .map(|(name, demand)| pipeline_solve(model, name, demand, config, solver, opts))
        .collect()
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref()
        .map_or_else(|| "-".to_string(), |x| x.to_string())
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

impl ReductionReport {
    /// `key = value` lines, without wall times.
    pub fn to_text(&self, facility_names: &[String]) -> String {
        let names = |ix: &[usize]| -> String {
            ix.iter()
                .map(|&m| {
                    facility_names
                        .get(m)
                        .cloned()
                        .unwrap_or_else(|| m.to_string())
                })
                .collect::<Vec<_>>()
                .join(" ")
        };
        let d = &self.decision;
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("instance", self.instance.clone());
        line("mode", d.mode.as_str().into());
        line("k_prob", d.k_prob.to_string());
        line("probabilities", join(&d.probabilities));
        line("verdict", d.verdict.as_str().into());
        line("selected", names(&d.selected));
        let stat = |st: &Option<ModelStats>, f: fn(&ModelStats) -> usize| {
            st.as_ref().map_or("-".to_string(), |x| f(x).to_string())
        };
        line(
            "full_constraints",
            stat(&self.full_stats, |x| x.constraints),
        );
        line("full_binaries", stat(&self.full_stats, |x| x.binaries));
        line(
            "reduced_constraints",
            stat(&self.reduced_stats, |x| x.constraints),
        );
        line(
            "reduced_binaries",
            stat(&self.reduced_stats, |x| x.binaries),
        );
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.2}", 100.0 * x));
        line("constraint_reduction_pct", pct(self.constraint_reduction));
        line("binary_reduction_pct", pct(self.binary_reduction));
        line("status", opt(&self.status.map(|x| x.as_str())));
        line("objective", opt(&self.objective));
        line("established", names(&self.established));
        line("full_status", opt(&self.full_status.map(|x| x.as_str())));
        line("full_objective", opt(&self.full_objective));
        line("outcome", opt(&self.outcome.map(|x| x.as_str())));
        line("models_built", self.models_built.to_string());
        s
    }
}

pub const SUMMARY_HEADER: &str = "instance,verdict,status,objective,full_objective,constraint_reduction,binary_reduction,outcome";

/// Delimited batch table, one row per report.
pub fn summary_table(reports: &[ReductionReport]) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.instance,
            r.decision.verdict.as_str(),
            opt(&r.status.map(|x| x.as_str())),
            opt(&r.objective),
            opt(&r.full_objective),
            opt(&r.constraint_reduction),
            opt(&r.binary_reduction),
            opt(&r.outcome.map(|x| x.as_str())),
        );
    }
    s
}

/// Wall-time sidecar matching [`summary_table`] rows.
pub fn timings_table(reports: &[ReductionReport]) -> String {
    let mut s = "instance,predict_seconds,reduced_solve_seconds,full_solve_seconds\n".to_string();
    for r in reports {
        let _ = writeln!(
            s,
            "{},{:.6},{:.6},{}",
            r.instance,
            r.timings.predict,
            r.timings.reduced_solve,
            r.timings
                .full_solve
                .map_or("-".to_string(), |t| format!("{t:.6}"))
        );
    }
    s
}

/// Counts over a batch of compared reports.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub instances: usize,
    pub compared: usize,
    pub successes: usize,
    pub proceeded: usize,
    /// Proceeded instances whose constraint and binary reductions are both
    /// positive.
    pub proceeded_with_reduction: usize,
    pub outcomes: Vec<(Outcome, usize)>,
}

impl BatchSummary {
    pub fn from_reports(reports: &[ReductionReport]) -> Self {
        let mut out = BatchSummary {
            instances: reports.len(),
            ..Default::default()
        };
        for r in reports {
            if let Some(o) = r.outcome {
                out.compared += 1;
                out.successes += usize::from(o.is_success());
                match out.outcomes.iter_mut().find(|(k, _)| *k == o) {
                    Some((_, n)) => *n += 1,
                    None => out.outcomes.push((o, 1)),
                }
            }
            if !r.decision.verdict.is_skip() {
                out.proceeded += 1;
                let positive = |v: Option<f64>| v.is_some_and(|x| x > 0.0);
                if positive(r.constraint_reduction) && positive(r.binary_reduction) {
                    out.proceeded_with_reduction += 1;
                }
            }
        }
        out.outcomes.sort_by_key(|(o, _)| o.as_str());
        out
    }

    pub fn success_rate(&self) -> f64 {
        if self.compared == 0 {
            0.0
        } else {
            self.successes as f64 / self.compared as f64
        }
    }
}
