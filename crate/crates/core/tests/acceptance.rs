//! Acceptance checks: one PASS/FAIL line per criterion.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::gradcheck::{max_relative_error, random_network, random_spec};
use common::metrics_fixture as fx;
use common::solver::{close, oracle, random_lp, random_milp};
use common::{desk_plan, enumeration_oracle, exact};
use mipred::datagen::*;
use mipred::hpo::*;
use mipred::metrics::*;
use mipred::milp::{solve_lp, solve_milp, LpStatus, MilpStatus};
use mipred::neural::LayerSpec;
use mipred::reducer::*;
use mipred::supply::SupplyChainConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;
type Artifacts = Vec<(String, Vec<u8>)>;

fn within(start: Instant, limit: Duration, detail: String) -> Outcome {
    let t = start.elapsed();
    if t <= limit {
        Ok(format!("{detail}; {:.1}s", t.as_secs_f64()))
    } else {
        Err(format!(
            "{detail}; took {:.1}s, limit {}s",
            t.as_secs_f64(),
            limit.as_secs()
        ))
    }
}

fn c1_milp_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let problems: Vec<_> = (0..200).map(|_| random_milp(&mut rng)).collect();
    let results: Vec<Result<bool, String>> = problems
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let s = solve_milp(p, &exact()).map_err(|e| e.to_string())?;
            match (oracle::binary_enumeration(p), s.status, s.objective) {
                (Some(z), MilpStatus::Optimal, Some(got)) if close(got, z, 1e-9) => Ok(true),
                (None, MilpStatus::Infeasible, _) => Ok(false),
                (z, st, got) => Err(format!("case {i}: oracle {z:?}, solver {st:?} {got:?}")),
            }
        })
        .collect();
    let mut feasible = 0;
    for r in results {
        feasible += usize::from(r?);
    }
    within(
        start,
        Duration::from_secs(120),
        format!("200 MILPs agree ({feasible} feasible)"),
    )
}

fn c2_lp_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut feasible = 0;
    for i in 0..200 {
        let p = random_lp(&mut rng);
        let s = solve_lp(&p, &exact()).map_err(|e| e.to_string())?;
        match (oracle::vertex_enumeration(&p), s.status) {
            (Some(z), LpStatus::Optimal) if (s.objective - z).abs() <= 1e-6 => feasible += 1,
            (None, LpStatus::Infeasible) => {}
            (z, st) => {
                return Err(format!(
                    "case {i}: oracle {z:?}, simplex {st:?} {}",
                    s.objective
                ))
            }
        }
    }
    within(
        start,
        Duration::from_secs(30),
        format!("200 LPs agree ({feasible} feasible)"),
    )
}

/// Twenty desk instances: ten demand levels over 2-6 patients, uniform and
/// front-loaded arrivals.
fn c3_instances(seed: u64) -> Vec<GeneratedInstance> {
    let plan = GenerationPlan {
        distributions: vec![Distribution::Uniform, Distribution::LeftTriangular],
        replicates: 1,
        ..desk_plan(seed)
    };
    generate_instance_set(&plan).expect("plan is valid")
}

fn all_facilities_probs(n: usize) -> Vec<f64> {
    let mut p = vec![0.9; n];
    p.push(0.0);
    p
}

/// Labelled dataset file plus identity-reduction reports.
fn c3_artifacts(seed: u64) -> Result<(LabeledDataset, Artifacts), String> {
    let cfg = SupplyChainConfig::desk();
    let instances = c3_instances(seed);
    let ds = label_instances(&instances, &cfg, &exact()).map_err(|e| e.to_string())?;
    if !ds.unresolved.is_empty() {
        return Err(format!("{} instances unresolved", ds.unresolved.len()));
    }
    let mut out = Vec::new();
    let mut buf = Vec::new();
    write_dataset(&ds, &mut buf).map_err(|e| e.to_string())?;
    out.push(("labels.csv".to_string(), buf));
    let decision = threshold_reduce(
        &all_facilities_probs(cfg.num_facilities()),
        0.5,
        ReductionMode::Reduce,
    )
    .map_err(|e| e.to_string())?;
    let names = cfg.facility_names();
    for (i, gi) in instances.iter().enumerate() {
        let (mut r, _) =
            solve_reduced(&decision, &gi.profile, &cfg, &exact()).map_err(|e| e.to_string())?;
        r.instance = format!("instance{i:02}");
        out.push((
            format!("{}.txt", r.instance),
            r.to_text(&names).into_bytes(),
        ));
    }
    Ok((ds, out))
}

struct OracleRow {
    labels: Vec<u8>,
    objective: Option<f64>,
}

fn c3_oracle(instances: &[GeneratedInstance]) -> Vec<OracleRow> {
    let cfg = SupplyChainConfig::desk();
    instances
        .par_iter()
        .map(|gi| {
            let (labels, objective) = enumeration_oracle(&cfg, &gi.profile);
            OracleRow { labels, objective }
        })
        .collect()
}

fn c3_labels(oracle_rows: &[OracleRow]) -> Outcome {
    let start = Instant::now();
    let (ds, _) = c3_artifacts(3)?;
    let mut infeasible = 0;
    for (i, (row, o)) in ds.instances.iter().zip(oracle_rows).enumerate() {
        if row.labels != o.labels {
            return Err(format!(
                "instance {i}: labels {:?}, oracle {:?}",
                row.labels, o.labels
            ));
        }
        infeasible += usize::from(row.is_infeasible());
    }
    let sizes: BTreeSet<usize> = ds.instances.iter().map(|r| r.level).collect();
    within(
        start,
        Duration::from_secs(600),
        format!("20 instances, sizes {sizes:?}, {infeasible} infeasible, labels match"),
    )
}

fn c4_identity(instances: &[GeneratedInstance], oracle_rows: &[OracleRow]) -> Outcome {
    let cfg = SupplyChainConfig::desk();
    let decision = threshold_reduce(
        &all_facilities_probs(cfg.num_facilities()),
        0.5,
        ReductionMode::Reduce,
    )
    .map_err(|e| e.to_string())?;
    let mut checked = 0;
    for (i, (gi, o)) in instances.iter().zip(oracle_rows).enumerate() {
        let Some(full) = o.objective else { continue };
        let (r, _) =
            solve_reduced(&decision, &gi.profile, &cfg, &exact()).map_err(|e| e.to_string())?;
        match r.objective {
            Some(z) if (z - full).abs() <= 1e-9 * full.abs() => checked += 1,
            z => return Err(format!("instance {i}: reduced {z:?}, full {full}")),
        }
    }
    Ok(format!("{checked} feasible instances match with M* = M"))
}

fn c5_supersets(instances: &[GeneratedInstance], oracle_rows: &[OracleRow]) -> Outcome {
    let cfg = SupplyChainConfig::desk();
    let nm = cfg.num_facilities();
    let jobs: Vec<(usize, Vec<usize>)> = instances
        .iter()
        .zip(oracle_rows)
        .enumerate()
        .flat_map(|(i, (_, o))| {
            let required: u32 = (0..nm).filter(|&m| o.labels[m] == 1).map(|m| 1 << m).sum();
            let mut candidates: Vec<u32> = (1u32..1 << nm)
                .filter(|s| s & required == required)
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(500 + i as u64);
            let mut picked = Vec::new();
            while picked.len() < 10 && !candidates.is_empty() {
                picked.push(candidates.swap_remove(rng.gen_range(0..candidates.len())));
            }
            picked
                .into_iter()
                .map(move |mask| (i, (0..nm).filter(|m| mask >> m & 1 == 1).collect()))
        })
        .collect();
    let results: Vec<Result<(), String>> = jobs
        .par_iter()
        .map(|(i, set)| {
            let mut p: Vec<f64> = (0..nm)
                .map(|m| if set.contains(&m) { 0.8 } else { 0.2 })
                .collect();
            p.push(0.0);
            let d = threshold_reduce(&p, 0.5, ReductionMode::Reduce).map_err(|e| e.to_string())?;
            let (r, _) = solve_reduced(&d, &instances[*i].profile, &cfg, &exact())
                .map_err(|e| e.to_string())?;
            match (r.objective, oracle_rows[*i].objective) {
                (Some(z), Some(full)) if (z - full).abs() <= 1e-9 * full.abs() => Ok(()),
                (None, None) if r.status == Some(MilpStatus::Infeasible) => Ok(()),
                (z, full) => Err(format!(
                    "instance {i} set {set:?}: reduced {z:?}, full {full:?}"
                )),
            }
        })
        .collect();
    for r in results {
        r?;
    }
    Ok(format!(
        "{} supersets over {} instances recover the optimum",
        jobs.len(),
        instances.len()
    ))
}

fn c6_gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut worst: f64 = 0.0;
    let mut seen = [0usize; 4];
    for case in 0..50 {
        let spec = random_spec(&mut rng);
        for l in &spec.layers {
            match l {
                LayerSpec::Dense { .. } => seen[0] += 1,
                LayerSpec::Conv1d { .. } => seen[1] += 1,
                LayerSpec::MaxPool1d { .. } => seen[2] += 1,
                LayerSpec::Dropout { .. } => seen[3] += 1,
                LayerSpec::Flatten => {}
            }
        }
        let net = random_network(spec, &mut rng);
        let e = max_relative_error(&net, 3, 1000 + case, 400);
        if !(e <= 1e-4) {
            return Err(format!("case {case}: relative error {e:e}"));
        }
        worst = worst.max(e);
    }
    if seen.contains(&0) {
        return Err(format!(
            "layer coverage {seen:?} (dense, conv, pool, dropout)"
        ));
    }
    within(
        start,
        Duration::from_secs(60),
        format!("50 networks, max relative error {worst:.1e}, layer counts {seen:?}"),
    )
}

fn c7_metrics() -> Outcome {
    let (t, p, names) = (fx::truth(), fx::pred(), fx::names());
    let r = evaluate(&t, &p, &names).map_err(|e| e.to_string())?;
    let eq = |a: f64, b: f64| (a - b).abs() < 1e-12;
    let mut bad = Vec::new();
    for (name, a, b) in [
        ("hamming", r.hamming_loss, fx::HAMMING),
        ("jaccard", r.jaccard_index, fx::JACCARD),
        ("accuracy", r.sample_accuracy, fx::ACCURACY),
    ] {
        if !eq(a, b) {
            bad.push(format!("{name} {a} vs {b}"));
        }
    }
    for (s, &(tp, fp, fn_, pr, rc, f1)) in r.prf.per_label.iter().zip(&fx::PER_LABEL) {
        if (s.tp, s.fp, s.fn_) != (tp, fp, fn_)
            || !eq(s.precision, pr)
            || !eq(s.recall, rc)
            || !eq(s.f1, f1)
        {
            bad.push(format!("label {}", s.name));
        }
    }
    for (name, a, e) in [
        ("micro", r.prf.micro, fx::MICRO),
        ("macro", r.prf.macro_, fx::MACRO),
        ("weighted", r.prf.weighted, fx::WEIGHTED),
        ("samples", r.prf.samples, fx::SAMPLES),
    ] {
        if !eq(a.precision, e.0) || !eq(a.recall, e.1) || !eq(a.f1, e.2) {
            bad.push(name.to_string());
        }
    }
    let m = mlcm_confusion(&t, &p, &names).map_err(|e| e.to_string())?;
    let mut expected = vec![vec![0.0; 8]; 8];
    for (i, j, v) in fx::MLCM {
        expected[i][j] = v;
    }
    if m.counts != expected {
        bad.push("mlcm".into());
    }
    if bad.is_empty() {
        Ok("hamming, jaccard, accuracy, 7 labels, 4 averages and 8x8 MLCM match".into())
    } else {
        Err(bad.join(", "))
    }
}

fn c8_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    for case in 0..10_000 {
        let p: Vec<f64> = (0..7).map(|_| rng.gen_range(0.0..1.0)).collect();
        let a = rng.gen_range(0.001..0.999);
        let b = rng.gen_range(0.001..0.999);
        if a == b {
            continue;
        }
        let (k1, k2) = if a < b { (a, b) } else { (b, a) };
        let d1 = threshold_reduce(&p, k1, ReductionMode::Reduce).map_err(|e| e.to_string())?;
        let d2 = threshold_reduce(&p, k2, ReductionMode::Reduce).map_err(|e| e.to_string())?;
        if !d2.selected.iter().all(|m| d1.selected.contains(m)) {
            return Err(format!(
                "case {case}: k1 {k1} {:?}, k2 {k2} {:?}",
                d1.selected, d2.selected
            ));
        }
    }
    Ok("10000 probability vectors and threshold pairs nest".into())
}

fn c9_bo() -> Outcome {
    let start = Instant::now();
    let space = HyperSpace {
        dims: vec![HyperDim::new("x", 0.0, 1.0, Scale::Linear, Kind::Real)],
    };
    let cfg = BoConfig {
        init_points: 5,
        maxiter: 30,
        kappa: 2.0,
        ..BoConfig::default()
    };
    let r = bo_run(
        |t: &[f64]| Ok::<_, String>(-(t[0] - 0.3).powi(2)),
        &space,
        &cfg,
        |_| {},
    )
    .map_err(|e| e.to_string())?;
    let seed_best = r.history[..5]
        .iter()
        .map(|e| e.value)
        .fold(f64::NEG_INFINITY, f64::max);
    let x = r.best_theta[0];
    let detail = format!(
        "best x {x:.5}, value {:.2e}, best seed {seed_best:.2e}",
        r.best_value
    );
    if (x - 0.3).abs() > 1e-2 || r.best_value <= seed_best || r.history.len() != 35 {
        return Err(detail);
    }
    within(start, Duration::from_secs(5), detail)
}

struct PipelineRun {
    artifacts: Artifacts,
    summary: BatchSummary,
    tuned_accuracy: f64,
}

/// Generate, label, split, tune, train and run the reduce pipeline on the
/// validation split at k_prob = 0.01.
fn desk_pipeline(seed: u64) -> Result<PipelineRun, String> {
    let cfg = SupplyChainConfig::desk();
    let plan = desk_plan(seed);
    let generated = generate_instance_set(&plan).map_err(|e| e.to_string())?;
    let ds = label_instances(&generated, &cfg, &exact()).map_err(|e| e.to_string())?;
    if !ds.unresolved.is_empty() {
        return Err(format!("{} instances unresolved", ds.unresolved.len()));
    }
    let ds = split_dataset(ds, [0.8, 0.1, 0.1], seed).map_err(|e| e.to_string())?;
    let mut artifacts = Vec::new();
    let mut buf = Vec::new();
    write_dataset(&ds, &mut buf).map_err(|e| e.to_string())?;
    artifacts.push(("dataset.csv".to_string(), buf));

    let settings = TuneSettings {
        architecture: Architecture::Ann,
        epochs: (100.0, 2000.0),
        base: HyperParams::default(),
        bo: BoConfig {
            maxiter: 20,
            seed,
            ..BoConfig::default()
        },
        train_seed: seed,
    };
    let (space, tuned) = tune_network(&ds, &settings, |_| {}).map_err(|e| e.to_string())?;
    let best = settings
        .base
        .with_theta(&space, &tuned.best_theta)
        .map_err(|e| e.to_string())?;
    let model = train_on_dataset(&ds, Architecture::Ann, &best, seed).map_err(|e| e.to_string())?;
    artifacts.push((
        "model.json".to_string(),
        model.to_json().map_err(|e| e.to_string())?.into_bytes(),
    ));

    let held: Vec<(String, _)> = ds
        .instances
        .iter()
        .enumerate()
        .filter(|(_, r)| r.split == Some(Split::Validation))
        .map(|(i, r)| {
            let p = r.demand_profile(plan.horizon, plan.num_centers, plan.daily_cap);
            p.map(|p| (format!("row{i:03}"), p))
                .map_err(|e| e.to_string())
        })
        .collect::<Result<_, _>>()?;
    let opts = PipelineOptions {
        k_prob: 0.01,
        mode: ReductionMode::Reduce,
        compare_full: true,
    };
    let reports =
        pipeline_batch(&model, &held, &cfg, &exact(), &opts).map_err(|e| e.to_string())?;
    let names = cfg.facility_names();
    for r in &reports {
        artifacts.push((
            format!("{}.txt", r.instance),
            r.to_text(&names).into_bytes(),
        ));
    }
    artifacts.push((
        "summary.csv".to_string(),
        summary_table(&reports).into_bytes(),
    ));
    Ok(PipelineRun {
        artifacts,
        summary: BatchSummary::from_reports(&reports),
        tuned_accuracy: tuned.best_value,
    })
}

fn c10_pipeline(run: &PipelineRun, elapsed: Duration) -> Outcome {
    let s = &run.summary;
    let detail = format!(
        "{}/{} held-out instances optimal or correctly skipped ({:.1}%), outcomes {:?}, {}/{} proceeded with reductions, tuned test accuracy {:.3}; {:.1}s",
        s.successes,
        s.compared,
        100.0 * s.success_rate(),
        s.outcomes.iter().map(|(o, n)| format!("{}={n}", o.as_str())).collect::<Vec<_>>(),
        s.proceeded_with_reduction,
        s.proceeded,
        run.tuned_accuracy,
        elapsed.as_secs_f64(),
    );
    if s.compared == 0 || s.success_rate() < 0.6 || s.proceeded_with_reduction != s.proceeded {
        return Err(detail);
    }
    if elapsed > Duration::from_secs(45 * 60) {
        return Err(format!("{detail}; over 45 minutes"));
    }
    Ok(detail)
}

fn c11_determinism(first_c3: &Artifacts, first_c10: &Artifacts) -> Outcome {
    let (_, c3) = c3_artifacts(3)?;
    let c10 = desk_pipeline(7)?.artifacts;
    for (a, b) in [(first_c3, &c3), (first_c10, &c10)] {
        if a.len() != b.len() {
            return Err(format!("{} files vs {}", a.len(), b.len()));
        }
        for ((na, da), (nb, db)) in a.iter().zip(b) {
            if na != nb || da != db {
                return Err(format!("{na} differs on rerun"));
            }
        }
    }
    Ok(format!(
        "{} criterion-3 and {} criterion-10 files byte-identical",
        c3.len(),
        c10.len()
    ))
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |n: u32, name: &str, r: Outcome| match r {
        Ok(d) => println!("PASS criterion {n:>2} {name}: {d}"),
        Err(d) => {
            failures += 1;
            println!("FAIL criterion {n:>2} {name}: {d}");
        }
    };
    report(1, "solver oracle equivalence", c1_milp_oracle());
    report(2, "LP oracle equivalence", c2_lp_oracle());

    let instances = c3_instances(3);
    let oracle_rows = c3_oracle(&instances);
    report(3, "label oracle fidelity", c3_labels(&oracle_rows));
    report(
        4,
        "identity reduction",
        c4_identity(&instances, &oracle_rows),
    );
    report(
        5,
        "superset soundness",
        c5_supersets(&instances, &oracle_rows),
    );
    report(6, "gradient fidelity", c6_gradients());
    report(7, "metrics fixture", c7_metrics());
    report(8, "threshold monotonicity", c8_monotonicity());
    report(9, "BO convergence", c9_bo());

    let start = Instant::now();
    let run = desk_pipeline(7);
    let elapsed = start.elapsed();
    let c3_first = c3_artifacts(3).map(|(_, a)| a);
    match (&run, &c3_first) {
        (Ok(run), Ok(c3)) => {
            report(10, "end-to-end desk pipeline", c10_pipeline(run, elapsed));
            report(11, "determinism", c11_determinism(c3, &run.artifacts));
        }
        (Err(e), _) => {
            report(10, "end-to-end desk pipeline", Err(e.clone()));
            report(11, "determinism", Err(format!("pipeline failed: {e}")));
        }
        (_, Err(e)) => {
            report(
                10,
                "end-to-end desk pipeline",
                run.as_ref()
                    .map_err(|e| e.clone())
                    .and_then(|r| c10_pipeline(r, elapsed)),
            );
            report(11, "determinism", Err(e.clone()));
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
