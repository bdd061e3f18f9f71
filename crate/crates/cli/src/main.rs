mod config;

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mipred::datagen::{
    generate_instance_set, label_instances, load_dataset, save_dataset, split_dataset,
    LabeledDataset, Split,
};
use mipred::hpo::{history_header, history_row, split_arrays, train_on_dataset, tune_network};
use mipred::metrics::{evaluate, mlcm_confusion, MetricsReport};
use mipred::neural::{NeuralError, TrainedModel};
use mipred::reducer::{
    pipeline_batch, summary_table, timings_table, BatchSummary, ReductionReport,
};
use mipred::supply::DemandProfile;

use config::{BestParams, RunConfig};

#[derive(Parser)]
#[command(
    name = "mipred",
    version,
    about = "Learned facility reduction for supply-chain MILPs"
)]
struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// ann or cnn
    #[arg(long, global = true)]
    architecture: Option<String>,
    /// desk, benchmark, or a parameter file
    #[arg(long, global = true)]
    params: Option<String>,
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    #[arg(long, global = true)]
    reports: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate, label and split the instance set.
    GenData,
    /// Bayesian optimisation of the network hyperparameters.
    Tune {
        #[arg(long)]
        maxiter: Option<usize>,
    },
    /// Train a network and report test-split metrics.
    Train {
        /// Use the hyperparameters written by `tune` instead of [train].
        #[arg(long)]
        tuned: bool,
    },
    /// Evaluate the saved model on a split.
    Evaluate {
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Reduce and solve instances.
    Solve(SolveArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Demand files (`p,c,t` rows).
    instances: Vec<PathBuf>,
    /// Solve every dataset row of this split instead.
    #[arg(long, conflicts_with = "instances")]
    split: Option<String>,
    #[arg(long)]
    k_prob: Option<f64>,
    /// reduce or fix
    #[arg(long)]
    mode: Option<String>,
    /// Also solve the full model and classify the outcome.
    #[arg(long)]
    compare_full: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mipred: {e:#}");
            let diverged = e
                .chain()
                .any(|c| matches!(c.downcast_ref(), Some(NeuralError::Diverged { .. })));
            ExitCode::from(if diverged { 3 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(a) = cli.architecture {
        cfg.architecture = a;
    }
    if let Some(p) = cli.params {
        cfg.paths.params = p;
    }
    if let Some(p) = cli.dataset {
        cfg.paths.dataset = p;
    }
    if let Some(p) = cli.model {
        cfg.paths.model = p;
    }
    if let Some(p) = cli.reports {
        cfg.paths.reports = p;
    }
    match cli.command {
        Command::GenData => gen_data(&cfg),
        Command::Tune { maxiter } => {
            if let Some(m) = maxiter {
                cfg.tune.maxiter = m;
            }
            tune(&cfg)
        }
        Command::Train { tuned } => train(&cfg, tuned),
        Command::Evaluate { split } => evaluate_split(&cfg, parse_split(&split)?),
        Command::Solve(args) => {
            if let Some(k) = args.k_prob {
                cfg.solve.k_prob = k;
            }
            if let Some(m) = args.mode {
                cfg.solve.mode = m;
            }
            cfg.solve.compare_full |= args.compare_full;
            let split = args.split.as_deref().map(parse_split).transpose()?;
            solve(&cfg, &args.instances, split)
        }
    }
}

fn parse_split(s: &str) -> Result<Split> {
    match Split::parse(s) {
        Some(v) => Ok(v),
        None => bail!("unknown split {s:?} (train, test or validation)"),
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    create_parent(path)?;
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn load_data(cfg: &RunConfig) -> Result<LabeledDataset> {
    load_dataset(&cfg.paths.dataset)
        .with_context(|| format!("loading dataset {}", cfg.paths.dataset.display()))
}

fn label_distribution(ds: &LabeledDataset) -> String {
    let mut out = String::from("label");
    for s in Split::ALL {
        let _ = write!(out, ",{}", s.as_str());
    }
    out.push_str(",total\n");
    let per: Vec<Vec<usize>> = Split::ALL
        .iter()
        .map(|&s| ds.label_counts(ds.subset(s)))
        .collect();
    let total = ds.label_counts(&ds.instances);
    for (k, name) in ds.label_names.iter().enumerate() {
        out.push_str(name);
        for counts in &per {
            let _ = write!(out, ",{}", counts[k]);
        }
        let _ = writeln!(out, ",{}", total[k]);
    }
    let _ = write!(out, "instances");
    for s in Split::ALL {
        let _ = write!(out, ",{}", ds.indices(s).len());
    }
    let _ = writeln!(out, ",{}", ds.instances.len());
    out
}

fn gen_data(cfg: &RunConfig) -> Result<()> {
    let supply = cfg.supply()?;
    let plan = cfg.plan(&supply);
    let generated = generate_instance_set(&plan).context("gen-data: generation")?;
    let ds = label_instances(&generated, &supply, &cfg.solver).context("gen-data: labelling")?;
    for u in &ds.unresolved {
        eprintln!(
            "excluded level {} {} replicate {}: {:?}",
            u.level,
            u.distribution.as_str(),
            u.replicate,
            u.status
        );
    }
    let ds = split_dataset(ds, cfg.generation.split, cfg.seed).context("gen-data: splitting")?;
    create_parent(&cfg.paths.dataset)?;
    save_dataset(&ds, &cfg.paths.dataset).context("gen-data: writing dataset")?;
    println!(
        "wrote {} instances to {}",
        ds.instances.len(),
        cfg.paths.dataset.display()
    );
    print!("{}", label_distribution(&ds));
    Ok(())
}

fn tune(cfg: &RunConfig) -> Result<()> {
    let ds = load_data(cfg)?;
    let settings = cfg.tune_settings()?;
    let space = settings.architecture.space(settings.epochs);
    let history = &cfg.paths.history;
    create_parent(history)?;
    let mut file =
        File::create(history).with_context(|| format!("creating {}", history.display()))?;
    writeln!(file, "{}", history_header(&space))?;
    let mut io_error = None;
    let (space, result) = tune_network(&ds, &settings, |e| {
        let line = history_row(e);
        if let Err(err) = writeln!(file, "{line}").and_then(|_| file.flush()) {
            io_error.get_or_insert(err);
        }
        println!("{line}");
    })
    .context("tune")?;
    if let Some(e) = io_error {
        return Err(e).with_context(|| format!("writing {}", history.display()));
    }
    let params = settings
        .base
        .with_theta(&space, &result.best_theta)
        .context("tune")?;
    let best = BestParams {
        architecture: settings.architecture.as_str().into(),
        accuracy: result.best_value,
        iteration: result.best_iteration,
        params,
    };
    write_file(&cfg.paths.best, toml::to_string(&best)?)?;
    println!(
        "best accuracy {:.4} at iteration {}; parameters in {}",
        best.accuracy,
        best.iteration,
        cfg.paths.best.display()
    );
    Ok(())
}

fn metric_block(report: &MetricsReport) -> String {
    format!("{}\n{}", report.summary(), report.label_table())
}

fn split_metrics(
    ds: &LabeledDataset,
    model: &TrainedModel,
    split: Split,
) -> Result<(Vec<Vec<u8>>, Vec<Vec<u8>>, MetricsReport)> {
    let (x, y) = split_arrays(ds, split);
    if x.is_empty() {
        bail!("the {} split is empty", split.as_str());
    }
    let pred = model.predict_labels(&x)?;
    let report = evaluate(&y, &pred, &ds.label_names)?;
    Ok((y, pred, report))
}

fn train(cfg: &RunConfig, tuned: bool) -> Result<()> {
    let ds = load_data(cfg)?;
    let (arch, params) = if tuned {
        let path = &cfg.paths.best;
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let best: BestParams =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let Some(arch) = mipred::hpo::Architecture::parse(&best.architecture) else {
            bail!(
                "unknown architecture {:?} in {}",
                best.architecture,
                path.display()
            );
        };
        (arch, best.params)
    } else {
        (cfg.architecture()?, cfg.train.clone())
    };
    let model = train_on_dataset(&ds, arch, &params, cfg.seed).context("train")?;
    create_parent(&cfg.paths.model)?;
    model
        .save(&cfg.paths.model)
        .with_context(|| format!("writing {}", cfg.paths.model.display()))?;
    println!(
        "trained {} for {} epochs, final loss {:.6}; model in {}",
        arch.as_str(),
        params.epochs,
        model.loss_log.last().copied().unwrap_or(f64::NAN),
        cfg.paths.model.display()
    );
    let (_, _, report) = split_metrics(&ds, &model, Split::Test).context("train: test metrics")?;
    print!("{}", metric_block(&report));
    Ok(())
}

fn evaluate_split(cfg: &RunConfig, split: Split) -> Result<()> {
    let ds = load_data(cfg)?;
    let model = TrainedModel::load(&cfg.paths.model)
        .with_context(|| format!("loading model {}", cfg.paths.model.display()))?;
    let (y, pred, report) = split_metrics(&ds, &model, split).context("evaluate")?;
    let mlcm = mlcm_confusion(&y, &pred, &ds.label_names).context("evaluate")?;
    let dir = &cfg.paths.reports;
    let name = split.as_str();
    write_file(&dir.join(format!("metrics_{name}.txt")), report.summary())?;
    write_file(
        &dir.join(format!("labels_{name}.csv")),
        report.label_table(),
    )?;
    write_file(&dir.join(format!("mlcm_{name}.csv")), mlcm.to_table(false))?;
    write_file(
        &dir.join(format!("mlcm_{name}_normalized.csv")),
        mlcm.to_table(true),
    )?;
    print!("{}", metric_block(&report));
    print!("{}", mlcm.to_table(true));
    Ok(())
}

fn solve(cfg: &RunConfig, files: &[PathBuf], split: Option<Split>) -> Result<()> {
    let supply = cfg.supply()?;
    let opts = cfg.pipeline()?;
    let model = TrainedModel::load(&cfg.paths.model)
        .with_context(|| format!("loading model {}", cfg.paths.model.display()))?;
    let instances: Vec<(String, DemandProfile)> = match split {
        Some(split) => {
            let ds = load_data(cfg)?;
            let plan = cfg.plan(&supply);
            ds.instances
                .iter()
                .enumerate()
                .filter(|(_, r)| r.split == Some(split))
                .map(|(i, r)| {
                    r.demand_profile(plan.horizon, plan.num_centers, plan.daily_cap)
                        .map(|p| (format!("row{i:03}"), p))
                        .with_context(|| format!("solve: regenerating dataset row {i}"))
                })
                .collect::<Result<_>>()?
        }
        None => {
            if files.is_empty() {
                bail!("solve: give demand files or --split");
            }
            files
                .iter()
                .map(|f| {
                    let name = f
                        .file_stem()
                        .map_or_else(|| "instance".into(), |s| s.to_string_lossy().into_owned());
                    DemandProfile::load(f)
                        .map(|p| (name, p))
                        .with_context(|| format!("solve: reading {}", f.display()))
                })
                .collect::<Result<_>>()?
        }
    };
    let reports =
        pipeline_batch(&model, &instances, &supply, &cfg.solver, &opts).context("solve")?;
    write_reports(cfg, &reports, &supply.facility_names())?;
    print!("{}", summary_table(&reports));
    if opts.compare_full {
        let s = BatchSummary::from_reports(&reports);
        println!(
            "success {}/{} ({:.1}%), proceeded {}, with reduction {}",
            s.successes,
            s.compared,
            100.0 * s.success_rate(),
            s.proceeded,
            s.proceeded_with_reduction
        );
    }
    Ok(())
}

fn write_reports(cfg: &RunConfig, reports: &[ReductionReport], names: &[String]) -> Result<()> {
    let dir = &cfg.paths.reports;
    for r in reports {
        write_file(&dir.join(format!("{}.txt", r.instance)), r.to_text(names))?;
    }
    write_file(&dir.join("summary.csv"), summary_table(reports))?;
    write_file(&dir.join("timings.csv"), timings_table(reports))?;
    Ok(())
}
