use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sample_demand_profile, DatagenError, Distribution, GeneratedInstance, FEATURE_DAYS};
use crate::milp::{solve_milp, MilpStatus, SolverConfig};
use crate::supply::{build_model, DemandProfile, SupplyChainConfig};

pub const DATASET_VERSION: &str = "mipred-dataset v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    Validation,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Test, Split::Validation];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Validation => "validation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledInstance {
    /// Total check-ins per day, zero-padded to the feature width.
    pub features: Vec<f64>,
    /// One entry per facility, then `infeasible`.
    pub labels: Vec<u8>,
    pub objective: Option<f64>,
    pub status: MilpStatus,
    pub level: usize,
    pub distribution: Distribution,
    pub replicate: usize,
    pub seed: u64,
    pub split: Option<Split>,
}

impl LabeledInstance {
    pub fn is_infeasible(&self) -> bool {
        self.labels.last() == Some(&1)
    }

    /// Facilities labelled active.
    /// Rebuilds the demand profile this row was generated from.
    pub fn demand_profile(
        &self,
        horizon: usize,
        num_centers: usize,
        daily_cap: usize,
    ) -> Result<DemandProfile, DatagenError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        sample_demand_profile(
            self.level,
            self.distribution,
            horizon,
            num_centers,
            daily_cap,
            &mut rng,
        )
    }

    pub fn facility_set(&self) -> Vec<usize> {
        let m = self.labels.len() - 1;
        (0..m).filter(|&i| self.labels[i] == 1).collect()
    }
}

/// Input scaling. Features are divided by a fixed physical bound (daily cap
/// times centers); the training-split statistics are kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaling {
    pub divisor: f64,
    pub train_max: f64,
    pub train_mean: f64,
}

/// An instance the solver could not settle within its limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unresolved {
    pub level: usize,
    pub distribution: Distribution,
    pub replicate: usize,
    pub seed: u64,
    pub status: MilpStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub label_names: Vec<String>,
    pub instances: Vec<LabeledInstance>,
    pub scaling: FeatureScaling,
    /// Excluded instances; not persisted.
    #[serde(skip)]
    pub unresolved: Vec<Unresolved>,
}

impl LabeledDataset {
    pub fn num_labels(&self) -> usize {
        self.label_names.len()
    }

    pub fn feature_width(&self) -> usize {
        self.instances
            .first()
            .map_or(FEATURE_DAYS, |i| i.features.len())
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.instances.len())
            .filter(|&i| self.instances[i].split == Some(split))
            .collect()
    }

    pub fn subset(&self, split: Split) -> Vec<&LabeledInstance> {
        self.instances
            .iter()
            .filter(|i| i.split == Some(split))
            .collect()
    }

    /// Positive count per label over `instances`.
    pub fn label_counts<'a>(
        &self,
        instances: impl IntoIterator<Item = &'a LabeledInstance>,
    ) -> Vec<usize> {
        let mut out = vec![0; self.num_labels()];
        for inst in instances {
            for (k, &y) in inst.labels.iter().enumerate() {
                out[k] += y as usize;
            }
        }
        out
    }
}

/// Solves every instance exactly (in parallel, results kept in input
/// order) and labels it with the optimal establishment vector or the
/// infeasible flag. Instances stopped by a node or time limit are left out
/// and listed in `unresolved`.
pub fn label_instances(
    instances: &[GeneratedInstance],
    config: &SupplyChainConfig,
    solver: &SolverConfig,
) -> Result<LabeledDataset, DatagenError> {
    let nm = config.num_facilities();
    let all: Vec<usize> = (0..nm).collect();
    let results: Vec<Result<Result<LabeledInstance, Unresolved>, DatagenError>> = instances
        .par_iter()
        .map(|gi| {
            let wrap = |e: DatagenError| DatagenError::Instance {
                level: gi.level,
                distribution: gi.distribution,
                replicate: gi.replicate,
                source: Box::new(e),
            };
            let features = gi
                .profile
                .daily_totals(FEATURE_DAYS)
                .map_err(|e| wrap(e.into()))?;
            let built = build_model(config, &gi.profile, &all).map_err(|e| wrap(e.into()))?;
            let sol = solve_milp(&built.problem, solver)
                .map_err(|e| wrap(DatagenError::Supply(e.into())))?;
            let mut labels = vec![0u8; nm + 1];
            let objective = match sol.status {
                MilpStatus::Optimal => {
                    let values = sol.values.as_ref().expect("optimal carries values");
                    for (&m, &v) in &built.e1 {
                        labels[m] = u8::from(values[v.0] > 0.5);
                    }
                    sol.objective
                }
                MilpStatus::Infeasible => {
                    labels[nm] = 1;
                    None
                }
                status @ (MilpStatus::GapLimit | MilpStatus::NodeLimit) => {
                    log::warn!(
                        "instance level {} {} replicate {} unresolved ({}); excluded",
                        gi.level,
                        gi.distribution,
                        gi.replicate,
                        status.as_str()
                    );
                    return Ok(Err(Unresolved {
                        level: gi.level,
                        distribution: gi.distribution,
                        replicate: gi.replicate,
                        seed: gi.seed,
                        status,
                    }));
                }
            };
            Ok(Ok(LabeledInstance {
                features,
                labels,
                objective,
                status: sol.status,
                level: gi.level,
                distribution: gi.distribution,
                replicate: gi.replicate,
                seed: gi.seed,
                split: None,
            }))
        })
        .collect();

    let mut labelled = Vec::new();
    let mut unresolved = Vec::new();
    for r in results {
        match r? {
            Ok(i) => labelled.push(i),
            Err(u) => unresolved.push(u),
        }
    }
    let mut label_names = config.facility_names();
    label_names.push("infeasible".into());
    let divisor = (config.center_daily_cap * config.num_centers()) as f64;
    Ok(LabeledDataset {
        label_names,
        instances: labelled,
        scaling: FeatureScaling {
            divisor,
            train_max: 0.0,
            train_mean: 0.0,
        },
        unresolved,
    })
}

/// Random train/test/validation assignment. `fractions` are in that order
/// and must sum to 1; counts are rounded and validation takes the rest.
pub fn split_dataset(
    mut dataset: LabeledDataset,
    fractions: [f64; 3],
    seed: u64,
) -> Result<LabeledDataset, DatagenError> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f))
        || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(DatagenError::Split(format!(
            "fractions {fractions:?} must lie in [0, 1] and sum to 1"
        )));
    }
    let n = dataset.instances.len();
    let n_train = (fractions[0] * n as f64).round() as usize;
    let n_test = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    if n_train == 0 {
        return Err(DatagenError::Split(format!(
            "no training instances out of {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for (rank, &i) in order.iter().enumerate() {
        dataset.instances[i].split = Some(if rank < n_train {
            Split::Train
        } else if rank < n_train + n_test {
            Split::Test
        } else {
            Split::Validation
        });
    }
    let train = dataset.subset(Split::Train);
    let values: Vec<f64> = train
        .iter()
        .flat_map(|i| i.features.iter().copied())
        .collect();
    let train_max = values.iter().copied().fold(0.0, f64::max);
    let train_mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
    dataset.scaling.train_max = train_max;
    dataset.scaling.train_mean = train_mean;
    for s in Split::ALL {
        let counts = dataset.label_counts(dataset.subset(s));
        log::info!(
            "{} split: {} instances, label positives {:?}",
            s.as_str(),
            dataset.indices(s).len(),
            counts
        );
    }
    Ok(dataset)
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn write_dataset(dataset: &LabeledDataset, w: impl Write) -> Result<(), DatagenError> {
    let mut w = std::io::BufWriter::new(w);
    writeln!(w, "# {DATASET_VERSION}")?;
    writeln!(
        w,
        "# divisor={} train_max={} train_mean={}",
        fmt_f64(dataset.scaling.divisor),
        fmt_f64(dataset.scaling.train_max),
        fmt_f64(dataset.scaling.train_mean)
    )?;
    let width = dataset.feature_width();
    let mut csv = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (1..=width).map(|d| format!("day_{d}")).collect();
    header.extend(dataset.label_names.iter().cloned());
    header.extend(
        [
            "objective",
            "status",
            "level",
            "distribution",
            "replicate",
            "seed",
            "split",
        ]
        .map(String::from),
    );
    csv.write_record(&header).map_err(csv_io)?;
    for inst in &dataset.instances {
        let mut row: Vec<String> = inst.features.iter().map(|&v| fmt_f64(v)).collect();
        row.extend(inst.labels.iter().map(|y| y.to_string()));
        row.push(inst.objective.map(fmt_f64).unwrap_or_default());
        row.push(inst.status.as_str().into());
        row.push(inst.level.to_string());
        row.push(inst.distribution.as_str().into());
        row.push(inst.replicate.to_string());
        row.push(inst.seed.to_string());
        row.push(
            inst.split
                .map(|s| s.as_str().to_string())
                .unwrap_or_default(),
        );
        csv.write_record(&row).map_err(csv_io)?;
    }
    csv.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> DatagenError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DatagenError::Io(io),
        other => DatagenError::Malformed {
            line,
            message: format!("{other:?}"),
        },
    }
}

pub fn save_dataset(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<(), DatagenError> {
    let file = std::fs::File::create(path)?;
    write_dataset(dataset, file)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset, DatagenError> {
    read_dataset(std::fs::File::open(path)?)
}

pub fn read_dataset(r: impl Read) -> Result<LabeledDataset, DatagenError> {
    let mut reader = BufReader::new(r);
    let mut version = String::new();
    reader.read_line(&mut version)?;
    let version = version.trim().trim_start_matches('#').trim();
    if version != DATASET_VERSION {
        return Err(DatagenError::Version {
            expected: DATASET_VERSION.into(),
            found: version.into(),
        });
    }
    let mut meta = String::new();
    reader.read_line(&mut meta)?;
    let malformed = |line: usize, message: String| DatagenError::Malformed { line, message };
    let mut scaling = FeatureScaling {
        divisor: 0.0,
        train_max: 0.0,
        train_mean: 0.0,
    };
    for kv in meta.trim().trim_start_matches('#').split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| malformed(2, format!("bad metadata entry {kv}")))?;
        let v: f64 = v
            .parse()
            .map_err(|_| malformed(2, format!("bad number in {kv}")))?;
        match k {
            "divisor" => scaling.divisor = v,
            "train_max" => scaling.train_max = v,
            "train_mean" => scaling.train_mean = v,
            _ => return Err(malformed(2, format!("unknown metadata key {k}"))),
        }
    }

    // Line numbers below are offset by the two metadata lines.
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = csv.headers().map_err(csv_io)?.clone();
    let width = header.iter().take_while(|h| h.starts_with("day_")).count();
    let tail = [
        "objective",
        "status",
        "level",
        "distribution",
        "replicate",
        "seed",
        "split",
    ];
    if header.len() < width + tail.len() + 1
        || header.iter().skip(header.len() - tail.len()).ne(tail)
    {
        return Err(malformed(3, "unexpected header".into()));
    }
    let label_names: Vec<String> = header
        .iter()
        .skip(width)
        .take(header.len() - width - tail.len())
        .map(String::from)
        .collect();
    let nl = label_names.len();

    let mut instances = Vec::new();
    for rec in csv.records() {
        let rec = rec.map_err(|e| match csv_io(e) {
            DatagenError::Malformed { line, message } => DatagenError::Malformed {
                line: line + 2,
                message,
            },
            other => other,
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize) + 2;
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| malformed(line, format!("bad number {s:?}")))
        };
        let int = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| malformed(line, format!("bad integer {s:?}")))
        };
        let features = rec
            .iter()
            .take(width)
            .map(num)
            .collect::<Result<Vec<_>, _>>()?;
        let labels = rec
            .iter()
            .skip(width)
            .take(nl)
            .map(|s| match s {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                _ => Err(malformed(line, format!("label {s:?} is not 0/1"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let f = |k: usize| &rec[width + nl + k];
        let objective = if f(0).is_empty() {
            None
        } else {
            Some(num(f(0))?)
        };
        let status = match f(1) {
            "optimal" => MilpStatus::Optimal,
            "infeasible" => MilpStatus::Infeasible,
            s => return Err(malformed(line, format!("unknown status {s:?}"))),
        };
        let distribution = Distribution::parse(f(3))
            .ok_or_else(|| malformed(line, format!("unknown distribution {:?}", f(3))))?;
        let split = if f(6).is_empty() {
            None
        } else {
            Some(
                Split::parse(f(6))
                    .ok_or_else(|| malformed(line, format!("unknown split {:?}", f(6))))?,
            )
        };
        instances.push(LabeledInstance {
            features,
            labels,
            objective,
            status,
            level: int(f(2))? as usize,
            distribution,
            replicate: int(f(4))? as usize,
            seed: int(f(5))?,
            split,
        });
    }
    Ok(LabeledDataset {
        label_names,
        instances,
        scaling,
        unresolved: Vec::new(),
    })
}
