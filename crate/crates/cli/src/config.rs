use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mipred::datagen::{spread_levels, Distribution, GenerationPlan};
use mipred::hpo::{Architecture, BoConfig, HyperParams, TuneSettings};
use mipred::milp::SolverConfig;
use mipred::reducer::{PipelineOptions, ReductionMode};
use mipred::supply::SupplyChainConfig;
use serde::{Deserialize, Serialize};

/// One file drives every command. Relative paths resolve against the
/// directory holding the configuration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_architecture")]
    pub architecture: String,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub generation: Generation,
    #[serde(default = "exact_solver")]
    pub solver: SolverConfig,
    #[serde(default)]
    pub train: HyperParams,
    #[serde(default)]
    pub tune: Tune,
    #[serde(default)]
    pub solve: Solve,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// `desk`, `benchmark`, or a parameter file.
    pub params: String,
    pub dataset: PathBuf,
    pub model: PathBuf,
    pub reports: PathBuf,
    pub history: PathBuf,
    pub best: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Generation {
    pub min_patients: usize,
    pub max_patients: usize,
    pub levels: usize,
    pub replicates: usize,
    pub distributions: Vec<Distribution>,
    /// Defaults to the parameter file's horizon, centers and daily cap.
    pub horizon: Option<usize>,
    pub num_centers: Option<usize>,
    pub daily_cap: Option<usize>,
    /// Train, test and validation fractions.
    pub split: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tune {
    pub maxiter: usize,
    pub init_points: usize,
    pub kappa: f64,
    pub noise: f64,
    pub epochs: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Solve {
    pub k_prob: f64,
    pub mode: String,
    pub compare_full: bool,
}

fn default_seed() -> u64 {
    7
}

fn default_architecture() -> String {
    "ann".into()
}

fn exact_solver() -> SolverConfig {
    SolverConfig {
        mipgap: 0.0,
        ..SolverConfig::default()
    }
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            params: "desk".into(),
            dataset: "dataset.csv".into(),
            model: "model.json".into(),
            reports: "reports".into(),
            history: "tuning_history.csv".into(),
            best: "best_params.toml".into(),
        }
    }
}

impl Default for Generation {
    fn default() -> Self {
        Self {
            min_patients: 2,
            max_patients: 6,
            levels: 10,
            replicates: 5,
            distributions: Distribution::ALL.to_vec(),
            horizon: None,
            num_centers: None,
            daily_cap: None,
            split: [0.8, 0.1, 0.1],
        }
    }
}

impl Default for Tune {
    fn default() -> Self {
        let bo = BoConfig::default();
        Self {
            maxiter: bo.maxiter,
            init_points: bo.init_points,
            kappa: bo.kappa,
            noise: bo.noise,
            epochs: [100.0, 2000.0],
        }
    }
}

impl Default for Solve {
    fn default() -> Self {
        Self {
            k_prob: 0.5,
            mode: "reduce".into(),
            compare_full: false,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            architecture: default_architecture(),
            paths: Paths::default(),
            generation: Generation::default(),
            solver: exact_solver(),
            train: HyperParams::default(),
            tune: Tune::default(),
            solve: Solve::default(),
        }
    }
}

impl RunConfig {
    /// Reads `path`, or returns defaults rooted at the working directory.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let p = &mut cfg.paths;
        for f in [
            &mut p.dataset,
            &mut p.model,
            &mut p.reports,
            &mut p.history,
            &mut p.best,
        ] {
            if f.is_relative() {
                *f = base.join(&*f);
            }
        }
        if !matches!(p.params.as_str(), "desk" | "benchmark") && Path::new(&p.params).is_relative()
        {
            p.params = base.join(&p.params).display().to_string();
        }
        Ok(cfg)
    }

    pub fn supply(&self) -> Result<SupplyChainConfig> {
        Ok(match self.paths.params.as_str() {
            "desk" => SupplyChainConfig::desk(),
            "benchmark" => SupplyChainConfig::benchmark(),
            path => SupplyChainConfig::load(path)
                .with_context(|| format!("loading parameters {path}"))?,
        })
    }

    pub fn architecture(&self) -> Result<Architecture> {
        match Architecture::parse(&self.architecture) {
            Some(a) => Ok(a),
            None => bail!("unknown architecture {:?} (ann or cnn)", self.architecture),
        }
    }

    pub fn plan(&self, supply: &SupplyChainConfig) -> GenerationPlan {
        let g = &self.generation;
        GenerationPlan {
            levels: spread_levels(g.min_patients, g.max_patients, g.levels),
            distributions: g.distributions.clone(),
            replicates: g.replicates,
            horizon: g.horizon.unwrap_or(supply.horizon),
            num_centers: g.num_centers.unwrap_or(supply.num_centers()),
            daily_cap: g.daily_cap.unwrap_or(supply.center_daily_cap),
            seed: self.seed,
        }
    }

    pub fn tune_settings(&self) -> Result<TuneSettings> {
        let t = &self.tune;
        Ok(TuneSettings {
            architecture: self.architecture()?,
            epochs: (t.epochs[0], t.epochs[1]),
            base: self.train.clone(),
            bo: BoConfig {
                init_points: t.init_points,
                maxiter: t.maxiter,
                kappa: t.kappa,
                noise: t.noise,
                seed: self.seed,
            },
            train_seed: self.seed,
        })
    }

    pub fn pipeline(&self) -> Result<PipelineOptions> {
        let s = &self.solve;
        let Some(mode) = ReductionMode::parse(&s.mode) else {
            bail!("unknown mode {:?} (reduce or fix)", s.mode);
        };
        Ok(PipelineOptions {
            k_prob: s.k_prob,
            mode,
            compare_full: s.compare_full,
        })
    }
}

/// Tuned hyperparameters with the accuracy that selected them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BestParams {
    pub architecture: String,
    pub accuracy: f64,
    pub iteration: usize,
    pub params: HyperParams,
}
