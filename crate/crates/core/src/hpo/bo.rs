use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gp::{gp_fit, GpModel};
use super::sobol::{sobol_points, Sobol};
use super::HpoError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log10,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Real,
    Integer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperDim {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
    pub kind: Kind,
}

impl HyperDim {
    pub fn new(name: &str, lower: f64, upper: f64, scale: Scale, kind: Kind) -> Self {
        Self {
            name: name.into(),
            lower,
            upper,
            scale,
            kind,
        }
    }

    fn warp(&self, v: f64) -> f64 {
        match self.scale {
            Scale::Linear => v,
            Scale::Log10 => v.log10(),
        }
    }

    fn unwarp(&self, v: f64) -> f64 {
        match self.scale {
            Scale::Linear => v,
            Scale::Log10 => 10f64.powf(v),
        }
    }

    /// Unit coordinate to a value inside the bounds, rounded for integers.
    pub fn from_unit(&self, u: f64) -> f64 {
        let (lo, hi) = (self.warp(self.lower), self.warp(self.upper));
        let v = self
            .unwarp(lo + u.clamp(0.0, 1.0) * (hi - lo))
            .clamp(self.lower, self.upper);
        match self.kind {
            Kind::Real => v,
            Kind::Integer => v.round().clamp(self.lower.ceil(), self.upper.floor()),
        }
    }

    pub fn to_unit(&self, v: f64) -> f64 {
        let (lo, hi) = (self.warp(self.lower), self.warp(self.upper));
        ((self.warp(v) - lo) / (hi - lo)).clamp(0.0, 1.0)
    }
}

/// Search box for the hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSpace {
    pub dims: Vec<HyperDim>,
}

impl HyperSpace {
    pub fn validate(&self) -> Result<(), HpoError> {
        if self.dims.is_empty() {
            return Err(HpoError::Space("no dimensions".into()));
        }
        for d in &self.dims {
            let ok = d.lower.is_finite()
                && d.upper.is_finite()
                && d.lower < d.upper
                && (d.scale == Scale::Linear || d.lower > 0.0)
                && (d.kind == Kind::Real || d.lower.ceil() <= d.upper.floor());
            if !ok {
                return Err(HpoError::Space(format!("bad bounds for {}", d.name)));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        self.dims
            .iter()
            .zip(u)
            .map(|(d, &x)| d.from_unit(x))
            .collect()
    }

    pub fn to_unit(&self, theta: &[f64]) -> Vec<f64> {
        self.dims
            .iter()
            .zip(theta)
            .map(|(d, &x)| d.to_unit(x))
            .collect()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dims.len()
            && self.dims.iter().zip(theta).all(|(d, &v)| {
                v >= d.lower && v <= d.upper && (d.kind == Kind::Real || v.fract() == 0.0)
            })
    }

    pub fn names(&self) -> Vec<String> {
        self.dims.iter().map(|d| d.name.clone()).collect()
    }

    /// Feed-forward search space: hidden layers, neurons, learning rate and
    /// epochs in `[epochs.0, epochs.1]`.
    pub fn ann(epochs: (f64, f64)) -> Self {
        Self {
            dims: vec![
                HyperDim::new("hidden_layers", 1.0, 3.0, Scale::Linear, Kind::Integer),
                HyperDim::new("neurons", 50.0, 256.0, Scale::Linear, Kind::Integer),
                HyperDim::new("learning_rate", 1e-5, 1e-1, Scale::Log10, Kind::Real),
                HyperDim::new("epochs", epochs.0, epochs.1, Scale::Linear, Kind::Integer),
            ],
        }
    }

    /// Convolutional search space; the architecture itself is fixed.
    pub fn cnn(epochs: (f64, f64)) -> Self {
        Self {
            dims: vec![
                HyperDim::new("learning_rate", 1e-5, 1e-1, Scale::Log10, Kind::Real),
                HyperDim::new("epochs", epochs.0, epochs.1, Scale::Linear, Kind::Integer),
                HyperDim::new("dropout1", 0.0, 0.3, Scale::Linear, Kind::Real),
                HyperDim::new("dropout2", 0.0, 0.3, Scale::Linear, Kind::Real),
            ],
        }
    }

    /// Value of the named dimension in `theta`.
    pub fn get(&self, theta: &[f64], name: &str) -> Option<f64> {
        self.dims
            .iter()
            .position(|d| d.name == name)
            .map(|i| theta[i])
    }
}

const SCAN_POINTS: usize = 1024;
const LOCAL_STARTS: usize = 5;

fn ucb(model: &GpModel, x: &[f64], kappa: f64) -> f64 {
    let (m, s) = model.posterior(x);
    m + kappa * s
}

/// Compass search on the unit cube from `start`.
fn local_search(model: &GpModel, start: &[f64], kappa: f64) -> (Vec<f64>, f64) {
    let mut x = start.to_vec();
    let mut fx = ucb(model, &x, kappa);
    let mut step = 0.05;
    while step > 1e-7 {
        let mut moved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] = (y[i] + dir * step).clamp(0.0, 1.0);
                let fy = ucb(model, &y, kappa);
                if fy > fx {
                    x = y;
                    fx = fy;
                    moved = true;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (x, fx)
}

/// Candidate unit points ordered by preference: the best local-search
/// optimum first, then the scan points by decreasing UCB.
fn ranked_candidates(model: &GpModel, dim: usize, kappa: f64) -> Result<Vec<Vec<f64>>, HpoError> {
    let scan = sobol_points(dim, SCAN_POINTS)?;
    let mut scored: Vec<(f64, usize)> = scan
        .iter()
        .enumerate()
        .map(|(i, x)| (ucb(model, x, kappa), i))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut best: Option<(Vec<f64>, f64)> = None;
    for &(_, i) in scored.iter().take(LOCAL_STARTS) {
        let (x, f) = local_search(model, &scan[i], kappa);
        if best.as_ref().map_or(true, |b| f > b.1) {
            best = Some((x, f));
        }
    }
    let mut out = vec![best.expect("scan is nonempty").0];
    out.extend(scored.into_iter().map(|(_, i)| scan[i].clone()));
    Ok(out)
}

/// Maximises `mean + kappa * sd` and returns the point mapped into the
/// space. A point whose rounded value was already evaluated is replaced by
/// its nearest unevaluated integer neighbour, or else by the next scan
/// candidate.
pub fn acquire_ucb(
    model: &GpModel,
    space: &HyperSpace,
    kappa: f64,
    evaluated: &[Vec<f64>],
) -> Result<Vec<f64>, HpoError> {
    let fresh = |t: &Vec<f64>| !evaluated.contains(t);
    let candidates = ranked_candidates(model, space.dim(), kappa)?;
    let first = space.from_unit(&candidates[0]);
    if fresh(&first) {
        return Ok(first);
    }
    let int_dims: Vec<usize> = (0..space.dim())
        .filter(|&i| space.dims[i].kind == Kind::Integer)
        .collect();
    for radius in 1..=3 {
        for &i in &int_dims {
            for dir in [-1.0, 1.0] {
                let mut t = first.clone();
                t[i] += dir * radius as f64;
                if space.contains(&t) && fresh(&t) {
                    return Ok(t);
                }
            }
        }
    }
    for c in &candidates[1..] {
        let t = space.from_unit(c);
        if fresh(&t) {
            return Ok(t);
        }
    }
    Ok(first)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoConfig {
    pub init_points: usize,
    pub maxiter: usize,
    pub kappa: f64,
    /// Observation noise variance of the objective.
    pub noise: f64,
    /// Digital shift of the initial design; 0 leaves it unshifted.
    pub seed: u64,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            init_points: 5,
            maxiter: 30,
            kappa: 2.0,
            noise: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// 0-based; the first `init_points` come from the initial design.
    pub iteration: usize,
    pub theta: Vec<f64>,
    pub value: f64,
    /// Error text when the objective failed and the value was recorded as 0.
    pub error: Option<String>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoResult {
    pub best_theta: Vec<f64>,
    pub best_value: f64,
    pub best_iteration: usize,
    pub history: Vec<Evaluation>,
}

fn initial_design(space: &HyperSpace, cfg: &BoConfig) -> Result<Vec<Vec<f64>>, HpoError> {
    let shift: Vec<u32> = if cfg.seed == 0 {
        vec![0; space.dim()]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        (0..space.dim()).map(|_| rng.gen()).collect()
    };
    let mut s = Sobol::new(space.dim())?;
    Ok((0..cfg.init_points)
        .map(|_| {
            let p = s.next_point();
            let u: Vec<f64> = p
                .iter()
                .zip(&shift)
                .map(|(&x, &sh)| (((x * 4294967296.0) as u32) ^ sh) as f64 / 4294967296.0)
                .collect();
            space.from_unit(&u)
        })
        .collect())
}

/// Maximises `objective` with `init_points` Sobol evaluations followed by
/// `maxiter` UCB acquisitions. A failing evaluation scores 0. Ties keep
/// the earlier incumbent. `on_eval` sees each evaluation as it completes.
pub fn bo_run<E: std::fmt::Display>(
    mut objective: impl FnMut(&[f64]) -> Result<f64, E>,
    space: &HyperSpace,
    cfg: &BoConfig,
    mut on_eval: impl FnMut(&Evaluation),
) -> Result<BoResult, HpoError> {
    space.validate()?;
    if cfg.init_points < 2 || !(cfg.kappa >= 0.0) || !(cfg.noise >= 0.0) {
        return Err(HpoError::Space(
            "need at least 2 initial points, kappa >= 0 and noise >= 0".into(),
        ));
    }
    let mut history: Vec<Evaluation> = Vec::with_capacity(cfg.init_points + cfg.maxiter);
    let mut best: Option<usize> = None;
    let mut evaluate = |theta: Vec<f64>, history: &mut Vec<Evaluation>| {
        let t0 = Instant::now();
        let (value, error) = match objective(&theta) {
            Ok(v) if v.is_finite() => (v, None),
            Ok(v) => (0.0, Some(format!("non-finite value {v}"))),
            Err(e) => (0.0, Some(e.to_string())),
        };
        let e = Evaluation {
            iteration: history.len(),
            theta,
            value,
            error,
            wall_seconds: t0.elapsed().as_secs_f64(),
        };
        on_eval(&e);
        history.push(e);
    };
    for theta in initial_design(space, cfg)? {
        evaluate(theta, &mut history);
    }
    for _ in 0..cfg.maxiter {
        let thetas: Vec<Vec<f64>> = history.iter().map(|e| e.theta.clone()).collect();
        let units: Vec<Vec<f64>> = thetas.iter().map(|t| space.to_unit(t)).collect();
        let values: Vec<f64> = history.iter().map(|e| e.value).collect();
        let next = match gp_fit(&units, &values, cfg.noise) {
            Ok(model) => acquire_ucb(&model, space, cfg.kappa, &thetas)?,
            Err(HpoError::Degenerate) => {
                // Every evaluated point coincides after rounding: keep
                // exploring along the Sobol sequence instead.
                let mut s = Sobol::new(space.dim())?;
                (0..)
                    .map(|_| space.from_unit(&s.next_point()))
                    .take(4096)
                    .find(|t| !thetas.contains(t))
                    .unwrap_or_else(|| thetas[0].clone())
            }
            Err(e) => return Err(e),
        };
        evaluate(next, &mut history);
    }
    for (i, e) in history.iter().enumerate() {
        if best.map_or(true, |b| e.value > history[b].value) {
            best = Some(i);
        }
    }
    let b = best.expect("at least two evaluations");
    Ok(BoResult {
        best_theta: history[b].theta.clone(),
        best_value: history[b].value,
        best_iteration: b,
        history,
    })
}

/// Best value seen after each evaluation.
pub fn incumbent_trace(history: &[Evaluation]) -> Vec<f64> {
    let mut best = f64::NEG_INFINITY;
    history
        .iter()
        .map(|e| {
            best = best.max(e.value);
            best
        })
        .collect()
}

/// Header of the delimited history file.
pub fn history_header(space: &HyperSpace) -> String {
    format!(
        "iteration,{},accuracy,failed,wall_seconds",
        space.names().join(",")
    )
}

/// One history row matching [`history_header`].
pub fn history_row(e: &Evaluation) -> String {
    let theta: Vec<String> = e.theta.iter().map(|v| v.to_string()).collect();
    format!(
        "{},{},{},{},{:.6}",
        e.iteration,
        theta.join(","),
        e.value,
        u8::from(e.error.is_some()),
        e.wall_seconds
    )
}
