#![allow(dead_code)]

use mipred::datagen::{spread_levels, Distribution, GenerationPlan};
use mipred::milp::{solve_milp, MilpStatus, SolverConfig};
use mipred::supply::{build_model, fix_facilities, Arrival, DemandProfile, SupplyChainConfig};

pub fn profile(horizon: usize, centers: usize, arrivals: &[(usize, usize)]) -> DemandProfile {
    DemandProfile::new(
        horizon,
        centers,
        arrivals
            .iter()
            .map(|&(center, day)| Arrival { center, day })
            .collect(),
    )
    .unwrap()
}

pub fn exact() -> SolverConfig {
    SolverConfig {
        mipgap: 0.0,
        ..Default::default()
    }
}

/// Best facility set by enumerating every nonempty subset, pinning the
/// establishment vector to it and solving the remaining model exactly.
/// Returns the label vector (facilities, then infeasible) and the optimum.
pub fn enumeration_oracle(
    cfg: &SupplyChainConfig,
    demand: &DemandProfile,
) -> (Vec<u8>, Option<f64>) {
    let nm = cfg.num_facilities();
    let all: Vec<usize> = (0..nm).collect();
    let mut best: Option<(f64, u32)> = None;
    for mask in 1u32..(1 << nm) {
        let set: Vec<usize> = all.iter().copied().filter(|m| mask >> m & 1 == 1).collect();
        let mut b = build_model(cfg, demand, &all).unwrap();
        fix_facilities(&mut b, &set).unwrap();
        let s = solve_milp(&b.problem, &exact()).unwrap();
        if s.status == MilpStatus::Optimal {
            let z = s.objective.unwrap();
            if best.map_or(true, |(bz, _)| z < bz) {
                best = Some((z, mask));
            }
        }
    }
    let mut labels = vec![0u8; nm + 1];
    match best {
        Some((z, mask)) => {
            for m in 0..nm {
                labels[m] = (mask >> m & 1) as u8;
            }
            (labels, Some(z))
        }
        None => {
            labels[nm] = 1;
            (labels, None)
        }
    }
}

pub mod gradcheck {
    use mipred::neural::{bce_with_logits, LayerParams, LayerSpec, Network, NetworkSpec};
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Network with random weights and biases drawn away from zero so ReLU
    /// kinks are unlikely to sit inside the difference step.
    pub fn random_network(spec: NetworkSpec, rng: &mut ChaCha8Rng) -> Network {
        let mut net = Network::init(spec, rng).unwrap();
        for p in &mut net.params {
            if let LayerParams::Affine { w, b } = p {
                *w = w.map(|v| v + rng.gen_range(-0.1..0.1));
                *b = DVector::from_fn(b.len(), |_, _| rng.gen_range(-0.5..0.5));
            }
        }
        net
    }

    /// Largest relative gap between backpropagated and central-difference
    /// gradients of the summed BCE loss, over at most `max_params`
    /// parameters. Dropout masks are replayed from a fixed seed.
    pub fn max_relative_error(net: &Network, batch: usize, seed: u64, max_params: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(batch, net.input_width(), |_, _| rng.gen_range(-1.0..1.0));
        let k = net.output_width();
        let y = DMatrix::from_fn(batch, k, |_, _| f64::from(rng.gen_bool(0.5)));
        let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..2.0)).collect();
        let mask_seed = rng.gen::<u64>();
        let loss = |n: &Network| {
            let mut r = ChaCha8Rng::seed_from_u64(mask_seed);
            let z = n.forward(&x, Some(&mut r)).unwrap();
            bce_with_logits(&z, &y, &w).unwrap().0
        };
        let mut r = ChaCha8Rng::seed_from_u64(mask_seed);
        let (z, cache) = net.forward_cached(&x, Some(&mut r)).unwrap();
        let (_, dz) = bce_with_logits(&z, &y, &w).unwrap();
        let analytic = net.backward(&cache, &dz);
        let base = net.flat_params();
        let stride = (base.len() / max_params).max(1);
        let h = 1e-5;
        let mut probe = net.clone();
        let mut worst: f64 = 0.0;
        for i in (0..base.len()).step_by(stride) {
            let mut p = base.clone();
            p[i] = base[i] + h;
            probe.set_flat_params(&p);
            let up = loss(&probe);
            p[i] = base[i] - h;
            probe.set_flat_params(&p);
            let down = loss(&probe);
            let numeric = (up - down) / (2.0 * h);
            let scale = analytic[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic[i] - numeric).abs() / scale);
        }
        worst
    }

    /// A small valid network mixing the layer types.
    pub fn random_spec(rng: &mut ChaCha8Rng) -> NetworkSpec {
        loop {
            let len = rng.gen_range(6..20);
            let mut layers = Vec::new();
            let mut ch = 1;
            if rng.gen_bool(0.7) {
                for _ in 0..rng.gen_range(1..=2) {
                    let out_ch = rng.gen_range(1..4);
                    layers.push(LayerSpec::Conv1d {
                        in_ch: ch,
                        out_ch,
                        kernel: rng.gen_range(1..4),
                        stride: rng.gen_range(1..3),
                        padding: rng.gen_range(0..2),
                    });
                    ch = out_ch;
                    if rng.gen_bool(0.7) {
                        let kernel = rng.gen_range(1..4);
                        layers.push(LayerSpec::MaxPool1d {
                            kernel,
                            stride: rng.gen_range(1..4),
                            padding: rng.gen_range(0..=kernel / 2),
                        });
                    }
                }
                layers.push(LayerSpec::Flatten);
            }
            for _ in 0..rng.gen_range(0..=2) {
                layers.push(LayerSpec::Dense {
                    out: rng.gen_range(2..7),
                });
                if rng.gen_bool(0.5) {
                    layers.push(LayerSpec::Dropout {
                        rate: rng.gen_range(0.1..0.5),
                    });
                }
            }
            layers.push(LayerSpec::Dense {
                out: rng.gen_range(1..8),
            });
            let spec = NetworkSpec {
                input_width: len,
                layers,
            };
            if spec.shapes().is_ok() {
                return spec;
            }
        }
    }
}

/// Six samples over m1..m6 and infeasible with every confusion case, and
/// the scores tallied by hand.
pub mod metrics_fixture {
    pub fn names() -> Vec<String> {
        ["m1", "m2", "m3", "m4", "m5", "m6", "infeasible"]
            .map(String::from)
            .to_vec()
    }

    fn row(active: &[usize]) -> Vec<u8> {
        (0..7).map(|j| u8::from(active.contains(&j))).collect()
    }

    pub fn truth() -> Vec<Vec<u8>> {
        [&[0, 5][..], &[2], &[0, 2], &[6], &[1], &[0, 5]]
            .iter()
            .map(|a| row(a))
            .collect()
    }

    pub fn pred() -> Vec<Vec<u8>> {
        [&[0, 5][..], &[2, 3], &[0], &[6], &[2], &[0, 2, 4]]
            .iter()
            .map(|a| row(a))
            .collect()
    }

    pub const HAMMING: f64 = 7.0 / 42.0;
    pub const JACCARD: f64 = 13.0 / 24.0;
    pub const ACCURACY: f64 = 2.0 / 6.0;
    /// (tp, fp, fn, precision, recall, f1) per label.
    pub const PER_LABEL: [(usize, usize, usize, f64, f64, f64); 7] = [
        (3, 0, 0, 1.0, 1.0, 1.0),
        (0, 0, 1, 0.0, 0.0, 0.0),
        (1, 2, 1, 1.0 / 3.0, 0.5, 0.4),
        (0, 1, 0, 0.0, 0.0, 0.0),
        (0, 1, 0, 0.0, 0.0, 0.0),
        (1, 0, 1, 1.0, 0.5, 2.0 / 3.0),
        (1, 0, 0, 1.0, 1.0, 1.0),
    ];
    pub const MICRO: (f64, f64, f64) = (0.6, 2.0 / 3.0, 12.0 / 19.0);
    pub const MACRO: (f64, f64, f64) = (10.0 / 21.0, 3.0 / 7.0, 60.0 / 133.0);
    pub const WEIGHTED: (f64, f64, f64) = (20.0 / 27.0, 2.0 / 3.0, 92.0 / 135.0);
    pub const SAMPLES: (f64, f64, f64) = (23.0 / 36.0, 2.0 / 3.0, 92.0 / 141.0);

    /// Nonzero MLCM cells as (row, column, count); index 7 is NTL or NPL.
    pub const MLCM: [(usize, usize, f64); 9] = [
        (0, 0, 3.0),
        (1, 2, 1.0),
        (2, 2, 1.0),
        (2, 7, 1.0),
        (5, 2, 0.5),
        (5, 4, 0.5),
        (5, 5, 1.0),
        (6, 6, 1.0),
        (7, 3, 1.0),
    ];
}

/// Exact optimum with the establishment vector pinned to `set`.
pub fn subset_objective(
    cfg: &SupplyChainConfig,
    demand: &DemandProfile,
    set: &[usize],
) -> Option<f64> {
    let all: Vec<usize> = (0..cfg.num_facilities()).collect();
    let mut b = build_model(cfg, demand, &all).unwrap();
    fix_facilities(&mut b, set).unwrap();
    solve_milp(&b.problem, &exact()).unwrap().objective
}

/// Model that ignores its input and always outputs `probs`.
pub fn constant_model(probs: &[f64]) -> mipred::neural::TrainedModel {
    use mipred::datagen::FeatureScaling;
    use mipred::neural::{Network, NetworkSpec, TrainConfig, TrainedModel};
    use rand::SeedableRng;
    let spec = NetworkSpec::ann(90, 1, 4, probs.len());
    let mut net = Network::init(spec, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut flat = vec![0.0; net.num_params()];
    let n = flat.len();
    for (i, p) in probs.iter().enumerate() {
        flat[n - probs.len() + i] = (p / (1.0 - p)).ln();
    }
    net.set_flat_params(&flat);
    TrainedModel {
        network: net,
        scaling: FeatureScaling {
            divisor: 4.0,
            train_max: 1.0,
            train_mean: 0.1,
        },
        config: TrainConfig::new(1, 1e-3, 0),
        loss_log: vec![],
    }
}

/// The 150-instance desk plan: 10 levels over 2-6 patients, three
/// distributions, five replicates.
pub fn desk_plan(seed: u64) -> GenerationPlan {
    let cfg = SupplyChainConfig::desk();
    GenerationPlan {
        levels: spread_levels(2, 6, 10),
        distributions: Distribution::ALL.to_vec(),
        replicates: 5,
        horizon: cfg.horizon,
        num_centers: cfg.num_centers(),
        daily_cap: cfg.center_daily_cap,
        seed,
    }
}

pub mod solver {
    use mipred::milp::{MilpProblem, Relation, Sense, VarId, VarKind};
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    pub mod oracle {
        use super::*;

        /// Solves a small dense square system by Gaussian elimination.
        pub fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
            let n = b.len();
            for c in 0..n {
                let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
                if a[p][c].abs() < 1e-10 {
                    return None;
                }
                a.swap(p, c);
                b.swap(p, c);
                for r in 0..n {
                    if r != c {
                        let f = a[r][c] / a[c][c];
                        for k in c..n {
                            a[r][k] -= f * a[c][k];
                        }
                        b[r] -= f * b[c];
                    }
                }
            }
            Some((0..n).map(|i| b[i] / a[i][i]).collect())
        }

        /// Best objective over all basic feasible points: every choice of
        /// active hyperplanes among rows and finite bounds is solved and kept if
        /// feasible. Variables with a `fixed` value are substituted first.
        /// Assumes all variable bounds finite (so the LP is bounded).
        pub fn vertex_enumeration_fixed(p: &MilpProblem, fixed: &[Option<f64>]) -> Option<f64> {
            let free: Vec<usize> = (0..p.num_vars()).filter(|&j| fixed[j].is_none()).collect();
            let n = free.len();
            let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
            for c in &p.constraints {
                let mut row = vec![0.0; n];
                let mut rhs = c.rhs;
                for &(v, a) in &c.terms {
                    match fixed[v.0] {
                        Some(x) => rhs -= a * x,
                        None => row[free.iter().position(|&j| j == v.0).unwrap()] += a,
                    }
                }
                planes.push((row, rhs));
            }
            for (k, &j) in free.iter().enumerate() {
                for b in [p.variables[j].lower, p.variables[j].upper] {
                    let mut row = vec![0.0; n];
                    row[k] = 1.0;
                    planes.push((row, b));
                }
            }
            let full = |y: &[f64]| {
                let mut x: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
                for (k, &j) in free.iter().enumerate() {
                    x[j] = y[k];
                }
                x
            };
            let mut best: Option<f64> = None;
            let k = planes.len();
            if n > k {
                return None;
            }
            let mut idx: Vec<usize> = (0..n).collect();
            loop {
                let a: Vec<Vec<f64>> = idx.iter().map(|&i| planes[i].0.clone()).collect();
                let b: Vec<f64> = idx.iter().map(|&i| planes[i].1).collect();
                if let Some(y) = solve_square(a, b) {
                    let x = full(&y);
                    if p.max_violation(&x) <= 1e-7 {
                        let z = p.objective.evaluate(&x);
                        let better = match (best, p.objective.sense) {
                            (None, _) => true,
                            (Some(b), Sense::Minimize) => z < b,
                            (Some(b), Sense::Maximize) => z > b,
                        };
                        if better {
                            best = Some(z);
                        }
                    }
                }
                // next combination
                let mut i = n;
                loop {
                    if i == 0 {
                        return best;
                    }
                    i -= 1;
                    if idx[i] < k - n + i {
                        idx[i] += 1;
                        for t in i + 1..n {
                            idx[t] = idx[t - 1] + 1;
                        }
                        break;
                    }
                }
            }
        }

        pub fn vertex_enumeration(p: &MilpProblem) -> Option<f64> {
            vertex_enumeration_fixed(p, &vec![None; p.num_vars()])
        }

        /// Exhaustive search over all binary assignments, each continuous
        /// remainder solved by vertex enumeration.
        pub fn binary_enumeration(p: &MilpProblem) -> Option<f64> {
            let bins: Vec<usize> = (0..p.num_vars())
                .filter(|&j| p.variables[j].kind == VarKind::Binary)
                .collect();
            let mut best: Option<f64> = None;
            for mask in 0u32..(1 << bins.len()) {
                let mut fixed = vec![None; p.num_vars()];
                for (k, &j) in bins.iter().enumerate() {
                    fixed[j] = Some(f64::from((mask >> k) & 1));
                }
                if let Some(z) = vertex_enumeration_fixed(p, &fixed) {
                    let better = match (best, p.objective.sense) {
                        (None, _) => true,
                        (Some(b), Sense::Minimize) => z < b,
                        (Some(b), Sense::Maximize) => z > b,
                    };
                    if better {
                        best = Some(z);
                    }
                }
            }
            best
        }
    }

    pub fn random_lp(rng: &mut ChaCha8Rng) -> MilpProblem {
        let n = rng.gen_range(1..=6);
        let m = rng.gen_range(1..=6);
        let sense = if rng.gen_bool(0.5) {
            Sense::Minimize
        } else {
            Sense::Maximize
        };
        let mut p = MilpProblem::new(sense);
        let vars: Vec<VarId> = (0..n)
            .map(|j| {
                let lo = rng.gen_range(-3..=1) as f64;
                let hi = lo + rng.gen_range(1..=6) as f64;
                p.add_continuous(format!("x{j}"), lo, hi)
            })
            .collect();
        for i in 0..m {
            let mut terms = Vec::new();
            for &v in &vars {
                if rng.gen_bool(0.7) {
                    terms.push((v, rng.gen_range(-5..=5) as f64));
                }
            }
            let rel = match rng.gen_range(0..5) {
                0 => Relation::Eq,
                1 | 2 => Relation::Ge,
                _ => Relation::Le,
            };
            p.add_constraint(format!("r{i}"), terms, rel, rng.gen_range(-6..=8) as f64);
        }
        let obj: Vec<(VarId, f64)> = vars
            .iter()
            .map(|&v| (v, rng.gen_range(-4..=4) as f64))
            .collect();
        p.set_objective(sense, obj, rng.gen_range(-2..=2) as f64);
        p
    }

    pub fn random_milp(rng: &mut ChaCha8Rng) -> MilpProblem {
        let nb = rng.gen_range(1..=12);
        let nc = rng.gen_range(0..=4);
        let m = rng.gen_range(1..=8);
        let sense = if rng.gen_bool(0.5) {
            Sense::Minimize
        } else {
            Sense::Maximize
        };
        let mut p = MilpProblem::new(sense);
        let mut vars: Vec<VarId> = (0..nb).map(|j| p.add_binary(format!("b{j}"))).collect();
        for j in 0..nc {
            let lo = rng.gen_range(-2..=0) as f64;
            vars.push(p.add_continuous(format!("x{j}"), lo, lo + rng.gen_range(1..=5) as f64));
        }
        for i in 0..m {
            let mut terms = Vec::new();
            for &v in &vars {
                if rng.gen_bool(0.6) {
                    terms.push((v, rng.gen_range(-6..=6) as f64));
                }
            }
            let rel = match rng.gen_range(0..6) {
                0 => Relation::Eq,
                1 | 2 => Relation::Ge,
                _ => Relation::Le,
            };
            let rhs = rng.gen_range(-4..=10) as f64;
            p.add_constraint(format!("r{i}"), terms, rel, rhs);
        }
        let obj: Vec<(VarId, f64)> = vars
            .iter()
            .map(|&v| (v, rng.gen_range(-9..=9) as f64))
            .collect();
        p.set_objective(sense, obj, 0.0);
        p
    }

    pub fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }
}
