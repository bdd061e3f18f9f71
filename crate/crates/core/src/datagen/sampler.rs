use rand::distributions::{Distribution as _, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatagenError, Distribution, GenerationPlan};
use crate::supply::{Arrival, DemandProfile};

/// A sampled profile with the coordinates that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedInstance {
    pub profile: DemandProfile,
    pub level: usize,
    pub distribution: Distribution,
    pub replicate: usize,
    pub seed: u64,
}

/// `count` levels evenly spread over `[min, max]`, rounded to whole
/// patients.
pub fn spread_levels(min: usize, max: usize, count: usize) -> Vec<usize> {
    if count <= 1 {
        return vec![min; count];
    }
    (0..count)
        .map(|i| (min as f64 + (max - min) as f64 * i as f64 / (count - 1) as f64).round() as usize)
        .collect()
}

/// Seed of the instance at position `index`, derived from the plan seed
/// with a SplitMix64 step so neighbouring indices get unrelated streams.
pub fn instance_seed(plan_seed: u64, index: usize) -> u64 {
    let mut z = plan_seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws `patients` check-ins: day from `distribution`, center uniformly.
/// A draw that lands on a full (center, day) moves to the nearest day with
/// room, trying the drawn center before the others on each candidate day
/// and earlier days before later ones at equal distance.
pub fn sample_demand_profile(
    patients: usize,
    distribution: Distribution,
    horizon: usize,
    centers: usize,
    daily_cap: usize,
    rng: &mut impl Rng,
) -> Result<DemandProfile, DatagenError> {
    if patients == 0 {
        return Err(DatagenError::Plan(
            "a profile needs at least one patient".into(),
        ));
    }
    if horizon == 0 || centers == 0 || patients > horizon * centers * daily_cap {
        return Err(DatagenError::CapacityImpossible {
            patients,
            horizon,
            centers,
            cap: daily_cap,
        });
    }
    let weights: Vec<f64> = (1..=horizon)
        .map(|d| distribution.day_weight(d, horizon))
        .collect();
    let days = WeightedIndex::new(&weights).expect("weights are positive");
    let mut count = vec![vec![0usize; horizon]; centers];
    let mut arrivals = Vec::with_capacity(patients);
    for _ in 0..patients {
        let day = days.sample(rng);
        let center = rng.gen_range(0..centers);
        let (c, d) =
            nearest_open(&count, center, day, daily_cap).expect("total capacity checked above");
        count[c][d] += 1;
        arrivals.push(Arrival {
            center: c,
            day: d + 1,
        });
    }
    Ok(DemandProfile::new(horizon, centers, arrivals)?)
}

fn nearest_open(
    count: &[Vec<usize>],
    center: usize,
    day: usize,
    cap: usize,
) -> Option<(usize, usize)> {
    let centers = count.len();
    let horizon = count[0].len();
    for offset in 0..horizon {
        let mut candidates = Vec::with_capacity(2);
        if offset <= day {
            candidates.push(day - offset);
        }
        if offset > 0 && day + offset < horizon {
            candidates.push(day + offset);
        }
        for d in candidates {
            for k in 0..centers {
                let c = (center + k) % centers;
                if count[c][d] < cap {
                    return Some((c, d));
                }
            }
        }
    }
    None
}

/// All profiles of `plan`, ordered by level, then distribution, then
/// replicate.
pub fn generate_instance_set(
    plan: &GenerationPlan,
) -> Result<Vec<GeneratedInstance>, DatagenError> {
    plan.validate()?;
    let mut out = Vec::with_capacity(plan.total_instances());
    for &level in &plan.levels {
        for &distribution in &plan.distributions {
            for replicate in 0..plan.replicates {
                let seed = instance_seed(plan.seed, out.len());
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let profile = sample_demand_profile(
                    level,
                    distribution,
                    plan.horizon,
                    plan.num_centers,
                    plan.daily_cap,
                    &mut rng,
                )
                .map_err(|e| DatagenError::Instance {
                    level,
                    distribution,
                    replicate,
                    source: Box::new(e),
                })?;
                out.push(GeneratedInstance {
                    profile,
                    level,
                    distribution,
                    replicate,
                    seed,
                });
            }
        }
    }
    Ok(out)
}
