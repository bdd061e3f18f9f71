use serde::{Deserialize, Serialize};

use super::{BuiltModel, SupplyError};
use crate::milp::{MilpSolution, MilpStatus};

const COST_TOL: f64 = 1e-6;

/// One therapy's path through the network. Days are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRoute {
    pub center: usize,
    pub facility: usize,
    pub hospital: usize,
    pub outbound_mode: usize,
    pub return_mode: usize,
    pub check_in: usize,
    pub shipped: usize,
    pub at_facility: usize,
    pub released: usize,
    pub delivered: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyChainSolution {
    /// Established facilities, ascending.
    pub established: Vec<usize>,
    pub routes: Vec<PatientRoute>,
    pub ctm: Vec<f64>,
    pub ttc: Vec<f64>,
    pub trt: Vec<f64>,
    pub atrt: f64,
    /// Line utilization `[facility][t - 1]` for every configured facility.
    pub ratio: Vec<Vec<f64>>,
    pub totcost: f64,
}

/// Reads routes off an incumbent and recomputes every cost and time from
/// the parameters. Disagreement with the model objective is an error.
pub fn extract_solution(
    built: &BuiltModel,
    milp: &MilpSolution,
) -> Result<SupplyChainSolution, SupplyError> {
    if !matches!(
        milp.status,
        MilpStatus::Optimal | MilpStatus::GapLimit | MilpStatus::NodeLimit
    ) {
        return Err(SupplyError::NoIncumbent(milp.status.as_str()));
    }
    let (Some(values), Some(objective)) = (milp.values.as_ref(), milp.objective) else {
        return Err(SupplyError::NoIncumbent(milp.status.as_str()));
    };
    let cfg = &built.config;
    let np = built.demand.num_patients();
    let on = |v: crate::milp::VarId| values[v.0] > 0.5;

    let established: Vec<usize> = built
        .e1
        .iter()
        .filter(|(_, &v)| on(v))
        .map(|(&m, _)| m)
        .collect();
    let fixed: f64 = established
        .iter()
        .map(|&m| cfg.facilities[m].cim + cfg.facilities[m].cfvm)
        .sum();

    let mut routes = Vec::with_capacity(np);
    let mut ctm = Vec::with_capacity(np);
    let mut ttc = Vec::with_capacity(np);
    let mut trt = Vec::with_capacity(np);
    for p in 0..np {
        let out: Vec<_> = built
            .y1
            .range((p, 0, 0, 0, 0)..(p + 1, 0, 0, 0, 0))
            .filter(|(_, &v)| on(v))
            .collect();
        let back: Vec<_> = built
            .y2
            .range((p, 0, 0, 0, 0)..(p + 1, 0, 0, 0, 0))
            .filter(|(_, &v)| on(v))
            .collect();
        let (&(_, c, m, j1, shipped), _) = single(out, p, "outbound leg")?;
        let (&(_, m2, h, j2, released), _) = single(back, p, "return leg")?;
        if m2 != m {
            return Err(SupplyError::Malformed(format!(
                "patient {} leaves a facility it never entered",
                p + 1
            )));
        }
        let check_in = built.demand.arrivals[p].day;
        let at_facility = shipped + cfg.modes[j1].tt1;
        let delivered = released + cfg.modes[j2].tt2;
        let fac = &cfg.facilities[m];
        ctm.push(fixed / np as f64 + cfg.cvm);
        ttc.push(
            cfg.modes[j1].tt1 as f64 * fac.u1[c][j1] + cfg.modes[j2].tt2 as f64 * fac.u2[h][j2],
        );
        trt.push((delivered - check_in) as f64);
        routes.push(PatientRoute {
            center: c,
            facility: m,
            hospital: h,
            outbound_mode: j1,
            return_mode: j2,
            check_in,
            shipped,
            at_facility,
            released,
            delivered,
        });
    }

    let totcost: f64 = ctm.iter().sum::<f64>() + ttc.iter().sum::<f64>() + np as f64 * cfg.cqc;
    if (totcost - objective).abs() > COST_TOL * objective.abs().max(1.0) {
        return Err(SupplyError::Inconsistent {
            recomputed: totcost,
            objective,
        });
    }

    // A therapy occupies a line from arrival until release.
    let mut ratio = vec![vec![0.0; built.periods]; cfg.num_facilities()];
    for r in &routes {
        let cap = cfg.facilities[r.facility].capacity as f64;
        for t in r.at_facility..r.released.min(built.periods + 1) {
            ratio[r.facility][t - 1] += 1.0 / cap;
        }
    }
    let atrt = trt.iter().sum::<f64>() / np as f64;
    Ok(SupplyChainSolution {
        established,
        routes,
        ctm,
        ttc,
        trt,
        atrt,
        ratio,
        totcost,
    })
}

fn single<T>(mut items: Vec<T>, p: usize, what: &str) -> Result<T, SupplyError> {
    if items.len() != 1 {
        return Err(SupplyError::Malformed(format!(
            "patient {} has {} active {what}s",
            p + 1,
            items.len()
        )));
    }
    Ok(items.pop().expect("length checked"))
}
