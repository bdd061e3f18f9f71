use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DemandProfile, SupplyChainConfig, SupplyError};
use crate::milp::{MilpProblem, Relation, Sense, VarId};

/// Size of a built model before presolve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelStats {
    pub constraints: usize,
    pub binaries: usize,
    pub continuous: usize,
}

impl ModelStats {
    /// `(1 - self/full)` for constraints and binaries.
    pub fn reduction_vs(&self, full: &ModelStats) -> (f64, f64) {
        let frac = |r: usize, f: usize| {
            if f == 0 {
                0.0
            } else {
                1.0 - r as f64 / f as f64
            }
        };
        (
            frac(self.constraints, full.constraints),
            frac(self.binaries, full.binaries),
        )
    }
}

/// Key of a center-to-facility leg: `(p, c, m, j, t)`.
pub type LegKey = (usize, usize, usize, usize, usize);
/// Key of a facility-to-hospital leg: `(p, m, h, j, t)`.
pub type ReturnKey = (usize, usize, usize, usize, usize);

/// The MILP plus index maps from model families to variables.
///
/// Only variables a patient can actually reach are created: each patient
/// has one check-in, so every shifted balance pins the time index and the
/// remaining families span facilities, modes and hospitals.
#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub problem: MilpProblem,
    pub config: SupplyChainConfig,
    pub demand: DemandProfile,
    /// Facilities present in the model, ascending.
    pub active: Vec<usize>,
    pub periods: usize,
    pub e1: BTreeMap<usize, VarId>,
    pub x1: BTreeMap<(usize, usize), VarId>,
    pub x2: BTreeMap<(usize, usize), VarId>,
    pub y1: BTreeMap<LegKey, VarId>,
    pub y2: BTreeMap<ReturnKey, VarId>,
    pub outc: BTreeMap<(usize, usize, usize), VarId>,
    pub lsr: BTreeMap<LegKey, VarId>,
    pub lsa: BTreeMap<LegKey, VarId>,
    pub inm: BTreeMap<(usize, usize, usize), VarId>,
    pub outm: BTreeMap<(usize, usize, usize), VarId>,
    pub mso: BTreeMap<ReturnKey, VarId>,
    pub ftd: BTreeMap<ReturnKey, VarId>,
    pub inh: BTreeMap<(usize, usize, usize), VarId>,
    pub ctm: Vec<VarId>,
    pub ttc: Vec<VarId>,
    pub ctt: Vec<VarId>,
    pub stt: Vec<VarId>,
    pub trt: Vec<VarId>,
    pub atrt: VarId,
    pub totcost: VarId,
    pub stats: ModelStats,
}

pub fn model_stats(built: &BuiltModel) -> ModelStats {
    built.stats
}

/// Pins `E1` to 1 on `chosen` and to 0 on every other active facility.
pub fn fix_facilities(built: &mut BuiltModel, chosen: &[usize]) -> Result<(), SupplyError> {
    for &m in chosen {
        if !built.e1.contains_key(&m) {
            return Err(SupplyError::UnknownFacility(m));
        }
    }
    for (&m, &v) in &built.e1 {
        let value = if chosen.contains(&m) { 1.0 } else { 0.0 };
        let var = &mut built.problem.variables[v.0];
        var.lower = value;
        var.upper = value;
    }
    Ok(())
}

/// Builds the supply-chain MILP over the facilities in `active`.
pub fn build_model(
    config: &SupplyChainConfig,
    demand: &DemandProfile,
    active: &[usize],
) -> Result<BuiltModel, SupplyError> {
    config.validate()?;
    if demand.num_patients() == 0 {
        return Err(SupplyError::NoPatients);
    }
    if demand.num_centers != config.num_centers() {
        return Err(SupplyError::Demand(format!(
            "demand has {} centers, configuration has {}",
            demand.num_centers,
            config.num_centers()
        )));
    }
    let mut active = active.to_vec();
    active.sort_unstable();
    active.dedup();
    if active.is_empty() {
        return Err(SupplyError::EmptyFacilitySet);
    }
    if let Some(&m) = active.iter().find(|&&m| m >= config.num_facilities()) {
        return Err(SupplyError::UnknownFacility(m));
    }
    config.check_horizon(demand.last_day())?;

    let nt = config.periods();
    let np = demand.num_patients();
    let nc = config.num_centers();
    let nh = nc;
    let nj = config.modes.len();
    let dur = config.manufacturing_days();
    let fname = |m: usize| config.facilities[m].name.as_str();
    let cname = |c: usize| config.centers[c].name.as_str();
    let hname = |h: usize| config.centers[h].hospital.as_str();
    let jname = |j: usize| config.modes[j].name.as_str();
    let (fmin, fmax) = (config.fmin, config.fmax);

    let mut pb = MilpProblem::new(Sense::Minimize);
    let mut e1 = BTreeMap::new();
    let mut x1 = BTreeMap::new();
    let mut x2 = BTreeMap::new();
    for &m in &active {
        e1.insert(m, pb.add_binary(format!("E1[{}]", fname(m))));
    }
    for c in 0..nc {
        for &m in &active {
            x1.insert(
                (c, m),
                pb.add_binary(format!("X1[{},{}]", cname(c), fname(m))),
            );
        }
    }
    for &m in &active {
        for h in 0..nh {
            x2.insert(
                (m, h),
                pb.add_binary(format!("X2[{},{}]", fname(m), hname(h))),
            );
        }
    }

    let mut y1 = BTreeMap::new();
    let mut y2 = BTreeMap::new();
    let mut outc = BTreeMap::new();
    let mut lsr = BTreeMap::new();
    let mut lsa = BTreeMap::new();
    let mut inm: BTreeMap<(usize, usize, usize), VarId> = BTreeMap::new();
    let mut outm = BTreeMap::new();
    let mut mso = BTreeMap::new();
    let mut ftd = BTreeMap::new();
    let mut inh: BTreeMap<(usize, usize, usize), VarId> = BTreeMap::new();
    let (mut ctm, mut ttc, mut ctt, mut stt, mut trt) = (vec![], vec![], vec![], vec![], vec![]);
    let fixed_share: Vec<(VarId, f64)> = active
        .iter()
        .map(|&m| {
            (
                e1[&m],
                (config.facilities[m].cim + config.facilities[m].cfvm) / np as f64,
            )
        })
        .collect();

    for (p, arrival) in demand.arrivals.iter().enumerate() {
        let pn = p + 1;
        let c = arrival.center;
        let t0 = arrival.day;
        let t1 = t0 + config.tls;

        let oc = pb.add_continuous(format!("OUTC[p{pn},{},t{t1}]", cname(c)), 0.0, 1.0);
        outc.insert((p, c, t1), oc);
        pb.add_constraint(
            format!("leuk[p{pn},{},t{t0}]", cname(c)),
            [(oc, 1.0)],
            Relation::Eq,
            1.0,
        );

        let mut dispatch = vec![(oc, 1.0)];
        let mut leg_binaries = Vec::new();
        let mut return_binaries = Vec::new();
        let mut transport = Vec::new();
        let mut by_hospital: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); nh];
        let mut arrivals_at_hospital: BTreeMap<(usize, usize), Vec<VarId>> = BTreeMap::new();

        for &m in &active {
            let fac = &config.facilities[m];
            let mut inbound: BTreeMap<usize, Vec<VarId>> = BTreeMap::new();
            for j in 0..nj {
                let key = (p, c, m, j, t1);
                let tag = format!("p{pn},{},{},{}", cname(c), fname(m), jname(j));
                let y = pb.add_binary(format!("Y1[{tag},t{t1}]"));
                let r = pb.add_continuous(format!("LSR[{tag},t{t1}]"), 0.0, 1.0);
                let ta = t1 + config.modes[j].tt1;
                let s = pb.add_continuous(format!("LSA[{tag},t{ta}]"), 0.0, 1.0);
                pb.add_constraint(
                    format!("ship[{tag},t{t1}]"),
                    [(r, 1.0), (s, -1.0)],
                    Relation::Eq,
                    0.0,
                );
                pb.add_constraint(
                    format!("link1[{tag},t{t1}]"),
                    [(y, 1.0), (x1[&(c, m)], -1.0)],
                    Relation::Le,
                    0.0,
                );
                pb.add_constraint(
                    format!("fmin1[{tag},t{t1}]"),
                    [(r, 1.0), (y, -fmin)],
                    Relation::Ge,
                    0.0,
                );
                pb.add_constraint(
                    format!("fmax1[{tag},t{t1}]"),
                    [(r, 1.0), (y, -fmax)],
                    Relation::Le,
                    0.0,
                );
                dispatch.push((r, -1.0));
                leg_binaries.push((y, 1.0));
                transport.push((y, -(config.modes[j].tt1 as f64) * fac.u1[c][j]));
                inbound.entry(ta).or_default().push(s);
                y1.insert(key, y);
                lsr.insert(key, r);
                lsa.insert((p, c, m, j, ta), s);
            }

            for (&ta, legs) in &inbound {
                let tm = ta + dur;
                let tag = format!("p{pn},{}", fname(m));
                let i = pb.add_continuous(format!("INM[{tag},t{ta}]"), 0.0, 1.0);
                let o = pb.add_continuous(format!("OUTM[{tag},t{tm}]"), 0.0, 1.0);
                let mut terms = vec![(i, 1.0)];
                terms.extend(legs.iter().map(|&s| (s, -1.0)));
                pb.add_constraint(format!("inm[{tag},t{ta}]"), terms, Relation::Eq, 0.0);
                pb.add_constraint(
                    format!("make[{tag},t{ta}]"),
                    [(i, 1.0), (o, -1.0)],
                    Relation::Eq,
                    0.0,
                );
                inm.insert((p, m, ta), i);
                outm.insert((p, m, tm), o);

                let mut release = vec![(o, 1.0)];
                for h in 0..nh {
                    for j in 0..nj {
                        let key = (p, m, h, j, tm);
                        let rtag = format!("p{pn},{},{},{}", fname(m), hname(h), jname(j));
                        let y = pb.add_binary(format!("Y2[{rtag},t{tm}]"));
                        let q = pb.add_continuous(format!("MSO[{rtag},t{tm}]"), 0.0, 1.0);
                        let td = tm + config.modes[j].tt2;
                        let f = pb.add_continuous(format!("FTD[{rtag},t{td}]"), 0.0, 1.0);
                        pb.add_constraint(
                            format!("deliver[{rtag},t{tm}]"),
                            [(f, 1.0), (q, -1.0)],
                            Relation::Eq,
                            0.0,
                        );
                        pb.add_constraint(
                            format!("link2[{rtag},t{tm}]"),
                            [(y, 1.0), (x2[&(m, h)], -1.0)],
                            Relation::Le,
                            0.0,
                        );
                        pb.add_constraint(
                            format!("fmin2[{rtag},t{tm}]"),
                            [(q, 1.0), (y, -fmin)],
                            Relation::Ge,
                            0.0,
                        );
                        pb.add_constraint(
                            format!("fmax2[{rtag},t{tm}]"),
                            [(q, 1.0), (y, -fmax)],
                            Relation::Le,
                            0.0,
                        );
                        release.push((q, -1.0));
                        return_binaries.push((y, 1.0));
                        by_hospital[h].push((y, 1.0));
                        transport.push((y, -(config.modes[j].tt2 as f64) * fac.u2[h][j]));
                        arrivals_at_hospital.entry((h, td)).or_default().push(f);
                        y2.insert(key, y);
                        mso.insert(key, q);
                        ftd.insert((p, m, h, j, td), f);
                    }
                }
                pb.add_constraint(format!("release[{tag},t{tm}]"), release, Relation::Eq, 0.0);
            }
        }
        pb.add_constraint(
            format!("dispatch[p{pn},{},t{t1}]", cname(c)),
            dispatch,
            Relation::Eq,
            0.0,
        );
        pb.add_constraint(format!("onemode1[p{pn}]"), leg_binaries, Relation::Eq, 1.0);
        pb.add_constraint(
            format!("onemode2[p{pn}]"),
            return_binaries,
            Relation::Eq,
            1.0,
        );
        for (h, terms) in by_hospital.into_iter().enumerate() {
            // Co-location: the rhs is the check-in day at the paired center,
            // zero for every other hospital.
            let rhs = if h == c { t0 as f64 } else { 0.0 };
            pb.add_constraint(
                format!("coloc[p{pn},{}]", hname(h)),
                terms,
                Relation::Le,
                rhs,
            );
        }

        let mut completion = Vec::new();
        for ((h, td), legs) in arrivals_at_hospital {
            let v = pb.add_continuous(format!("INH[p{pn},{},t{td}]", hname(h)), 0.0, 1.0);
            let mut terms = vec![(v, 1.0)];
            terms.extend(legs.into_iter().map(|f| (f, -1.0)));
            pb.add_constraint(
                format!("inh[p{pn},{},t{td}]", hname(h)),
                terms,
                Relation::Eq,
                0.0,
            );
            completion.push((v, -(td as f64)));
            inh.insert((p, h, td), v);
        }

        let horizon = nt as f64;
        let v_ctt = pb.add_continuous(format!("CTT[p{pn}]"), 0.0, horizon);
        let v_stt = pb.add_continuous(format!("STT[p{pn}]"), 0.0, horizon);
        let v_trt = pb.add_continuous(format!("TRT[p{pn}]"), 0.0, horizon);
        completion.push((v_ctt, 1.0));
        pb.add_constraint(format!("ctt[p{pn}]"), completion, Relation::Eq, 0.0);
        pb.add_constraint(
            format!("stt[p{pn}]"),
            [(v_stt, 1.0)],
            Relation::Eq,
            t0 as f64,
        );
        pb.add_constraint(
            format!("order[p{pn}]"),
            [(v_stt, 1.0), (v_ctt, -1.0)],
            Relation::Le,
            0.0,
        );
        pb.add_constraint(
            format!("trt[p{pn}]"),
            [(v_trt, 1.0), (v_ctt, -1.0), (v_stt, 1.0)],
            Relation::Eq,
            0.0,
        );
        pb.add_constraint(
            format!("nd[p{pn}]"),
            [(v_trt, 1.0)],
            Relation::Le,
            config.nd as f64,
        );

        let v_ctm = pb.add_continuous(format!("CTM[p{pn}]"), 0.0, f64::INFINITY);
        let v_ttc = pb.add_continuous(format!("TTC[p{pn}]"), 0.0, f64::INFINITY);
        let mut terms = vec![(v_ctm, 1.0)];
        terms.extend(fixed_share.iter().map(|&(v, a)| (v, -a)));
        pb.add_constraint(format!("ctm[p{pn}]"), terms, Relation::Eq, config.cvm);
        transport.push((v_ttc, 1.0));
        pb.add_constraint(format!("ttc[p{pn}]"), transport, Relation::Eq, 0.0);

        ctm.push(v_ctm);
        ttc.push(v_ttc);
        ctt.push(v_ctt);
        stt.push(v_stt);
        trt.push(v_trt);
    }

    // Rolling-window capacity. Occupancy only grows at arrival times, so
    // windows ending on an arrival dominate all others.
    if dur > 0 {
        for &m in &active {
            let mut starts: Vec<usize> = inm.keys().filter(|k| k.1 == m).map(|k| k.2).collect();
            starts.sort_unstable();
            starts.dedup();
            for &t in &starts {
                let terms: Vec<(VarId, f64)> = inm
                    .iter()
                    .filter(|(&(_, mm, tau), _)| mm == m && tau + dur > t && tau <= t)
                    .map(|(_, &v)| (v, 1.0))
                    .collect();
                pb.add_constraint(
                    format!("cap[{},t{t}]", fname(m)),
                    terms,
                    Relation::Le,
                    config.facilities[m].capacity as f64,
                );
            }
        }
    }

    for c in 0..nc {
        for &m in &active {
            pb.add_constraint(
                format!("net1[{},{}]", cname(c), fname(m)),
                [(x1[&(c, m)], 1.0), (e1[&m], -1.0)],
                Relation::Le,
                0.0,
            );
        }
    }
    for &m in &active {
        for h in 0..nh {
            pb.add_constraint(
                format!("net2[{},{}]", fname(m), hname(h)),
                [(x2[&(m, h)], 1.0), (e1[&m], -1.0)],
                Relation::Le,
                0.0,
            );
        }
    }
    pb.add_constraint(
        "maxfac",
        e1.values().map(|&v| (v, 1.0)),
        Relation::Le,
        config.max_facilities as f64,
    );
    pb.add_constraint(
        "demand",
        inh.values().map(|&v| (v, 1.0)),
        Relation::Eq,
        np as f64,
    );

    let atrt = pb.add_continuous("ATRT", 0.0, nt as f64);
    let mut terms = vec![(atrt, np as f64)];
    terms.extend(trt.iter().map(|&v| (v, -1.0)));
    pb.add_constraint("atrt", terms, Relation::Eq, 0.0);

    let totcost = pb.add_continuous("TOTCOST", 0.0, f64::INFINITY);
    let mut terms = vec![(totcost, 1.0)];
    terms.extend(ctm.iter().chain(&ttc).map(|&v| (v, -1.0)));
    pb.add_constraint("totcost", terms, Relation::Eq, np as f64 * config.cqc);
    pb.set_objective(Sense::Minimize, [(totcost, 1.0)], 0.0);

    let binaries = pb.num_binaries();
    let stats = ModelStats {
        constraints: pb.num_constraints(),
        binaries,
        continuous: pb.num_vars() - binaries,
    };
    Ok(BuiltModel {
        problem: pb,
        config: config.clone(),
        demand: demand.clone(),
        active,
        periods: nt,
        e1,
        x1,
        x2,
        y1,
        y2,
        outc,
        lsr,
        lsa,
        inm,
        outm,
        mso,
        ftd,
        inh,
        ctm,
        ttc,
        ctt,
        stt,
        trt,
        atrt,
        totcost,
        stats,
    })
}
