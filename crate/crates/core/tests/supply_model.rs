use mipred::milp::{presolve, solve_milp, MilpStatus, PresolveResult, SolverConfig};
use mipred::supply::{
    build_model, extract_solution, fix_facilities, model_stats, Arrival, Center, DemandProfile,
    Facility, Mode, SupplyChainConfig, SupplyError,
};

fn profile(horizon: usize, centers: usize, arrivals: &[(usize, usize)]) -> DemandProfile {
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

/// One center, one hospital, one mode, six facilities, a single period and
/// no lead times.
fn trivial_config() -> SupplyChainConfig {
    let facilities = (1..=6)
        .map(|i| Facility {
            name: format!("m{i}"),
            capacity: 4,
            cim: 10.0 * i as f64,
            cfvm: 1.0,
            u1: vec![vec![1.0]],
            u2: vec![vec![1.0]],
        })
        .collect();
    SupplyChainConfig {
        facilities,
        centers: vec![Center {
            name: "c1".into(),
            hospital: "h1".into(),
        }],
        modes: vec![Mode {
            name: "road".into(),
            tt1: 0,
            tt2: 0,
        }],
        cvm: 1.0,
        cqc: 0.5,
        tls: 0,
        tmfe: 0,
        tqc: 0,
        nd: 0,
        max_facilities: 6,
        fmin: 0.0,
        fmax: 1.0,
        horizon: 1,
        nt: Some(1),
        center_daily_cap: 8,
    }
}

/// Row and binary counts obtained by listing every equation instance for a
/// model where each patient has a single reachable arrival and delivery
/// time per facility (one mode).
fn enumerated_counts(
    patients: usize,
    centers: usize,
    k: usize,
    capacity_rows: usize,
) -> (usize, usize) {
    let h = centers;
    let per_patient_rows = 1 // leukapheresis balance
        + 4 * k              // transport balance, Y1 link, two flow bounds per leg
        + 3 * k              // INM, manufacturing and release balances
        + 4 * k * h          // delivery balance, Y2 link, two flow bounds per return leg
        + 1                  // dispatch
        + 2                  // one outbound and one return leg
        + h                  // co-location
        + h                  // hospital arrival balance
        + 5                  // CTT, STT, ordering, TRT, turnaround bound
        + 2; // CTM, TTC
    let global_rows = centers * k + k * h + 4;
    let binaries = k + centers * k + k * h + patients * (k + k * h);
    (
        patients * per_patient_rows + global_rows + capacity_rows,
        binaries,
    )
}

#[test]
fn trivial_instance_builds_and_restriction_shrinks_it() {
    let cfg = trivial_config();
    let demand = profile(1, 1, &[(0, 1), (0, 1)]);
    let full = build_model(&cfg, &demand, &[0, 1, 2, 3, 4, 5]).unwrap();
    let reduced = build_model(&cfg, &demand, &[1]).unwrap();
    let (fs, rs) = (model_stats(&full), model_stats(&reduced));
    assert_eq!((fs.constraints, fs.binaries), enumerated_counts(2, 1, 6, 0));
    assert_eq!((rs.constraints, rs.binaries), enumerated_counts(2, 1, 1, 0));
    assert!(rs.constraints < fs.constraints && rs.binaries < fs.binaries);
    let (dc, db) = rs.reduction_vs(&fs);
    assert!((dc - (1.0 - rs.constraints as f64 / fs.constraints as f64)).abs() < 1e-15);
    assert!((db - (1.0 - 7.0 / 42.0)).abs() < 1e-15);

    let s = solve_milp(&full.problem, &SolverConfig::default()).unwrap();
    let sol = extract_solution(&full, &s).unwrap();
    // Cheapest facility: m1 with cim 10 + cfvm 1.
    assert_eq!(sol.established, vec![0]);
    assert!((sol.totcost - (11.0 + 2.0 * 1.0 + 2.0 * 0.5)).abs() < 1e-9);
}

#[test]
fn desk_counts_match_enumeration() {
    let cfg = SupplyChainConfig::desk();
    let demand = profile(20, 2, &[(0, 1), (1, 4), (1, 15)]);
    let all: Vec<usize> = (0..6).collect();
    let b = build_model(&cfg, &demand, &all).unwrap();
    // Facility arrivals on days 3, 6 and 17 with 7-day stays: one window
    // row per distinct arrival day and facility.
    let expected = enumerated_counts(3, 2, 6, 3 * 6);
    assert_eq!((b.stats.constraints, b.stats.binaries), expected);
}

#[test]
fn single_patient_costs_follow_the_definitions() {
    let mut cfg = trivial_config();
    cfg.facilities.truncate(1);
    cfg.facilities[0].capacity = 4;
    cfg.facilities[0].u1 = vec![vec![3.0]];
    cfg.facilities[0].u2 = vec![vec![2.0]];
    cfg.modes[0] = Mode {
        name: "road".into(),
        tt1: 2,
        tt2: 3,
    };
    cfg.nd = 10;
    cfg.nt = None;
    let demand = profile(1, 1, &[(0, 1)]);
    let b = build_model(&cfg, &demand, &[0]).unwrap();
    let s = solve_milp(&b.problem, &SolverConfig::default()).unwrap();
    let sol = extract_solution(&b, &s).unwrap();
    let f = &cfg.facilities[0];
    assert!((sol.ctm[0] - ((f.cim + f.cfvm) / 1.0 + cfg.cvm)).abs() < 1e-12);
    assert!((sol.ttc[0] - (2.0 * 3.0 + 3.0 * 2.0)).abs() < 1e-12);
    assert_eq!(sol.trt[0], 5.0);
    assert!((s.objective.unwrap() - (f.cim + f.cfvm + cfg.cvm + 12.0 + cfg.cqc)).abs() < 1e-9);
}

#[test]
fn two_patient_fixture_matches_hand_evaluation() {
    // Patients at c1 on day 1 and c2 on day 2 overlap in manufacturing, so
    // a single-line facility cannot serve both. By hand:
    //   m6 alone: 12.87 + (1.15 + 1.12) + (0.30 + 0.29) = 15.73
    //   m3 alone: 15.13 + (0.55 + 0.57) + (0.60 + 0.62) = 17.47
    //   m1 + m6:  24.18 + (0.35 + 0.33) + (0.30 + 0.29) = 25.45
    // so the optimum is m6 with materials 2 * 2.5 and QC 2 * 0.75 on top.
    let cfg = SupplyChainConfig::desk();
    let demand = profile(20, 2, &[(0, 1), (1, 2)]);
    let b = build_model(&cfg, &demand, &(0..6).collect::<Vec<_>>()).unwrap();
    let s = solve_milp(
        &b.problem,
        &SolverConfig {
            mipgap: 0.0,
            ..Default::default()
        },
    )
    .unwrap();
    let sol = extract_solution(&b, &s).unwrap();
    assert_eq!(sol.established, vec![5]);
    let expected = 15.73 + 5.0 + 1.5;
    assert!((sol.totcost - expected).abs() < 1e-9, "{}", sol.totcost);
    assert!((s.objective.unwrap() - expected).abs() < 1e-9);
    for m in [0, 1, 2, 3, 4] {
        assert!(sol.ratio[m].iter().all(|&r| r == 0.0));
    }
    assert!(sol.ratio[5].iter().all(|&r| (0.0..=1.0).contains(&r)));
    assert_eq!(sol.ratio[5].iter().filter(|&&r| r == 1.0).count(), 6);
}

#[test]
fn presolve_removes_co_location_blocked_legs() {
    let cfg = SupplyChainConfig::desk();
    let demand = profile(20, 2, &[(0, 1), (1, 2), (0, 9)]);
    let b = build_model(&cfg, &demand, &(0..6).collect::<Vec<_>>()).unwrap();
    let PresolveResult::Reduced(r) = presolve(&b.problem).unwrap() else {
        panic!("feasible model")
    };
    assert!(r.problem.num_vars() < b.problem.num_vars());
    for (&(p, _, h, _, _), v) in &b.y2 {
        if h != demand.arrivals[p].center {
            assert_eq!(r.fixed.get(v), Some(&0.0));
        }
    }
}

#[test]
fn guards() {
    let cfg = SupplyChainConfig::desk();
    let empty = DemandProfile::new(20, 2, vec![]).unwrap();
    assert!(matches!(
        build_model(&cfg, &empty, &[0]),
        Err(SupplyError::NoPatients)
    ));
    let d = profile(20, 2, &[(0, 3)]);
    assert!(matches!(
        build_model(&cfg, &d, &[]),
        Err(SupplyError::EmptyFacilitySet)
    ));
    assert!(matches!(
        build_model(&cfg, &d, &[9]),
        Err(SupplyError::UnknownFacility(9))
    ));
    let mut short = cfg.clone();
    short.nt = Some(8);
    assert!(matches!(
        build_model(&short, &d, &[0]),
        Err(SupplyError::HorizonOverflow { .. })
    ));
}

#[test]
fn identity_and_monotone_relaxation() {
    let cfg = SupplyChainConfig::desk();
    let demand = profile(20, 2, &[(0, 1), (1, 2), (0, 3), (1, 8)]);
    let exact = SolverConfig {
        mipgap: 0.0,
        ..Default::default()
    };
    let nested: [&[usize]; 4] = [&[5], &[2, 5], &[0, 2, 5], &[0, 1, 2, 3, 4, 5]];
    let mut last = f64::INFINITY;
    let mut objectives = Vec::new();
    for set in nested {
        let b = build_model(&cfg, &demand, set).unwrap();
        let s = solve_milp(&b.problem, &exact).unwrap();
        let z = if s.status == MilpStatus::Optimal {
            s.objective.unwrap()
        } else {
            f64::INFINITY
        };
        assert!(z <= last + 1e-9, "enlarging the set increased the optimum");
        last = z;
        objectives.push(z);
    }
    let full = build_model(&cfg, &demand, &[0, 1, 2, 3, 4, 5]).unwrap();
    let again = solve_milp(&full.problem, &exact).unwrap();
    assert_eq!(again.objective.unwrap(), objectives[3]);
}

#[test]
fn solutions_respect_capacity_and_co_location() {
    let cfg = SupplyChainConfig::desk();
    let demand = profile(20, 2, &[(0, 1), (1, 1), (0, 2), (1, 3), (0, 9)]);
    let b = build_model(&cfg, &demand, &(0..6).collect::<Vec<_>>()).unwrap();
    let s = solve_milp(&b.problem, &SolverConfig::default()).unwrap();
    let sol = extract_solution(&b, &s).unwrap();
    assert!(sol.established.len() <= cfg.max_facilities);
    let d = cfg.manufacturing_days();
    for m in 0..6 {
        for t in 1..=b.periods {
            let busy = sol
                .routes
                .iter()
                .filter(|r| r.facility == m && r.at_facility <= t && t < r.at_facility + d)
                .count();
            assert!(busy <= cfg.facilities[m].capacity as usize);
        }
    }
    for r in &sol.routes {
        assert_eq!(r.hospital, r.center);
        assert!(sol.established.contains(&r.facility));
        assert!(r.delivered - r.check_in <= cfg.nd);
    }
}

#[test]
fn fix_mode_pins_the_establishment_vector() {
    let cfg = SupplyChainConfig::desk();
    let demand = profile(20, 2, &[(0, 1)]);
    let mut b = build_model(&cfg, &demand, &(0..6).collect::<Vec<_>>()).unwrap();
    fix_facilities(&mut b, &[2]).unwrap();
    let s = solve_milp(&b.problem, &SolverConfig::default()).unwrap();
    assert_eq!(extract_solution(&b, &s).unwrap().established, vec![2]);
    let mut small = build_model(&cfg, &demand, &[1]).unwrap();
    assert!(matches!(
        fix_facilities(&mut small, &[2]),
        Err(SupplyError::UnknownFacility(2))
    ));
}
