use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twomode_core::fisher::qfi_block;
use twomode_core::fockspace::{make_named_state, NamedState, SpinCoherentSector};
use twomode_core::spinops::Direction;
use twomode_core::witness::{
    bounds_for_moments, entanglement_depth, kprod_bound_fixed, kprod_bound_fluctuating, sensitivity_bounds, Regime,
};

#[test]
fn producibility_bound_monotone_and_tight() {
    for n in 1..=50u32 {
        let mut prev = 0.0;
        for k in 1..=n {
            let b = kprod_bound_fixed(n, k).unwrap();
            assert!(b >= prev, "N={n}, k={k}");
            prev = b;
        }
        assert_eq!(prev, (n * n) as f64);
        assert_eq!(kprod_bound_fixed(n, 1).unwrap(), n as f64);
        let w = BTreeMap::from([(n, 1.0)]);
        assert_eq!(kprod_bound_fluctuating(&w, n).unwrap(), (n * n) as f64);
    }
}

#[test]
fn depth_curve_nondecreasing() {
    let w = BTreeMap::from([(2, 0.2), (5, 0.3), (9, 0.5)]);
    let r = entanglement_depth(30.0, &w).unwrap();
    assert!(r.depth >= 1);
    let values: Vec<f64> = r.bound_curve.values().copied().collect();
    assert!(values.windows(2).all(|p| p[1] >= p[0]));
    assert!(r.bound_curve[&r.depth] >= 30.0 - 1e-9);
    if r.depth > 1 {
        assert!(r.bound_curve[&(r.depth - 1)] < 30.0);
    }
}

#[test]
fn separable_states_stay_below_shot_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..30 {
        let k = rng.gen_range(1..=4);
        let mut sectors = Vec::new();
        let mut total = 0.0;
        for i in 0..k {
            let w = rng.gen_range(0.1..1.0);
            total += w;
            sectors.push(SpinCoherentSector {
                n: 1 + 2 * i + rng.gen_range(0..2),
                weight: w,
                theta: rng.gen_range(0.0..3.2),
                phi: rng.gen_range(0.0..6.3),
            });
        }
        for s in &mut sectors {
            s.weight /= total;
        }
        let spec = NamedState::ProductSpinCoherent { sectors };
        let state = make_named_state(&spec, &spec.default_cutoff(1e-12).unwrap()).unwrap();
        let block = state.project_number_sectors();
        let mean_n = state.moments().mean_n;
        for dir in Direction::fibonacci_sphere(20) {
            assert!(qfi_block(&block, dir) <= mean_n + 1e-9);
        }
    }
}

#[test]
fn heisenberg_branches_meet_at_m_cl() {
    for (mean_n, mean_n2) in [(2.5, 8.5), (1.0, 4.0), (3.0, 9.0), (10.0, 400.0)] {
        let m_cl = mean_n2 / (mean_n * mean_n);
        let r = sensitivity_bounds(mean_n, mean_n2, m_cl.max(1.0)).unwrap();
        if m_cl >= 1.0 {
            assert!((1.0 / (m_cl * mean_n) - r.qcr_ceiling).abs() < 1e-12 * r.qcr_ceiling.max(1.0));
            assert_eq!(r.regime, Regime::CentralLimit);
        }
        for m in [1.0, 3.0, 50.0, 1e4] {
            let r = sensitivity_bounds(mean_n, mean_n2, m).unwrap();
            assert_eq!(r.heisenberg, r.qcr_ceiling.max(1.0 / (m * mean_n)));
            assert!(r.shot_noise >= r.qcr_ceiling);
        }
    }
    let r = sensitivity_bounds(1.0, 4.0, 1.0).unwrap();
    assert_eq!(r.qcr_ceiling, 0.5);
    assert_eq!(r.heisenberg, 1.0);
}

#[test]
fn ssw_branch_structure() {
    let mut prev: Option<(f64, f64, f64)> = None;
    for m in [100u32, 1000, 10000] {
        let spec = NamedState::Ssw { m };
        let state = make_named_state(&spec, &spec.default_cutoff(1e-12).unwrap()).unwrap();
        let r = bounds_for_moments(&state.moments(), 1.0).unwrap();
        let inv_n = 1.0 / r.mean_n;
        if let Some((ceiling, inv, m_cl)) = prev {
            // the variance branch falls roughly like 1/sqrt(M), the mean branch only logarithmically
            assert!(r.qcr_ceiling < ceiling / 2.5);
            assert!(inv_n > inv / 2.0);
            assert!(r.m_cl_threshold > m_cl);
        }
        prev = Some((r.qcr_ceiling, inv_n, r.m_cl_threshold));
    }
}
