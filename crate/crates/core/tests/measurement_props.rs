mod common;

use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twomode_core::fockspace::{make_named_state, NamedState, State};
use twomode_core::measurement::{named_povm, outcome_distribution, sector_distribution, OutcomeModel, PovmKind};
use twomode_core::spinops::{Direction, U2AxisParams};

use common::*;

const KINDS: [PovmKind; 4] =
    [PovmKind::RelativeNumber, PovmKind::Port1Number, PovmKind::ParityPort1, PovmKind::TotalAndRelative];

#[test]
fn named_povms_are_complete() {
    for n_max in [0, 1, 4, 9] {
        for kind in KINDS {
            assert!(named_povm(kind, &cutoff(n_max)).unwrap().completeness_defect() < 1e-9);
        }
    }
}

#[test]
fn sector_mixture_reproduces_total_distribution() {
    let spec = NamedState::Tmsv { r: 0.5, psi: 0.0 };
    let state = make_named_state(&spec, &spec.default_cutoff(1e-12).unwrap()).unwrap();
    let povm = named_povm(PovmKind::RelativeNumber, state.cutoff()).unwrap();
    for theta in [0.0, 0.4, 2.2] {
        let total = outcome_distribution(&state, &U2AxisParams::su2(Direction::y(), theta), &povm).unwrap();
        let parts = sector_distribution(&state, Direction::y(), theta, &povm).unwrap();
        for (label, p) in &total.entries {
            let mixed: f64 = parts.values().map(|(q, d)| q * d.probability(label)).sum();
            assert!((mixed - p).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn probabilities_complete_and_nonnegative(seed in any::<u64>(), theta in -7.0f64..7.0, phi0 in -4.0f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_max = rng.gen_range(1..=4);
        let state: State = random_pure_state(&mut rng, n_max).into();
        let dir = random_direction(&mut rng);
        let povm = if rng.gen_bool(0.5) {
            random_coherent_povm(&mut rng, n_max, 3)
        } else {
            random_number_diagonal_povm(&mut rng, n_max, 3)
        };
        let model = OutcomeModel::new_full(&state, dir, &povm).unwrap();
        let p = model.probabilities(theta, phi0).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(p.iter().all(|&x| x >= -1e-12));
    }

    #[test]
    fn phi0_irrelevant_without_coherences_on_one_side(seed in any::<u64>(), theta in 0.0f64..(2.0 * PI), phi0 in -4.0f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_max = rng.gen_range(1..=4);
        let dir = random_direction(&mut rng);

        // incoherent probe, arbitrary POVM
        let block: State = random_block_state(&mut rng, n_max).into();
        let coherent_povm = random_coherent_povm(&mut rng, n_max, 3);
        let model = OutcomeModel::new_full(&block, dir, &coherent_povm).unwrap();
        let a = model.distribution(theta, 0.0).unwrap();
        let b = model.distribution(theta, phi0).unwrap();
        prop_assert!(a.max_deviation(&b) <= 1e-12);

        // coherent probe, number-diagonal POVM
        let pure: State = random_pure_state(&mut rng, n_max).into();
        let diag = random_number_diagonal_povm(&mut rng, n_max, 3);
        let model = OutcomeModel::new_full(&pure, dir, &diag).unwrap();
        let a = model.distribution(theta, 0.0).unwrap();
        let b = model.distribution(theta, phi0).unwrap();
        prop_assert!(a.max_deviation(&b) <= 1e-12);
        // and the sector path agrees with the full one
        let sectored = OutcomeModel::new(&pure, dir, &diag).unwrap();
        prop_assert!(sectored.is_sectored());
        prop_assert!(sectored.distribution(theta, 0.0).unwrap().max_deviation(&a) <= 1e-12);
    }
}
