#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use twomode_core::fockspace::{basis_dim, BasisIndex, BlockState, CutoffPolicy, Sector, StateVector};
use twomode_core::linalg::{inverse_sqrt, CMatrix};
use twomode_core::measurement::{matrix_povm, Povm};
use twomode_core::spinops::Direction;

pub fn cutoff(n_max: u32) -> CutoffPolicy {
    CutoffPolicy::with_n_max(n_max)
}

pub fn ginibre(rng: &mut impl Rng, rows: usize, cols: usize) -> CMatrix {
    DMatrix::from_fn(rows, cols, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

/// Random full-rank density matrix of dimension `d`.
pub fn random_density(rng: &mut impl Rng, d: usize) -> CMatrix {
    let g = ginibre(rng, d, d);
    let rho = &g * g.adjoint();
    let tr = rho.trace();
    rho / tr
}

pub fn random_direction(rng: &mut impl Rng) -> Direction {
    loop {
        let v: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        if let Ok(d) = Direction::normalized(v[0], v[1], v[2]) {
            return d;
        }
    }
}

pub fn random_weights(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Block state on a random subset of sectors `0..=n_max`.
pub fn random_block_state(rng: &mut impl Rng, n_max: u32) -> BlockState {
    let mut totals: Vec<u32> = (0..=n_max).filter(|_| rng.gen_bool(0.6)).collect();
    if totals.is_empty() {
        totals.push(n_max);
    }
    let w = random_weights(rng, totals.len());
    let sectors = totals
        .iter()
        .zip(w)
        .map(|(&n, q)| Sector {
            total: n,
            weight: q,
            rho: random_density(rng, n as usize + 1),
        })
        .collect();
    BlockState::new(sectors, cutoff(n_max)).unwrap()
}

/// Random pure state spread over every sector up to `n_max`.
pub fn random_pure_state(rng: &mut impl Rng, n_max: u32) -> StateVector {
    let amps: Vec<(BasisIndex, Complex64)> = (0..basis_dim(n_max))
        .map(|p| {
            (
                BasisIndex::from_position(p),
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            )
        })
        .collect();
    StateVector::normalized(amps, cutoff(n_max)).unwrap()
}

/// Random POVM with `k` outcomes, block diagonal in `N` but with
/// off-diagonal structure inside each sector.
pub fn random_number_diagonal_povm(rng: &mut impl Rng, n_max: u32, k: usize) -> Povm {
    let dim = basis_dim(n_max);
    let mut effects = vec![CMatrix::zeros(dim, dim); k];
    for n in 0..=n_max {
        let d = n as usize + 1;
        let parts: Vec<CMatrix> = (0..k)
            .map(|_| {
                let g = ginibre(rng, d, d);
                &g * g.adjoint()
            })
            .collect();
        let sum = parts.iter().fold(CMatrix::zeros(d, d), |a, b| a + b);
        let s = inverse_sqrt(&sum).unwrap();
        let start = BasisIndex::from_modes(n, 0).position();
        for (e, a) in effects.iter_mut().zip(&parts) {
            let block = &s * a * &s;
            let block = (&block + block.adjoint()) * Complex64::new(0.5, 0.0);
            e.view_mut((start, start), (d, d)).copy_from(&block);
        }
    }
    matrix_povm(effects, &cutoff(n_max)).unwrap()
}

/// Random POVM with `k` outcomes on the full truncated space, generally
/// coupling different number sectors.
pub fn random_coherent_povm(rng: &mut impl Rng, n_max: u32, k: usize) -> Povm {
    let dim = basis_dim(n_max);
    let parts: Vec<CMatrix> = (0..k)
        .map(|_| {
            let g = ginibre(rng, dim, dim);
            &g * g.adjoint()
        })
        .collect();
    let sum = parts.iter().fold(CMatrix::zeros(dim, dim), |a, b| a + b);
    let s = inverse_sqrt(&sum).unwrap();
    let effects = parts
        .iter()
        .map(|a| {
            let e = &s * a * &s;
            (&e + e.adjoint()) * Complex64::new(0.5, 0.0)
        })
        .collect();
    matrix_povm(effects, &cutoff(n_max)).unwrap()
}
