//! Truncated two-mode Fock space.
//!
//! Basis states are labelled `|N, μ⟩` with `N = n₁ + n₂` and `μ = (n₁ − n₂)/2`.
//! The global ordering used everywhere in the crate is sector-major: ascending
//! `N`, and within a sector descending `μ` (equivalently ascending `n₂`). With
//! this ordering the position of `|N, μ⟩` is `N(N+1)/2 + n₂`.

mod named;
mod state;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use named::{make_named_state, ssw_normalization, NamedState, SpinCoherentSector, StateSpec};
pub use state::{BlockState, GeneralState, Moments, Sector, State, StateVector};

pub const NORMALIZATION_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-10;
pub const COHERENCE_TOL: f64 = 1e-12;

/// Basis label `|N, μ⟩` with `μ` stored as the integer `2μ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisIndex {
    total: u32,
    mu_twice: i32,
}

impl BasisIndex {
    pub fn new(total: u32, mu_twice: i32) -> Result<Self> {
        if mu_twice.unsigned_abs() > total {
            return Err(Error::InvalidIndex {
                total,
                mu_twice,
                reason: "|2mu| exceeds N",
            });
        }
        if (total as i64 - mu_twice as i64).rem_euclid(2) != 0 {
            return Err(Error::InvalidIndex {
                total,
                mu_twice,
                reason: "2mu and N differ in parity",
            });
        }
        Ok(Self { total, mu_twice })
    }

    /// `|n₁, n₂⟩` in mode-occupation notation.
    pub fn from_modes(n1: u32, n2: u32) -> Self {
        Self {
            total: n1 + n2,
            mu_twice: n1 as i32 - n2 as i32,
        }
    }

    /// Index with `k = n₂` inside sector `total`.
    pub(crate) fn from_sector_offset(total: u32, k: usize) -> Self {
        Self::from_modes(total - k as u32, k as u32)
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn mu_twice(&self) -> i32 {
        self.mu_twice
    }

    pub fn mu(&self) -> f64 {
        self.mu_twice as f64 / 2.0
    }

    pub fn n1(&self) -> u32 {
        ((self.total as i32 + self.mu_twice) / 2) as u32
    }

    pub fn n2(&self) -> u32 {
        ((self.total as i32 - self.mu_twice) / 2) as u32
    }

    /// Position inside the sector block (`= n₂`).
    pub fn sector_offset(&self) -> usize {
        self.n2() as usize
    }

    /// Position in the global sector-major ordering.
    pub fn position(&self) -> usize {
        sector_start(self.total) + self.sector_offset()
    }

    pub fn from_position(pos: usize) -> Self {
        // largest N with N(N+1)/2 <= pos
        let mut n = (((8.0 * pos as f64 + 1.0).sqrt() - 1.0) / 2.0).floor() as usize;
        while sector_start(n as u32 + 1) <= pos {
            n += 1;
        }
        while sector_start(n as u32) > pos {
            n -= 1;
        }
        Self::from_sector_offset(n as u32, pos - sector_start(n as u32))
    }
}

impl Ord for BasisIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total
            .cmp(&other.total)
            .then_with(|| other.mu_twice.cmp(&self.mu_twice))
    }
}

impl PartialOrd for BasisIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// First global position of sector `n`.
pub fn sector_start(n: u32) -> usize {
    let n = n as usize;
    n * (n + 1) / 2
}

/// Dimension of the space truncated at `n_max` particles.
pub fn basis_dim(n_max: u32) -> usize {
    sector_start(n_max + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffPolicy {
    pub n_max: u32,
    #[serde(default = "default_tail_tolerance")]
    pub tail_tolerance: f64,
}

fn default_tail_tolerance() -> f64 {
    1e-12
}

impl CutoffPolicy {
    pub fn new(n_max: u32, tail_tolerance: f64) -> Result<Self> {
        if !(tail_tolerance >= 0.0) {
            return Err(Error::param(format!(
                "tail_tolerance must be nonnegative, got {tail_tolerance}"
            )));
        }
        Ok(Self {
            n_max,
            tail_tolerance,
        })
    }

    pub fn with_n_max(n_max: u32) -> Self {
        Self {
            n_max,
            tail_tolerance: default_tail_tolerance(),
        }
    }

    pub fn dim(&self) -> usize {
        basis_dim(self.n_max)
    }
}

pub fn basis_enumerate(cutoff: &CutoffPolicy) -> Vec<BasisIndex> {
    (0..=cutoff.n_max)
        .flat_map(|n| (0..=n as usize).map(move |k| BasisIndex::from_sector_offset(n, k)))
        .collect()
}
