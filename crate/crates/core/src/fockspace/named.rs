//! Constructors for the example probe states.
//!
//! Mode notation `|n₁, n₂⟩` is used for all parameters below; e.g. the NOON
//! state is `(|N,0⟩ + e^{iφ}|0,N⟩)/√2` and twin-Fock is `|n,n⟩` (total `2n`).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{BasisIndex, BlockState, CutoffPolicy, Sector, State, StateVector};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinCoherentSector {
    pub n: u32,
    pub weight: f64,
    /// Polar angle of the common single-particle Bloch vector.
    pub theta: f64,
    #[serde(default)]
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "snake_case")]
pub enum NamedState {
    Noon {
        n: u32,
        #[serde(default)]
        phi: f64,
    },
    /// Incoherent mixture of NOON states, either with explicit `[N, Q_N]`
    /// weights or with `Q_N = tanh^{2N} r / cosh² r`.
    NoonMixture {
        #[serde(default)]
        weights: Option<Vec<(u32, f64)>>,
        #[serde(default)]
        squeezing_r: Option<f64>,
    },
    Moon {
        n: u32,
        m: u32,
        #[serde(default)]
        phi: f64,
    },
    VacuumCoherence {
        n: u32,
        mean_n: f64,
        #[serde(default)]
        phi: f64,
    },
    TwinFock {
        n: u32,
    },
    Ssw {
        m: u32,
    },
    Tmsv {
        r: f64,
        #[serde(default)]
        psi: f64,
    },
    ProductSpinCoherent {
        sectors: Vec<SpinCoherentSector>,
    },
    BiasedDemoMixture {
        p: f64,
        m: u32,
    },
}

/// JSON state description: `{"type": .., "params": {..}, "cutoff": {..}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    #[serde(flatten)]
    pub state: NamedState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<CutoffPolicy>,
}

impl StateSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Effective cutoff: the declared one, or the smallest admissible one.
    pub fn resolved_cutoff(&self) -> Result<CutoffPolicy> {
        match self.cutoff {
            Some(c) => Ok(c),
            None => self.state.default_cutoff(1e-12),
        }
    }

    pub fn build(&self) -> Result<State> {
        make_named_state(&self.state, &self.resolved_cutoff()?)
    }
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn squeezing_pairs_needed(r: f64, tail_tolerance: f64) -> u32 {
    // smallest K with tanh^{2(K+1)} r <= tolerance
    let t2 = r.tanh().powi(2);
    if t2 == 0.0 {
        return 0;
    }
    if tail_tolerance <= 0.0 || t2 >= 1.0 {
        return u32::MAX / 4;
    }
    let k = (tail_tolerance.ln() / t2.ln()).ceil() - 1.0;
    k.max(0.0) as u32
}

/// `A² = 1 / Σ_{n=0}^{M} (n+1)^{-2}` for the SSW superposition.
pub fn ssw_normalization(m: u32) -> f64 {
    1.0 / (0..=m).rev().map(|n| 1.0 / ((n as f64 + 1.0).powi(2))).sum::<f64>()
}

impl NamedState {
    /// Smallest cutoff containing the full support, or for infinite-support
    /// states the smallest one whose discarded mass is below `tail_tolerance`.
    pub fn default_cutoff(&self, tail_tolerance: f64) -> Result<CutoffPolicy> {
        let n_max = match self {
            NamedState::Noon { n, .. } => *n,
            NamedState::NoonMixture { weights, squeezing_r } => match (weights, squeezing_r) {
                (Some(w), _) => w.iter().map(|&(n, _)| n).max().unwrap_or(0),
                (None, Some(r)) => squeezing_pairs_needed(*r, tail_tolerance),
                (None, None) => 0,
            },
            NamedState::Moon { n, m, .. } => (*n).max(*m),
            NamedState::VacuumCoherence { n, .. } => *n,
            NamedState::TwinFock { n } => 2 * n,
            NamedState::Ssw { m } => 2 * m,
            NamedState::Tmsv { r, .. } => 2 * squeezing_pairs_needed(*r, tail_tolerance),
            NamedState::ProductSpinCoherent { sectors } => sectors.iter().map(|s| s.n).max().unwrap_or(0),
            NamedState::BiasedDemoMixture { m, .. } => *m,
        };
        CutoffPolicy::new(n_max, tail_tolerance)
    }
}

fn require_fits(n: u32, cutoff: &CutoffPolicy) -> Result<()> {
    if n > cutoff.n_max {
        return Err(Error::CutoffTooSmall {
            n_max: cutoff.n_max,
            tail: 1.0,
            tolerance: cutoff.tail_tolerance,
        });
    }
    Ok(())
}

fn noon_vector(n: u32, phi: f64) -> Vec<(BasisIndex, Complex64)> {
    if n == 0 {
        return vec![(BasisIndex::from_modes(0, 0), c(1.0))];
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    vec![
        (BasisIndex::from_modes(n, 0), c(s)),
        (BasisIndex::from_modes(0, n), Complex64::from_polar(s, phi)),
    ]
}

fn noon_block(n: u32) -> CMatrix {
    let v = CVector::from_fn(n as usize + 1, |k, _| {
        if n == 0 {
            c(1.0)
        } else if k == 0 || k == n as usize {
            c(std::f64::consts::FRAC_1_SQRT_2)
        } else {
            c(0.0)
        }
    });
    &v * v.adjoint()
}

/// Product of `n` identical qubits `cos(θ/2)|a₁⟩ + e^{iφ} sin(θ/2)|a₂⟩`,
/// symmetrized into the sector-`n` Fock block.
fn spin_coherent_vector(n: u32, theta: f64, phi: f64) -> CVector {
    let (cs, sn) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let mut log_binom = 0.0_f64;
    CVector::from_fn(n as usize + 1, |k, _| {
        if k > 0 {
            log_binom += ((n as usize - k + 1) as f64).ln() - (k as f64).ln();
        }
        let mag = (0.5 * log_binom).exp() * cs.powi((n as usize - k) as i32) * sn.powi(k as i32);
        Complex64::from_polar(mag, phi * k as f64)
    })
}

pub fn make_named_state(spec: &NamedState, cutoff: &CutoffPolicy) -> Result<State> {
    match spec {
        NamedState::Noon { n, phi } => {
            require_fits(*n, cutoff)?;
            Ok(StateVector::new(noon_vector(*n, *phi), *cutoff)?.into())
        }
        NamedState::NoonMixture { weights, squeezing_r } => {
            let (weights, loss) = match (weights, squeezing_r) {
                (Some(w), None) => {
                    if w.is_empty() {
                        return Err(Error::param("noon_mixture needs at least one weight"));
                    }
                    (w.clone(), 0.0)
                }
                (None, Some(r)) => {
                    if !(*r >= 0.0) {
                        return Err(Error::param(format!("squeezing r must be >= 0, got {r}")));
                    }
                    let t2 = r.tanh().powi(2);
                    let norm = 1.0 / r.cosh().powi(2);
                    let w: Vec<_> = (0..=cutoff.n_max)
                        .map(|n| (n, norm * t2.powi(n as i32)))
                        .collect();
                    let tail = t2.powi(cutoff.n_max as i32 + 1);
                    if tail > cutoff.tail_tolerance {
                        return Err(Error::CutoffTooSmall {
                            n_max: cutoff.n_max,
                            tail,
                            tolerance: cutoff.tail_tolerance,
                        });
                    }
                    (w, tail)
                }
                _ => {
                    return Err(Error::param(
                        "noon_mixture takes exactly one of `weights` or `squeezing_r`",
                    ))
                }
            };
            let total: f64 = weights.iter().map(|&(_, q)| q).sum();
            if weights.iter().any(|&(_, q)| !(q >= 0.0)) || !(total > 0.0) {
                return Err(Error::param("noon_mixture weights must be nonnegative and not all zero"));
            }
            if loss == 0.0 && (total - 1.0).abs() > 1e-10 {
                return Err(Error::param(format!("noon_mixture weights sum to {total}")));
            }
            let mut sectors = Vec::new();
            for (n, q) in weights {
                require_fits(n, cutoff)?;
                sectors.push(Sector {
                    total: n,
                    weight: q / total,
                    rho: noon_block(n),
                });
            }
            Ok(BlockState::new(sectors, *cutoff)?.with_truncation_loss(loss).into())
        }
        NamedState::Moon { n, m, phi } => {
            if *n == 0 || *m == 0 {
                return Err(Error::param("moon requires N > 0 and M > 0"));
            }
            require_fits((*n).max(*m), cutoff)?;
            let total = (*n + *m) as f64;
            let amps = vec![
                (
                    BasisIndex::from_modes(*m, 0),
                    Complex64::from_polar((*n as f64 / total).sqrt(), *phi),
                ),
                (BasisIndex::from_modes(0, *n), c((*m as f64 / total).sqrt())),
            ];
            Ok(StateVector::normalized(amps, *cutoff)?.into())
        }
        NamedState::VacuumCoherence { n, mean_n, phi } => {
            if *n == 0 || !(*mean_n >= 0.0) || *mean_n > *n as f64 {
                return Err(Error::param(format!(
                    "vacuum_coherence requires N > 0 and 0 <= <N> <= N (got N={n}, <N>={mean_n})"
                )));
            }
            require_fits(*n, cutoff)?;
            let p = mean_n / *n as f64;
            let amps = vec![
                (BasisIndex::from_modes(0, 0), c((1.0 - p).sqrt())),
                (BasisIndex::from_modes(*n, 0), Complex64::from_polar(p.sqrt(), *phi)),
            ];
            Ok(StateVector::new(amps, *cutoff)?.into())
        }
        NamedState::TwinFock { n } => {
            require_fits(2 * n, cutoff)?;
            Ok(StateVector::new([(BasisIndex::from_modes(*n, *n), c(1.0))], *cutoff)?.into())
        }
        NamedState::Ssw { m } => {
            let kept = (*m).min(cutoff.n_max / 2);
            let a2 = ssw_normalization(*m);
            let kept_mass: f64 = a2 * (0..=kept).rev().map(|n| 1.0 / ((n as f64 + 1.0).powi(2))).sum::<f64>();
            let tail = (1.0 - kept_mass).max(0.0);
            if kept < *m && tail > cutoff.tail_tolerance {
                return Err(Error::CutoffTooSmall {
                    n_max: cutoff.n_max,
                    tail,
                    tolerance: cutoff.tail_tolerance,
                });
            }
            let amps = (0..=kept).map(|n| (BasisIndex::from_modes(n, n), c(1.0 / (n as f64 + 1.0))));
            let tail = if kept < *m { tail } else { 0.0 };
            Ok(StateVector::normalized(amps, *cutoff)?.with_truncation_loss(tail).into())
        }
        NamedState::Tmsv { r, psi } => {
            if !(*r >= 0.0) || !r.is_finite() {
                return Err(Error::param(format!("tmsv requires r >= 0, got {r}")));
            }
            let pairs = cutoff.n_max / 2;
            let t = r.tanh();
            let tail = t.powi(2).powi(pairs as i32 + 1);
            if tail > cutoff.tail_tolerance {
                return Err(Error::CutoffTooSmall {
                    n_max: cutoff.n_max,
                    tail,
                    tolerance: cutoff.tail_tolerance,
                });
            }
            let inv_cosh = 1.0 / r.cosh();
            let amps = (0..=pairs).map(|k| {
                let mag = inv_cosh * t.powi(k as i32);
                (BasisIndex::from_modes(k, k), Complex64::from_polar(mag, -psi * k as f64))
            });
            Ok(StateVector::normalized(amps, *cutoff)?.with_truncation_loss(tail).into())
        }
        NamedState::ProductSpinCoherent { sectors } => {
            if sectors.is_empty() {
                return Err(Error::param("product_spin_coherent needs at least one sector"));
            }
            let total: f64 = sectors.iter().map(|s| s.weight).sum();
            if sectors.iter().any(|s| !(s.weight >= 0.0)) || (total - 1.0).abs() > 1e-10 {
                return Err(Error::param("product_spin_coherent weights must be nonnegative and sum to 1"));
            }
            let mut blocks = Vec::new();
            for s in sectors {
                require_fits(s.n, cutoff)?;
                let v = spin_coherent_vector(s.n, s.theta, s.phi);
                let v = v.unscale(v.norm());
                blocks.push(Sector {
                    total: s.n,
                    weight: s.weight / total,
                    rho: &v * v.adjoint(),
                });
            }
            Ok(BlockState::new(blocks, *cutoff)?.into())
        }
        NamedState::BiasedDemoMixture { p, m } => {
            if !(*p > 0.0 && *p <= 1.0) || *m == 0 {
                return Err(Error::param(format!(
                    "biased_demo_mixture requires 0 < p <= 1 and M > 0 (got p={p}, M={m})"
                )));
            }
            require_fits(*m, cutoff)?;
            let sectors = vec![
                Sector {
                    total: 0,
                    weight: 1.0 - p,
                    rho: CMatrix::identity(1, 1),
                },
                Sector {
                    total: *m,
                    weight: *p,
                    rho: noon_block(*m),
                },
            ];
            Ok(BlockState::new(sectors, *cutoff)?.into())
        }
    }
}
