//! Sensitivity limits and entanglement witnesses.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher::{qfi, qfi_direction_tensor};
use crate::fockspace::{Moments, State};
use crate::spinops::{Direction, Generator};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const DEPTH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    SmallM,
    CentralLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub shot_noise: f64,
    pub heisenberg: f64,
    pub qcr_ceiling: f64,
    pub m_cl_threshold: f64,
    pub regime: Regime,
    pub mean_n: f64,
    pub mean_n2: f64,
    pub m: f64,
}

/// Shot-noise and Heisenberg limits for a fluctuating particle number.
///
/// `m` is real so that the crossover can be tabulated on a continuous grid.
pub fn sensitivity_bounds(mean_n: f64, mean_n2: f64, m: f64) -> Result<BoundReport> {
    if !(mean_n > 0.0) || !mean_n.is_finite() {
        return Err(Error::param(format!("<N> must be positive, got {mean_n}")));
    }
    if !(mean_n2 >= mean_n * mean_n * (1.0 - 1e-12)) || !mean_n2.is_finite() {
        return Err(Error::param(format!(
            "<N^2>={mean_n2} is below <N>^2={}",
            mean_n * mean_n
        )));
    }
    if !(m >= 1.0) || !m.is_finite() {
        return Err(Error::param(format!("m must be at least 1, got {m}")));
    }
    let qcr_ceiling = 1.0 / (m * mean_n2).sqrt();
    let m_cl = mean_n2 / (mean_n * mean_n);
    Ok(BoundReport {
        shot_noise: 1.0 / (m * mean_n).sqrt(),
        heisenberg: qcr_ceiling.max(1.0 / (m * mean_n)),
        qcr_ceiling,
        m_cl_threshold: m_cl,
        regime: if m >= m_cl { Regime::CentralLimit } else { Regime::SmallM },
        mean_n,
        mean_n2,
        m,
    })
}

pub fn bounds_for_moments(moments: &Moments, m: f64) -> Result<BoundReport> {
    sensitivity_bounds(moments.mean_n, moments.mean_n2, m)
}

fn kprod_term(n: u32, k: u32) -> f64 {
    let s = n / k;
    let r = n - s * k;
    s as f64 * (k as f64).powi(2) + (r as f64).powi(2)
}

/// `s k² + r²` with `s = ⌊N/k⌋`, `r = N − s k`.
pub fn kprod_bound_fixed(n: u32, k: u32) -> Result<f64> {
    if k == 0 || k > n {
        return Err(Error::param(format!("k must satisfy 1 <= k <= N, got k={k}, N={n}")));
    }
    Ok(kprod_term(n, k))
}

/// `Σ_N Q_N (s_N k² + r_N²)`; sectors with `N < k` contribute `N²`.
pub fn kprod_bound_fluctuating(weights: &BTreeMap<u32, f64>, k: u32) -> Result<f64> {
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    check_weights(weights)?;
    Ok(weights.iter().map(|(&n, &q)| q * kprod_term(n, k)).sum())
}

fn check_weights(weights: &BTreeMap<u32, f64>) -> Result<()> {
    if weights.values().any(|q| !(*q >= 0.0)) {
        return Err(Error::param("sector weights must be nonnegative"));
    }
    let total: f64 = weights.values().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::param(format!("sector weights sum to {total}")));
    }
    Ok(())
}

/// Direction maximizing `F_Q[ρ, J_n]` and the maximum.
///
/// The QFI is a quadratic form in `n`, so the optimum is the leading
/// eigenvector of a 3×3 matrix.
pub fn best_direction(state: &State) -> Result<(Direction, f64)> {
    let m = qfi_direction_tensor(state)?;
    let eig = m.symmetric_eigen();
    let (i, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let v: Vector3<f64> = eig.eigenvectors.column(i).into_owned();
    let d = Direction::normalized(v[0], v[1], v[2])?;
    Ok((d, eig.eigenvalues[i].max(0.0)))
}

fn require_incoherent(state: &State) -> Result<()> {
    if state.has_number_coherences() {
        return Err(Error::CoherentInput(
            "the chi-squared witness applies only to states without number coherences; \
             project onto fixed-N sectors first"
                .into(),
        ));
    }
    Ok(())
}

/// `χ² = ⟨N̂⟩ / F_Q[ρ, J_n]`; `+∞` when the QFI vanishes.
pub fn chi_squared(state: &State, direction: Direction) -> Result<f64> {
    require_incoherent(state)?;
    let fq = qfi(state, Generator::Jn(direction))?;
    Ok(ratio(state.moments().mean_n, fq))
}

/// χ² at the QFI-optimal direction.
pub fn chi_squared_best(state: &State) -> Result<(Direction, f64)> {
    require_incoherent(state)?;
    let (d, fq) = best_direction(state)?;
    Ok((d, ratio(state.moments().mean_n, fq)))
}

fn ratio(mean_n: f64, fq: f64) -> f64 {
    if fq <= 1e-15 {
        f64::INFINITY
    } else {
        mean_n / fq
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthReport {
    pub fq_value: f64,
    pub depth: u32,
    pub bound_curve: BTreeMap<u32, f64>,
}

/// Smallest `k` whose producibility bound reaches `fq`.
pub fn entanglement_depth(fq: f64, weights: &BTreeMap<u32, f64>) -> Result<DepthReport> {
    if !(fq >= 0.0) {
        return Err(Error::param(format!("QFI must be nonnegative, got {fq}")));
    }
    check_weights(weights)?;
    let n_top = weights.iter().filter(|(_, q)| **q > 0.0).map(|(n, _)| *n).max().unwrap_or(0).max(1);
    let mean_n2: f64 = weights.iter().map(|(&n, &q)| q * (n as f64).powi(2)).sum();
    if fq > mean_n2 + DEPTH_TOL {
        return Err(Error::param(format!(
            "QFI {fq} exceeds <N^2> = {mean_n2}; inputs are inconsistent"
        )));
    }
    let mut curve = BTreeMap::new();
    let mut depth = None;
    for k in 1..=n_top {
        let b = kprod_bound_fluctuating(weights, k)?;
        curve.insert(k, b);
        if depth.is_none() && b >= fq - DEPTH_TOL {
            depth = Some(k);
        }
    }
    Ok(DepthReport {
        fq_value: fq,
        depth: depth.unwrap_or(n_top),
        bound_curve: curve,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossoverPoint {
    pub m: f64,
    /// `1/(m⟨N̂⟩)`
    pub inv_m_mean_n: f64,
    /// `1/√(m⟨N̂²⟩)`
    pub inv_sqrt_m_mean_n2: f64,
    pub heisenberg: f64,
}

/// `points` values spaced evenly in `log m` over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo >= 1.0) || !(hi >= lo) || points == 0 {
        return Err(Error::param(format!("bad m range {lo}:{hi} with {points} points")));
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect())
}

/// Both Heisenberg branches and their maximum over a grid of `m`.
pub fn crossover_curve(mean_n: f64, mean_n2: f64, ms: &[f64]) -> Result<Vec<CrossoverPoint>> {
    ms.iter()
        .map(|&m| {
            let r = sensitivity_bounds(mean_n, mean_n2, m)?;
            Ok(CrossoverPoint {
                m,
                inv_m_mean_n: 1.0 / (m * mean_n),
                inv_sqrt_m_mean_n2: r.qcr_ceiling,
                heisenberg: r.heisenberg,
            })
        })
        .collect()
}

/// Asymptotic central-limit threshold of the two-mode SSW state,
/// `(π² e^{−γ}/12) e^{π²⟨N̂/2+1⟩/6} / ⟨N̂⟩²`.
pub fn ssw_mcl_asymptotic(mean_n: f64) -> f64 {
    let pi2 = std::f64::consts::PI.powi(2);
    pi2 * (-EULER_GAMMA).exp() / 12.0 * (pi2 / 6.0 * (mean_n / 2.0 + 1.0)).exp() / (mean_n * mean_n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::{make_named_state, CutoffPolicy, NamedState, SpinCoherentSector};

    #[test]
    fn fixed_number_heisenberg() {
        for m in [1.0, 4.0, 100.0] {
            let r = sensitivity_bounds(5.0, 25.0, m).unwrap();
            assert!((r.heisenberg - 1.0 / (m.sqrt() * 5.0)).abs() < 1e-15);
            assert_eq!(r.regime, Regime::CentralLimit);
        }
    }

    #[test]
    fn tmsv_heisenberg_and_crossing() {
        for m in [1.0, 2.0, 3.0, 10.0] {
            let r = sensitivity_bounds(1.0, 4.0, m).unwrap();
            assert!((r.heisenberg - (1.0 / (4.0 * m).sqrt()).max(1.0 / m)).abs() < 1e-15);
        }
        let r = sensitivity_bounds(2.0, 4.0, 1.0).unwrap();
        assert!((r.heisenberg - 0.5).abs() < 1e-15 && (r.qcr_ceiling - 0.5).abs() < 1e-15);
        assert!(sensitivity_bounds(2.0, 3.0, 1.0).is_err());
        assert!(sensitivity_bounds(0.0, 1.0, 1.0).is_err());
        assert!(sensitivity_bounds(1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn kprod_values() {
        assert_eq!(kprod_bound_fixed(7, 1).unwrap(), 7.0);
        assert_eq!(kprod_bound_fixed(7, 7).unwrap(), 49.0);
        assert_eq!(kprod_bound_fixed(5, 2).unwrap(), 9.0);
        assert!(kprod_bound_fixed(3, 0).is_err());
        assert!(kprod_bound_fixed(3, 4).is_err());
        let q: BTreeMap<u32, f64> = [(1, 0.5), (2, 0.5)].into();
        assert!((kprod_bound_fluctuating(&q, 1).unwrap() - 1.5).abs() < 1e-15);
        assert!((kprod_bound_fluctuating(&q, 2).unwrap() - 2.5).abs() < 1e-15);
        let single: BTreeMap<u32, f64> = [(9, 1.0)].into();
        for k in 1..=9 {
            assert_eq!(kprod_bound_fluctuating(&single, k).unwrap(), kprod_bound_fixed(9, k).unwrap());
        }
    }

    #[test]
    fn bound_curve_is_monotone() {
        for n in 1..=50u32 {
            let mut prev = 0.0;
            for k in 1..=n {
                let b = kprod_bound_fixed(n, k).unwrap();
                assert!(b >= prev);
                prev = b;
            }
            assert_eq!(prev, (n * n) as f64);
        }
    }

    #[test]
    fn depth_examples() {
        let six: BTreeMap<u32, f64> = [(6, 1.0)].into();
        assert_eq!(entanglement_depth(18.1, &six).unwrap().depth, 4);
        assert_eq!(entanglement_depth(6.0, &six).unwrap().depth, 1);
        assert_eq!(entanglement_depth(36.0, &six).unwrap().depth, 6);
        assert!(entanglement_depth(36.5, &six).is_err());
        let q: BTreeMap<u32, f64> = [(1, 0.3), (5, 0.7)].into();
        let mean_n2 = 0.3 + 0.7 * 25.0;
        assert_eq!(entanglement_depth(mean_n2, &q).unwrap().depth, 5);
    }

    #[test]
    fn chi_squared_cases() {
        let c = CutoffPolicy::with_n_max(4);
        let noon = make_named_state(&NamedState::Noon { n: 4, phi: 0.0 }, &c).unwrap();
        let block = State::Block(noon.project_number_sectors());
        assert!((chi_squared(&block, Direction::z()).unwrap() - 0.25).abs() < 1e-12);

        let vac = make_named_state(&NamedState::TwinFock { n: 0 }, &CutoffPolicy::with_n_max(0)).unwrap();
        let vac = State::Block(vac.project_number_sectors());
        assert!(chi_squared(&vac, Direction::x()).unwrap().is_infinite());

        let moon = make_named_state(&NamedState::Moon { n: 2, m: 1, phi: 0.0 }, &CutoffPolicy::with_n_max(2)).unwrap();
        assert!(matches!(chi_squared(&moon, Direction::z()), Err(Error::CoherentInput(_))));
    }

    #[test]
    fn product_states_are_not_witnessed() {
        let sectors = vec![
            SpinCoherentSector { n: 2, weight: 0.4, theta: 1.1, phi: 0.3 },
            SpinCoherentSector { n: 5, weight: 0.6, theta: 2.0, phi: -1.0 },
        ];
        let s = make_named_state(&NamedState::ProductSpinCoherent { sectors }, &CutoffPolicy::with_n_max(5)).unwrap();
        let (_, chi2) = chi_squared_best(&s).unwrap();
        assert!(chi2 >= 1.0 - 1e-9);
    }

    #[test]
    fn best_direction_beats_grid() {
        let s = make_named_state(&NamedState::Moon { n: 3, m: 2, phi: 0.4 }, &CutoffPolicy::with_n_max(3)).unwrap();
        let (_, best) = best_direction(&s).unwrap();
        for d in Direction::fibonacci_sphere(200) {
            assert!(qfi(&s, Generator::Jn(d)).unwrap() <= best + 1e-9);
        }
        assert!((best - 6.0).abs() < 1e-9);
    }

    #[test]
    fn crossover_switches_at_threshold() {
        let (n, n2) = (2.5, 8.5);
        let ms = log_grid(1.0, 1000.0, 400).unwrap();
        let curve = crossover_curve(n, n2, &ms).unwrap();
        let m_cl = n2 / (n * n);
        for p in &curve {
            if p.m < m_cl {
                assert!(p.inv_m_mean_n > p.inv_sqrt_m_mean_n2);
            } else {
                assert!(p.inv_m_mean_n <= p.inv_sqrt_m_mean_n2 + 1e-15);
            }
        }
        let r = sensitivity_bounds(n, n2, m_cl).unwrap();
        assert!((1.0 / (m_cl * n) - r.qcr_ceiling).abs() < 1e-15);
        assert!(log_grid(0.5, 10.0, 5).is_err());
    }
}
