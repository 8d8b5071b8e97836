use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{OutcomeLabel, OutcomeModel};

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const FLAT_TOL: f64 = 1e-12;

fn default_resolution() -> usize {
    2048
}

fn default_tolerance() -> f64 {
    1e-8
}

fn default_domain() -> [f64; 2] {
    [0.0, std::f64::consts::PI]
}

/// Grid-then-refine maximum-likelihood settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlSpec {
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Identifiable interval searched by the estimator.
    #[serde(default = "default_domain")]
    pub domain: [f64; 2],
}

impl Default for MlSpec {
    fn default() -> Self {
        Self {
            resolution: default_resolution(),
            tolerance: default_tolerance(),
            domain: default_domain(),
        }
    }
}

impl MlSpec {
    pub fn with_domain(lo: f64, hi: f64) -> Self {
        Self {
            domain: [lo, hi],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.domain;
        if self.resolution < 2 {
            return Err(Error::param("grid resolution must be at least 2"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::param("refinement tolerance must be positive"));
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::param(format!("bad estimation domain [{lo}, {hi}]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MlEstimate {
    pub estimate: f64,
    /// The likelihood was constant over the domain; the midpoint is returned.
    pub flat: bool,
}

/// `log P(ε|φ)` tabulated on the ML grid, either for the full distribution
/// or for one number sector.
#[derive(Debug, Clone)]
pub struct LikelihoodTable<'a> {
    model: &'a OutcomeModel,
    spec: MlSpec,
    phi0: f64,
    sector: Option<u32>,
    grid: Vec<f64>,
    /// `log_p[g][ε]`
    log_p: Vec<Vec<f64>>,
}

impl<'a> LikelihoodTable<'a> {
    pub fn new(model: &'a OutcomeModel, spec: MlSpec, phi0: f64, sector: Option<u32>) -> Result<Self> {
        spec.validate()?;
        let [lo, hi] = spec.domain;
        let n = spec.resolution;
        let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let mut table = Self {
            model,
            spec,
            phi0,
            sector,
            grid: Vec::new(),
            log_p: Vec::with_capacity(n),
        };
        for &phi in &grid {
            let p = table.probabilities(phi)?;
            table.log_p.push(p.into_iter().map(safe_ln).collect());
        }
        table.grid = grid;
        Ok(table)
    }

    fn probabilities(&self, phi: f64) -> Result<Vec<f64>> {
        match self.sector {
            Some(n) => self.model.sector_probabilities(n, phi),
            None => self.model.probabilities(phi, self.phi0),
        }
    }

    fn log_likelihood(&self, counts: &[(usize, u64)], phi: f64) -> Result<f64> {
        let p = self.probabilities(phi)?;
        Ok(counts.iter().map(|&(e, c)| c as f64 * safe_ln(p[e])).sum())
    }

    /// Maximizes `Σ_ε c_ε log P(ε|φ)`; ties go to the smallest `φ`.
    pub fn estimate(&self, counts: &[(usize, u64)]) -> Result<MlEstimate> {
        let counts: Vec<(usize, u64)> = counts.iter().copied().filter(|&(_, c)| c > 0).collect();
        if counts.is_empty() {
            return Err(Error::EmptyOutcomes);
        }
        let values: Vec<f64> = self
            .log_p
            .iter()
            .map(|row| counts.iter().map(|&(e, c)| c as f64 * row[e]).sum())
            .collect();
        let mut best = 0;
        for (i, &v) in values.iter().enumerate() {
            if v > values[best] {
                best = i;
            }
        }
        let top = values[best];
        let bottom = values.iter().copied().fold(f64::INFINITY, f64::min);
        let [lo, hi] = self.spec.domain;
        if top == f64::NEG_INFINITY || top - bottom <= FLAT_TOL * top.abs().max(1.0) {
            return Ok(MlEstimate {
                estimate: 0.5 * (lo + hi),
                flat: true,
            });
        }

        let a = self.grid[best.saturating_sub(1)];
        let b = self.grid[(best + 1).min(self.grid.len() - 1)];
        let f = |x: f64| self.log_likelihood(&counts, x);
        let (x, fx) = golden_max(&f, a, b, self.spec.tolerance)?;
        let mut candidates = vec![(self.grid[best], top), (x, fx)];
        if best > 0 {
            candidates.push((a, values[best - 1]));
        }
        // highest value, then smallest φ
        candidates.sort_by(|p, q| q.1.total_cmp(&p.1).then(p.0.total_cmp(&q.0)));
        Ok(MlEstimate {
            estimate: candidates[0].0,
            flat: false,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }
}

fn safe_ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

fn golden_max(f: &dyn Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)> {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc >= fd { (c, fc) } else { (d, fd) })
}

/// Counts per outcome index.
pub fn count_outcomes(outcomes: impl IntoIterator<Item = usize>, n_outcomes: usize) -> Vec<(usize, u64)> {
    let mut counts = vec![0u64; n_outcomes];
    for e in outcomes {
        counts[e] += 1;
    }
    counts.into_iter().enumerate().filter(|&(_, c)| c > 0).collect()
}

/// Maximum-likelihood phase from a list of outcome labels.
pub fn ml_estimate(outcomes: &[OutcomeLabel], model: &OutcomeModel, spec: MlSpec) -> Result<MlEstimate> {
    if outcomes.is_empty() {
        return Err(Error::EmptyOutcomes);
    }
    let labels = model.povm().labels();
    let idx = outcomes
        .iter()
        .map(|l| {
            labels
                .iter()
                .position(|x| x == l)
                .ok_or_else(|| Error::param(format!("outcome {l} is not produced by the POVM")))
        })
        .collect::<Result<Vec<_>>>()?;
    let table = LikelihoodTable::new(model, spec, 0.0, None)?;
    table.estimate(&count_outcomes(idx, labels.len()))
}

/// `Θ = (k / (m p)) Θ̃`: zero for vacuum shots, the rescaled sector-`M`
/// estimate otherwise, where `k` of the `m` shots landed in sector `M`.
///
/// For a single shot this is `0` for `N = 0` and `Θ̃/p` for `N = M`.
pub fn biased_demo_estimator(sectors: &[u32], sector_m: u32, p: f64, theta_tilde: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::param(format!("p must lie in (0, 1], got {p}")));
    }
    if sectors.is_empty() {
        return Err(Error::EmptyOutcomes);
    }
    let mut k = 0usize;
    for &n in sectors {
        if n == sector_m {
            k += 1;
        } else if n != 0 {
            return Err(Error::UnknownSector(n));
        }
    }
    Ok(k as f64 / (sectors.len() as f64 * p) * theta_tilde)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::{BasisIndex, CutoffPolicy, State, StateVector};
    use crate::measurement::{named_povm, PovmKind};
    use crate::simulate::sampling::{ShotSampler, ShotStream};
    use crate::spinops::Direction;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn single_particle() -> OutcomeModel {
        let c = CutoffPolicy::with_n_max(1);
        let s = State::Pure(StateVector::new([(BasisIndex::from_modes(1, 0), Complex64::new(1.0, 0.0))], c).unwrap());
        OutcomeModel::new(&s, Direction::y(), &named_povm(PovmKind::Port1Number, &c).unwrap()).unwrap()
    }

    #[test]
    fn all_bright_gives_zero() {
        let model = single_particle();
        let outs = vec![OutcomeLabel::Port1(1); 20];
        let e = ml_estimate(&outs, &model, MlSpec::with_domain(0.0, PI)).unwrap();
        assert!(!e.flat);
        assert!(e.estimate.abs() < 1e-8);
    }

    #[test]
    fn central_limit_accuracy() {
        let model = single_particle();
        let theta = PI / 3.0;
        let m = 10_000;
        let sampler = ShotSampler::new(&model, theta, 0.0).unwrap();
        let shots = sampler.sample(m, &mut ShotStream::new(2024, 0));
        let counts = count_outcomes(shots.iter().map(|s| s.outcome), model.povm().len());
        let table = LikelihoodTable::new(&model, MlSpec::with_domain(0.0, PI), 0.0, None).unwrap();
        let e = table.estimate(&counts).unwrap();
        assert!((e.estimate - theta).abs() < 3.0 / (m as f64).sqrt());
    }

    #[test]
    fn refinement_beats_grid() {
        let model = single_particle();
        // 3 bright, 1 dark: cos²(φ/2) = 3/4 → φ = 2π/6
        let counts = [(0usize, 1u64), (1usize, 3u64)];
        let table = LikelihoodTable::new(&model, MlSpec::with_domain(0.0, PI), 0.0, None).unwrap();
        let e = table.estimate(&counts).unwrap();
        assert!((e.estimate - PI / 3.0).abs() < 1e-7);
    }

    #[test]
    fn empty_and_flat() {
        let model = single_particle();
        assert!(matches!(ml_estimate(&[], &model, MlSpec::default()), Err(Error::EmptyOutcomes)));
        // rotations about z leave |1,0⟩ unchanged: nothing to learn
        let c = CutoffPolicy::with_n_max(1);
        let s = State::Pure(StateVector::new([(BasisIndex::from_modes(1, 0), Complex64::new(1.0, 0.0))], c).unwrap());
        let flat = OutcomeModel::new(&s, Direction::z(), &named_povm(PovmKind::Port1Number, &c).unwrap()).unwrap();
        let e = ml_estimate(&[OutcomeLabel::Port1(1)], &flat, MlSpec::with_domain(0.0, 2.0)).unwrap();
        assert!(e.flat);
        assert_eq!(e.estimate, 1.0);
        assert!(ml_estimate(&[OutcomeLabel::Port1(7)], &model, MlSpec::default()).is_err());
    }

    #[test]
    fn biased_estimator_definition() {
        assert_eq!(biased_demo_estimator(&[0], 4, 0.25, 0.3).unwrap(), 0.0);
        assert!((biased_demo_estimator(&[4], 4, 0.25, 0.3).unwrap() - 1.2).abs() < 1e-15);
        assert_eq!(biased_demo_estimator(&[4, 4], 4, 1.0, 0.3).unwrap(), 0.3);
        assert!((biased_demo_estimator(&[0, 4, 0, 4], 4, 0.5, 0.3).unwrap() - 0.3).abs() < 1e-15);
        assert!(matches!(biased_demo_estimator(&[2], 4, 0.5, 0.3), Err(Error::UnknownSector(2))));
        assert!(biased_demo_estimator(&[4], 4, 0.0, 0.3).is_err());
    }
}
