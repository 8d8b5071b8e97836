use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::estimator::{biased_demo_estimator, count_outcomes, LikelihoodTable, MlSpec};
use super::sampling::{ShotSampler, ShotStream};
use crate::error::{Error, Result};
use crate::fisher::{cfi_model, qfi};
use crate::fockspace::{State, StateSpec};
use crate::measurement::{OutcomeModel, PovmSpec};
use crate::spinops::{Direction, Generator};
use crate::witness::{sensitivity_bounds, BoundReport};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "TWOMODE_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSpec {
    pub direction: Direction,
    pub theta: f64,
    #[serde(default)]
    pub phi0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EstimatorSpec {
    MlGrid(MlSpec),
    /// Sector-tagged estimator `Θ = (k/(m p)) Θ̃` with `Θ̃` the ML estimate
    /// from the `k` shots that landed in sector `sector`.
    BiasedDemo {
        /// Defaults to the state's weight `Q_M`.
        #[serde(default)]
        p: Option<f64>,
        sector: u32,
        #[serde(default)]
        ml: MlSpec,
    },
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        EstimatorSpec::MlGrid(MlSpec::default())
    }
}

/// Settings for estimating the bias derivative `b = ∂Θ̄/∂θ`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaGridSpec {
    /// Half-width of the central difference; `5/√(mF)` when omitted.
    #[serde(default)]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub state: StateSpec,
    pub transform: TransformSpec,
    pub povm: PovmSpec,
    pub m: u64,
    pub trials: u64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_grid: Option<ThetaGridSpec>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::param("m must be at least 1"));
        }
        if self.trials == 0 {
            return Err(Error::param("trials must be at least 1"));
        }
        if self.seed.is_none() {
            return Err(Error::param("a seed is required"));
        }
        match &self.estimator {
            EstimatorSpec::MlGrid(ml) => ml.validate(),
            EstimatorSpec::BiasedDemo { p, ml, .. } => {
                if let Some(p) = p {
                    if !(*p > 0.0 && *p <= 1.0) {
                        return Err(Error::param(format!("p must lie in (0, 1], got {p}")));
                    }
                }
                ml.validate()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorStats {
    pub count: u64,
    pub mean: f64,
    /// Population variance within the group.
    pub variance: f64,
}

/// Trial statistics. Variances are population variances (divided by the
/// number of trials), so the sector decomposition adds up exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateStats {
    pub theta_true: f64,
    pub m: u64,
    pub trials: u64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub bias_derivative: f64,
    /// False when `b = 1` is assumed rather than measured.
    pub bias_derivative_estimated: bool,
    pub variance: f64,
    /// Standard error of the mean estimate.
    pub std_error: f64,
    pub flat_likelihoods: u64,
    /// Keyed by the multiset of sectors seen in a trial, e.g. `"0x3,4x1"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_sector: Option<BTreeMap<String, SectorStats>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub stats: EstimateStats,
    pub bounds: BoundReport,
    /// `F_Q[ρ, J_n]` of the probe.
    pub qfi: f64,
    /// `1/√(m F_Q)`.
    pub bound_qcr: f64,
    /// CFI of the configured measurement at the true phase, when finite.
    #[serde(default)]
    pub cfi: Option<f64>,
    #[serde(default)]
    pub between_sector: Option<f64>,
    #[serde(default)]
    pub within_sector: Option<f64>,
}

/// Worker count from [`WORKERS_ENV`], if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

struct TrialRecord {
    estimate: f64,
    signature: Option<String>,
    flat: bool,
}

struct Experiment<'a> {
    config: &'a ExperimentConfig,
    model: &'a OutcomeModel,
    table: LikelihoodTable<'a>,
    biased: Option<(u32, f64)>,
    seed: u64,
}

impl Experiment<'_> {
    fn trial(&self, sampler: &ShotSampler, t: u64) -> Result<TrialRecord> {
        let mut stream = ShotStream::new(self.seed, t);
        let shots = sampler.sample(self.config.m, &mut stream);
        let n_out = self.model.povm().len();
        let signature = if sampler.is_tagged() {
            let mut tally: BTreeMap<u32, u64> = BTreeMap::new();
            for s in &shots {
                *tally.entry(s.sector.unwrap_or_default()).or_default() += 1;
            }
            Some(tally.iter().map(|(n, c)| format!("{n}x{c}")).collect::<Vec<_>>().join(","))
        } else {
            None
        };
        let (estimate, flat) = match self.biased {
            None => {
                let e = self.table.estimate(&count_outcomes(shots.iter().map(|s| s.outcome), n_out))?;
                (e.estimate, e.flat)
            }
            Some((sector_m, p)) => {
                let sectors: Vec<u32> = shots
                    .iter()
                    .map(|s| s.sector.ok_or(Error::DecompositionInvalid))
                    .collect::<Result<_>>()?;
                let in_m = shots.iter().filter(|s| s.sector == Some(sector_m)).map(|s| s.outcome);
                let counts = count_outcomes(in_m, n_out);
                let (tilde, flat) = if counts.is_empty() {
                    (0.0, false)
                } else {
                    let e = self.table.estimate(&counts)?;
                    (e.estimate, e.flat)
                };
                (biased_demo_estimator(&sectors, sector_m, p, tilde)?, flat)
            }
        };
        Ok(TrialRecord {
            estimate,
            signature,
            flat,
        })
    }

    fn run(&self, theta: f64, pool: &rayon::ThreadPool) -> Result<Vec<TrialRecord>> {
        let sampler = ShotSampler::new(self.model, theta, self.config.transform.phi0)?;
        pool.install(|| {
            (0..self.config.trials)
                .into_par_iter()
                .map(|t| self.trial(&sampler, t))
                .collect()
        })
    }
}

fn summarize(records: &[TrialRecord], theta: f64, m: u64) -> EstimateStats {
    let n = records.len() as f64;
    let mean = records.iter().map(|r| r.estimate).sum::<f64>() / n;
    let variance = records.iter().map(|r| (r.estimate - mean).powi(2)).sum::<f64>() / n;
    let per_sector = if records.iter().all(|r| r.signature.is_some()) {
        let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in records {
            groups.entry(r.signature.clone().unwrap_or_default()).or_default().push(r.estimate);
        }
        Some(
            groups
                .into_iter()
                .map(|(k, v)| {
                    let c = v.len() as f64;
                    let mu = v.iter().sum::<f64>() / c;
                    let var = v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / c;
                    (
                        k,
                        SectorStats {
                            count: v.len() as u64,
                            mean: mu,
                            variance: var,
                        },
                    )
                })
                .collect(),
        )
    } else {
        None
    };
    EstimateStats {
        theta_true: theta,
        m,
        trials: records.len() as u64,
        mean_estimate: mean,
        bias: mean - theta,
        bias_derivative: 1.0,
        bias_derivative_estimated: false,
        variance,
        std_error: (variance / n).sqrt(),
        flat_likelihoods: records.iter().filter(|r| r.flat).count() as u64,
        per_sector,
    }
}

/// Between- and within-sector parts of the estimator variance.
pub fn variance_decomposition(stats: &EstimateStats) -> Result<(f64, f64)> {
    let groups = stats.per_sector.as_ref().ok_or(Error::MissingSectorData)?;
    let total = stats.trials as f64;
    let mut between = 0.0;
    let mut within = 0.0;
    for g in groups.values() {
        let q = g.count as f64 / total;
        between += q * (g.mean - stats.mean_estimate).powi(2);
        within += q * g.variance;
    }
    Ok((between, within))
}

/// Runs the full experiment, including bounds and, if requested, the bias
/// derivative from common-random-number runs at `θ ± δ`.
pub fn run_experiment(config: &ExperimentConfig, workers: Option<usize>) -> Result<SimulationReport> {
    config.validate()?;
    let seed = config.seed.ok_or_else(|| Error::param("a seed is required"))?;
    let state: State = config.state.build()?;
    let povm = config.povm.build(state.cutoff())?;
    let direction = config.transform.direction;
    let phi0 = config.transform.phi0;
    let theta = config.transform.theta;
    let model = OutcomeModel::new(&state, direction, &povm)?;

    let (table, biased) = match &config.estimator {
        EstimatorSpec::MlGrid(ml) => (LikelihoodTable::new(&model, *ml, phi0, None)?, None),
        EstimatorSpec::BiasedDemo { p, sector, ml } => {
            let weights = state.sector_weights();
            let q = weights.get(sector).copied().ok_or(Error::UnknownSector(*sector))?;
            let p = p.unwrap_or(q);
            (LikelihoodTable::new(&model, *ml, phi0, Some(*sector))?, Some((*sector, p)))
        }
    };
    let exp = Experiment {
        config,
        model: &model,
        table,
        biased,
        seed,
    };

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| Error::param(format!("thread pool: {e}")))?;

    let records = exp.run(theta, &pool)?;
    let mut stats = summarize(&records, theta, config.m);
    let cfi = cfi_model(&model, theta, phi0).ok();

    if let Some(grid) = &config.theta_grid {
        let delta = match grid.delta {
            Some(d) => d,
            None => match cfi {
                Some(f) if f > 0.0 => 5.0 / (config.m as f64 * f).sqrt(),
                _ => return Err(Error::param("cannot choose a bias-derivative step: Fisher information is zero or singular")),
            },
        };
        if !(delta > 0.0) {
            return Err(Error::param(format!("bias-derivative step must be positive, got {delta}")));
        }
        let plus = summarize(&exp.run(theta + delta, &pool)?, theta + delta, config.m);
        let minus = summarize(&exp.run(theta - delta, &pool)?, theta - delta, config.m);
        stats.bias_derivative = (plus.mean_estimate - minus.mean_estimate) / (2.0 * delta);
        stats.bias_derivative_estimated = true;
    }

    let moments = state.moments();
    let bounds = sensitivity_bounds(moments.mean_n, moments.mean_n2, config.m as f64)?;
    let fq = qfi(&state, Generator::Jn(direction))?;
    let (between, within) = match variance_decomposition(&stats) {
        Ok((b, w)) => (Some(b), Some(w)),
        Err(_) => (None, None),
    };
    Ok(SimulationReport {
        stats,
        bounds,
        qfi: fq,
        bound_qcr: if fq > 0.0 { 1.0 / (config.m as f64 * fq).sqrt() } else { f64::INFINITY },
        cfi,
        between_sector: between,
        within_sector: within,
    })
}

/// Trial statistics with the worker count taken from the environment.
pub fn run_trials(config: &ExperimentConfig) -> Result<EstimateStats> {
    run_trials_with_workers(config, workers_from_env())
}

pub fn run_trials_with_workers(config: &ExperimentConfig, workers: Option<usize>) -> Result<EstimateStats> {
    Ok(run_experiment(config, workers)?.stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(json: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(json).unwrap()
    }

    const MZ: &str = r#"{
        "state": {"type": "product_spin_coherent", "params": {"sectors": [{"n": 1, "weight": 1.0, "theta": 0.0, "phi": 0.0}]}},
        "transform": {"direction": "y", "theta": 1.0471975511965976},
        "povm": {"kind": "port1_number"},
        "m": 20, "trials": 64, "seed": 9,
        "estimator": {"type": "ml_grid", "domain": [0, 3.141592653589793]}
    }"#;

    #[test]
    fn config_parsing() {
        let c = config(MZ);
        assert_eq!(c.m, 20);
        assert!(matches!(c.estimator, EstimatorSpec::MlGrid(ml) if ml.resolution == 2048));
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), c);
        let demo = config(r#"{
            "state": {"type": "biased_demo_mixture", "params": {"p": 0.25, "m": 4}},
            "transform": {"direction": "z", "theta": 0.2},
            "povm": {"kind": "parity_port1"},
            "m": 4, "trials": 4, "seed": 1,
            "estimator": {"type": "biased_demo", "sector": 4, "ml": {"domain": [-0.39, 0.39]}}
        }"#);
        assert!(matches!(demo.estimator, EstimatorSpec::BiasedDemo { sector: 4, p: None, .. }));
    }

    #[test]
    fn validation() {
        let mut c = config(MZ);
        c.seed = None;
        assert!(run_trials(&c).is_err());
        let mut c = config(MZ);
        c.trials = 0;
        assert!(run_trials(&c).is_err());
    }

    #[test]
    fn deterministic_across_workers() {
        let c = config(MZ);
        let a = run_trials_with_workers(&c, Some(1)).unwrap();
        let b = run_trials_with_workers(&c, Some(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn deterministic_distribution_has_zero_variance() {
        let mut c = config(MZ);
        c.m = 1;
        c.transform.theta = 0.0;
        let s = run_trials_with_workers(&c, Some(2)).unwrap();
        assert_eq!(s.variance, 0.0);
        assert_eq!(s.mean_estimate, 0.0);
    }

    #[test]
    fn single_sector_decomposition() {
        let s = run_trials_with_workers(&config(MZ), Some(2)).unwrap();
        let (between, within) = variance_decomposition(&s).unwrap();
        assert_eq!(between, 0.0);
        assert!((within - s.variance).abs() < 1e-15);
        let mut no_groups = s.clone();
        no_groups.per_sector = None;
        assert!(matches!(variance_decomposition(&no_groups), Err(Error::MissingSectorData)));
    }

    #[test]
    fn bias_derivative_near_one_in_the_bulk() {
        let mut c = config(MZ);
        c.m = 200;
        c.trials = 400;
        c.theta_grid = Some(ThetaGridSpec::default());
        let r = run_experiment(&c, None).unwrap();
        assert!(r.stats.bias_derivative_estimated);
        assert!((r.stats.bias_derivative - 1.0).abs() < 0.1, "{}", r.stats.bias_derivative);
        assert!((r.cfi.unwrap() - 1.0).abs() < 1e-6);
    }
}
