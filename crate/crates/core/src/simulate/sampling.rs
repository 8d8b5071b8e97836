use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::measurement::{OutcomeDistribution, OutcomeLabel, OutcomeModel};

/// Counter-based uniform stream keyed by `(seed, trial, shot)`.
///
/// Every shot consumes exactly two uniforms (sector, outcome) at a fixed
/// position, so draws never depend on how trials are scheduled.
#[derive(Debug, Clone)]
pub struct ShotStream {
    rng: ChaCha8Rng,
}

impl ShotStream {
    pub fn new(seed: u64, trial: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        Self { rng }
    }

    /// The two uniforms in `[0, 1)` belonging to `shot`.
    pub fn uniforms(&mut self, shot: u64) -> (f64, f64) {
        // one f64 consumes two 32-bit words
        self.rng.set_word_pos(shot as u128 * 4);
        (self.rng.gen(), self.rng.gen())
    }
}

/// Cumulative table for inverse-CDF draws; negative round-off is clipped.
#[derive(Debug, Clone)]
pub(crate) struct Cdf {
    cumulative: Vec<f64>,
}

impl Cdf {
    pub(crate) fn new(probs: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p.max(0.0);
                acc
            })
            .collect();
        Self { cumulative }
    }

    pub(crate) fn draw(&self, u: f64) -> usize {
        let total = *self.cumulative.last().unwrap_or(&0.0);
        let target = u * total;
        let i = self.cumulative.partition_point(|&c| c <= target);
        // never return a zero-probability tail entry
        let mut i = i.min(self.cumulative.len() - 1);
        while i > 0 && self.cumulative[i] == self.cumulative[i - 1] && self.cumulative[i] <= target {
            i -= 1;
        }
        i
    }
}

/// `m` i.i.d. outcomes from a fixed distribution.
pub fn sample_outcomes(dist: &OutcomeDistribution, m: u64, stream: &mut ShotStream) -> Vec<OutcomeLabel> {
    let labels: Vec<OutcomeLabel> = dist.entries.keys().copied().collect();
    let probs: Vec<f64> = dist.entries.values().copied().collect();
    let cdf = Cdf::new(&probs);
    (0..m).map(|shot| labels[cdf.draw(stream.uniforms(shot).1)]).collect()
}

/// One detection event: outcome index into the POVM and, when the
/// probabilities decompose over sectors, the sector it came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaggedOutcome {
    pub sector: Option<u32>,
    pub outcome: usize,
}

/// Two-stage sampler: first `N` from `Q_N`, then `ε` from `P(ε|N, θ)`; a
/// single stage when the model has no sector decomposition.
#[derive(Debug, Clone)]
pub struct ShotSampler {
    sectors: Vec<u32>,
    sector_cdf: Cdf,
    outcome_cdfs: Vec<Cdf>,
}

impl ShotSampler {
    pub fn new(model: &OutcomeModel, theta: f64, phi0: f64) -> Result<Self> {
        if model.is_sectored() {
            let all = model.all_sector_probabilities(theta)?;
            let weights: Vec<f64> = all.iter().map(|(_, q, _)| *q).collect();
            Ok(Self {
                sectors: all.iter().map(|(n, _, _)| *n).collect(),
                sector_cdf: Cdf::new(&weights),
                outcome_cdfs: all.iter().map(|(_, _, p)| Cdf::new(p)).collect(),
            })
        } else {
            Ok(Self {
                sectors: Vec::new(),
                sector_cdf: Cdf::new(&[1.0]),
                outcome_cdfs: vec![Cdf::new(&model.probabilities(theta, phi0)?)],
            })
        }
    }

    pub fn is_tagged(&self) -> bool {
        !self.sectors.is_empty()
    }

    pub fn draw(&self, stream: &mut ShotStream, shot: u64) -> TaggedOutcome {
        let (u_sector, u_outcome) = stream.uniforms(shot);
        let s = self.sector_cdf.draw(u_sector);
        TaggedOutcome {
            sector: self.sectors.get(s).copied(),
            outcome: self.outcome_cdfs[s].draw(u_outcome),
        }
    }

    pub fn sample(&self, m: u64, stream: &mut ShotStream) -> Vec<TaggedOutcome> {
        (0..m).map(|shot| self.draw(stream, shot)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn dist(entries: &[(i64, f64)]) -> OutcomeDistribution {
        let map: BTreeMap<_, _> = entries.iter().map(|&(l, p)| (OutcomeLabel::Value(l), p)).collect();
        OutcomeDistribution::new(map, 0.0, 0.0).unwrap()
    }

    #[test]
    fn deterministic_distribution() {
        let d = dist(&[(0, 0.0), (1, 1.0), (2, 0.0)]);
        let mut s = ShotStream::new(5, 0);
        assert!(sample_outcomes(&d, 1000, &mut s).iter().all(|l| *l == OutcomeLabel::Value(1)));
    }

    #[test]
    fn fair_coin_frequency() {
        let d = dist(&[(0, 0.5), (1, 0.5)]);
        let m = 100_000u64;
        let mut s = ShotStream::new(11, 3);
        let ones = sample_outcomes(&d, m, &mut s).iter().filter(|l| **l == OutcomeLabel::Value(1)).count();
        let sigma = (m as f64 * 0.25).sqrt();
        assert!(((ones as f64) - m as f64 / 2.0).abs() < 5.0 * sigma);
    }

    #[test]
    fn same_seed_same_sequence() {
        let d = dist(&[(0, 0.2), (1, 0.3), (2, 0.5)]);
        let a = sample_outcomes(&d, 500, &mut ShotStream::new(42, 7));
        let b = sample_outcomes(&d, 500, &mut ShotStream::new(42, 7));
        let c = sample_outcomes(&d, 500, &mut ShotStream::new(42, 8));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn shots_are_position_keyed() {
        let mut s = ShotStream::new(1, 2);
        let late = s.uniforms(17);
        let mut t = ShotStream::new(1, 2);
        for shot in 0..17 {
            t.uniforms(shot);
        }
        assert_eq!(t.uniforms(17), late);
        assert_eq!(ShotStream::new(1, 2).uniforms(17), late);
    }

    #[test]
    fn cdf_skips_empty_entries() {
        let c = Cdf::new(&[0.5, 0.0, 0.5]);
        assert_eq!(c.draw(0.0), 0);
        assert_eq!(c.draw(0.4999), 0);
        assert_eq!(c.draw(0.5), 2);
        assert_eq!(c.draw(0.9999), 2);
        let tail = Cdf::new(&[1.0, 0.0]);
        assert_eq!(tail.draw(0.999_999), 0);
    }
}
