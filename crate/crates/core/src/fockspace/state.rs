use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{basis_dim, sector_start, BasisIndex, CutoffPolicy, COHERENCE_TOL, NORMALIZATION_TOL, PSD_TOL};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, ZERO};

/// First and second moments of the total particle number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean_n: f64,
    pub mean_n2: f64,
    pub var_n: f64,
}

impl Moments {
    pub fn from_weights<'a>(weights: impl IntoIterator<Item = (&'a u32, &'a f64)>) -> Self {
        let (mut m1, mut m2) = (0.0, 0.0);
        for (&n, &q) in weights {
            let n = n as f64;
            m1 += q * n;
            m2 += q * n * n;
        }
        Self {
            mean_n: m1,
            mean_n2: m2,
            var_n: m2 - m1 * m1,
        }
    }
}

/// Pure state stored sparsely over the truncated basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: BTreeMap<BasisIndex, Complex64>,
    cutoff: CutoffPolicy,
    truncation_loss: f64,
}

impl StateVector {
    pub fn new(
        amplitudes: impl IntoIterator<Item = (BasisIndex, Complex64)>,
        cutoff: CutoffPolicy,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (idx, a) in amplitudes {
            if idx.total() > cutoff.n_max {
                return Err(Error::invariant(format!(
                    "basis state N={} exceeds cutoff n_max={}",
                    idx.total(),
                    cutoff.n_max
                )));
            }
            if a != ZERO {
                *map.entry(idx).or_insert(ZERO) += a;
            }
        }
        let norm: f64 = map.values().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::invariant(format!(
                "state norm {norm} deviates from 1"
            )));
        }
        Ok(Self {
            amplitudes: map,
            cutoff,
            truncation_loss: 0.0,
        })
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(
        amplitudes: impl IntoIterator<Item = (BasisIndex, Complex64)>,
        cutoff: CutoffPolicy,
    ) -> Result<Self> {
        let raw: Vec<_> = amplitudes.into_iter().collect();
        let norm: f64 = raw.iter().map(|(_, a)| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::invariant("cannot normalize a zero vector"));
        }
        Self::new(raw.into_iter().map(|(i, a)| (i, a / norm)), cutoff)
    }

    pub(crate) fn with_truncation_loss(mut self, loss: f64) -> Self {
        self.truncation_loss = loss;
        self
    }

    pub fn amplitudes(&self) -> &BTreeMap<BasisIndex, Complex64> {
        &self.amplitudes
    }

    pub fn amplitude(&self, idx: &BasisIndex) -> Complex64 {
        self.amplitudes.get(idx).copied().unwrap_or(ZERO)
    }

    pub fn cutoff(&self) -> &CutoffPolicy {
        &self.cutoff
    }

    /// Probability mass discarded by truncation before renormalization.
    pub fn truncation_loss(&self) -> f64 {
        self.truncation_loss
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    /// `Q_N` for every sector with nonzero amplitude.
    pub fn sector_weights(&self) -> BTreeMap<u32, f64> {
        let mut w = BTreeMap::new();
        for (idx, a) in &self.amplitudes {
            *w.entry(idx.total()).or_insert(0.0) += a.norm_sqr();
        }
        w
    }

    /// Dense amplitude vector of sector `n` (dimension `n + 1`, unnormalized).
    pub fn sector_vector(&self, n: u32) -> CVector {
        let mut v = CVector::zeros(n as usize + 1);
        let lo = BasisIndex::from_sector_offset(n, 0);
        let hi = BasisIndex::from_sector_offset(n, n as usize);
        for (idx, a) in self.amplitudes.range(lo..=hi) {
            v[idx.sector_offset()] = *a;
        }
        v
    }

    pub fn to_dense_vector(&self) -> CVector {
        let mut v = CVector::zeros(self.cutoff.dim());
        for (idx, a) in &self.amplitudes {
            v[idx.position()] = *a;
        }
        v
    }

    pub fn to_general(&self) -> GeneralState {
        let v = self.to_dense_vector();
        GeneralState {
            matrix: &v * v.adjoint(),
            cutoff: self.cutoff,
        }
    }

    pub fn has_number_coherences(&self) -> bool {
        let mut peak: BTreeMap<u32, f64> = BTreeMap::new();
        for (idx, a) in &self.amplitudes {
            let e = peak.entry(idx.total()).or_insert(0.0);
            *e = e.max(a.norm());
        }
        let peaks: Vec<_> = peak.into_iter().collect();
        for (i, &(na, aa)) in peaks.iter().enumerate() {
            for &(nb, ab) in &peaks[i + 1..] {
                if aa * ab * (nb - na) as f64 > COHERENCE_TOL {
                    return true;
                }
            }
        }
        false
    }

    pub fn project_number_sectors(&self) -> BlockState {
        let sectors = self
            .sector_weights()
            .into_iter()
            .filter(|&(_, q)| q > 0.0)
            .map(|(n, q)| {
                let v = self.sector_vector(n);
                Sector {
                    total: n,
                    weight: q,
                    rho: (&v * v.adjoint()).unscale(q),
                }
            })
            .collect();
        BlockState {
            sectors,
            cutoff: self.cutoff,
            truncation_loss: self.truncation_loss,
        }
    }
}

/// One fixed-`N` block `Q_N ρ^(N)` of a number-diagonal state.
#[derive(Debug, Clone, PartialEq)]
pub struct Sector {
    pub total: u32,
    pub weight: f64,
    pub rho: CMatrix,
}

/// Density operator without number coherences: `Σ_N Q_N ρ^(N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockState {
    sectors: Vec<Sector>,
    cutoff: CutoffPolicy,
    truncation_loss: f64,
}

impl BlockState {
    pub fn new(sectors: Vec<Sector>, cutoff: CutoffPolicy) -> Result<Self> {
        let mut sectors: Vec<Sector> = sectors.into_iter().filter(|s| s.weight != 0.0).collect();
        sectors.sort_by_key(|s| s.total);
        let mut total_weight = 0.0;
        for (i, s) in sectors.iter().enumerate() {
            if i > 0 && sectors[i - 1].total == s.total {
                return Err(Error::invariant(format!("duplicate sector N={}", s.total)));
            }
            if s.total > cutoff.n_max {
                return Err(Error::invariant(format!(
                    "sector N={} exceeds cutoff n_max={}",
                    s.total, cutoff.n_max
                )));
            }
            if !(s.weight >= 0.0) {
                return Err(Error::invariant(format!(
                    "negative weight {} for sector N={}",
                    s.weight, s.total
                )));
            }
            let d = s.total as usize + 1;
            if s.rho.nrows() != d || s.rho.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: s.rho.nrows(),
                });
            }
            check_density(&s.rho, &format!("sector N={}", s.total))?;
            total_weight += s.weight;
        }
        if (total_weight - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::invariant(format!(
                "sector weights sum to {total_weight}"
            )));
        }
        Ok(Self {
            sectors,
            cutoff,
            truncation_loss: 0.0,
        })
    }

    pub(crate) fn with_truncation_loss(mut self, loss: f64) -> Self {
        self.truncation_loss = loss;
        self
    }

    pub fn sectors(&self) -> &[Sector] {
        &self.sectors
    }

    pub fn sector(&self, n: u32) -> Option<&Sector> {
        self.sectors.iter().find(|s| s.total == n)
    }

    pub fn cutoff(&self) -> &CutoffPolicy {
        &self.cutoff
    }

    pub fn truncation_loss(&self) -> f64 {
        self.truncation_loss
    }

    pub fn sector_weights(&self) -> BTreeMap<u32, f64> {
        self.sectors.iter().map(|s| (s.total, s.weight)).collect()
    }

    pub fn to_general(&self) -> GeneralState {
        let dim = self.cutoff.dim();
        let mut m = CMatrix::zeros(dim, dim);
        for s in &self.sectors {
            let off = sector_start(s.total);
            let d = s.total as usize + 1;
            m.view_mut((off, off), (d, d))
                .copy_from(&s.rho.scale(s.weight));
        }
        GeneralState {
            matrix: m,
            cutoff: self.cutoff,
        }
    }
}

/// Dense density matrix over the whole truncated basis, possibly with
/// coherences between sectors.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralState {
    matrix: CMatrix,
    cutoff: CutoffPolicy,
}

impl GeneralState {
    pub fn new(matrix: CMatrix, cutoff: CutoffPolicy) -> Result<Self> {
        let dim = basis_dim(cutoff.n_max);
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: matrix.nrows(),
            });
        }
        check_density(&matrix, "density matrix")?;
        Ok(Self { matrix, cutoff })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn cutoff(&self) -> &CutoffPolicy {
        &self.cutoff
    }

    pub fn sector_block(&self, n: u32) -> CMatrix {
        let off = sector_start(n);
        let d = n as usize + 1;
        self.matrix.view((off, off), (d, d)).into_owned()
    }

    pub fn sector_weights(&self) -> BTreeMap<u32, f64> {
        (0..=self.cutoff.n_max)
            .map(|n| (n, linalg::trace(&self.sector_block(n)).re))
            .filter(|&(_, q)| q != 0.0)
            .collect()
    }

    /// True iff `‖[ρ, N̂]‖_max` exceeds the coherence tolerance.
    pub fn has_number_coherences(&self) -> bool {
        let dim = self.matrix.nrows();
        let totals: Vec<u32> = (0..dim).map(|p| BasisIndex::from_position(p).total()).collect();
        for i in 0..dim {
            for j in (i + 1)..dim {
                let dn = totals[j] as f64 - totals[i] as f64;
                if dn != 0.0 && self.matrix[(i, j)].norm() * dn.abs() > COHERENCE_TOL {
                    return true;
                }
            }
        }
        false
    }

    pub fn project_number_sectors(&self) -> BlockState {
        let sectors = (0..=self.cutoff.n_max)
            .filter_map(|n| {
                let block = self.sector_block(n);
                let q = linalg::trace(&block).re;
                (q > 0.0).then(|| Sector {
                    total: n,
                    weight: q,
                    rho: block.unscale(q),
                })
            })
            .collect();
        BlockState {
            sectors,
            cutoff: self.cutoff,
            truncation_loss: 0.0,
        }
    }
}

fn check_density(m: &CMatrix, what: &str) -> Result<()> {
    let herm = linalg::hermiticity_defect(m);
    if herm > NORMALIZATION_TOL {
        return Err(Error::invariant(format!(
            "{what} is not Hermitian (defect {herm:.3e})"
        )));
    }
    let tr = linalg::trace(m);
    if (tr.re - 1.0).abs() > NORMALIZATION_TOL || tr.im.abs() > NORMALIZATION_TOL {
        return Err(Error::invariant(format!("{what} has trace {tr}")));
    }
    let min = linalg::min_eigenvalue(m);
    if min < -PSD_TOL {
        return Err(Error::invariant(format!(
            "{what} has negative eigenvalue {min:.3e}"
        )));
    }
    Ok(())
}

/// Any of the three state representations.
#[derive(Debug, Clone, PartialEq)]
pub enum State {
    Pure(StateVector),
    Block(BlockState),
    Mixed(GeneralState),
}

impl State {
    pub fn cutoff(&self) -> &CutoffPolicy {
        match self {
            State::Pure(s) => s.cutoff(),
            State::Block(s) => s.cutoff(),
            State::Mixed(s) => s.cutoff(),
        }
    }

    pub fn truncation_loss(&self) -> f64 {
        match self {
            State::Pure(s) => s.truncation_loss(),
            State::Block(s) => s.truncation_loss(),
            State::Mixed(_) => 0.0,
        }
    }

    pub fn sector_weights(&self) -> BTreeMap<u32, f64> {
        match self {
            State::Pure(s) => s.sector_weights(),
            State::Block(s) => s.sector_weights(),
            State::Mixed(s) => s.sector_weights(),
        }
    }

    pub fn moments(&self) -> Moments {
        Moments::from_weights(&self.sector_weights())
    }

    pub fn has_number_coherences(&self) -> bool {
        match self {
            State::Pure(s) => s.has_number_coherences(),
            State::Block(_) => false,
            State::Mixed(s) => s.has_number_coherences(),
        }
    }

    pub fn project_number_sectors(&self) -> BlockState {
        match self {
            State::Pure(s) => s.project_number_sectors(),
            State::Block(s) => s.clone(),
            State::Mixed(s) => s.project_number_sectors(),
        }
    }

    pub fn to_general(&self) -> GeneralState {
        match self {
            State::Pure(s) => s.to_general(),
            State::Block(s) => s.to_general(),
            State::Mixed(s) => s.clone(),
        }
    }
}

impl From<StateVector> for State {
    fn from(s: StateVector) -> Self {
        State::Pure(s)
    }
}

impl From<BlockState> for State {
    fn from(s: BlockState) -> Self {
        State::Block(s)
    }
}

impl From<GeneralState> for State {
    fn from(s: GeneralState) -> Self {
        State::Mixed(s)
    }
}
