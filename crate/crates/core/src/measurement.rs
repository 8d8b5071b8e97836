//! POVMs and θ-dependent outcome distributions.
//!
//! Probabilities are `P(ε|θ) = Tr[Ê(ε) R Û ρ Û† R†]` with
//! `Û = e^{−iφ₀N̂} e^{−iθJ_n}` and an optional fixed readout rotation `R`
//! applied just before detection. Whenever the state or the POVM is
//! number-diagonal the computation runs sector by sector,
//! `P(ε|θ) = Σ_N Q_N P(ε|N, θ)`, and `φ₀` drops out.

use std::collections::BTreeMap;
use std::fmt;

use evalexpr::{ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Value};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fockspace::{basis_enumerate, sector_start, BasisIndex, CutoffPolicy, State};
use crate::linalg::{self, CMatrix, CVector};
use crate::spinops::{Direction, SpinRotor};

pub const EFFECT_PSD_TOL: f64 = 1e-10;
pub const COMPLETENESS_TOL: f64 = 1e-9;
pub const COMMUTATOR_TOL: f64 = 1e-12;

/// Exact outcome identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OutcomeLabel {
    /// Relative number `μ`, stored as `2μ`.
    Relative(i32),
    Port1(u32),
    Parity(i8),
    /// `(N, 2μ)`.
    TotalRelative(u32, i32),
    Value(i64),
    Index(usize),
}

fn fmt_half(f: &mut fmt::Formatter<'_>, twice: i32) -> fmt::Result {
    if twice % 2 == 0 {
        write!(f, "{}", twice / 2)
    } else {
        write!(f, "{twice}/2")
    }
}

impl fmt::Display for OutcomeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            OutcomeLabel::Relative(m2) => fmt_half(f, m2),
            OutcomeLabel::Port1(n) => write!(f, "{n}"),
            OutcomeLabel::Parity(p) => write!(f, "{p:+}"),
            OutcomeLabel::TotalRelative(n, m2) => {
                write!(f, "{n}:")?;
                fmt_half(f, m2)
            }
            OutcomeLabel::Value(v) => write!(f, "{v}"),
            OutcomeLabel::Index(i) => write!(f, "#{i}"),
        }
    }
}

impl Serialize for OutcomeLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Matrix of one effect in the cheapest faithful representation.
#[derive(Debug, Clone, PartialEq)]
pub enum EffectMatrix {
    /// Diagonal in the Fock basis; absent entries are zero.
    FockDiagonal(BTreeMap<BasisIndex, f64>),
    /// Block diagonal in `N`; absent sectors are zero.
    Blocks(BTreeMap<u32, CMatrix>),
    /// Full matrix in sector-major ordering.
    Dense(CMatrix),
}

impl EffectMatrix {
    /// Diagonal block `E_{NN}`.
    pub fn sector_block(&self, n: u32) -> CMatrix {
        let d = n as usize + 1;
        match self {
            EffectMatrix::FockDiagonal(map) => {
                let mut m = CMatrix::zeros(d, d);
                for (idx, w) in map.range(sector_range(n)) {
                    let k = idx.sector_offset();
                    m[(k, k)] = Complex64::new(*w, 0.0);
                }
                m
            }
            EffectMatrix::Blocks(b) => b.get(&n).cloned().unwrap_or_else(|| CMatrix::zeros(d, d)),
            EffectMatrix::Dense(m) => {
                let off = sector_start(n);
                m.view((off, off), (d, d)).into_owned()
            }
        }
    }

    pub fn dense(&self, cutoff: &CutoffPolicy) -> CMatrix {
        match self {
            EffectMatrix::Dense(m) => m.clone(),
            _ => {
                let dim = cutoff.dim();
                let mut m = CMatrix::zeros(dim, dim);
                for n in 0..=cutoff.n_max {
                    let off = sector_start(n);
                    let d = n as usize + 1;
                    m.view_mut((off, off), (d, d)).copy_from(&self.sector_block(n));
                }
                m
            }
        }
    }

    fn number_diagonal(&self) -> bool {
        match self {
            EffectMatrix::Dense(m) => {
                let dim = m.nrows();
                let totals: Vec<u32> = (0..dim).map(|p| BasisIndex::from_position(p).total()).collect();
                (0..dim).all(|i| {
                    (0..dim).all(|j| {
                        let dn = (totals[i] as f64 - totals[j] as f64).abs();
                        m[(i, j)].norm() * dn <= COMMUTATOR_TOL
                    })
                })
            }
            _ => true,
        }
    }
}

fn sector_range(n: u32) -> std::ops::RangeInclusive<BasisIndex> {
    BasisIndex::from_sector_offset(n, 0)..=BasisIndex::from_sector_offset(n, n as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PovmEffect {
    pub label: OutcomeLabel,
    pub matrix: EffectMatrix,
}

/// Fixed spin rotation `e^{−iθJ_n}` applied after the transformation and
/// before detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutStep {
    pub direction: Direction,
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Readout {
    steps: Vec<ReadoutStep>,
    blocks: Vec<CMatrix>,
}

impl Readout {
    fn new(steps: Vec<ReadoutStep>, cutoff: &CutoffPolicy) -> Result<Self> {
        let mut blocks: Vec<CMatrix> = (0..=cutoff.n_max)
            .map(|n| CMatrix::identity(n as usize + 1, n as usize + 1))
            .collect();
        for step in &steps {
            let rotor = SpinRotor::for_cutoff(step.direction, cutoff)?;
            for (n, b) in blocks.iter_mut().enumerate() {
                *b = rotor.unitary(n as u32, step.angle)? * &*b;
            }
        }
        Ok(Self { steps, blocks })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    effects: Vec<PovmEffect>,
    cutoff: CutoffPolicy,
    number_diagonal: bool,
    readout: Option<Readout>,
    /// Global position → `(effect, weight)` for Fock-diagonal effects.
    fock_table: Vec<Vec<(usize, f64)>>,
    other_effects: Vec<usize>,
}

impl Povm {
    /// Validates hermiticity, positivity and completeness.
    pub fn new(effects: Vec<PovmEffect>, cutoff: CutoffPolicy) -> Result<Self> {
        if effects.is_empty() {
            return Err(Error::invariant("POVM has no effects"));
        }
        let dim = cutoff.dim();
        let mut seen = std::collections::BTreeSet::new();
        for e in &effects {
            if !seen.insert(e.label) {
                return Err(Error::invariant(format!("duplicate outcome label {}", e.label)));
            }
            match &e.matrix {
                EffectMatrix::FockDiagonal(map) => {
                    for (idx, w) in map {
                        if idx.total() > cutoff.n_max {
                            return Err(Error::DimensionMismatch {
                                expected: dim,
                                found: idx.position() + 1,
                            });
                        }
                        if *w < -EFFECT_PSD_TOL || !w.is_finite() {
                            return Err(Error::invariant(format!("effect {} has negative weight {w}", e.label)));
                        }
                    }
                }
                EffectMatrix::Blocks(blocks) => {
                    for (n, b) in blocks {
                        if *n > cutoff.n_max || b.nrows() != *n as usize + 1 {
                            return Err(Error::DimensionMismatch {
                                expected: *n as usize + 1,
                                found: b.nrows(),
                            });
                        }
                        check_effect_block(b, &e.label)?;
                    }
                }
                EffectMatrix::Dense(m) => {
                    if m.nrows() != dim || m.ncols() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            found: m.nrows(),
                        });
                    }
                    check_effect_block(m, &e.label)?;
                }
            }
        }

        let mut fock_table = vec![Vec::new(); dim];
        let mut other_effects = Vec::new();
        for (i, e) in effects.iter().enumerate() {
            match &e.matrix {
                EffectMatrix::FockDiagonal(map) => {
                    for (idx, w) in map {
                        if *w != 0.0 {
                            fock_table[idx.position()].push((i, *w));
                        }
                    }
                }
                _ => other_effects.push(i),
            }
        }

        let number_diagonal = effects.iter().all(|e| e.matrix.number_diagonal());
        let povm = Self {
            effects,
            cutoff,
            number_diagonal,
            readout: None,
            fock_table,
            other_effects,
        };
        let defect = povm.completeness_defect();
        if defect > COMPLETENESS_TOL {
            return Err(Error::invariant(format!(
                "POVM effects do not sum to the identity (defect {defect:.3e})"
            )));
        }
        Ok(povm)
    }

    /// Adds a readout rotation sequence, applied in list order.
    pub fn with_readout(mut self, steps: Vec<ReadoutStep>) -> Result<Self> {
        self.readout = if steps.is_empty() {
            None
        } else {
            Some(Readout::new(steps, &self.cutoff)?)
        };
        Ok(self)
    }

    pub fn effects(&self) -> &[PovmEffect] {
        &self.effects
    }

    pub fn labels(&self) -> Vec<OutcomeLabel> {
        self.effects.iter().map(|e| e.label).collect()
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    pub fn cutoff(&self) -> &CutoffPolicy {
        &self.cutoff
    }

    pub fn readout(&self) -> &[ReadoutStep] {
        self.readout.as_ref().map(|r| r.steps.as_slice()).unwrap_or(&[])
    }

    /// Cached `[Ê(ε), N̂] = 0` test.
    pub fn is_number_diagonal(&self) -> bool {
        self.number_diagonal
    }

    /// Largest entry of `Σ_ε Ê(ε) − 1`.
    pub fn completeness_defect(&self) -> f64 {
        if self.number_diagonal {
            (0..=self.cutoff.n_max)
                .map(|n| {
                    let d = n as usize + 1;
                    let mut sum = CMatrix::identity(d, d) * Complex64::new(-1.0, 0.0);
                    for e in &self.effects {
                        sum += e.matrix.sector_block(n);
                    }
                    linalg::max_abs(&sum)
                })
                .fold(0.0, f64::max)
        } else {
            let dim = self.cutoff.dim();
            let mut sum = CMatrix::identity(dim, dim) * Complex64::new(-1.0, 0.0);
            for e in &self.effects {
                sum += e.matrix.dense(&self.cutoff);
            }
            linalg::max_abs(&sum)
        }
    }

    /// `⟨v|Ê(ε)|v⟩` for every effect, `v` living in sector `n`.
    fn sector_pure_probs(&self, n: u32, v: &CVector, out: &mut [f64]) {
        let off = sector_start(n);
        for (k, a) in v.iter().enumerate() {
            let pop = a.norm_sqr();
            if pop == 0.0 {
                continue;
            }
            for &(e, w) in &self.fock_table[off + k] {
                out[e] += w * pop;
            }
        }
        for &e in &self.other_effects {
            let block = self.effects[e].matrix.sector_block(n);
            out[e] += linalg::quadratic_form(&block, v).re;
        }
    }

    /// `Tr[Ê(ε) ρ]` for every effect, `ρ` living in sector `n`.
    fn sector_mixed_probs(&self, n: u32, rho: &CMatrix, out: &mut [f64]) {
        let off = sector_start(n);
        for k in 0..rho.nrows() {
            let pop = rho[(k, k)].re;
            for &(e, w) in &self.fock_table[off + k] {
                out[e] += w * pop;
            }
        }
        for &e in &self.other_effects {
            let block = self.effects[e].matrix.sector_block(n);
            out[e] += linalg::trace_product(&block, rho).re;
        }
    }
}

fn check_effect_block(m: &CMatrix, label: &OutcomeLabel) -> Result<()> {
    if linalg::hermiticity_defect(m) > EFFECT_PSD_TOL {
        return Err(Error::invariant(format!("effect {label} is not Hermitian")));
    }
    let lo = linalg::min_eigenvalue(m);
    if lo < -EFFECT_PSD_TOL {
        return Err(Error::invariant(format!("effect {label} has negative eigenvalue {lo:.3e}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PovmKind {
    RelativeNumber,
    Port1Number,
    ParityPort1,
    TotalAndRelative,
    CustomF,
}

/// Partition POVM `Ê(ε) = Σ_{f(n₁,n₂)=ε} |n₁,n₂⟩⟨n₁,n₂|`.
pub fn partition_povm(cutoff: &CutoffPolicy, f: impl Fn(BasisIndex) -> OutcomeLabel) -> Povm {
    let mut groups: BTreeMap<OutcomeLabel, BTreeMap<BasisIndex, f64>> = BTreeMap::new();
    for idx in basis_enumerate(cutoff) {
        groups.entry(f(idx)).or_default().insert(idx, 1.0);
    }
    let effects = groups
        .into_iter()
        .map(|(label, map)| PovmEffect {
            label,
            matrix: EffectMatrix::FockDiagonal(map),
        })
        .collect();
    Povm::new(effects, *cutoff).expect("partition POVMs are complete by construction")
}

/// Named number-diagonal POVMs. `CustomF` needs an expression; use
/// [`custom_f_povm`].
pub fn named_povm(kind: PovmKind, cutoff: &CutoffPolicy) -> Result<Povm> {
    Ok(match kind {
        PovmKind::RelativeNumber => partition_povm(cutoff, |i| OutcomeLabel::Relative(i.mu_twice())),
        PovmKind::Port1Number => partition_povm(cutoff, |i| OutcomeLabel::Port1(i.n1())),
        PovmKind::ParityPort1 => {
            partition_povm(cutoff, |i| OutcomeLabel::Parity(if i.n1() % 2 == 0 { 1 } else { -1 }))
        }
        PovmKind::TotalAndRelative => {
            partition_povm(cutoff, |i| OutcomeLabel::TotalRelative(i.total(), i.mu_twice()))
        }
        PovmKind::CustomF => {
            return Err(Error::param("custom_f POVM requires an expression f(n1, n2)"))
        }
    })
}

/// Bins the Fock basis by an integer-valued expression over `n1`, `n2`
/// (e.g. `"(n1 - n2) % 3"`).
pub fn custom_f_povm(expr: &str, cutoff: &CutoffPolicy) -> Result<Povm> {
    let tree = evalexpr::build_operator_tree::<DefaultNumericTypes>(expr)
        .map_err(|e| Error::Expression(format!("'{expr}': {e}")))?;
    let mut labels = BTreeMap::new();
    let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
    for idx in basis_enumerate(cutoff) {
        ctx.set_value("n1".into(), Value::from_int(idx.n1() as i64))
            .and_then(|_| ctx.set_value("n2".into(), Value::from_int(idx.n2() as i64)))
            .map_err(|e| Error::Expression(e.to_string()))?;
        let value = tree
            .eval_with_context(&ctx)
            .map_err(|e| Error::Expression(format!("'{expr}' at (n1={}, n2={}): {e}", idx.n1(), idx.n2())))?;
        let label = match value {
            Value::Int(v) => v,
            Value::Float(v) if v.fract() == 0.0 && v.abs() < 9.0e15 => v as i64,
            Value::Boolean(b) => b as i64,
            other => {
                return Err(Error::Expression(format!(
                    "'{expr}' must evaluate to an integer, got {other:?} at (n1={}, n2={})",
                    idx.n1(),
                    idx.n2()
                )))
            }
        };
        labels.insert(idx, label);
    }
    Ok(partition_povm(cutoff, |i| OutcomeLabel::Value(labels[&i])))
}

/// POVM from explicit dense matrices; number-diagonal inputs are stored
/// blockwise.
pub fn matrix_povm(matrices: Vec<CMatrix>, cutoff: &CutoffPolicy) -> Result<Povm> {
    let effects = matrices
        .into_iter()
        .enumerate()
        .map(|(i, m)| {
            let dense = EffectMatrix::Dense(m);
            let matrix = if dense.number_diagonal() && dense_dim(&dense) == cutoff.dim() {
                EffectMatrix::Blocks((0..=cutoff.n_max).map(|n| (n, dense.sector_block(n))).collect())
            } else {
                dense
            };
            PovmEffect {
                label: OutcomeLabel::Index(i),
                matrix,
            }
        })
        .collect();
    Povm::new(effects, *cutoff)
}

fn dense_dim(e: &EffectMatrix) -> usize {
    match e {
        EffectMatrix::Dense(m) => m.nrows(),
        _ => 0,
    }
}

/// Matrix entry in JSON: a real number or `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexEntry {
    Real(f64),
    Complex([f64; 2]),
}

impl From<ComplexEntry> for Complex64 {
    fn from(e: ComplexEntry) -> Self {
        match e {
            ComplexEntry::Real(r) => Complex64::new(r, 0.0),
            ComplexEntry::Complex([re, im]) => Complex64::new(re, im),
        }
    }
}

/// JSON POVM description: `{"kind": ..., "f": ...}` or `{"matrices": [...]}`,
/// each optionally with `"readout": [{"direction": .., "angle": ..}, ..]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PovmSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<PovmKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrices: Option<Vec<Vec<Vec<ComplexEntry>>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub readout: Vec<ReadoutStep>,
}

impl PovmSpec {
    pub fn named(kind: PovmKind) -> Self {
        Self {
            kind: Some(kind),
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn build(&self, cutoff: &CutoffPolicy) -> Result<Povm> {
        let povm = match (&self.kind, &self.matrices) {
            (Some(_), Some(_)) => return Err(Error::param("POVM spec has both 'kind' and 'matrices'")),
            (None, None) => return Err(Error::param("POVM spec needs 'kind' or 'matrices'")),
            (Some(PovmKind::CustomF), None) => {
                let f = self.f.as_deref().ok_or_else(|| Error::param("custom_f POVM needs 'f'"))?;
                custom_f_povm(f, cutoff)?
            }
            (Some(kind), None) => {
                if self.f.is_some() {
                    return Err(Error::param("'f' is only valid with kind custom_f"));
                }
                named_povm(*kind, cutoff)?
            }
            (None, Some(rows)) => {
                let dim = cutoff.dim();
                let mut mats = Vec::with_capacity(rows.len());
                for m in rows {
                    if m.len() != dim || m.iter().any(|r| r.len() != dim) {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            found: m.len(),
                        });
                    }
                    mats.push(CMatrix::from_fn(dim, dim, |r, c| m[r][c].into()));
                }
                matrix_povm(mats, cutoff)?
            }
        };
        povm.with_readout(self.readout.clone())
    }
}

/// Probabilities over the POVM's outcomes at one transformation setting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeDistribution {
    pub entries: BTreeMap<OutcomeLabel, f64>,
    pub theta: f64,
    pub phi0: f64,
}

impl OutcomeDistribution {
    pub fn new(entries: BTreeMap<OutcomeLabel, f64>, theta: f64, phi0: f64) -> Result<Self> {
        let total: f64 = entries.values().sum();
        if let Some((l, p)) = entries.iter().find(|(_, p)| **p < -1e-12 || !p.is_finite()) {
            return Err(Error::invariant(format!("outcome {l} has probability {p}")));
        }
        if (total - 1.0).abs() > COMPLETENESS_TOL {
            return Err(Error::invariant(format!("probabilities sum to {total}")));
        }
        Ok(Self { entries, theta, phi0 })
    }

    pub fn probability(&self, label: &OutcomeLabel) -> f64 {
        self.entries.get(label).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn max_deviation(&self, other: &OutcomeDistribution) -> f64 {
        self.entries
            .keys()
            .chain(other.entries.keys())
            .map(|l| (self.probability(l) - other.probability(l)).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
enum SectorContent {
    Pure(CVector),
    Mixed(CMatrix),
}

#[derive(Debug, Clone)]
struct PreparedSector {
    n: u32,
    weight: f64,
    content: SectorContent,
}

#[derive(Debug, Clone)]
enum Prepared {
    Sectors(Vec<PreparedSector>),
    /// Pure state with number coherences, kept as unnormalized sector pieces.
    PureFull(Vec<(u32, CVector)>),
    MixedFull(CMatrix),
}

/// Precomputed likelihood model `θ ↦ P(ε|θ)` for a fixed state, rotation
/// axis and POVM.
#[derive(Debug, Clone)]
pub struct OutcomeModel {
    povm: Povm,
    direction: Direction,
    rotor: SpinRotor,
    prepared: Prepared,
}

impl OutcomeModel {
    pub fn new(state: &State, direction: Direction, povm: &Povm) -> Result<Self> {
        Self::build(state, direction, povm, false)
    }

    /// Always keeps the full state, so that `φ₀` is applied explicitly even
    /// where it provably cancels.
    pub fn new_full(state: &State, direction: Direction, povm: &Povm) -> Result<Self> {
        Self::build(state, direction, povm, true)
    }

    fn build(state: &State, direction: Direction, povm: &Povm, force_full: bool) -> Result<Self> {
        if state.cutoff().n_max != povm.cutoff.n_max {
            return Err(Error::DimensionMismatch {
                expected: povm.cutoff.dim(),
                found: state.cutoff().dim(),
            });
        }
        let sectored = !force_full && (povm.number_diagonal || !state.has_number_coherences());
        let prepared = if sectored {
            Prepared::Sectors(prepare_sectors(state))
        } else {
            match state {
                State::Pure(v) => Prepared::PureFull(
                    v.sector_weights().keys().map(|&n| (n, v.sector_vector(n))).collect(),
                ),
                other => Prepared::MixedFull(other.to_general().matrix().clone()),
            }
        };
        let sectors: Vec<u32> = match &prepared {
            Prepared::Sectors(s) => s.iter().map(|s| s.n).collect(),
            Prepared::PureFull(p) => p.iter().map(|(n, _)| *n).collect(),
            Prepared::MixedFull(_) => (0..=povm.cutoff.n_max).collect(),
        };
        Ok(Self {
            povm: povm.clone(),
            direction,
            rotor: SpinRotor::new(direction, sectors)?,
            prepared,
        })
    }

    pub fn povm(&self) -> &Povm {
        &self.povm
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// True when probabilities decompose over number sectors.
    pub fn is_sectored(&self) -> bool {
        matches!(self.prepared, Prepared::Sectors(_))
    }

    /// `(N, Q_N)` of the sector decomposition.
    pub fn sector_weights(&self) -> Result<Vec<(u32, f64)>> {
        match &self.prepared {
            Prepared::Sectors(s) => Ok(s.iter().map(|s| (s.n, s.weight)).collect()),
            _ => Err(Error::DecompositionInvalid),
        }
    }

    fn rotate_vector(&self, n: u32, theta: f64, v: &CVector) -> Result<CVector> {
        let rotated = self.rotor.rotate(n, theta, v)?;
        Ok(match &self.povm.readout {
            Some(r) => &r.blocks[n as usize] * rotated,
            None => rotated,
        })
    }

    fn sector_unitary(&self, n: u32, theta: f64) -> Result<CMatrix> {
        let u = self.rotor.unitary(n, theta)?;
        Ok(match &self.povm.readout {
            Some(r) => &r.blocks[n as usize] * u,
            None => u,
        })
    }

    fn sector_probs_into(&self, s: &PreparedSector, theta: f64, out: &mut [f64]) -> Result<()> {
        match &s.content {
            SectorContent::Pure(v) => {
                let r = self.rotate_vector(s.n, theta, v)?;
                self.povm.sector_pure_probs(s.n, &r, out);
            }
            SectorContent::Mixed(rho) => {
                let u = self.sector_unitary(s.n, theta)?;
                let r = &u * rho * u.adjoint();
                self.povm.sector_mixed_probs(s.n, &r, out);
            }
        }
        Ok(())
    }

    /// `P(ε|N, θ)` for one sector, indexed like [`Povm::effects`].
    pub fn sector_probabilities(&self, n: u32, theta: f64) -> Result<Vec<f64>> {
        let Prepared::Sectors(sectors) = &self.prepared else {
            return Err(Error::DecompositionInvalid);
        };
        let s = sectors.iter().find(|s| s.n == n).ok_or(Error::UnknownSector(n))?;
        let mut out = vec![0.0; self.povm.len()];
        self.sector_probs_into(s, theta, &mut out)?;
        Ok(out)
    }

    /// `(N, Q_N, P(ε|N, θ))` for every sector.
    pub fn all_sector_probabilities(&self, theta: f64) -> Result<Vec<(u32, f64, Vec<f64>)>> {
        let Prepared::Sectors(sectors) = &self.prepared else {
            return Err(Error::DecompositionInvalid);
        };
        sectors
            .iter()
            .map(|s| {
                let mut out = vec![0.0; self.povm.len()];
                self.sector_probs_into(s, theta, &mut out)?;
                Ok((s.n, s.weight, out))
            })
            .collect()
    }

    /// `P(ε|θ, φ₀)` indexed like [`Povm::effects`].
    pub fn probabilities(&self, theta: f64, phi0: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.povm.len()];
        match &self.prepared {
            Prepared::Sectors(sectors) => {
                let mut buf = vec![0.0; self.povm.len()];
                for s in sectors {
                    buf.iter_mut().for_each(|x| *x = 0.0);
                    self.sector_probs_into(s, theta, &mut buf)?;
                    for (o, b) in out.iter_mut().zip(&buf) {
                        *o += s.weight * b;
                    }
                }
            }
            Prepared::PureFull(pieces) => {
                let dim = self.povm.cutoff.dim();
                let mut full = CVector::zeros(dim);
                for (n, v) in pieces {
                    let phase = Complex64::from_polar(1.0, -phi0 * *n as f64);
                    let r = self.rotate_vector(*n, theta, v)? * phase;
                    full.rows_mut(sector_start(*n), *n as usize + 1).copy_from(&r);
                    self.povm.sector_pure_probs(*n, &r, &mut out);
                }
                // dense effects also see the cross-sector terms
                for &e in &self.povm.other_effects {
                    if let EffectMatrix::Dense(m) = &self.povm.effects[e].matrix {
                        out[e] = linalg::quadratic_form(m, &full).re;
                    }
                }
            }
            Prepared::MixedFull(rho) => {
                let dim = self.povm.cutoff.dim();
                let mut u = CMatrix::zeros(dim, dim);
                for n in 0..=self.povm.cutoff.n_max {
                    let off = sector_start(n);
                    let d = n as usize + 1;
                    let phase = Complex64::from_polar(1.0, -phi0 * n as f64);
                    u.view_mut((off, off), (d, d)).copy_from(&(self.sector_unitary(n, theta)? * phase));
                }
                let r = &u * rho * u.adjoint();
                for (i, e) in self.povm.effects.iter().enumerate() {
                    out[i] = match &e.matrix {
                        EffectMatrix::Dense(m) => linalg::trace_product(m, &r).re,
                        other => linalg::trace_product(&other.dense(&self.povm.cutoff), &r).re,
                    };
                }
            }
        }
        Ok(out)
    }

    pub fn distribution(&self, theta: f64, phi0: f64) -> Result<OutcomeDistribution> {
        let probs = self.probabilities(theta, phi0)?;
        let entries = self.povm.effects.iter().map(|e| e.label).zip(probs).collect();
        OutcomeDistribution::new(entries, theta, phi0)
    }
}

fn prepare_sectors(state: &State) -> Vec<PreparedSector> {
    match state {
        State::Pure(v) => v
            .sector_weights()
            .into_iter()
            .filter(|&(_, q)| q > 0.0)
            .map(|(n, q)| PreparedSector {
                n,
                weight: q,
                content: SectorContent::Pure(v.sector_vector(n).unscale(q.sqrt())),
            })
            .collect(),
        other => other
            .project_number_sectors()
            .sectors()
            .iter()
            .filter(|s| s.weight > 0.0)
            .map(|s| PreparedSector {
                n: s.total,
                weight: s.weight,
                content: SectorContent::Mixed(s.rho.clone()),
            })
            .collect(),
    }
}

/// `P(ε|θ) = Tr[Ê(ε) Û ρ Û†]` for `Û = e^{−iφ₀N̂} e^{−iθJ_n}`.
pub fn outcome_distribution(
    state: &State,
    transform: &crate::spinops::U2AxisParams,
    povm: &Povm,
) -> Result<OutcomeDistribution> {
    OutcomeModel::new(state, transform.axis, povm)?.distribution(transform.theta, transform.phi0)
}

/// Per-sector weight and conditional distribution `(Q_N, P(ε|N, θ))`.
pub fn sector_distribution(
    state: &State,
    direction: Direction,
    theta: f64,
    povm: &Povm,
) -> Result<BTreeMap<u32, (f64, OutcomeDistribution)>> {
    let model = OutcomeModel::new(state, direction, povm)?;
    if !model.is_sectored() {
        return Err(Error::DecompositionInvalid);
    }
    let labels = povm.labels();
    model
        .all_sector_probabilities(theta)?
        .into_iter()
        .map(|(n, q, probs)| {
            let entries = labels.iter().copied().zip(probs).collect();
            Ok((n, (q, OutcomeDistribution::new(entries, theta, 0.0)?)))
        })
        .collect()
}

pub fn is_number_diagonal(p: &Povm) -> bool {
    p.is_number_diagonal()
}
