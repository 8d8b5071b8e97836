//! Classical and quantum Fisher information and Cramér-Rao bounds.

use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fockspace::{BasisIndex, BlockState, GeneralState, State, StateVector};
use crate::linalg::{self, CMatrix};
use crate::measurement::{matrix_povm, OutcomeModel, Povm};
use crate::spinops::{collective_spin, spin_block, su2_unitary, Direction, Generator, OperatorMatrix};

/// Eigenvalue pairs with `p_i + p_j` below this contribute nothing.
pub const PAIR_CUTOFF: f64 = 1e-12;
pub const DIFF_STEP: f64 = 1e-5;
const PROB_FLOOR: f64 = 1e-14;
const DERIV_FLOOR: f64 = 1e-10;
const SLD_DEGENERACY_TOL: f64 = 1e-9;
const SINGULAR_RATIO: f64 = 1e-12;

/// `4 (⟨H²⟩ − ⟨H⟩²)` for a pure state.
pub fn qfi_pure(state: &StateVector, generator: &OperatorMatrix) -> Result<f64> {
    let norm = state.norm_sqr();
    if (norm - 1.0).abs() > crate::fockspace::NORMALIZATION_TOL {
        return Err(Error::invariant(format!("state norm² is {norm}")));
    }
    let h = generator.apply(state);
    let mean: f64 = state
        .amplitudes()
        .iter()
        .filter_map(|(i, a)| h.get(i).map(|hv| (a.conj() * hv).re))
        .sum();
    let second: f64 = h.values().map(|v| v.norm_sqr()).sum();
    Ok((4.0 * (second - mean * mean)).max(0.0))
}

/// Spectral formula `2 Σ (p_i − p_j)²/(p_i + p_j) |⟨i|H|j⟩|²`.
pub fn qfi_spectral(rho: &CMatrix, h: &CMatrix) -> f64 {
    let (p, v) = linalg::hermitian_eigen(rho);
    let hv = v.adjoint() * h * &v;
    let mut f = 0.0;
    for i in 0..p.len() {
        for j in 0..p.len() {
            let s = p[i] + p[j];
            if s > PAIR_CUTOFF {
                f += (p[i] - p[j]).powi(2) / s * hv[(i, j)].norm_sqr();
            }
        }
    }
    2.0 * f
}

pub fn qfi_mixed(state: &GeneralState, generator: &OperatorMatrix) -> Result<f64> {
    if generator.n_max() != state.cutoff().n_max {
        return Err(Error::DimensionMismatch {
            expected: state.cutoff().dim(),
            found: crate::fockspace::basis_dim(generator.n_max()),
        });
    }
    Ok(qfi_spectral(state.matrix(), &generator.dense()))
}

/// `Σ_N Q_N F_Q[ρ^(N), J_n^(N)]`.
pub fn qfi_block(state: &BlockState, direction: Direction) -> f64 {
    state
        .sectors()
        .iter()
        .map(|s| s.weight * qfi_spectral(&s.rho, &spin_block(&direction, s.total)))
        .sum()
}

/// QFI for any state representation; number-diagonal states have zero QFI
/// for `N̂`.
pub fn qfi(state: &State, generator: Generator) -> Result<f64> {
    let op = OperatorMatrix::new(generator, state.cutoff());
    match state {
        State::Pure(v) => qfi_pure(v, &op),
        State::Block(b) => Ok(match op.direction() {
            Some(d) => qfi_block(b, d),
            None => 0.0,
        }),
        State::Mixed(g) => qfi_mixed(g, &op),
    }
}

/// Symmetric 3×3 matrix `M` with `F_Q[ρ, J_n] = nᵀ M n`.
pub fn qfi_direction_tensor(state: &State) -> Result<Matrix3<f64>> {
    let axes = [Direction::x(), Direction::y(), Direction::z()];
    match state {
        State::Pure(v) => {
            let hs: Vec<_> = axes.iter().map(|d| collective_spin(*d, v.cutoff()).apply(v)).collect();
            let means: Vec<f64> = hs
                .iter()
                .map(|h| {
                    v.amplitudes()
                        .iter()
                        .filter_map(|(i, a)| h.get(i).map(|x| (a.conj() * x).re))
                        .sum()
                })
                .collect();
            let mut m = Matrix3::zeros();
            for a in 0..3 {
                for b in a..3 {
                    let cross: Complex64 = hs[a]
                        .iter()
                        .filter_map(|(i, x)| hs[b].get(i).map(|y| x.conj() * y))
                        .sum();
                    let val = 4.0 * (cross.re - means[a] * means[b]);
                    m[(a, b)] = val;
                    m[(b, a)] = val;
                }
            }
            Ok(m)
        }
        State::Block(b) => {
            let mut m = Matrix3::zeros();
            for s in b.sectors() {
                let gens: Vec<_> = axes.iter().map(|d| spin_block(d, s.total)).collect();
                m += spectral_tensor(&s.rho, &gens) * s.weight;
            }
            Ok(m)
        }
        State::Mixed(g) => {
            let gens: Vec<_> = axes.iter().map(|d| collective_spin(*d, g.cutoff()).dense()).collect();
            Ok(spectral_tensor(g.matrix(), &gens))
        }
    }
}

fn spectral_tensor(rho: &CMatrix, gens: &[CMatrix]) -> Matrix3<f64> {
    let (p, v) = linalg::hermitian_eigen(rho);
    let hv: Vec<CMatrix> = gens.iter().map(|h| v.adjoint() * h * &v).collect();
    let mut m = Matrix3::zeros();
    for i in 0..p.len() {
        for j in 0..p.len() {
            let s = p[i] + p[j];
            if s <= PAIR_CUTOFF {
                continue;
            }
            let w = 2.0 * (p[i] - p[j]).powi(2) / s;
            if w == 0.0 {
                continue;
            }
            for a in 0..3 {
                for b in 0..3 {
                    m[(a, b)] += w * (hv[a][(i, j)] * hv[b][(j, i)]).re;
                }
            }
        }
    }
    m
}

/// Dense `e^{−iθH} ρ e^{iθH}` for `H` = `J_n` or `N̂`.
pub fn evolve_dense(rho: &CMatrix, generator: &OperatorMatrix, theta: f64) -> Result<CMatrix> {
    let cutoff = crate::fockspace::CutoffPolicy::with_n_max(generator.n_max());
    if rho.nrows() != cutoff.dim() {
        return Err(Error::DimensionMismatch {
            expected: cutoff.dim(),
            found: rho.nrows(),
        });
    }
    let u = match generator.direction() {
        Some(d) => su2_unitary(d, theta, &cutoff)?.dense(),
        None => {
            let dim = cutoff.dim();
            CMatrix::from_fn(dim, dim, |r, c| {
                if r == c {
                    let n = BasisIndex::from_position(r).total() as f64;
                    Complex64::from_polar(1.0, -theta * n)
                } else {
                    linalg::ZERO
                }
            })
        }
    };
    Ok(&u * rho * u.adjoint())
}

/// Symmetric logarithmic derivative of `ρ(θ) = e^{−iθH} ρ e^{iθH}`, solved on
/// the support of `ρ(θ)` with the kernel-kernel block set to zero.
pub fn sld(state: &State, generator: Generator, theta: f64) -> Result<CMatrix> {
    let op = OperatorMatrix::new(generator, state.cutoff());
    let rho = evolve_dense(state.to_general().matrix(), &op, theta)?;
    let h = op.dense();
    let (p, v) = linalg::hermitian_eigen(&rho);
    let hv = v.adjoint() * h * &v;
    let n = p.len();
    let mut l = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let s = p[i] + p[j];
            if s > PAIR_CUTOFF {
                // ∂ρ = −i[H, ρ] in the eigenbasis of ρ
                let d = Complex64::new(0.0, -1.0) * hv[(i, j)] * (p[j] - p[i]);
                l[(i, j)] = d * (2.0 / s);
            }
        }
    }
    Ok(&v * l * v.adjoint())
}

/// Projectors onto the eigenspaces of the SLD, as a POVM.
pub fn sld_povm(state: &State, generator: Generator, theta: f64) -> Result<Povm> {
    let l = sld(state, generator, theta)?;
    let (values, vectors) = linalg::hermitian_eigen(&l);
    let mut projectors = Vec::new();
    let mut start = 0;
    while start < values.len() {
        let mut end = start + 1;
        while end < values.len() && values[end] - values[end - 1] <= SLD_DEGENERACY_TOL {
            end += 1;
        }
        let cols = vectors.columns(start, end - start);
        projectors.push(&cols * cols.adjoint());
        start = end;
    }
    matrix_povm(projectors, state.cutoff())
}

fn central(f: &dyn Fn(f64) -> Result<Vec<f64>>, x: f64, h: f64) -> Result<Vec<f64>> {
    let plus = f(x + h)?;
    let minus = f(x - h)?;
    Ok(plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * h)).collect())
}

/// Derivative of every outcome probability; a second step size checks the
/// first and Richardson extrapolation is used when they disagree.
fn probability_derivatives(f: &dyn Fn(f64) -> Result<Vec<f64>>, x: f64) -> Result<Vec<f64>> {
    let d1 = central(f, x, DIFF_STEP)?;
    let d2 = central(f, x, 2.0 * DIFF_STEP)?;
    Ok(d1
        .iter()
        .zip(&d2)
        .map(|(&a, &b)| {
            if (a - b).abs() > 1e-8 * a.abs().max(1e-8) {
                (4.0 * a - b) / 3.0
            } else {
                a
            }
        })
        .collect())
}

fn fisher_from(
    model: &OutcomeModel,
    probs: &[f64],
    derivs: &[&[f64]],
    theta: f64,
) -> Result<DMatrix<f64>> {
    let k = derivs.len();
    let mut f = DMatrix::zeros(k, k);
    for (e, &p) in probs.iter().enumerate() {
        let biggest = derivs.iter().map(|d| d[e].abs()).fold(0.0, f64::max);
        if p < PROB_FLOOR {
            if biggest < DERIV_FLOOR {
                continue;
            }
            return Err(Error::SingularOutcome {
                label: model.povm().effects()[e].label.to_string(),
                theta,
            });
        }
        for a in 0..k {
            for b in 0..k {
                f[(a, b)] += derivs[a][e] * derivs[b][e] / p;
            }
        }
    }
    Ok(f)
}

/// `Σ_ε (∂_θ P)² / P` for a prepared model.
pub fn cfi_model(model: &OutcomeModel, theta: f64, phi0: f64) -> Result<f64> {
    let probs = model.probabilities(theta, phi0)?;
    let d = probability_derivatives(&|t| model.probabilities(t, phi0), theta)?;
    Ok(fisher_from(model, &probs, &[&d], theta)?[(0, 0)])
}

/// Classical Fisher information of `θ` for the family `e^{−iθJ_n}`.
pub fn cfi(state: &State, direction: Direction, povm: &Povm, theta: f64) -> Result<f64> {
    cfi_model(&OutcomeModel::new(state, direction, povm)?, theta, 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FisherMatrix {
    #[serde(serialize_with = "rows")]
    pub entries: DMatrix<f64>,
    pub parameters: Vec<String>,
}

fn rows<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.serialize(s)
}

impl FisherMatrix {
    pub fn new(entries: DMatrix<f64>, parameters: Vec<String>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() != parameters.len() {
            return Err(Error::DimensionMismatch {
                expected: parameters.len(),
                found: entries.nrows(),
            });
        }
        let sym = (&entries + entries.transpose()) * 0.5;
        Ok(Self {
            entries: sym,
            parameters,
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    pub fn determinant(&self) -> f64 {
        self.entries.determinant()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.entries
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_nonnegative(&self, slack: f64) -> bool {
        self.min_eigenvalue() >= -slack
    }

    /// Inverse, refused when `det ≤ 1e−12 · trace²`.
    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        let det = self.determinant();
        let tr = self.trace();
        if !(det > SINGULAR_RATIO * tr * tr) || tr <= 0.0 {
            return Err(Error::SingularFisher { det, trace: tr });
        }
        self.entries
            .clone()
            .try_inverse()
            .ok_or(Error::SingularFisher { det, trace: tr })
    }

    /// Fisher information of `m` independent repetitions.
    pub fn scaled(&self, m: u64) -> Self {
        Self {
            entries: &self.entries * m as f64,
            parameters: self.parameters.clone(),
        }
    }

    /// `Jᵀ F J` for old parameters `x(y)` with `J = ∂x/∂y`.
    pub fn reparameterize(&self, jacobian: &DMatrix<f64>, parameters: Vec<String>) -> Result<Self> {
        Self::new(jacobian.transpose() * &self.entries * jacobian, parameters)
    }

    /// From `(φ₀, θ)` to the mode phases `(θ₁, θ₂) = (φ₀ + θ/2, φ₀ − θ/2)`.
    pub fn to_mode_phases(&self) -> Result<Self> {
        if self.parameters != ["phi0", "theta"] {
            return Err(Error::param("expected a (phi0, theta) Fisher matrix"));
        }
        let j = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 1.0, -1.0]);
        self.reparameterize(&j, vec!["theta1".into(), "theta2".into()])
    }
}

/// Fisher matrix for `(φ₀, θ)` in `e^{−iφ₀N̂} e^{−iθJ_n}`.
pub fn fisher_matrix_2param(
    state: &State,
    direction: Direction,
    povm: &Povm,
    phi0: f64,
    theta: f64,
) -> Result<FisherMatrix> {
    let model = OutcomeModel::new(state, direction, povm)?;
    let probs = model.probabilities(theta, phi0)?;
    let d_phi = probability_derivatives(&|x| model.probabilities(theta, x), phi0)?;
    let d_theta = probability_derivatives(&|t| model.probabilities(t, phi0), theta)?;
    let f = fisher_from(&model, &probs, &[&d_phi, &d_theta], theta)?;
    FisherMatrix::new(f, vec!["phi0".into(), "theta".into()])
}

/// Pure-state QFI matrix `2⟨{H_i, H_j}⟩ − 4⟨H_i⟩⟨H_j⟩`.
pub fn qfi_matrix_pure(state: &StateVector, generators: &[OperatorMatrix]) -> Result<FisherMatrix> {
    let norm = state.norm_sqr();
    if (norm - 1.0).abs() > crate::fockspace::NORMALIZATION_TOL {
        return Err(Error::invariant(format!("state norm² is {norm}")));
    }
    let hs: Vec<_> = generators.iter().map(|g| g.apply(state)).collect();
    let means: Vec<f64> = hs
        .iter()
        .map(|h| {
            state
                .amplitudes()
                .iter()
                .filter_map(|(i, a)| h.get(i).map(|x| (a.conj() * x).re))
                .sum()
        })
        .collect();
    let k = generators.len();
    let mut m = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let cross: Complex64 = hs[a]
                .iter()
                .filter_map(|(i, x)| hs[b].get(i).map(|y| x.conj() * y))
                .sum();
            let v = 4.0 * cross.re - 4.0 * means[a] * means[b];
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    FisherMatrix::new(m, generators.iter().map(|g| g.label()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Cr,
    Qcr,
    MatrixCr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrReport {
    /// `(Δθ)²` in rad².
    pub variance_bound: f64,
    pub delta_theta: f64,
    pub m: u64,
    pub bias_derivative: f64,
    pub kind: BoundKind,
}

/// `(Δθ)² = b² / (m F)`.
pub fn cr_bound(f: f64, m: u64, b: f64) -> Result<CrReport> {
    scalar_bound(f, m, b, BoundKind::Cr)
}

/// `(Δθ)² = 1 / (m F_Q)`.
pub fn qcr_bound(fq: f64, m: u64) -> Result<CrReport> {
    scalar_bound(fq, m, 1.0, BoundKind::Qcr)
}

fn scalar_bound(f: f64, m: u64, b: f64, kind: BoundKind) -> Result<CrReport> {
    if m == 0 {
        return Err(Error::param("m must be at least 1"));
    }
    if !(f > 0.0) || !f.is_finite() {
        return Err(Error::param(format!("Fisher information must be positive and finite, got {f}")));
    }
    let v = b * b / (m as f64 * f);
    Ok(CrReport {
        variance_bound: v,
        delta_theta: v.sqrt(),
        m,
        bias_derivative: b,
        kind,
    })
}

/// `B = b F⁻¹ bᵀ / m`.
pub fn cr_matrix(f: &FisherMatrix, b: &DMatrix<f64>, m: u64) -> Result<DMatrix<f64>> {
    if m == 0 {
        return Err(Error::param("m must be at least 1"));
    }
    if b.ncols() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: b.ncols(),
        });
    }
    Ok(b * f.inverse()? * b.transpose() / m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::{make_named_state, CutoffPolicy, NamedState, Sector};
    use crate::measurement::{named_povm, PovmKind};

    fn named(s: NamedState, n_max: u32) -> State {
        make_named_state(&s, &CutoffPolicy::with_n_max(n_max)).unwrap()
    }

    #[test]
    fn noon_and_moon_values() {
        let noon = named(NamedState::Noon { n: 4, phi: 0.0 }, 4);
        assert!((qfi(&noon, Generator::Jz).unwrap() - 16.0).abs() < 1e-12);
        let moon = named(NamedState::Moon { n: 2, m: 1, phi: 0.0 }, 2);
        assert!((qfi(&moon, Generator::Jz).unwrap() - 2.0).abs() < 1e-12);
        let vc = named(NamedState::VacuumCoherence { n: 4, mean_n: 1.0, phi: 0.0 }, 4);
        assert!((qfi(&vc, Generator::Jz).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_matches_pure_on_rank_one() {
        let s = named(NamedState::Noon { n: 3, phi: 0.4 }, 3);
        let g = State::Mixed(s.to_general());
        assert!((qfi(&g, Generator::Jz).unwrap() - 9.0).abs() < 1e-9);
        let moon = named(NamedState::Moon { n: 3, m: 1, phi: 0.0 }, 3);
        let d = Generator::Jn(Direction::normalized(0.2, 0.9, 0.1).unwrap());
        let a = qfi(&moon, d).unwrap();
        let b = qfi(&State::Mixed(moon.to_general()), d).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn noon_mixture_block_qfi() {
        let s = named(NamedState::NoonMixture { weights: Some(vec![(1, 0.5), (2, 0.5)]), squeezing_r: None }, 2);
        assert!((qfi(&s, Generator::Jz).unwrap() - 2.5).abs() < 1e-12);
        let State::Block(b) = &s else { panic!() };
        let m = qfi_mixed(&b.to_general(), &OperatorMatrix::new(Generator::Jz, b.cutoff())).unwrap();
        assert!((m - 2.5).abs() < 1e-9);
    }

    #[test]
    fn direction_tensor_reproduces_qfi() {
        let states = [
            named(NamedState::Moon { n: 3, m: 2, phi: 0.5 }, 3),
            State::Block(named(NamedState::Moon { n: 3, m: 2, phi: 0.5 }, 3).project_number_sectors()),
            State::Mixed(named(NamedState::TwinFock { n: 1 }, 2).to_general()),
        ];
        let d = Direction::normalized(0.3, -0.7, 0.5).unwrap();
        for s in &states {
            let m = qfi_direction_tensor(s).unwrap();
            let v = nalgebra::Vector3::from(d.as_array());
            let quad = (v.transpose() * m * v)[(0, 0)];
            assert!((quad - qfi(s, Generator::Jn(d)).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn sld_properties() {
        let s = named(NamedState::Noon { n: 2, phi: 0.0 }, 2);
        let l = sld(&s, Generator::Jz, 0.3).unwrap();
        assert!(linalg::hermiticity_defect(&l) < 1e-12);
        let rho = evolve_dense(s.to_general().matrix(), &OperatorMatrix::new(Generator::Jz, s.cutoff()), 0.3).unwrap();
        assert!(linalg::trace_product(&rho, &l).norm() < 1e-9);
        let l2 = linalg::trace_product(&rho, &(&l * &l)).re;
        assert!((l2 - 4.0).abs() < 1e-8);

        // diagonal in the generator eigenbasis: nothing to learn
        let c = CutoffPolicy::with_n_max(2);
        let rho = CMatrix::from_diagonal(&nalgebra::DVector::from_fn(6, |i, _| Complex64::new((i + 1) as f64 / 21.0, 0.0)));
        let st = State::Mixed(GeneralState::new(rho, c).unwrap());
        assert!(linalg::max_abs(&sld(&st, Generator::Jz, 0.0).unwrap()) < 1e-12);
    }

    #[test]
    fn sld_povm_attains_qfi() {
        let s = named(NamedState::Moon { n: 2, m: 1, phi: 0.0 }, 2);
        let b = State::Block(s.project_number_sectors());
        let d = Direction::normalized(0.6, 0.3, 0.2).unwrap();
        let theta = 0.45;
        let povm = sld_povm(&b, Generator::Jn(d), theta).unwrap();
        let f = cfi(&b, d, &povm, theta).unwrap();
        let fq = qfi(&b, Generator::Jn(d)).unwrap();
        assert!((f - fq).abs() < 1e-6, "{f} vs {fq}");
    }

    #[test]
    fn single_particle_cfi_is_one() {
        let c = CutoffPolicy::with_n_max(1);
        let s = State::Pure(
            StateVector::new([(BasisIndex::from_modes(1, 0), Complex64::new(1.0, 0.0))], c).unwrap(),
        );
        let povm = named_povm(PovmKind::Port1Number, &c).unwrap();
        for theta in [0.3, 1.0, 2.0, 3.0] {
            assert!((cfi(&s, Direction::y(), &povm, theta).unwrap() - 1.0).abs() < 1e-7);
        }
        // |1,0⟩ is invariant under rotations about z
        assert!(cfi(&s, Direction::z(), &povm, 0.7).unwrap().abs() < 1e-12);
    }

    #[test]
    fn singular_outcome_flagged() {
        let c = CutoffPolicy::with_n_max(1);
        let s = State::Pure(
            StateVector::new([(BasisIndex::from_modes(1, 0), Complex64::new(1.0, 0.0))], c).unwrap(),
        );
        let povm = named_povm(PovmKind::Port1Number, &c).unwrap();
        let near_dark = std::f64::consts::PI - 1e-8;
        assert!(matches!(
            cfi(&s, Direction::y(), &povm, near_dark),
            Err(Error::SingularOutcome { .. })
        ));
    }

    #[test]
    fn fisher_matrix_structure() {
        let s = named(NamedState::Moon { n: 2, m: 1, phi: 0.0 }, 2);
        let povm = named_povm(PovmKind::Port1Number, s.cutoff()).unwrap();
        let d = Direction::y();
        let f = fisher_matrix_2param(&s, d, &povm, 0.3, 0.8).unwrap();
        assert!(f.get(0, 0).abs() < 1e-9 && f.get(0, 1).abs() < 1e-9);
        let scalar = cfi(&s, d, &povm, 0.8).unwrap();
        assert!((f.get(1, 1) - scalar).abs() < 1e-9);
        assert!(f.is_nonnegative(1e-9));
        assert!(f.inverse().is_err());
        let ten = f.scaled(10);
        assert!((ten.get(1, 1) - 10.0 * f.get(1, 1)).abs() < 1e-9);
        let modes = f.to_mode_phases().unwrap();
        assert_eq!(modes.parameters, ["theta1", "theta2"]);
    }

    #[test]
    fn inverse_closed_form() {
        let f = FisherMatrix::new(DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]), vec!["a".into(), "b".into()]).unwrap();
        let inv = f.inverse().unwrap();
        let det = 3.0 * 2.0 - 1.0;
        let closed = DMatrix::from_row_slice(2, 2, &[2.0 / det, -1.0 / det, -1.0 / det, 3.0 / det]);
        assert!((inv - closed).abs().max() < 1e-14);
    }

    #[test]
    fn qfi_matrix_of_moon() {
        let s = named(NamedState::Moon { n: 2, m: 1, phi: 0.0 }, 2);
        let State::Pure(v) = &s else { panic!() };
        let c = v.cutoff();
        let f = qfi_matrix_pure(v, &[OperatorMatrix::new(Generator::Number, c), OperatorMatrix::new(Generator::Jz, c)]).unwrap();
        // weights 2/3, 1/3 on N = 1, 2: ⟨N⟩ = 4/3, ⟨N²⟩ = 2, ΔN² = 2/9
        let m = s.moments();
        assert!((m.var_n - 2.0 / 9.0).abs() < 1e-14);
        assert!((f.get(0, 0) - 4.0 * m.var_n).abs() < 1e-12);
        assert!((f.get(1, 1) - 2.0).abs() < 1e-12);
        assert!(f.is_nonnegative(1e-9));

        let fixed = named(NamedState::Noon { n: 3, phi: 0.0 }, 3);
        let State::Pure(v) = &fixed else { panic!() };
        let c = v.cutoff();
        let f = qfi_matrix_pure(v, &[OperatorMatrix::new(Generator::Number, c), OperatorMatrix::new(Generator::Jz, c)]).unwrap();
        assert!(f.get(0, 0).abs() < 1e-12 && f.get(0, 1).abs() < 1e-12);
    }

    #[test]
    fn bounds() {
        let r = cr_bound(1.0, 100, 1.0).unwrap();
        assert!((r.delta_theta - 0.1).abs() < 1e-15);
        assert!(cr_bound(0.0, 10, 1.0).is_err());
        assert!(qcr_bound(1.0, 0).is_err());
        let f = FisherMatrix::new(DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]), vec!["a".into(), "b".into()]).unwrap();
        let b = DMatrix::identity(2, 2);
        let m = cr_matrix(&f, &b, 5).unwrap();
        assert!(m[(0, 0)] >= 1.0 / (5.0 * 4.0) - 1e-15);
        assert!(m[(1, 1)] >= 1.0 / (5.0 * 3.0) - 1e-15);
    }

    #[test]
    fn block_qfi_single_sector() {
        let c = CutoffPolicy::with_n_max(2);
        let rho = CMatrix::from_row_slice(3, 3, &[
            Complex64::new(0.5, 0.0), Complex64::new(0.2, 0.1), Complex64::new(0.0, 0.0),
            Complex64::new(0.2, -0.1), Complex64::new(0.3, 0.0), Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.2, 0.0),
        ]);
        let b = BlockState::new(vec![Sector { total: 2, weight: 1.0, rho: rho.clone() }], c).unwrap();
        let d = Direction::x();
        assert!((qfi_block(&b, d) - qfi_spectral(&rho, &spin_block(&d, 2))).abs() < 1e-14);
    }
}
