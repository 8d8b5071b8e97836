//! Collective spin operators in the Schwinger representation and the
//! lossless two-mode transformations they generate.
//!
//! `J_x = (a₁†a₂ + a₂†a₁)/2`, `J_y = (a₁†a₂ − a₂†a₁)/2i`, `J_z = (n₁ − n₂)/2`.
//! All operators are block diagonal in the total number `N`; blocks are
//! produced on demand so that very large cutoffs cost nothing until used.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fockspace::{basis_dim, sector_start, BasisIndex, CutoffPolicy, StateVector};
use crate::linalg::{self, CMatrix, CVector, ZERO};

pub const DIRECTION_TOL: f64 = 1e-12;
/// Below this value of `sin(θ/2)` the rotation axis of an Euler product is
/// treated as undefined.
pub const AXIS_DEGENERACY_TOL: f64 = 1e-9;
const EIGENVALUE_SNAP_TOL: f64 = 1e-8;

/// Unit vector `n = (α, β, γ)` on the Bloch sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl Direction {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let norm2 = alpha * alpha + beta * beta + gamma * gamma;
        if !((norm2 - 1.0).abs() <= DIRECTION_TOL) {
            return Err(Error::param(format!(
                "direction ({alpha}, {beta}, {gamma}) is not a unit vector"
            )));
        }
        Ok(Self { alpha, beta, gamma })
    }

    /// Rescales any nonzero vector onto the sphere.
    pub fn normalized(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let norm = (alpha * alpha + beta * beta + gamma * gamma).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::param("direction vector must be finite and nonzero"));
        }
        Ok(Self {
            alpha: alpha / norm,
            beta: beta / norm,
            gamma: gamma / norm,
        })
    }

    pub fn from_angles(polar: f64, azimuth: f64) -> Self {
        Self {
            alpha: polar.sin() * azimuth.cos(),
            beta: polar.sin() * azimuth.sin(),
            gamma: polar.cos(),
        }
    }

    pub fn x() -> Self {
        Self { alpha: 1.0, beta: 0.0, gamma: 0.0 }
    }

    pub fn y() -> Self {
        Self { alpha: 0.0, beta: 1.0, gamma: 0.0 }
    }

    pub fn z() -> Self {
        Self { alpha: 0.0, beta: 0.0, gamma: 1.0 }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    pub fn dot(&self, other: &Direction) -> f64 {
        self.alpha * other.alpha + self.beta * other.beta + self.gamma * other.gamma
    }

    /// `n` points for a quasi-uniform Fibonacci lattice on the sphere.
    pub fn fibonacci_sphere(n: usize) -> Vec<Direction> {
        let golden = PI * (3.0 - 5f64.sqrt());
        (0..n)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let rho = (1.0 - z * z).sqrt();
                let az = golden * i as f64;
                Direction {
                    alpha: rho * az.cos(),
                    beta: rho * az.sin(),
                    gamma: z,
                }
            })
            .collect()
    }
}

impl Serialize for Direction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.as_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Direction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Name(String),
            Vector([f64; 3]),
        }
        match Repr::deserialize(d)? {
            Repr::Name(name) => name.parse().map_err(serde::de::Error::custom),
            Repr::Vector([a, b, c]) => Direction::normalized(a, b, c).map_err(serde::de::Error::custom),
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    /// Accepts `x`, `y`, `z` or a comma-separated vector `a,b,c`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "x" | "X" => Ok(Self::x()),
            "y" | "Y" => Ok(Self::y()),
            "z" | "Z" => Ok(Self::z()),
            other => {
                let parts: Vec<f64> = other
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::param(format!("bad direction '{other}': {e}")))?;
                match parts.as_slice() {
                    [a, b, c] => Self::normalized(*a, *b, *c),
                    _ => Err(Error::param(format!("direction '{other}' needs 3 components"))),
                }
            }
        }
    }
}

/// Which Hermitian generator an [`OperatorMatrix`] represents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Jx,
    Jy,
    Jz,
    Jn(Direction),
    Number,
}

impl Generator {
    fn components(&self) -> Option<Direction> {
        match self {
            Generator::Jx => Some(Direction::x()),
            Generator::Jy => Some(Direction::y()),
            Generator::Jz => Some(Direction::z()),
            Generator::Jn(d) => Some(*d),
            Generator::Number => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Generator::Jx => "Jx".into(),
            Generator::Jy => "Jy".into(),
            Generator::Jz => "Jz".into(),
            Generator::Jn(d) => format!("Jn({:.6},{:.6},{:.6})", d.alpha, d.beta, d.gamma),
            Generator::Number => "N".into(),
        }
    }
}

/// Number-conserving operator `⊕_N H^(N)` over a truncated Fock space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorMatrix {
    generator: Generator,
    n_max: u32,
}

impl OperatorMatrix {
    pub fn new(generator: Generator, cutoff: &CutoffPolicy) -> Self {
        Self {
            generator,
            n_max: cutoff.n_max,
        }
    }

    pub fn generator(&self) -> Generator {
        self.generator
    }

    pub fn label(&self) -> String {
        self.generator.label()
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    /// Collective-spin direction, `None` for the number operator.
    pub fn direction(&self) -> Option<Direction> {
        self.generator.components()
    }

    /// Dense `(N+1) × (N+1)` block of sector `n`.
    pub fn block(&self, n: u32) -> CMatrix {
        match self.generator.components() {
            Some(d) => spin_block(&d, n),
            None => CMatrix::from_diagonal_element(n as usize + 1, n as usize + 1, Complex64::new(n as f64, 0.0)),
        }
    }

    /// Nonzero entries `(row, H[row, idx])` of the column belonging to `idx`.
    pub fn column(&self, idx: BasisIndex) -> Vec<(BasisIndex, Complex64)> {
        let n = idx.total();
        let k = idx.sector_offset();
        match self.generator.components() {
            None => vec![(idx, Complex64::new(n as f64, 0.0))],
            Some(d) => spin_column(&d, n, k)
                .into_iter()
                .map(|(row, v)| (BasisIndex::from_sector_offset(n, row), v))
                .collect(),
        }
    }

    /// `H|ψ⟩` for a sparse pure state.
    pub fn apply(&self, state: &StateVector) -> BTreeMap<BasisIndex, Complex64> {
        let mut out = BTreeMap::new();
        for (idx, a) in state.amplitudes() {
            for (row, h) in self.column(*idx) {
                *out.entry(row).or_insert(ZERO) += h * a;
            }
        }
        out
    }

    pub fn dense(&self) -> CMatrix {
        let dim = basis_dim(self.n_max);
        let mut m = CMatrix::zeros(dim, dim);
        for n in 0..=self.n_max {
            let off = sector_start(n);
            let d = n as usize + 1;
            m.view_mut((off, off), (d, d)).copy_from(&self.block(n));
        }
        m
    }
}

pub fn collective_spin(direction: Direction, cutoff: &CutoffPolicy) -> OperatorMatrix {
    OperatorMatrix::new(Generator::Jn(direction), cutoff)
}

pub fn number_operator(cutoff: &CutoffPolicy) -> OperatorMatrix {
    OperatorMatrix::new(Generator::Number, cutoff)
}

// J_n = ((α − iβ)/2) J₊ + ((α + iβ)/2) J₋ + γ J_z, with J₊ = a₁†a₂.
fn spin_column(d: &Direction, n: u32, k: usize) -> Vec<(usize, Complex64)> {
    let nn = n as usize;
    let plus = Complex64::new(d.alpha, -d.beta) * 0.5;
    let minus = Complex64::new(d.alpha, d.beta) * 0.5;
    let mut col = Vec::with_capacity(3);
    if k > 0 {
        // J₊ lowers n₂ by one: √(n₂ (n₁+1))
        let amp = ((k * (nn - k + 1)) as f64).sqrt();
        col.push((k - 1, plus * amp));
    }
    let mu = n as f64 / 2.0 - k as f64;
    if d.gamma != 0.0 {
        col.push((k, Complex64::new(d.gamma * mu, 0.0)));
    }
    if k < nn {
        // J₋ raises n₂ by one: √(n₁ (n₂+1))
        let amp = (((nn - k) * (k + 1)) as f64).sqrt();
        col.push((k + 1, minus * amp));
    }
    col
}

pub(crate) fn spin_block(d: &Direction, n: u32) -> CMatrix {
    let dim = n as usize + 1;
    let mut m = CMatrix::zeros(dim, dim);
    for k in 0..dim {
        for (row, v) in spin_column(d, n, k) {
            m[(row, k)] = v;
        }
    }
    m
}

/// Cached spectral decompositions of `J_n^(N)` used to build
/// `exp(−iθ J_n)` for arbitrary θ without re-diagonalizing.
#[derive(Debug, Clone)]
pub struct SpinRotor {
    direction: Direction,
    sectors: BTreeMap<u32, (Vec<f64>, CMatrix)>,
}

impl SpinRotor {
    pub fn new(direction: Direction, sectors: impl IntoIterator<Item = u32>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for n in sectors {
            map.entry(n).or_insert(Self::decompose(&direction, n)?);
        }
        Ok(Self { direction, sectors: map })
    }

    pub fn for_cutoff(direction: Direction, cutoff: &CutoffPolicy) -> Result<Self> {
        Self::new(direction, 0..=cutoff.n_max)
    }

    fn decompose(direction: &Direction, n: u32) -> Result<(Vec<f64>, CMatrix)> {
        let (mut values, vectors) = linalg::hermitian_eigen(&spin_block(direction, n));
        for (k, v) in values.iter_mut().enumerate() {
            let exact = k as f64 - n as f64 / 2.0;
            if (*v - exact).abs() > EIGENVALUE_SNAP_TOL {
                return Err(Error::invariant(format!(
                    "J_n block N={n} eigenvalue {v} differs from {exact}"
                )));
            }
            *v = exact;
        }
        Ok((values, vectors))
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    fn entry(&self, n: u32) -> Result<&(Vec<f64>, CMatrix)> {
        self.sectors.get(&n).ok_or(Error::UnknownSector(n))
    }

    /// Eigenvalues (exactly `−N/2..N/2`) and eigenvectors of `J_n^(N)`.
    pub fn eigensystem(&self, n: u32) -> Result<(&[f64], &CMatrix)> {
        let (v, u) = self.entry(n)?;
        Ok((v.as_slice(), u))
    }

    /// `exp(−iθ J_n^(N))`.
    pub fn unitary(&self, n: u32, theta: f64) -> Result<CMatrix> {
        let (values, vectors) = self.entry(n)?;
        Ok(linalg::spectral_function(values, vectors, |l| {
            Complex64::from_polar(1.0, -theta * l)
        }))
    }

    /// `exp(−iθ J_n^(N)) v`.
    pub fn rotate(&self, n: u32, theta: f64, v: &CVector) -> Result<CVector> {
        let (values, vectors) = self.entry(n)?;
        let mut coeffs = vectors.ad_mul(v);
        for (c, &l) in coeffs.iter_mut().zip(values) {
            *c *= Complex64::from_polar(1.0, -theta * l);
        }
        Ok(vectors * coeffs)
    }
}

/// Block-diagonal unitary, one block per sector `0..=n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockUnitary {
    blocks: Vec<CMatrix>,
}

impl BlockUnitary {
    pub fn block(&self, n: u32) -> &CMatrix {
        &self.blocks[n as usize]
    }

    pub fn n_max(&self) -> u32 {
        self.blocks.len() as u32 - 1
    }

    pub fn unitarity_defect(&self) -> f64 {
        self.blocks.iter().map(linalg::unitarity_defect).fold(0.0, f64::max)
    }

    pub fn compose(&self, other: &BlockUnitary) -> BlockUnitary {
        BlockUnitary {
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a * b).collect(),
        }
    }

    pub fn dense(&self) -> CMatrix {
        let dim = basis_dim(self.n_max());
        let mut m = CMatrix::zeros(dim, dim);
        for (n, b) in self.blocks.iter().enumerate() {
            let off = sector_start(n as u32);
            m.view_mut((off, off), (n + 1, n + 1)).copy_from(b);
        }
        m
    }
}

/// `exp(−iθ J_n)` on every sector.
pub fn su2_unitary(direction: Direction, theta: f64, cutoff: &CutoffPolicy) -> Result<BlockUnitary> {
    let rotor = SpinRotor::for_cutoff(direction, cutoff)?;
    let blocks = (0..=cutoff.n_max)
        .map(|n| rotor.unitary(n, theta))
        .collect::<Result<_>>()?;
    Ok(BlockUnitary { blocks })
}

/// `exp(−iφ₀ N̂) exp(−iθ J_n)` on every sector.
pub fn u2_unitary(params: &U2AxisParams, cutoff: &CutoffPolicy) -> Result<BlockUnitary> {
    let mut u = su2_unitary(params.axis, params.theta, cutoff)?;
    for (n, b) in u.blocks.iter_mut().enumerate() {
        *b *= Complex64::from_polar(1.0, -params.phi0 * n as f64);
    }
    Ok(u)
}

/// Product form `e^{−iφ₀N̂} e^{−iψJ_z} e^{−iϑJ_y} e^{−iφJ_z}` of a lossless
/// two-mode transformation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct U2EulerParams {
    pub phi0: f64,
    pub psi: f64,
    pub vartheta: f64,
    pub phi: f64,
}

impl U2EulerParams {
    pub fn phi_t(&self) -> f64 {
        (self.psi + self.phi) / 2.0
    }

    pub fn phi_r(&self) -> f64 {
        (self.psi - self.phi) / 2.0
    }

    pub fn transmittance(&self) -> f64 {
        (self.vartheta / 2.0).cos().powi(2)
    }

    pub fn reflectance(&self) -> f64 {
        1.0 - self.transmittance()
    }

    /// 2×2 matrix acting on the mode operators `(a₁, a₂)`.
    pub fn mode_matrix(&self) -> CMatrix {
        let (c, s) = ((self.vartheta / 2.0).cos(), (self.vartheta / 2.0).sin());
        let g = Complex64::from_polar(1.0, -self.phi0);
        let et = |sign: f64| Complex64::from_polar(1.0, sign * self.phi_t());
        let er = |sign: f64| Complex64::from_polar(1.0, sign * self.phi_r());
        CMatrix::from_row_slice(
            2,
            2,
            &[g * et(-1.0) * c, -g * er(-1.0) * s, g * er(1.0) * s, g * et(1.0) * c],
        )
    }

    /// Sector-`n` block of the Euler product operator.
    pub fn operator_block(&self, n: u32) -> Result<CMatrix> {
        let z = SpinRotor::new(Direction::z(), [n])?;
        let y = SpinRotor::new(Direction::y(), [n])?;
        let phase = Complex64::from_polar(1.0, -self.phi0 * n as f64);
        Ok((z.unitary(n, self.psi)? * y.unitary(n, self.vartheta)? * z.unitary(n, self.phi)?) * phase)
    }
}

/// Axis-angle form `e^{−iφ₀N̂} e^{−iθJ_n}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct U2AxisParams {
    pub phi0: f64,
    pub theta: f64,
    pub axis: Direction,
}

impl U2AxisParams {
    pub fn su2(axis: Direction, theta: f64) -> Self {
        Self { phi0: 0.0, theta, axis }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisConversion {
    pub params: U2AxisParams,
    /// The rotation is (numerically) `±1` on the qubit sector, so the axis is
    /// not determined; `z` is reported.
    pub axis_degenerate: bool,
}

/// Converts the Euler product to axis-angle form with `θ ∈ [0, 2π]`.
pub fn euler_to_axis(e: &U2EulerParams) -> AxisConversion {
    let ch = (e.vartheta / 2.0).cos();
    let sh = (e.vartheta / 2.0).sin();
    let sum = (e.phi + e.psi) / 2.0;
    let diff = (e.phi - e.psi) / 2.0;
    let cos_half = (ch * sum.cos()).clamp(-1.0, 1.0);
    let sin_half = (1.0 - cos_half * cos_half).max(0.0).sqrt();
    let theta = 2.0 * cos_half.acos();
    if sin_half < AXIS_DEGENERACY_TOL {
        let theta = if cos_half > 0.0 { 0.0 } else { 2.0 * PI };
        return AxisConversion {
            params: U2AxisParams {
                phi0: e.phi0,
                theta,
                axis: Direction::z(),
            },
            axis_degenerate: true,
        };
    }
    let alpha = sh * diff.sin() / sin_half;
    let beta = sh * diff.cos() / sin_half;
    let gamma = ch * sum.sin() / sin_half;
    let axis = Direction::normalized(alpha, beta, gamma).unwrap_or_else(|_| Direction::z());
    AxisConversion {
        params: U2AxisParams {
            phi0: e.phi0,
            theta,
            axis,
        },
        axis_degenerate: false,
    }
}

/// Mach-Zehnder-like form `e^{iχJ_s} e^{−iθ₁n₁} e^{−iθ₂n₂} e^{−iχJ_s}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MzDecomposition {
    pub theta1: f64,
    pub theta2: f64,
    pub chi: f64,
    pub s_axis: Direction,
}

/// For `n ∥ z` the axis `s` is undefined; `χ ∈ {0, π}` and `s = x` are used.
pub fn mzlike_decomposition(p: &U2AxisParams) -> MzDecomposition {
    let n = p.axis;
    let chi = n.gamma.clamp(-1.0, 1.0).acos();
    let sin_chi = chi.sin();
    // s ∝ n × z, which is orthogonal to both and rotates z onto n
    let s_axis = if sin_chi < DIRECTION_TOL {
        Direction::x()
    } else {
        Direction::normalized(n.beta, -n.alpha, 0.0).unwrap_or_else(|_| Direction::x())
    };
    MzDecomposition {
        theta1: p.phi0 + p.theta / 2.0,
        theta2: p.phi0 - p.theta / 2.0,
        chi,
        s_axis,
    }
}

impl MzDecomposition {
    /// Sector-`n` block of the reconstructed transformation.
    pub fn operator_block(&self, n: u32) -> Result<CMatrix> {
        let s = SpinRotor::new(self.s_axis, [n])?;
        let dim = n as usize + 1;
        let phases = CMatrix::from_fn(dim, dim, |r, c| {
            if r == c {
                let n2 = r as f64;
                let n1 = n as f64 - n2;
                Complex64::from_polar(1.0, -(self.theta1 * n1 + self.theta2 * n2))
            } else {
                ZERO
            }
        });
        Ok(s.unitary(n, -self.chi)? * phases * s.unitary(n, self.chi)?)
    }
}
