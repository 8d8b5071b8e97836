//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Largest absolute entry.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Eigen-decomposition of a Hermitian matrix. Eigenvalues are returned in
/// ascending order with the matching eigenvectors as columns.
///
/// The matrix is split into decoupled index blocks first; nalgebra's solver
/// can return NaN on matrices with structurally zero rows.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let h = hermitian_part(m);
    let mut pairs: Vec<(f64, usize, CVector)> = Vec::with_capacity(n);
    for idx in components(&h) {
        let mut push = |value: f64, local: CVector| {
            let mut v = CVector::zeros(n);
            for (k, &i) in idx.iter().enumerate() {
                v[i] = local[k];
            }
            pairs.push((value, idx[0], v));
        };
        if idx.len() == 1 {
            push(h[(idx[0], idx[0])].re, CVector::from_element(1, ONE));
            continue;
        }
        let sub = h.select_rows(&idx).select_columns(&idx);
        let eig = sub.clone().symmetric_eigen();
        let finite = eig.eigenvalues.iter().all(|v| v.is_finite())
            && eig.eigenvectors.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        let (values, vectors) = if finite {
            (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
        } else {
            jacobi_eigen(sub)
        };
        for (k, value) in values.into_iter().enumerate() {
            push(value, vectors.column(k).into_owned());
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let values = pairs.iter().map(|p| p.0).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| pairs[c].2[r]);
    (values, vectors)
}

/// Connected index sets of the nonzero pattern, each sorted.
fn components(h: &CMatrix) -> Vec<Vec<usize>> {
    let n = h.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for c in 0..n {
        for r in 0..c {
            if h[(r, c)] != ZERO {
                let (a, b) = (root(&mut parent, r), root(&mut parent, c));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = root(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Cyclic complex Jacobi iteration; slow but unconditionally convergent.
fn jacobi_eigen(mut a: CMatrix) -> (Vec<f64>, CMatrix) {
    let n = a.nrows();
    let mut v = CMatrix::identity(n, n);
    let scale = a.iter().map(|z| z.norm_sqr()).sum::<f64>().max(f64::MIN_POSITIVE);
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|c| (0..c).map(move |r| (r, c)))
            .map(|(r, c)| a[(r, c)].norm_sqr())
            .sum();
        if off <= 1e-32 * scale {
            break;
        }
        for q in 1..n {
            for p in 0..q {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag == 0.0 {
                    continue;
                }
                let phase = apq / mag;
                let theta = 0.5 * (2.0 * mag).atan2(a[(q, q)].re - a[(p, p)].re);
                let (s, c) = theta.sin_cos();
                let (cc, sc) = (Complex64::new(c, 0.0), Complex64::new(s, 0.0));
                let e = phase.conj();
                for k in 0..n {
                    let (x, y) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = cc * x - sc * e * y;
                    a[(k, q)] = sc * x + cc * e * y;
                    let (x, y) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = cc * x - sc * e * y;
                    v[(k, q)] = sc * x + cc * e * y;
                }
                for k in 0..n {
                    let (x, y) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = cc * x - sc * phase * y;
                    a[(q, k)] = sc * x + cc * phase * y;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
            }
        }
    }
    ((0..n).map(|i| a[(i, i)].re).collect(), v)
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    hermitian_eigen(m).0.first().copied().unwrap_or(0.0)
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Tr[a b] without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// `U diag(f(λ)) U†` for a Hermitian eigensystem.
pub fn spectral_function(values: &[f64], vectors: &CMatrix, f: impl Fn(f64) -> Complex64) -> CMatrix {
    let n = values.len();
    let mut scaled = vectors.clone();
    for (c, &lambda) in values.iter().enumerate() {
        let w = f(lambda);
        for r in 0..n {
            scaled[(r, c)] *= w;
        }
    }
    scaled * vectors.adjoint()
}

/// Inverse square root of a positive definite Hermitian matrix.
pub fn inverse_sqrt(m: &CMatrix) -> Option<CMatrix> {
    let (values, vectors) = hermitian_eigen(m);
    if values.iter().any(|&v| v <= 1e-14) {
        return None;
    }
    Some(spectral_function(&values, &vectors, |v| {
        Complex64::new(1.0 / v.sqrt(), 0.0)
    }))
}

pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.nrows();
    max_abs(&(u.adjoint() * u - CMatrix::identity(n, n)))
}

/// `v† m v`.
pub fn quadratic_form(m: &CMatrix, v: &CVector) -> Complex64 {
    v.dotc(&(m * v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_hermitian(n: usize, seed: u64) -> CMatrix {
        let mut x = seed;
        let mut next = move || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let g = CMatrix::from_fn(n, n, |_, _| Complex64::new(next(), next()));
        hermitian_part(&g)
    }

    fn reconstruction_error(m: &CMatrix, values: &[f64], vectors: &CMatrix) -> f64 {
        max_abs(&(spectral_function(values, vectors, |v| Complex64::new(v, 0.0)) - m))
    }

    #[test]
    fn jacobi_matches_reference() {
        for (n, seed) in [(2, 1), (5, 2), (9, 3)] {
            let m = sample_hermitian(n, seed);
            let (mut jv, vectors) = jacobi_eigen(m.clone());
            assert!(reconstruction_error(&m, &jv, &vectors) < 1e-12);
            assert!(unitarity_defect(&vectors) < 1e-12);
            let (reference, _) = hermitian_eigen(&m);
            jv.sort_by(f64::total_cmp);
            for (a, b) in jv.iter().zip(&reference) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn padded_rank_one_matrix() {
        // rank-one projector scattered over a mostly empty space
        let n = 153;
        let support: Vec<usize> = (0..9).map(|k| k * (k + 3) / 2 + k).filter(|&i| i < n).collect();
        let mut psi = CVector::zeros(n);
        for (k, &i) in support.iter().enumerate() {
            psi[i] = Complex64::new(1.0 / (k as f64 + 1.0), 0.0);
        }
        psi /= Complex64::new(psi.norm(), 0.0);
        let rho = &psi * psi.adjoint();
        let (values, vectors) = hermitian_eigen(&rho);
        assert!(values.iter().all(|v| v.is_finite()));
        assert!((values[n - 1] - 1.0).abs() < 1e-12);
        assert!(values[0].abs() < 1e-12);
        assert!(reconstruction_error(&rho, &values, &vectors) < 1e-12);
        assert!(unitarity_defect(&vectors) < 1e-12);
    }

    #[test]
    fn block_diagonal_split() {
        let mut m = CMatrix::zeros(4, 4);
        m[(0, 0)] = Complex64::new(3.0, 0.0);
        m[(1, 3)] = Complex64::new(0.0, 1.0);
        m[(3, 1)] = Complex64::new(0.0, -1.0);
        let (values, vectors) = hermitian_eigen(&m);
        assert_eq!(values.len(), 4);
        assert!((values[0] + 1.0).abs() < 1e-14 && (values[3] - 3.0).abs() < 1e-14);
        assert!(reconstruction_error(&m, &values, &vectors) < 1e-14);
    }
}
