//! Small dense complex linear-algebra helpers shared by the geometric modules.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Strictly increasing `k`-subsets of `{0..n}` as bitmasks, lexicographic in the
/// tuple order: for n = 3, k = 2 this is (0,1), (0,2), (1,2).
pub fn subsets(n: usize, k: usize) -> Vec<u32> {
    fn rec(start: usize, n: usize, k: usize, acc: u32, out: &mut Vec<u32>) {
        if k == 0 {
            out.push(acc);
            return;
        }
        for i in start..n {
            if n - i < k {
                break;
            }
            rec(i + 1, n, k - 1, acc | (1 << i), out);
        }
    }
    let mut out = Vec::new();
    if k <= n {
        rec(0, n, k, 0, &mut out);
    }
    out
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

pub fn bits(mask: u32) -> impl Iterator<Item = usize> {
    (0..32).filter(move |b| mask & (1 << b) != 0)
}

/// `k`-th compound matrix: entry `(I, J)` is the minor `det M[I, J]`, rows and
/// columns enumerated by [`subsets`].
pub fn compound(m: &CMatrix, k: usize) -> CMatrix {
    let n = m.nrows();
    let subs = subsets(n, k);
    let dim = subs.len();
    if k == 0 {
        return CMatrix::from_element(1, 1, ONE);
    }
    let mut out = CMatrix::zeros(dim, dim);
    for (r, &rows) in subs.iter().enumerate() {
        let ri: Vec<usize> = bits(rows).collect();
        for (c, &cols) in subs.iter().enumerate() {
            let ci: Vec<usize> = bits(cols).collect();
            let minor = CMatrix::from_fn(k, k, |a, b| m[(ri[a], ci[b])]);
            out[(r, c)] = minor.determinant();
        }
    }
    out
}

/// Kronecker product `a ⊗ b` with `a` as the outer (slow) index.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMatrix::from_fn(ar * br, ac * bc, |r, c| {
        a[(r / br, c / bc)] * b[(r % br, c % bc)]
    })
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Relative distance of `m` from its conjugate transpose.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let scale = m.norm().max(f64::MIN_POSITIVE);
    (m - m.adjoint()).norm() / scale
}

/// Eigen-decomposition of a Hermitian matrix; eigenvalues ascending.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let eig = nalgebra::SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    hermitian_eigen(m).0.first().copied().unwrap_or(f64::INFINITY)
}

pub fn inverse(m: &CMatrix) -> Result<CMatrix> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("singular matrix".into()))
}

/// Orthonormal basis (columns) of the column span of `a`, with singular values
/// below `rel_tol * s_max` discarded.
pub fn column_span(a: &CMatrix, rel_tol: f64) -> CMatrix {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return CMatrix::zeros(rows, 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return CMatrix::zeros(rows, 0);
    }
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > rel_tol * smax)
        .collect();
    CMatrix::from_fn(rows, keep.len(), |r, c| u[(r, keep[c])])
}

pub fn rank(a: &CMatrix, rel_tol: f64) -> usize {
    column_span(a, rel_tol).ncols()
}

/// Relative Frobenius distance, with an absolute floor so zero matches zero.
pub fn rel_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    let scale = a.norm().max(b.norm()).max(1.0);
    (a - b).norm() / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsets_are_lexicographic() {
        assert_eq!(subsets(3, 2), vec![0b011, 0b101, 0b110]);
        assert_eq!(subsets(4, 0), vec![0]);
        assert!(subsets(2, 3).is_empty());
        for n in 0..6 {
            for k in 0..=n {
                assert_eq!(subsets(n, k).len(), binomial(n, k));
            }
        }
    }

    #[test]
    fn compound_of_product_is_product_of_compounds() {
        let a = CMatrix::from_fn(3, 3, |r, c| Complex64::new((r + 2 * c) as f64, (r * c) as f64 - 1.0));
        let b = CMatrix::from_fn(3, 3, |r, c| Complex64::new(1.0 + (r as f64) * 0.5, c as f64));
        for k in 0..=3 {
            let lhs = compound(&(&a * &b), k);
            let rhs = compound(&a, k) * compound(&b, k);
            assert!((lhs - rhs).norm() < 1e-10);
        }
    }

    #[test]
    fn hermitian_eigen_sorted() {
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(2.0, 0.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(0.0, -1.0),
                Complex64::new(2.0, 0.0),
            ],
        );
        let (vals, _) = hermitian_eigen(&m);
        assert!((vals[0] - 1.0).abs() < 1e-12 && (vals[1] - 3.0).abs() < 1e-12);
    }
}
