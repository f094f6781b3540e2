//! Seeded random inputs for property checks and the `verify` command.

use num_complex::Complex64;
use rand::Rng;

use crate::algebra::{InvariantForm, LieAlgebraModel, StructureTerm, TermKind};
use crate::hermitian::{self, InvariantMetric};
use crate::linalg::CMatrix;

fn unit<R: Rng>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

pub fn random_form<R: Rng>(rng: &mut R, n: usize, p: usize, q: usize) -> InvariantForm {
    let mut f = InvariantForm::zero(n, p, q);
    for c in f.coeffs_mut() {
        *c = unit(rng);
    }
    f
}

pub fn random_real_form<R: Rng>(rng: &mut R, n: usize, p: usize) -> InvariantForm {
    random_form(rng, n, p, p).real_part()
}

pub fn random_matrix<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| unit(rng))
}

pub fn random_invertible<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    // diagonally dominant, hence invertible
    let mut a = random_matrix(rng, n).scale(0.4);
    for k in 0..n {
        a[(k, k)] += Complex64::new(2.0, 0.0);
    }
    a
}

/// Positive definite Hermitian matrix with eigenvalues roughly in `[0.3, 3]`.
pub fn random_positive_matrix<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    let a = random_matrix(rng, n).scale(0.6);
    let mut g = &a * a.adjoint();
    for k in 0..n {
        g[(k, k)] += Complex64::new(0.3, 0.0);
    }
    g
}

pub fn random_metric<R: Rng>(rng: &mut R, n: usize) -> InvariantMetric {
    InvariantMetric::new(random_positive_matrix(rng, n)).expect("sampled metric is positive")
}

pub fn random_diagonal<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.3..3.0)).collect()
}

pub fn random_diagonal_metric<R: Rng>(rng: &mut R, n: usize) -> InvariantMetric {
    InvariantMetric::diagonal(&random_diagonal(rng, n)).expect("sampled metric is positive")
}

/// Real primitive (1,1)-form for `metric`.
pub fn random_primitive<R: Rng>(rng: &mut R, metric: &InvariantMetric) -> InvariantForm {
    let h = random_real_form(rng, metric.n(), 1);
    metric.primitive_decompose(&h).1
}

/// Random two-step nilpotent model: the first `m` generators are closed and
/// the rest have `d` valued in the span of the first `m`.
pub fn random_nilpotent_model<R: Rng>(rng: &mut R, n: usize) -> LieAlgebraModel {
    let m = rng.gen_range(n.div_ceil(2)..n);
    let mut terms = Vec::new();
    for k in m + 1..=n {
        for i in 1..=m {
            for j in i + 1..=m {
                terms.push(StructureTerm::new(k, TermKind::TwoZero, i, j, unit(rng)));
            }
            for j in 1..=m {
                if rng.gen_bool(0.5) {
                    terms.push(StructureTerm::new(k, TermKind::OneOne, i, j, unit(rng)));
                }
            }
        }
    }
    LieAlgebraModel::new("random-nilpotent", n, terms).expect("two-step data satisfy d^2 = 0")
}

/// Random model from the families used in the property suites: two-step
/// nilpotent models, and the solvable surface algebra.
pub fn random_model<R: Rng>(rng: &mut R) -> LieAlgebraModel {
    match rng.gen_range(0..3) {
        0 => random_nilpotent_model(rng, 3),
        1 => random_nilpotent_model(rng, 4),
        _ => LieAlgebraModel::solvable(rng.gen_range(0.3..1.5), rng.gen_range(-1.0..1.0)),
    }
}

/// Real closed positive (n-1,n-1)-form from a random metric.
pub fn random_phi<R: Rng>(rng: &mut R, n: usize) -> InvariantForm {
    hermitian::michelsohn(&random_metric(rng, n))
}
