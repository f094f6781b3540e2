//! Chern connection of an invariant Hermitian metric, its curvature, the
//! Chern–Ricci form and the Chern scalar curvature.
//!
//! Frames: `e_0..e_{n-1}` are `Z_1..Z_n` (dual to `alpha`), `e_n..e_{2n-1}` are
//! their conjugates. `Gamma_a` is the matrix of `nabla_{e_a}` on `Z_1..Z_n`,
//! entry `(m, k)` being the `Z_m` coefficient of `nabla_{e_a} Z_k`.

use num_complex::Complex64;

use crate::algebra::{InvariantForm, LieAlgebraModel};
use crate::hermitian::{matrix_of_11, InvariantMetric};
use crate::linalg::{self, CMatrix, I, ZERO};

#[derive(Clone, Debug)]
pub struct ChernConnection {
    n: usize,
    gamma: Vec<CMatrix>,
    full: Vec<CMatrix>,
    // brackets[a][b][c] = C^c_{ab}
    brackets: Vec<Vec<Vec<Complex64>>>,
    big_g: CMatrix,
}

impl ChernConnection {
    pub fn new(model: &LieAlgebraModel, metric: &InvariantMetric) -> Self {
        let n = model.n();
        assert_eq!(metric.n(), n, "metric and model dimensions differ");
        let n2 = 2 * n;
        let brackets: Vec<Vec<Vec<Complex64>>> =
            (0..n2).map(|a| (0..n2).map(|b| model.bracket(a, b)).collect()).collect();
        let g = metric.matrix();
        let ginv = metric.inverse();

        let mut gamma = vec![CMatrix::zeros(n, n); n2];
        // nabla_{Zbar_j} Z_k = [Zbar_j, Z_k]^{1,0}
        for j in 0..n {
            for k in 0..n {
                for m in 0..n {
                    gamma[n + j][(m, k)] = brackets[n + j][k][m];
                }
            }
        }
        // metric compatibility fixes nabla_{Z_j}:
        // sum_m Gamma_j[m,k] g_{ml} = -sum_m conj(Gamma_{n+j}[m,l]) g_{km}
        for j in 0..n {
            let a = -(g * gamma[n + j].map(|c| c.conj()));
            gamma[j] = (a * ginv).transpose();
        }

        let full = (0..n2)
            .map(|a| {
                let sigma = (a + n) % n2;
                let conj = gamma[sigma].map(|c| c.conj());
                let mut f = CMatrix::zeros(n2, n2);
                f.view_mut((0, 0), (n, n)).copy_from(&gamma[a]);
                f.view_mut((n, n), (n, n)).copy_from(&conj);
                f
            })
            .collect();

        let mut big_g = CMatrix::zeros(n2, n2);
        big_g.view_mut((0, n), (n, n)).copy_from(g);
        big_g.view_mut((n, 0), (n, n)).copy_from(&g.transpose());

        Self {
            n,
            gamma,
            full,
            brackets,
            big_g,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `nabla_{e_a}` on the (1,0)-frame.
    pub fn gamma(&self, a: usize) -> &CMatrix {
        &self.gamma[a]
    }

    /// `nabla_{e_a}` on the full complexified frame.
    pub fn gamma_full(&self, a: usize) -> &CMatrix {
        &self.full[a]
    }

    /// Components of `T(e_a, e_b) = nabla_a e_b - nabla_b e_a - [e_a, e_b]`.
    pub fn torsion(&self, a: usize, b: usize) -> Vec<Complex64> {
        (0..2 * self.n)
            .map(|c| self.full[a][(c, b)] - self.full[b][(c, a)] - self.brackets[a][b][c])
            .collect()
    }

    /// Norm of the (1,1)-part of the torsion, `T(Z_j, Zbar_k)`.
    pub fn torsion_11_norm(&self) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for j in 0..n {
            for k in 0..n {
                acc += self.torsion(j, n + k).iter().map(|c| c.norm_sqr()).sum::<f64>();
            }
        }
        acc.sqrt()
    }

    /// Largest `|Gamma_a^T G + G Gamma_a|` over directions, `G` the bilinear metric.
    pub fn metric_compatibility_defect(&self) -> f64 {
        self.full
            .iter()
            .map(|f| (f.transpose() * &self.big_g + &self.big_g * f).norm())
            .fold(0.0, f64::max)
    }

    /// `R(e_a, e_b)` on the full frame.
    pub fn curvature(&self, a: usize, b: usize) -> CMatrix {
        let mut r = &self.full[a] * &self.full[b] - &self.full[b] * &self.full[a];
        for (c, coeff) in self.brackets[a][b].iter().enumerate() {
            if *coeff != ZERO {
                r -= self.full[c].scale(1.0) * *coeff;
            }
        }
        r
    }

    /// `R(e_a, e_b, e_c, e_d) = G(R(e_a, e_b) e_c, e_d)`.
    pub fn curvature_tensor(&self, a: usize, b: usize, c: usize, d: usize) -> Complex64 {
        let r = self.curvature(a, b);
        (0..2 * self.n).map(|x| r[(x, c)] * self.big_g[(x, d)]).sum()
    }
}

/// Curvature summary of an invariant metric.
#[derive(Clone, Debug)]
pub struct CurvatureData {
    /// `R(e_a, e_b, e_c, e_d)` at index `((a * 2n + b) * 2n + c) * 2n + d`.
    pub r: Vec<Complex64>,
    pub rho: InvariantForm,
    pub s: f64,
}

pub fn curvature_data(model: &LieAlgebraModel, metric: &InvariantMetric) -> CurvatureData {
    let conn = ChernConnection::new(model, metric);
    let n2 = 2 * model.n();
    let mut r = Vec::with_capacity(n2.pow(4));
    for a in 0..n2 {
        for b in 0..n2 {
            let ra = conn.curvature(a, b);
            for c in 0..n2 {
                for d in 0..n2 {
                    r.push((0..n2).map(|x| ra[(x, c)] * conn.big_g[(x, d)]).sum());
                }
            }
        }
    }
    let rho = ricci_from(&conn);
    let s = scalar_from(metric, &rho);
    CurvatureData { r, rho, s }
}

/// Values `rho(e_a, e_b) = i tr R^{1,0}(e_a, e_b)` on all pairs.
fn ricci_values(conn: &ChernConnection) -> CMatrix {
    let n = conn.n;
    let n2 = 2 * n;
    CMatrix::from_fn(n2, n2, |a, b| {
        let r = conn.curvature(a, b);
        I * (0..n).map(|k| r[(k, k)]).sum::<Complex64>()
    })
}

fn ricci_from(conn: &ChernConnection) -> InvariantForm {
    let n = conn.n;
    let v = ricci_values(conn);
    let coeffs = (0..n * n).map(|idx| v[(idx / n, n + idx % n)]).collect();
    InvariantForm::from_coeffs(n, 1, 1, coeffs).expect("n^2 coefficients")
}

/// Chern–Ricci form, returned as its (1,1)-part.
pub fn chern_ricci(model: &LieAlgebraModel, metric: &InvariantMetric) -> InvariantForm {
    ricci_from(&ChernConnection::new(model, metric))
}

/// Norm of the (2,0) and (0,2) parts of the Ricci 2-form (zero for the Chern connection).
pub fn ricci_non_11_norm(model: &LieAlgebraModel, metric: &InvariantMetric) -> f64 {
    let conn = ChernConnection::new(model, metric);
    let n = conn.n;
    let v = ricci_values(&conn);
    let mut acc = 0.0;
    for a in 0..n {
        for b in 0..n {
            acc += v[(a, b)].norm_sqr() + v[(n + a, n + b)].norm_sqr();
        }
    }
    acc.sqrt()
}

/// Chern–Ricci form from `1/2 sum_k R(X, Y, J e_k, e_k)` over a real orthonormal
/// frame built from the Cholesky factor of `g`.
pub fn chern_ricci_orthonormal(model: &LieAlgebraModel, metric: &InvariantMetric) -> InvariantForm {
    let conn = ChernConnection::new(model, metric);
    let n = conn.n;
    let n2 = 2 * n;
    let u = metric.unitary_frame();
    let root = std::f64::consts::FRAC_1_SQRT_2;
    let mut frame = Vec::with_capacity(n2);
    for m in 0..n {
        let mut e = vec![ZERO; n2];
        let mut je = vec![ZERO; n2];
        for r in 0..n {
            e[r] = u[(r, m)] * root;
            e[n + r] = u[(r, m)].conj() * root;
            je[r] = I * u[(r, m)] * root;
            je[n + r] = -I * u[(r, m)].conj() * root;
        }
        frame.push((e.clone(), je.clone()));
        // second real vector of the pair is J e
        let minus_e: Vec<Complex64> = e.iter().map(|c| -c).collect();
        frame.push((je, minus_e));
    }
    let big_g = &conn.big_g;
    let mut coeffs = vec![ZERO; n * n];
    for j in 0..n {
        for k in 0..n {
            let r = conn.curvature(j, n + k);
            let mut acc = ZERO;
            for (e, je) in &frame {
                let rje = &r * nalgebra::DVector::from_column_slice(je);
                let ev = nalgebra::DVector::from_column_slice(e);
                acc += (rje.transpose() * big_g * ev)[(0, 0)];
            }
            coeffs[j * n + k] = acc * 0.5;
        }
    }
    InvariantForm::from_coeffs(n, 1, 1, coeffs).expect("n^2 coefficients")
}

fn scalar_from(metric: &InvariantMetric, rho: &InvariantForm) -> f64 {
    let p = matrix_of_11(rho);
    (metric.inverse() * p).trace().re
}

/// `s = g^{k lbar} rho_{k lbar}`, with `rho = i sum rho_{k lbar} alpha^k ∧ alphabar^l`.
pub fn chern_scalar(model: &LieAlgebraModel, metric: &InvariantMetric) -> f64 {
    scalar_from(metric, &chern_ricci(model, metric))
}

/// Ricci form as a Hermitian matrix (same normalization as the metric).
pub fn ricci_matrix(model: &LieAlgebraModel, metric: &InvariantMetric) -> CMatrix {
    linalg::hermitian_part(&matrix_of_11(&chern_ricci(model, metric)))
}
