//! Invariant Hermitian metrics: fundamental form, Hodge star, the map
//! `omega -> omega^{n-1}/(n-1)!` and its inverse, primitive decomposition.
//!
//! Normalizations used throughout the crate:
//!
//! * `(1,1)`: the Hermitian matrix `H` stands for `i sum H_{jk} alpha^j ∧ alphabar^k`.
//! * `(n-1,n-1)`: `Phi_{ab} = [phi ∧ i alpha^b ∧ alphabar^a] / vol0`, where `vol0`
//!   is the top coefficient of `omega_0^n / n!` for the identity metric.
//!   Real forms give Hermitian `Phi`, and `michelsohn(g)` gives `adj(g)`.
//!
//! The star is the complex-linear extension of the real Hodge star, fixed by
//! `a ∧ *conj(b) = <a, b> omega^n / n!`.

use std::sync::OnceLock;

use num_complex::Complex64;

use crate::algebra::{form_basis_change, form_dim, wedge_sign, InvariantForm, LieAlgebraModel};
use crate::error::{Error, Result};
use crate::linalg::{self, factorial, CMatrix, I, ONE, ZERO};

const HERMITIAN_TOL: f64 = 1e-12;
const POSITIVE_TOL: f64 = 1e-12;

/// Positive definite Hermitian `g_{jk}` on the (1,0)-coframe.
#[derive(Clone, Debug)]
pub struct InvariantMetric {
    n: usize,
    g: CMatrix,
    inv: CMatrix,
    det: f64,
    // alpha = frame * beta with beta unitary for g
    frame: CMatrix,
    to_unitary: Vec<OnceLock<CMatrix>>,
    gram: Vec<OnceLock<CMatrix>>,
    star: Vec<OnceLock<CMatrix>>,
}

impl InvariantMetric {
    pub fn new(g: CMatrix) -> Result<Self> {
        let n = g.nrows();
        if n == 0 || g.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "metric must be a non-empty square matrix, got {}x{}",
                g.nrows(),
                g.ncols()
            )));
        }
        let defect = linalg::hermitian_defect(&g);
        if defect > HERMITIAN_TOL {
            return Err(Error::NotHermitian(defect));
        }
        let g = linalg::hermitian_part(&g);
        let min = linalg::min_eigenvalue(&g);
        if min <= POSITIVE_TOL {
            return Err(Error::NotPositive { eigenvalue: min });
        }
        let chol = nalgebra::Cholesky::new(g.clone()).ok_or(Error::NotPositive { eigenvalue: min })?;
        let l = chol.l();
        let frame = linalg::inverse(&l.transpose())?;
        let inv = chol.inverse();
        let det = g.determinant().re;
        let slots = (n + 1) * (n + 1);
        Ok(Self {
            n,
            g,
            inv,
            det,
            frame,
            to_unitary: (0..slots).map(|_| OnceLock::new()).collect(),
            gram: (0..slots).map(|_| OnceLock::new()).collect(),
            star: (0..slots).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::new(CMatrix::identity(n, n)).expect("identity is positive")
    }

    pub fn diagonal(d: &[f64]) -> Result<Self> {
        let g = CMatrix::from_fn(d.len(), d.len(), |r, c| {
            if r == c {
                Complex64::new(d[r], 0.0)
            } else {
                ZERO
            }
        });
        Self::new(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.g
    }

    pub fn inverse(&self) -> &CMatrix {
        &self.inv
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    /// `M` with `alpha = M beta`, `beta` a unitary coframe for this metric.
    pub fn unitary_frame(&self) -> &CMatrix {
        &self.frame
    }

    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        Self::new(self.g.scale(lambda))
    }

    fn slot(&self, p: usize, q: usize) -> usize {
        assert!(p <= self.n && q <= self.n, "bidegree ({p},{q}) out of range");
        p * (self.n + 1) + q
    }

    /// Coefficient change from the `alpha` basis to the unitary `beta` basis.
    pub fn to_unitary(&self, p: usize, q: usize) -> &CMatrix {
        self.to_unitary[self.slot(p, q)].get_or_init(|| form_basis_change(self.n, p, q, &self.frame))
    }

    /// Gram matrix `G` with `<a, b> = b^H G a` on (p,q)-coefficients.
    pub fn gram(&self, p: usize, q: usize) -> &CMatrix {
        self.gram[self.slot(p, q)].get_or_init(|| {
            let c = self.to_unitary(p, q);
            linalg::hermitian_part(&(c.adjoint() * c))
        })
    }

    pub fn inner(&self, a: &InvariantForm, b: &InvariantForm) -> Complex64 {
        assert_eq!(a.bidegree(), b.bidegree(), "inner product of different bidegrees");
        let (p, q) = a.bidegree();
        (b.as_vector().adjoint() * self.gram(p, q) * a.as_vector())[(0, 0)]
    }

    pub fn norm(&self, a: &InvariantForm) -> f64 {
        self.inner(a, a).re.max(0.0).sqrt()
    }

    pub fn fundamental_form(&self) -> InvariantForm {
        form_from_11_matrix(&self.g)
    }

    /// `omega^n / n!`.
    pub fn volume_form(&self) -> InvariantForm {
        let omega = self.fundamental_form();
        omega
            .power(self.n)
            .expect("top power fits")
            .scale_re(1.0 / factorial(self.n))
    }

    /// Matrix of `* : (p,q) -> (n-q, n-p)`.
    pub fn star_matrix(&self, p: usize, q: usize) -> &CMatrix {
        self.star[self.slot(p, q)].get_or_init(|| {
            let n = self.n;
            let s0 = unitary_star_matrix(n, p, q);
            let c_in = self.to_unitary(p, q);
            let c_out = self.to_unitary(n - q, n - p);
            linalg::inverse(c_out).expect("coframe change is invertible") * s0 * c_in
        })
    }

    pub fn hodge_star(&self, a: &InvariantForm) -> InvariantForm {
        assert_eq!(a.n(), self.n);
        let (p, q) = a.bidegree();
        a.map_coeffs(self.star_matrix(p, q), self.n - q, self.n - p)
    }

    /// `h = h1 omega + h0` with `h0` primitive and `h1 = <h, omega> / n`.
    pub fn primitive_decompose(&self, h: &InvariantForm) -> (Complex64, InvariantForm) {
        assert_eq!(h.bidegree(), (1, 1), "primitive decomposition is for (1,1)-forms");
        let omega = self.fundamental_form();
        let h1 = self.inner(h, &omega) / self.n as f64;
        (h1, h - &omega.scale(h1))
    }

    /// `|h ∧ omega^{n-1}|` relative to `|h|`, both in this metric.
    pub fn primitivity_defect(&self, h: &InvariantForm) -> f64 {
        let omega = self.fundamental_form();
        let top = h.wedge(&omega.power(self.n - 1).expect("fits")).expect("fits");
        self.norm(&top) / self.norm(h).max(f64::MIN_POSITIVE)
    }

    /// Positivity margin of a real (1,1)-form: smallest eigenvalue of its matrix.
    pub fn positivity_of_11(h: &InvariantForm) -> f64 {
        linalg::min_eigenvalue(&matrix_of_11(h))
    }
}

/// Star on `(p,q)`-coefficients in a unitary coframe.
fn unitary_star_matrix(n: usize, p: usize, q: usize) -> CMatrix {
    let top = vol0(n);
    let full = (1u32 << n) - 1;
    let src = InvariantForm::masks(n, p, q);
    let (tp, tq) = (n - q, n - p);
    let mut out = CMatrix::zeros(form_dim(n, tp, tq), src.len());
    let probe = InvariantForm::zero(n, tp, tq);
    let sign = if (p * q).is_multiple_of(2) { 1.0 } else { -1.0 };
    for (col, &mask) in src.iter().enumerate() {
        let (k, l) = (mask & full, mask >> n);
        // conj(beta^L betabar^K) = (-1)^{pq} beta^K betabar^L, so
        // *(beta^K betabar^L) = (-1)^{pq} x beta^{L^c} betabar^{K^c}, where x
        // normalizes (beta^L betabar^K) ∧ x beta^{L^c} betabar^{K^c} = vol.
        let (kc, lc) = (full & !k, full & !l);
        let s = wedge_sign(l | (k << n), lc | (kc << n)).expect("complementary monomials");
        let row = probe.index_of(lc, kc);
        out[(row, col)] = top / s * sign;
    }
    out
}

/// `i sum H_{jk} alpha^j ∧ alphabar^k`.
pub fn form_from_11_matrix(h: &CMatrix) -> InvariantForm {
    let n = h.nrows();
    let coeffs = (0..n * n).map(|idx| I * h[(idx / n, idx % n)]).collect();
    InvariantForm::from_coeffs(n, 1, 1, coeffs).expect("n^2 coefficients")
}

/// Inverse of [`form_from_11_matrix`].
pub fn matrix_of_11(h: &InvariantForm) -> CMatrix {
    assert_eq!(h.bidegree(), (1, 1));
    let n = h.n();
    CMatrix::from_fn(n, n, |j, k| -I * h.coeffs()[j * n + k])
}

/// Top coefficient of `omega0^n / n!` for `omega0 = i sum alpha^j ∧ alphabar^j`.
fn vol0(n: usize) -> Complex64 {
    let sign = if (n * (n - 1) / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
    I.powu(n as u32) * sign
}

/// Linear map from (n-1,n-1)-coefficients to the row-major entries of `Phi`.
fn phi_map(n: usize) -> CMatrix {
    let v0 = vol0(n);
    let dim = form_dim(n, n - 1, n - 1);
    let mut m = CMatrix::zeros(n * n, dim);
    for col in 0..dim {
        let mut e = InvariantForm::zero(n, n - 1, n - 1);
        e.coeffs_mut()[col] = ONE;
        for a in 0..n {
            for b in 0..n {
                let t = InvariantForm::basis(n, &[b + 1], &[a + 1]).expect("valid").scale(I);
                m[(a * n + b, col)] = e.wedge(&t).expect("fits").coeffs()[0] / v0;
            }
        }
    }
    m
}

/// Hermitian matrix `Phi` of a (n-1,n-1)-form.
pub fn phi_matrix(phi: &InvariantForm) -> CMatrix {
    let n = phi.n();
    assert!(n >= 2 && phi.bidegree() == (n - 1, n - 1), "expected an (n-1,n-1)-form");
    let v = phi_map(n) * phi.as_vector();
    CMatrix::from_fn(n, n, |a, b| v[a * n + b])
}

/// The (n-1,n-1)-form with matrix `Phi`.
pub fn phi_from_matrix(m: &CMatrix) -> InvariantForm {
    let n = m.nrows();
    assert!(n >= 2);
    let v = nalgebra::DVector::from_fn(n * n, |idx, _| m[(idx / n, idx % n)]);
    let map = linalg::inverse(&phi_map(n)).expect("phi map is invertible");
    let coeffs = (map * v).iter().cloned().collect();
    InvariantForm::from_coeffs(n, n - 1, n - 1, coeffs).expect("dimension")
}

/// `omega^{n-1} / (n-1)!`.
pub fn michelsohn(m: &InvariantMetric) -> InvariantForm {
    let n = m.n();
    m.fundamental_form()
        .power(n - 1)
        .expect("fits")
        .scale_re(1.0 / factorial(n - 1))
}

/// Positivity margin of a (n-1,n-1)-form: smallest eigenvalue of `Phi`.
pub fn phi_positivity(phi: &InvariantForm) -> f64 {
    linalg::min_eigenvalue(&phi_matrix(phi))
}

fn adjugate(g: &CMatrix) -> CMatrix {
    let inv = linalg::inverse(g).expect("positive matrix is invertible");
    inv.scale(1.0) * g.determinant()
}

/// Inverse of [`michelsohn`]: `g = (det Phi)^{1/(n-1)} Phi^{-1}`, then one Newton step on `adj(g) = Phi`.
pub fn metric_from_phi(phi: &InvariantForm) -> Result<InvariantMetric> {
    let n = phi.n();
    if n < 2 || phi.bidegree() != (n - 1, n - 1) {
        return Err(Error::DimensionMismatch(format!(
            "expected an ({0},{0})-form, got bidegree {1:?}",
            n.saturating_sub(1),
            phi.bidegree()
        )));
    }
    let big_phi = phi_matrix(phi);
    let defect = linalg::hermitian_defect(&big_phi);
    if defect > 1e-10 {
        return Err(Error::NotHermitian(defect));
    }
    let big_phi = linalg::hermitian_part(&big_phi);
    let min = linalg::min_eigenvalue(&big_phi);
    if min <= POSITIVE_TOL {
        return Err(Error::NotPositive { eigenvalue: min });
    }
    let det_phi = big_phi.determinant().re;
    let phi_inv = linalg::inverse(&big_phi)?;
    let g = phi_inv.scale(det_phi.powf(1.0 / (n as f64 - 1.0)));
    let g = newton_refine(&g, &big_phi);
    InvariantMetric::new(linalg::hermitian_part(&g))
}

fn newton_refine(g: &CMatrix, target: &CMatrix) -> CMatrix {
    let n = g.nrows();
    let ginv = linalg::inverse(g).expect("invertible");
    let det = g.determinant();
    let residual = adjugate(g) - target;
    // d adj(g)[delta] = det g (tr(g^{-1} delta) g^{-1} - g^{-1} delta g^{-1})
    let mut jac = CMatrix::zeros(n * n, n * n);
    for r in 0..n {
        for c in 0..n {
            let mut delta = CMatrix::zeros(n, n);
            delta[(r, c)] = ONE;
            let gd = &ginv * &delta;
            let col = (&ginv * gd.trace() - &gd * &ginv) * det;
            for i in 0..n * n {
                jac[(i, r * n + c)] = col[(i / n, i % n)];
            }
        }
    }
    let rhs = nalgebra::DVector::from_fn(n * n, |i, _| -residual[(i / n, i % n)]);
    match jac.lu().solve(&rhs) {
        Some(step) => g + CMatrix::from_fn(n, n, |i, j| step[i * n + j]),
        None => g.clone(),
    }
}

/// Closed positive (n-1,n-1)-form together with its metric.
#[derive(Clone, Debug)]
pub struct BalancedStructure {
    phi: InvariantForm,
    metric: InvariantMetric,
}

impl BalancedStructure {
    /// Accepts `phi` when it is real, positive and `d`-closed (to `1e-12`, relative).
    pub fn new(model: &LieAlgebraModel, phi: InvariantForm) -> Result<Self> {
        let metric = metric_from_phi(&phi)?;
        let scale = phi.coeff_norm().max(1.0);
        let closed = model.d(&phi).norm() / scale;
        if closed > 1e-12 {
            return Err(Error::NotClosed(closed));
        }
        Ok(Self { phi, metric })
    }

    pub fn from_metric(model: &LieAlgebraModel, metric: &InvariantMetric) -> Result<Self> {
        Self::new(model, michelsohn(metric))
    }

    pub fn phi(&self) -> &InvariantForm {
        &self.phi
    }

    pub fn metric(&self) -> &InvariantMetric {
        &self.metric
    }
}

/// `|*(sigma ∧ omega^k) + sigma ∧ omega^{n-2-k} / (n-2-k)!|` in the metric norm.
pub fn star_primitive_identity_check(m: &InvariantMetric, sigma: &InvariantForm, k: usize) -> Result<f64> {
    star_primitive_residual(m, sigma, k, 1.0)
}

/// Same identity with the coefficient `-k!/(n-2-k)!` on the right-hand side.
pub fn star_primitive_identity_check_factorial(
    m: &InvariantMetric,
    sigma: &InvariantForm,
    k: usize,
) -> Result<f64> {
    star_primitive_residual(m, sigma, k, factorial(k))
}

fn star_primitive_residual(m: &InvariantMetric, sigma: &InvariantForm, k: usize, kfact: f64) -> Result<f64> {
    let n = m.n();
    if n < 2 || k > n - 2 {
        return Err(Error::InvalidArgument(format!("k = {k} outside 0..={}", n.saturating_sub(2))));
    }
    if sigma.bidegree() != (1, 1) {
        return Err(Error::DimensionMismatch("sigma must be a (1,1)-form".into()));
    }
    let defect = m.primitivity_defect(sigma);
    if defect > 1e-10 {
        return Err(Error::NotPrimitive(defect));
    }
    let omega = m.fundamental_form();
    let lhs = m.hodge_star(&sigma.wedge(&omega.power(k)?)?);
    let j = n - 2 - k;
    let rhs = sigma.wedge(&omega.power(j)?)?.scale_re(-kfact / factorial(j));
    Ok(m.norm(&(&lhs - &rhs)))
}

/// Central-difference check of the first-variation formula.
///
/// Along `phi(t) = phi0 + t (h1 phi0 + *h0)` with `phi0 = omega^{n-1}/(n-1)!`,
/// the returned value is `|(omega(step) - omega(-step)) / 2 step - (h1/(n-1)) omega + h0|`.
pub fn first_variation_check(m: &InvariantMetric, h1: f64, h0: &InvariantForm, step: f64) -> Result<f64> {
    let n = m.n();
    if step <= 0.0 {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    if h0.bidegree() != (1, 1) {
        return Err(Error::DimensionMismatch("h0 must be a (1,1)-form".into()));
    }
    if h0.reality_defect() > 1e-12 * h0.coeff_norm().max(1.0) {
        return Err(Error::InvalidArgument("h0 must be a real form".into()));
    }
    let defect = m.primitivity_defect(h0);
    if defect > 1e-10 && h0.coeff_norm() > 0.0 {
        return Err(Error::NotPrimitive(defect));
    }
    let phi0 = michelsohn(m);
    let velocity = &phi0.scale_re(h1) + &m.hodge_star(h0);
    let omega_at = |t: f64| -> Result<InvariantForm> {
        let phi = &phi0 + &velocity.scale_re(t);
        Ok(metric_from_phi(&phi)?.fundamental_form())
    };
    let fd = (&omega_at(step)? - &omega_at(-step)?).scale_re(0.5 / step);
    let omega = m.fundamental_form();
    let expected = &omega.scale_re(h1 / (n as f64 - 1.0)) - h0;
    Ok(m.norm(&(&fd - &expected)))
}
