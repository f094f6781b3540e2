//! Kähler potentials on the flat complex 2-torus, discretised pseudo-spectrally.
//!
//! The four real coordinates have period 1 and `z1 = x1 + i x2`, `z2 = x3 + i x4`.
//! A real potential `u` gives `omega_u = omega_flat + i ddbar u`, so the metric
//! field is `g_{jk} = delta_{jk} + d_j dbar_k u` with `omega_flat = i sum dz^j ∧ dzbar^j`.
//!
//! Fields are stored as flat vectors indexed by `((i1 N + i2) N + i3) N + i4`.
//! Nothing is de-aliased, so results are only meaningful while every eigenvalue of
//! `g` stays within [`ENVELOPE`] of 1.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::algebra::{form_dim, wedge_sign, InvariantForm};
use crate::error::{Error, Result};
use crate::hermitian::{self, InvariantMetric};
use crate::linalg::{CMatrix, I, ZERO};

/// Complex dimension of the torus.
pub const DIM: usize = 2;

/// Largest `|eigenvalue(g) - 1|` inside which the undealiased scheme is trusted.
pub const ENVELOPE: f64 = 0.1;

/// Explicit RK4 on `u_t = -(ddbar)^2 u` is stable for `dt <= 2.78 / (pi^4 N^4)`;
/// we use `dt <= STABILITY_CONSTANT / N^4`.
pub const STABILITY_CONSTANT: f64 = 0.02;

pub type Field = Vec<Complex64>;

pub fn max_stable_dt(n: usize) -> f64 {
    STABILITY_CONSTANT / (n as f64).powi(4)
}

#[derive(Clone)]
pub struct TorusGrid {
    n: usize,
    len: usize,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    wave: Vec<f64>,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid").field("n", &self.n).finish()
    }
}

impl TorusGrid {
    /// `n` points per real direction; must be even and between 8 and 16.
    pub fn new(n: usize) -> Result<Self> {
        if !n.is_multiple_of(2) || !(8..=16).contains(&n) {
            return Err(Error::InvalidArgument(format!(
                "grid size must be even and between 8 and 16, got {n}"
            )));
        }
        let mut planner = FftPlanner::new();
        let wave = (0..n)
            .map(|t| {
                let m = if t < n / 2 {
                    t as f64
                } else if t == n / 2 {
                    0.0
                } else {
                    t as f64 - n as f64
                };
                2.0 * std::f64::consts::PI * m
            })
            .collect();
        Ok(Self {
            n,
            len: n.pow(4),
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
            wave,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn point(&self, idx: usize) -> [usize; 4] {
        let n = self.n;
        [idx / (n * n * n), (idx / (n * n)) % n, (idx / n) % n, idx % n]
    }

    pub fn index(&self, p: [usize; 4]) -> usize {
        let n = self.n;
        ((p[0] * n + p[1]) * n + p[2]) * n + p[3]
    }

    pub fn coords(&self, idx: usize) -> [f64; 4] {
        self.point(idx).map(|t| t as f64 / self.n as f64)
    }

    pub fn sample(&self, f: impl Fn([f64; 4]) -> f64) -> Field {
        (0..self.len).map(|i| Complex64::new(f(self.coords(i)), 0.0)).collect()
    }

    pub fn constant(&self, c: Complex64) -> Field {
        vec![c; self.len]
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let plan = if inverse { &self.ifft } else { &self.fft };
        let mut line = vec![ZERO; n];
        let mut scratch = vec![ZERO; plan.get_inplace_scratch_len()];
        for axis in 0..4u32 {
            let stride = n.pow(3 - axis);
            for base in 0..self.len {
                if !(base / stride).is_multiple_of(n) {
                    continue;
                }
                for (t, v) in line.iter_mut().enumerate() {
                    *v = data[base + t * stride];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for (t, v) in line.iter().enumerate() {
                    data[base + t * stride] = *v;
                }
            }
        }
        if inverse {
            let s = 1.0 / self.len as f64;
            data.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn forward(&self, f: &[Complex64]) -> Field {
        let mut out = f.to_vec();
        self.transform(&mut out, false);
        out
    }

    pub fn inverse(&self, f: &[Complex64]) -> Field {
        let mut out = f.to_vec();
        self.transform(&mut out, true);
        out
    }

    fn wavevector(&self, idx: usize) -> [f64; 4] {
        self.point(idx).map(|t| self.wave[t])
    }

    fn multiply_spectrum(&self, spectrum: &[Complex64], symbol: impl Fn([f64; 4]) -> Complex64) -> Field {
        let mut out: Field = spectrum
            .iter()
            .enumerate()
            .map(|(i, v)| v * symbol(self.wavevector(i)))
            .collect();
        self.transform(&mut out, true);
        out
    }

    pub fn del(&self, f: &[Complex64], j: usize) -> Field {
        self.multiply_spectrum(&self.forward(f), |k| del_symbol(k, j))
    }

    pub fn delbar(&self, f: &[Complex64], j: usize) -> Field {
        self.multiply_spectrum(&self.forward(f), |k| delbar_symbol(k, j))
    }

    /// `d_j dbar_k f` in one pass over the spectrum.
    pub fn del_delbar(&self, f: &[Complex64], j: usize, k: usize) -> Field {
        self.multiply_spectrum(&self.forward(f), |w| del_symbol(w, j) * delbar_symbol(w, k))
    }

    /// `[d_j dbar_k f]` flattened as `j * 2 + k`.
    pub fn complex_hessian(&self, f: &[Complex64]) -> [Field; 4] {
        let spectrum = self.forward(f);
        std::array::from_fn(|e| {
            self.multiply_spectrum(&spectrum, |w| del_symbol(w, e / 2) * delbar_symbol(w, e % 2))
        })
    }

    pub fn mean(&self, f: &[Complex64]) -> Complex64 {
        f.iter().sum::<Complex64>() / self.len as f64
    }

    /// Root mean square over the grid.
    pub fn rms(&self, f: &[Complex64]) -> f64 {
        (f.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.len as f64).sqrt()
    }

    /// `f(x - e_axis / N)`: the samples moved one point along `axis`.
    pub fn shift(&self, f: &[Complex64], axis: usize) -> Field {
        (0..self.len)
            .map(|i| {
                let mut p = self.point(i);
                p[axis] = (p[axis] + self.n - 1) % self.n;
                f[self.index(p)]
            })
            .collect()
    }
}

fn del_symbol(k: [f64; 4], j: usize) -> Complex64 {
    Complex64::new(k[2 * j + 1], k[2 * j]) * 0.5
}

fn delbar_symbol(k: [f64; 4], j: usize) -> Complex64 {
    Complex64::new(-k[2 * j + 1], k[2 * j]) * 0.5
}

/// `amplitude * cos(2 pi k.x + phase)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierMode {
    pub k: [i32; 4],
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

pub fn potential(grid: &TorusGrid, modes: &[FourierMode]) -> Result<Field> {
    let half = (grid.n() / 2) as i32;
    for (i, m) in modes.iter().enumerate() {
        if m.k == [0; 4] {
            return Err(Error::InvalidArgument(format!("mode {i}: constant mode is not allowed")));
        }
        if m.k.iter().any(|c| c.abs() >= half) {
            return Err(Error::InvalidArgument(format!(
                "mode {i}: wavevector {:?} is not resolved on an N = {} grid",
                m.k,
                grid.n()
            )));
        }
        if !m.amplitude.is_finite() || !m.phase.is_finite() {
            return Err(Error::InvalidArgument(format!("mode {i}: non-finite amplitude or phase")));
        }
    }
    Ok(grid.sample(|x| {
        modes
            .iter()
            .map(|m| {
                let dot: f64 = (0..4).map(|a| m.k[a] as f64 * x[a]).sum();
                m.amplitude * (2.0 * std::f64::consts::PI * dot + m.phase).cos()
            })
            .sum()
    }))
}

/// Hermitian 2x2 matrix at each grid point, entries flattened as `j * 2 + k`.
#[derive(Clone, Debug)]
pub struct MetricField {
    pub entries: [Field; 4],
}

impl MetricField {
    pub fn flat(grid: &TorusGrid) -> Self {
        let one = grid.constant(Complex64::new(1.0, 0.0));
        let zero = grid.constant(ZERO);
        Self {
            entries: [one.clone(), zero.clone(), zero, one],
        }
    }

    pub fn constant(grid: &TorusGrid, g: &CMatrix) -> Self {
        Self {
            entries: std::array::from_fn(|e| grid.constant(g[(e / 2, e % 2)])),
        }
    }

    pub fn len(&self) -> usize {
        self.entries[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn at(&self, idx: usize) -> [Complex64; 4] {
        std::array::from_fn(|e| self.entries[e][idx])
    }

    pub fn matrix(&self, idx: usize) -> CMatrix {
        let a = self.at(idx);
        CMatrix::from_row_slice(2, 2, &a)
    }

    pub fn det(&self, idx: usize) -> f64 {
        let a = self.at(idx);
        (a[0] * a[3] - a[1] * a[2]).re
    }

    pub fn inverse_at(&self, idx: usize) -> [Complex64; 4] {
        let a = self.at(idx);
        let det = a[0] * a[3] - a[1] * a[2];
        [a[3] / det, -a[1] / det, -a[2] / det, a[0] / det]
    }

    pub fn eigenvalues(&self, idx: usize) -> [f64; 2] {
        let a = self.at(idx);
        let mean = 0.5 * (a[0].re + a[3].re);
        let half = 0.5 * (a[0].re - a[3].re);
        let r = (half * half + a[1].norm_sqr()).sqrt();
        [mean - r, mean + r]
    }

    pub fn min_eigenvalue(&self) -> (usize, f64) {
        (0..self.len())
            .map(|i| (i, self.eigenvalues(i)[0]))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc })
    }

    /// Largest `|eigenvalue - 1|` over the grid.
    pub fn envelope(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let [a, b] = self.eigenvalues(i);
                (a - 1.0).abs().max((b - 1.0).abs())
            })
            .fold(0.0, f64::max)
    }

    pub fn add_scaled(&self, other: &MetricField, t: f64) -> MetricField {
        MetricField {
            entries: std::array::from_fn(|e| {
                self.entries[e].iter().zip(&other.entries[e]).map(|(a, b)| a + b * t).collect()
            }),
        }
    }

    /// Per-point [`InvariantMetric`]s for the pointwise Hodge star.
    pub fn pointwise(&self, grid: &TorusGrid) -> Result<Vec<InvariantMetric>> {
        (0..self.len())
            .map(|i| {
                InvariantMetric::new(self.matrix(i)).map_err(|e| match e {
                    Error::NotPositive { eigenvalue } => Error::GridNotPositive {
                        point: grid.point(i),
                        eigenvalue,
                    },
                    other => other,
                })
            })
            .collect()
    }

    fn check_positive(&self, grid: &TorusGrid) -> Result<()> {
        let (idx, eig) = self.min_eigenvalue();
        if eig > 0.0 {
            Ok(())
        } else {
            Err(Error::GridNotPositive {
                point: grid.point(idx),
                eigenvalue: eig,
            })
        }
    }
}

/// `g = 1 + [d_j dbar_k u]`, rejected with the offending grid point if not positive.
pub fn metric_from_potential(grid: &TorusGrid, u: &[Complex64]) -> Result<MetricField> {
    let h = grid.complex_hessian(u);
    let mut entries: [Field; 4] = std::array::from_fn(|_| Vec::with_capacity(grid.len()));
    for i in 0..grid.len() {
        let off = 0.5 * (h[1][i] + h[2][i].conj());
        entries[0].push(Complex64::new(1.0 + h[0][i].re, 0.0));
        entries[1].push(off);
        entries[2].push(off.conj());
        entries[3].push(Complex64::new(1.0 + h[3][i].re, 0.0));
    }
    let g = MetricField { entries };
    g.check_positive(grid)?;
    Ok(g)
}

/// Matrix `P` of the Chern-Ricci form `rho = i sum P_{kl} dz^k ∧ dzbar^l`.
pub type RicciField = [Field; 4];

/// `P_{kl} = -d_k dbar_l log det g`.
pub fn ricci_coordinate(grid: &TorusGrid, g: &MetricField) -> Result<RicciField> {
    g.check_positive(grid)?;
    let log_det: Field = (0..grid.len()).map(|i| Complex64::new(g.det(i).ln(), 0.0)).collect();
    let h = grid.complex_hessian(&log_det);
    Ok(h.map(|f| f.into_iter().map(|v| -v).collect()))
}

/// `P_{kl} = -dbar_l tr(g^{-1} d_k g)`: trace of the curvature of the coordinate-frame
/// Chern connection.
pub fn ricci_frame(grid: &TorusGrid, g: &MetricField) -> Result<RicciField> {
    g.check_positive(grid)?;
    let dg: [[Field; 4]; 2] = std::array::from_fn(|k| std::array::from_fn(|e| grid.del(&g.entries[e], k)));
    let traces: [Field; 2] = std::array::from_fn(|k| {
        (0..grid.len())
            .map(|i| {
                let inv = g.inverse_at(i);
                (0..2)
                    .flat_map(|a| (0..2).map(move |b| (a, b)))
                    .map(|(a, b)| inv[a * 2 + b] * dg[k][b * 2 + a][i])
                    .sum()
            })
            .collect()
    });
    Ok(std::array::from_fn(|e| {
        grid.delbar(&traces[e / 2], e % 2).into_iter().map(|v| -v).collect()
    }))
}

/// `s = tr(g^{-1} P)`.
pub fn scalar_curvature(g: &MetricField, p: &RicciField) -> Field {
    (0..g.len())
        .map(|i| {
            let inv = g.inverse_at(i);
            let s: Complex64 = (0..4).map(|e| inv[(e % 2) * 2 + e / 2] * p[e][i]).sum();
            Complex64::new(s.re, 0.0)
        })
        .collect()
}

/// `int s^2 dV` with `dV = omega_u^2 / 2 = 4 det g dx`.
pub fn calabi_energy(grid: &TorusGrid, g: &MetricField, s: &[Complex64]) -> f64 {
    let total: f64 = (0..grid.len()).map(|i| s[i].norm_sqr() * g.det(i)).sum();
    4.0 * total / grid.len() as f64
}

/// Total scalar curvature `int s dV`.
pub fn total_scalar_curvature(grid: &TorusGrid, g: &MetricField, s: &[Complex64]) -> f64 {
    let total: f64 = (0..grid.len()).map(|i| s[i].re * g.det(i)).sum();
    4.0 * total / grid.len() as f64
}

#[derive(Clone, Debug)]
pub struct CalabiRhs {
    /// Coefficients of `i ddbar s` on `dz^j ∧ dzbar^k`, flattened as `j * 2 + k`.
    pub form: [Field; 4],
    /// `s - mean(s)`, the potential-level velocity.
    pub rate: Field,
    pub scalar: Field,
    pub metric: MetricField,
}

pub fn calabi_rhs(grid: &TorusGrid, u: &[Complex64]) -> Result<CalabiRhs> {
    let g = metric_from_potential(grid, u)?;
    let p = ricci_coordinate(grid, &g)?;
    let s = scalar_curvature(&g, &p);
    let mean = grid.mean(&s).re;
    let rate = s.iter().map(|v| Complex64::new(v.re - mean, 0.0)).collect();
    let form = grid.complex_hessian(&s).map(|f| f.into_iter().map(|v| I * v).collect());
    Ok(CalabiRhs {
        form,
        rate,
        scalar: s,
        metric: g,
    })
}

/// Form of bidegree `(p,q)` with one coefficient field per basis monomial; bidegrees
/// outside `0..=2` are empty.
#[derive(Clone, Debug)]
pub struct GridForm {
    pub p: isize,
    pub q: isize,
    pub coeffs: Vec<Field>,
}

fn in_range(p: isize, q: isize) -> bool {
    (0..=DIM as isize).contains(&p) && (0..=DIM as isize).contains(&q)
}

fn masks(p: isize, q: isize) -> Vec<u32> {
    if in_range(p, q) {
        InvariantForm::masks(DIM, p as usize, q as usize)
    } else {
        Vec::new()
    }
}

impl GridForm {
    pub fn zero(grid: &TorusGrid, p: isize, q: isize) -> Self {
        let dim = if in_range(p, q) {
            form_dim(DIM, p as usize, q as usize)
        } else {
            0
        };
        Self {
            p,
            q,
            coeffs: vec![grid.constant(ZERO); dim],
        }
    }

    /// `i sum h_{jk} dz^j ∧ dzbar^k`.
    pub fn from_11(h: &[Field; 4]) -> Self {
        Self {
            p: 1,
            q: 1,
            coeffs: h.iter().map(|f| f.iter().map(|v| I * v).collect()).collect(),
        }
    }

    pub fn scalar(f: Field) -> Self {
        Self {
            p: 0,
            q: 0,
            coeffs: vec![f],
        }
    }

    fn points(&self) -> usize {
        self.coeffs.first().map_or(0, Vec::len)
    }

    pub fn at(&self, idx: usize) -> InvariantForm {
        let c = self.coeffs.iter().map(|f| f[idx]).collect();
        InvariantForm::from_coeffs(DIM, self.p as usize, self.q as usize, c).expect("dimension matches")
    }

    /// Root mean square of all coefficients.
    pub fn norm(&self) -> f64 {
        let len = self.points().max(1) as f64;
        (self.coeffs.iter().flatten().map(|v| v.norm_sqr()).sum::<f64>() / len).sqrt()
    }

    pub fn sub(&self, other: &GridForm) -> GridForm {
        self.combine(other, -1.0)
    }

    pub fn add(&self, other: &GridForm) -> GridForm {
        self.combine(other, 1.0)
    }

    fn combine(&self, other: &GridForm, sign: f64) -> GridForm {
        assert_eq!((self.p, self.q), (other.p, other.q), "bidegree mismatch");
        GridForm {
            p: self.p,
            q: self.q,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y * sign).collect())
                .collect(),
        }
    }

    fn neg(mut self) -> GridForm {
        self.coeffs.iter_mut().flatten().for_each(|v| *v = -*v);
        self
    }
}

/// Spectral `del` (`anti = false`) or `delbar` (`anti = true`) acting on coefficients.
fn exterior(grid: &TorusGrid, f: &GridForm, anti: bool) -> GridForm {
    let (tp, tq) = if anti { (f.p, f.q + 1) } else { (f.p + 1, f.q) };
    let mut out = GridForm::zero(grid, tp, tq);
    if out.coeffs.is_empty() || f.coeffs.is_empty() {
        return out;
    }
    let target = masks(tp, tq);
    for (src, &m) in masks(f.p, f.q).iter().enumerate() {
        let spectrum = grid.forward(&f.coeffs[src]);
        for j in 0..DIM {
            let bit = if anti { 1u32 << (j + DIM) } else { 1u32 << j };
            let Some(sign) = wedge_sign(bit, m) else { continue };
            let row = target.iter().position(|&t| t == m | bit).expect("target monomial");
            let d = grid.multiply_spectrum(&spectrum, |k| {
                if anti {
                    delbar_symbol(k, j)
                } else {
                    del_symbol(k, j)
                }
            });
            for (o, v) in out.coeffs[row].iter_mut().zip(d) {
                *o += v * sign;
            }
        }
    }
    out
}

pub fn grid_del(grid: &TorusGrid, f: &GridForm) -> GridForm {
    exterior(grid, f, false)
}

pub fn grid_delbar(grid: &TorusGrid, f: &GridForm) -> GridForm {
    exterior(grid, f, true)
}

/// Pointwise Hodge star.
pub fn grid_star(metrics: &[InvariantMetric], f: &GridForm) -> GridForm {
    let n = DIM as isize;
    let (tp, tq) = (n - f.q, n - f.p);
    if f.coeffs.is_empty() {
        return GridForm {
            p: tp,
            q: tq,
            coeffs: vec![vec![ZERO; metrics.len()]; masks(tp, tq).len()],
        };
    }
    let rows = form_dim(DIM, tp as usize, tq as usize);
    let mut coeffs = vec![Vec::with_capacity(metrics.len()); rows];
    for (i, m) in metrics.iter().enumerate() {
        let s = m.star_matrix(f.p as usize, f.q as usize);
        for (r, out) in coeffs.iter_mut().enumerate() {
            out.push((0..f.coeffs.len()).map(|c| s[(r, c)] * f.coeffs[c][i]).sum());
        }
    }
    GridForm { p: tp, q: tq, coeffs }
}

/// Pointwise wedge product.
pub fn grid_wedge(a: &GridForm, b: &GridForm) -> Result<GridForm> {
    let (p, q) = (a.p + b.p, a.q + b.q);
    let len = a.points();
    let dim = masks(p, q).len();
    let mut coeffs = vec![Vec::with_capacity(len); dim];
    for i in 0..len {
        let w = a.at(i).wedge(&b.at(i))?;
        for (c, v) in coeffs.iter_mut().zip(w.coeffs()) {
            c.push(*v);
        }
    }
    Ok(GridForm { p, q, coeffs })
}

/// `del* = -* delbar *`.
pub fn grid_del_adj(grid: &TorusGrid, metrics: &[InvariantMetric], f: &GridForm) -> GridForm {
    grid_star(metrics, &grid_delbar(grid, &grid_star(metrics, f))).neg()
}

/// `delbar* = -* del *`.
pub fn grid_delbar_adj(grid: &TorusGrid, metrics: &[InvariantMetric], f: &GridForm) -> GridForm {
    grid_star(metrics, &grid_del(grid, &grid_star(metrics, f))).neg()
}

/// Bott-Chern Laplacian with the pointwise star and spectral derivatives.
pub fn grid_delta_bc(grid: &TorusGrid, metrics: &[InvariantMetric], f: &GridForm) -> GridForm {
    let d = |x: &GridForm| grid_del(grid, x);
    let db = |x: &GridForm| grid_delbar(grid, x);
    let ds = |x: &GridForm| grid_del_adj(grid, metrics, x);
    let dbs = |x: &GridForm| grid_delbar_adj(grid, metrics, x);
    let t1 = d(&db(&dbs(&ds(f))));
    let t2 = dbs(&ds(&d(&db(f))));
    let t3 = dbs(&d(&ds(&db(f))));
    let t4 = ds(&db(&dbs(&d(f))));
    let t5 = dbs(&db(f));
    let t6 = ds(&d(f));
    t1.add(&t2).add(&t3).add(&t4).add(&t5).add(&t6)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReductionReport {
    /// `|LHS - RHS| / |LHS|` for `i ddbar s = i ddbar *(rho ∧ *phi)`.
    pub identity_residual: f64,
    /// `|Delta_BC phi| / |phi|`.
    pub delta_bc_residual: f64,
    pub residual: f64,
    pub lhs_norm: f64,
    pub envelope: f64,
    pub in_envelope: bool,
}

/// Compares `i ddbar s` (coordinate Ricci form, scalar trace) against
/// `i ddbar *(rho ∧ *phi)` (frame Ricci form, pointwise star and wedge), and
/// measures `Delta_BC phi` for `phi = omega`.
pub fn reduction_identity_check(grid: &TorusGrid, u: &[Complex64]) -> Result<ReductionReport> {
    let g = metric_from_potential(grid, u)?;
    let metrics = g.pointwise(grid)?;

    let p = ricci_coordinate(grid, &g)?;
    let s = scalar_curvature(&g, &p);
    let lhs = GridForm::from_11(&grid.complex_hessian(&s));

    let rho = GridForm::from_11(&ricci_frame(grid, &g)?);
    let phi = GridForm::from_11(&g.entries);
    let top = grid_wedge(&rho, &grid_star(&metrics, &phi))?;
    let f = grid_star(&metrics, &top);
    let rhs = GridForm::from_11(&grid.complex_hessian(&f.coeffs[0]));

    let lhs_norm = lhs.norm();
    let diff = lhs.sub(&rhs).norm();
    let identity_residual = if diff == 0.0 { 0.0 } else { diff / lhs_norm.max(f64::MIN_POSITIVE) };
    let delta_bc_residual = grid_delta_bc(grid, &metrics, &phi).norm() / phi.norm();
    let envelope = g.envelope();
    Ok(ReductionReport {
        identity_residual,
        delta_bc_residual,
        residual: identity_residual + delta_bc_residual,
        lhs_norm,
        envelope,
        in_envelope: envelope <= ENVELOPE,
    })
}

/// Relative error between a central difference of `P` along `g + t hdot` and
/// `-ddbar (omega, omega_dot)`, the pairing taken with the pointwise metric.
pub fn varrho_check(grid: &TorusGrid, g: &MetricField, hdot: &MetricField, step: f64) -> Result<f64> {
    let plus = ricci_coordinate(grid, &g.add_scaled(hdot, step))?;
    let minus = ricci_coordinate(grid, &g.add_scaled(hdot, -step))?;
    let metrics = g.pointwise(grid)?;
    let pairing: Field = metrics
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let omega = hermitian::form_from_11_matrix(m.matrix());
            let omega_dot = hermitian::form_from_11_matrix(&hdot.matrix(i));
            m.inner(&omega_dot, &omega)
        })
        .collect();
    let predicted = grid.complex_hessian(&pairing);
    let mut num = 0.0;
    let mut den = 0.0;
    for e in 0..4 {
        for i in 0..grid.len() {
            let fd = (plus[e][i] - minus[e][i]) / (2.0 * step);
            num += (fd + predicted[e][i]).norm_sqr();
            den += predicted[e][i].norm_sqr();
        }
    }
    Ok((num / den.max(f64::MIN_POSITIVE)).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalabiRow {
    pub step: usize,
    pub t: f64,
    pub energy: f64,
    pub max_abs_s: f64,
    pub min_eig: f64,
    pub reduction_residual: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct CalabiTrajectory {
    pub rows: Vec<CalabiRow>,
    pub potential: Field,
}

#[derive(Clone, Copy, Debug)]
pub struct CalabiControl {
    pub steps: usize,
    pub dt: f64,
    /// Evaluate the reduction residual every this many steps (0 disables it).
    pub residual_every: usize,
}

/// Aborts after two consecutive energy increases.
#[derive(Clone, Copy, Debug, Default)]
struct EnergyMonitor {
    last: Option<f64>,
    rises: usize,
}

impl EnergyMonitor {
    fn observe(&mut self, step: usize, energy: f64) -> Result<()> {
        if let Some(previous) = self.last {
            if energy > previous * (1.0 + 1e-12) {
                self.rises += 1;
                if self.rises >= 2 {
                    return Err(Error::Unstable {
                        step,
                        previous,
                        current: energy,
                    });
                }
            } else {
                self.rises = 0;
            }
        }
        self.last = Some(energy);
        Ok(())
    }
}

/// Explicit RK4 for `u_t = s - mean(s)`, which moves `omega_u` by `i ddbar s`.
pub fn integrate_calabi(grid: &TorusGrid, u0: &[Complex64], control: &CalabiControl) -> Result<CalabiTrajectory> {
    let bound = max_stable_dt(grid.n());
    if !(control.dt > 0.0 && control.dt <= bound) {
        return Err(Error::InvalidArgument(format!(
            "dt = {:e} outside (0, {bound:e}] (stability bound {STABILITY_CONSTANT} / N^4)",
            control.dt
        )));
    }
    let dt = control.dt;
    let mut u: Field = u0.iter().map(|v| Complex64::new(v.re, 0.0)).collect();
    let mut rows = Vec::with_capacity(control.steps + 1);
    let row = |step: usize, u: &Field| -> Result<CalabiRow> {
        let rhs = calabi_rhs(grid, u)?;
        let reduction_residual = if control.residual_every > 0 && step.is_multiple_of(control.residual_every) {
            Some(reduction_identity_check(grid, u)?.residual)
        } else {
            None
        };
        Ok(CalabiRow {
            step,
            t: step as f64 * dt,
            energy: calabi_energy(grid, &rhs.metric, &rhs.scalar),
            max_abs_s: rhs.scalar.iter().map(|v| v.norm()).fold(0.0, f64::max),
            min_eig: rhs.metric.min_eigenvalue().1,
            reduction_residual,
        })
    };
    let mut monitor = EnergyMonitor::default();
    rows.push(row(0, &u)?);
    monitor.observe(0, rows[0].energy)?;
    for step in 1..=control.steps {
        let axpy = |a: &Field, b: &Field, t: f64| -> Field { a.iter().zip(b).map(|(x, y)| x + y * t).collect() };
        let k1 = calabi_rhs(grid, &u)?.rate;
        let k2 = calabi_rhs(grid, &axpy(&u, &k1, 0.5 * dt))?.rate;
        let k3 = calabi_rhs(grid, &axpy(&u, &k2, 0.5 * dt))?.rate;
        let k4 = calabi_rhs(grid, &axpy(&u, &k3, dt))?.rate;
        for i in 0..u.len() {
            u[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
        }
        let current = row(step, &u)?;
        monitor.observe(step, current.energy)?;
        rows.push(current);
    }
    Ok(CalabiTrajectory { rows, potential: u })
}
