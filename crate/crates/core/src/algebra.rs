//! Bigraded exterior algebra of a Lie algebra with an invariant complex structure.
//!
//! The complexified dual is spanned by the (1,0)-coframe `alpha^1..alpha^n` and
//! its conjugates. Internally a monomial is a bitmask over the `2n` generators,
//! holomorphic generators first (`alpha^k` is bit `k-1`, `alphabar^k` is bit
//! `n+k-1`), and the canonical monomial lists its generators in increasing bit
//! order. An [`InvariantForm`] of bidegree `(p,q)` stores one coefficient per
//! pair `(I, J)` of strictly increasing multi-indices, `I` outer and `J` inner,
//! both lexicographic; every sign in the crate derives from sorting parity.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, binomial, bits, subsets, CMatrix, ZERO};

/// Sparse form over the full (ungraded) algebra, keyed by generator mask.
pub(crate) type SparseForm = BTreeMap<u32, Complex64>;

/// Sign of `e_a ∧ e_b` relative to the canonical monomial of `a | b`, or
/// `None` when the monomials share a generator.
pub(crate) fn wedge_sign(a: u32, b: u32) -> Option<f64> {
    if a & b != 0 {
        return None;
    }
    let mut inversions = 0u32;
    for y in bits(b) {
        inversions += (a >> (y + 1)).count_ones();
    }
    Some(if inversions.is_multiple_of(2) { 1.0 } else { -1.0 })
}

/// Lexicographic rank of a `k`-subset of `{0..n}` among all `k`-subsets.
pub(crate) fn subset_rank(n: usize, mask: u32) -> usize {
    let k = mask.count_ones() as usize;
    let mut rank = 0;
    let mut prev: isize = -1;
    for (pos, c) in bits(mask).enumerate() {
        for j in (prev + 1) as usize..c {
            rank += binomial(n - j - 1, k - pos - 1);
        }
        prev = c as isize;
    }
    rank
}

pub(crate) fn hol_part(n: usize, mask: u32) -> u32 {
    mask & ((1u32 << n) - 1)
}

pub(crate) fn anti_part(n: usize, mask: u32) -> u32 {
    mask >> n
}

pub(crate) fn generator_name(n: usize, g: usize) -> String {
    if g < n {
        format!("alpha^{}", g + 1)
    } else {
        format!("alphabar^{}", g - n + 1)
    }
}

pub(crate) fn monomial_name(n: usize, mask: u32) -> String {
    let hol: String = bits(hol_part(n, mask)).map(|b| (b + 1).to_string()).collect();
    let anti: String = bits(anti_part(n, mask)).map(|b| (b + 1).to_string()).collect();
    match (hol.is_empty(), anti.is_empty()) {
        (true, true) => "1".into(),
        (false, true) => format!("alpha^{{{hol}}}"),
        (true, false) => format!("alphabar^{{{anti}}}"),
        (false, false) => format!("alpha^{{{hol}}} ^ alphabar^{{{anti}}}"),
    }
}

/// A single generator of the complexified coframe, 1-based
/// (`Hol(3)` is `alpha^3`, `Anti(1)` is `alphabar^1`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Generator {
    Hol(usize),
    Anti(usize),
}

/// Constant-coefficient complex form of pure bidegree `(p, q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct InvariantForm {
    n: usize,
    p: usize,
    q: usize,
    coeffs: Vec<Complex64>,
}

pub fn form_dim(n: usize, p: usize, q: usize) -> usize {
    binomial(n, p) * binomial(n, q)
}

impl InvariantForm {
    pub fn zero(n: usize, p: usize, q: usize) -> Self {
        Self {
            n,
            p,
            q,
            coeffs: vec![ZERO; form_dim(n, p, q)],
        }
    }

    pub fn from_coeffs(n: usize, p: usize, q: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        let dim = form_dim(n, p, q);
        if coeffs.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "({p},{q})-forms in dimension {n} have {dim} coefficients, got {}",
                coeffs.len()
            )));
        }
        Ok(Self { n, p, q, coeffs })
    }

    pub fn scalar(n: usize, c: Complex64) -> Self {
        Self {
            n,
            p: 0,
            q: 0,
            coeffs: vec![c],
        }
    }

    /// Canonical basis monomial `alpha^I ∧ alphabar^J` (1-based, strictly increasing).
    pub fn basis(n: usize, hol: &[usize], anti: &[usize]) -> Result<Self> {
        let i = index_mask(n, hol)?;
        let j = index_mask(n, anti)?;
        let mut f = Self::zero(n, hol.len(), anti.len());
        let idx = f.index_of(i, j);
        f.coeffs[idx] = Complex64::new(1.0, 0.0);
        Ok(f)
    }

    /// Wedge product of generators in the order given, e.g.
    /// `[Hol(1), Anti(1), Hol(2), Anti(2)]` is `alpha^1 ∧ alphabar^1 ∧ alpha^2 ∧ alphabar^2`.
    pub fn product(n: usize, factors: &[Generator]) -> Result<Self> {
        let hol = factors.iter().filter(|g| matches!(g, Generator::Hol(_))).count();
        for (i, g) in factors.iter().enumerate() {
            if factors[..i].contains(g) {
                return Ok(Self::zero(n, hol, factors.len() - hol));
            }
        }
        let mut acc = Self::scalar(n, Complex64::new(1.0, 0.0));
        for g in factors {
            let f = match *g {
                Generator::Hol(k) => Self::basis(n, &[k], &[])?,
                Generator::Anti(k) => Self::basis(n, &[], &[k])?,
            };
            acc = acc.wedge(&f)?;
        }
        Ok(acc)
    }

    pub fn alpha(n: usize, k: usize) -> Result<Self> {
        Self::basis(n, &[k], &[])
    }

    pub fn alpha_bar(n: usize, k: usize) -> Result<Self> {
        Self::basis(n, &[], &[k])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bidegree(&self) -> (usize, usize) {
        (self.p, self.q)
    }

    pub fn degree(&self) -> usize {
        self.p + self.q
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn as_vector(&self) -> nalgebra::DVector<Complex64> {
        nalgebra::DVector::from_column_slice(&self.coeffs)
    }

    pub(crate) fn index_of(&self, hol_mask: u32, anti_mask: u32) -> usize {
        subset_rank(self.n, hol_mask) * binomial(self.n, self.q) + subset_rank(self.n, anti_mask)
    }

    /// Coefficient on `alpha^I ∧ alphabar^J` (1-based indices).
    pub fn get(&self, hol: &[usize], anti: &[usize]) -> Result<Complex64> {
        if hol.len() != self.p || anti.len() != self.q {
            return Err(Error::InvalidIndex(format!(
                "multi-index of type ({},{}) on a ({},{})-form",
                hol.len(),
                anti.len(),
                self.p,
                self.q
            )));
        }
        let i = index_mask(self.n, hol)?;
        let j = index_mask(self.n, anti)?;
        Ok(self.coeffs[self.index_of(i, j)])
    }

    /// Basis masks in storage order.
    pub(crate) fn masks(n: usize, p: usize, q: usize) -> Vec<u32> {
        let js = subsets(n, q);
        subsets(n, p)
            .into_iter()
            .flat_map(|i| js.iter().map(move |&j| i | (j << n)))
            .collect()
    }

    pub fn wedge(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(format!(
                "wedge of forms in dimensions {} and {}",
                self.n, other.n
            )));
        }
        let (p, q) = (self.p + other.p, self.q + other.q);
        if p > self.n || q > self.n {
            return Err(Error::DegreeOverflow(
                self.p, self.q, other.p, other.q, self.n,
            ));
        }
        let n = self.n;
        let mut out = Self::zero(n, p, q);
        let ma = Self::masks(n, self.p, self.q);
        let mb = Self::masks(n, other.p, other.q);
        for (a, &ca) in ma.iter().zip(&self.coeffs) {
            if ca == ZERO {
                continue;
            }
            for (b, &cb) in mb.iter().zip(&other.coeffs) {
                if cb == ZERO {
                    continue;
                }
                if let Some(s) = wedge_sign(*a, *b) {
                    let m = a | b;
                    let idx = out.index_of(hol_part(n, m), anti_part(n, m));
                    out.coeffs[idx] += ca * cb * s;
                }
            }
        }
        Ok(out)
    }

    /// `k`-fold wedge power; `power(0)` is the constant 1.
    pub fn power(&self, k: usize) -> Result<Self> {
        let mut acc = Self::scalar(self.n, Complex64::new(1.0, 0.0));
        for _ in 0..k {
            acc = acc.wedge(self)?;
        }
        Ok(acc)
    }

    /// Complex conjugation, `(p,q) -> (q,p)`:
    /// `conj(alpha^I ∧ alphabar^J) = (-1)^{|I||J|} alpha^J ∧ alphabar^I`.
    pub fn conj(&self) -> Self {
        let n = self.n;
        let mut out = Self::zero(n, self.q, self.p);
        let sign = if (self.p * self.q).is_multiple_of(2) { 1.0 } else { -1.0 };
        for (mask, c) in Self::masks(n, self.p, self.q).into_iter().zip(&self.coeffs) {
            let idx = out.index_of(anti_part(n, mask), hol_part(n, mask));
            out.coeffs[idx] = c.conj() * sign;
        }
        out
    }

    /// Euclidean norm of the coefficient vector (metric-free).
    pub fn coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Distance from the real subspace, for `p == q` forms.
    pub fn reality_defect(&self) -> f64 {
        if self.p != self.q {
            return f64::INFINITY;
        }
        (self - &self.conj()).coeff_norm()
    }

    /// Projection onto real forms, `(a + conj a) / 2`.
    pub fn real_part(&self) -> Self {
        assert_eq!(self.p, self.q, "real part needs p == q");
        (self + &self.conj()).scale(Complex64::new(0.5, 0.0))
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            n: self.n,
            p: self.p,
            q: self.q,
            coeffs: self.coeffs.iter().map(|x| x * c).collect(),
        }
    }

    pub fn scale_re(&self, c: f64) -> Self {
        self.scale(Complex64::new(c, 0.0))
    }

    fn assert_compatible(&self, other: &Self) {
        assert!(
            self.n == other.n && self.p == other.p && self.q == other.q,
            "form arithmetic on ({},{}) in dim {} and ({},{}) in dim {}",
            self.p,
            self.q,
            self.n,
            other.p,
            other.q,
            other.n
        );
    }

    pub(crate) fn map_coeffs(&self, m: &CMatrix, p: usize, q: usize) -> Self {
        let v = m * self.as_vector();
        Self {
            n: self.n,
            p,
            q,
            coeffs: v.iter().cloned().collect(),
        }
    }
}

impl Add for &InvariantForm {
    type Output = InvariantForm;
    fn add(self, rhs: Self) -> InvariantForm {
        self.assert_compatible(rhs);
        InvariantForm {
            n: self.n,
            p: self.p,
            q: self.q,
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &InvariantForm {
    type Output = InvariantForm;
    fn sub(self, rhs: Self) -> InvariantForm {
        self.assert_compatible(rhs);
        InvariantForm {
            n: self.n,
            p: self.p,
            q: self.q,
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &InvariantForm {
    type Output = InvariantForm;
    fn neg(self) -> InvariantForm {
        self.scale_re(-1.0)
    }
}

impl Mul<Complex64> for &InvariantForm {
    type Output = InvariantForm;
    fn mul(self, rhs: Complex64) -> InvariantForm {
        self.scale(rhs)
    }
}

impl fmt::Display for InvariantForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (mask, c) in Self::masks(self.n, self.p, self.q).into_iter().zip(&self.coeffs) {
            if c.norm() < 1e-15 {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({:.6}{:+.6}i) {}", c.re, c.im, monomial_name(self.n, mask))?;
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

fn index_mask(n: usize, idx: &[usize]) -> Result<u32> {
    let mut mask = 0u32;
    let mut prev = 0;
    for &k in idx {
        if k == 0 || k > n || k <= prev {
            return Err(Error::InvalidIndex(format!(
                "multi-index {idx:?} must be strictly increasing within 1..={n}"
            )));
        }
        prev = k;
        mask |= 1 << (k - 1);
    }
    Ok(mask)
}

/// Kind of a structure-constant term in `d alpha^k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum TermKind {
    /// `A^k_{ij} alpha^i ∧ alpha^j`, `i < j`.
    #[serde(rename = "20")]
    TwoZero,
    /// `B^k_{ij} alpha^i ∧ alphabar^j`.
    #[serde(rename = "11")]
    OneOne,
}

/// One term of the structure equations, 1-based indices.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureTerm {
    pub k: usize,
    pub kind: TermKind,
    pub i: usize,
    pub j: usize,
    pub coeff: Complex64,
}

impl StructureTerm {
    pub fn new(k: usize, kind: TermKind, i: usize, j: usize, coeff: Complex64) -> Self {
        Self { k, kind, i, j, coeff }
    }
}

/// The two bigraded pieces of `d a`.
#[derive(Clone, Debug)]
pub struct Differential {
    pub del: InvariantForm,
    pub delbar: InvariantForm,
}

impl Differential {
    pub fn norm(&self) -> f64 {
        (self.del.coeff_norm().powi(2) + self.delbar.coeff_norm().powi(2)).sqrt()
    }
}

const STRUCTURE_TOL: f64 = 1e-12;

/// Lie algebra with invariant complex structure, given by `d` on the coframe.
#[derive(Clone, Debug)]
pub struct LieAlgebraModel {
    name: String,
    n: usize,
    terms: Vec<StructureTerm>,
    // Images of the 2n generators under d, split by bidegree shift.
    del_gen: Vec<Vec<(u32, Complex64)>>,
    delbar_gen: Vec<Vec<(u32, Complex64)>>,
    // del / delbar matrices indexed by p * (n + 1) + q.
    del_mats: Vec<CMatrix>,
    delbar_mats: Vec<CMatrix>,
}

impl LieAlgebraModel {
    /// Builds the model and checks `d^2 = 0` and unimodularity.
    pub fn new(name: impl Into<String>, n: usize, terms: Vec<StructureTerm>) -> Result<Self> {
        if !(1..=6).contains(&n) {
            return Err(Error::InvalidArgument(format!(
                "complex dimension must be within 1..=6, got {n}"
            )));
        }
        let mut del_gen = vec![Vec::new(); 2 * n];
        let mut delbar_gen = vec![Vec::new(); 2 * n];
        for t in &terms {
            if t.k == 0 || t.k > n || t.i == 0 || t.i > n || t.j == 0 || t.j > n {
                return Err(Error::InvalidIndex(format!(
                    "structure term {t:?} has an index outside 1..={n}"
                )));
            }
            let (k, i, j) = (t.k - 1, t.i - 1, t.j - 1);
            match t.kind {
                TermKind::TwoZero => {
                    if i >= j {
                        return Err(Error::InvalidIndex(format!(
                            "(2,0) term of d alpha^{} needs i < j, got ({}, {})",
                            t.k, t.i, t.j
                        )));
                    }
                    let mask = (1 << i) | (1 << j);
                    del_gen[k].push((mask, t.coeff));
                    // conj(alpha^i ∧ alpha^j) = alphabar^i ∧ alphabar^j
                    delbar_gen[n + k].push((mask << n, t.coeff.conj()));
                }
                TermKind::OneOne => {
                    delbar_gen[k].push(((1 << i) | (1 << (n + j)), t.coeff));
                    // conj(alpha^i ∧ alphabar^j) = -alpha^j ∧ alphabar^i
                    del_gen[n + k].push(((1 << j) | (1 << (n + i)), -t.coeff.conj()));
                }
            }
        }
        let mut model = Self {
            name: name.into(),
            n,
            terms,
            del_gen,
            delbar_gen,
            del_mats: Vec::new(),
            delbar_mats: Vec::new(),
        };
        model.check_jacobi()?;
        model.check_unimodular()?;
        model.assemble();
        Ok(model)
    }

    pub fn abelian(n: usize) -> Self {
        Self::new(format!("torus{n}"), n, Vec::new()).expect("abelian model is valid")
    }

    /// Iwasawa manifold: `d alpha^1 = d alpha^2 = 0`, `d alpha^3 = alpha^1 ∧ alpha^2`.
    pub fn iwasawa() -> Self {
        Self::new(
            "iwasawa",
            3,
            vec![StructureTerm::new(3, TermKind::TwoZero, 1, 2, Complex64::new(1.0, 0.0))],
        )
        .expect("iwasawa structure equations are valid")
    }

    /// Unimodular solvable surface algebra with non-flat Chern–Ricci form:
    /// `d alpha^1 = -2b alpha^1 ∧ alphabar^1`,
    /// `d alpha^2 = -(b - ic) alpha^1 ∧ alpha^2 + (b - ic) alpha^2 ∧ alphabar^1`.
    pub fn solvable(b: f64, c: f64) -> Self {
        let w = Complex64::new(b, -c);
        Self::new(
            "solvable",
            2,
            vec![
                StructureTerm::new(1, TermKind::OneOne, 1, 1, Complex64::new(-2.0 * b, 0.0)),
                StructureTerm::new(2, TermKind::TwoZero, 1, 2, -w),
                StructureTerm::new(2, TermKind::OneOne, 2, 1, w),
            ],
        )
        .expect("solvable structure equations are valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[StructureTerm] {
        &self.terms
    }

    pub fn is_abelian(&self) -> bool {
        self.del_gen.iter().chain(&self.delbar_gen).all(|v| v.iter().all(|(_, c)| c.norm() == 0.0))
    }

    fn generator_d(&self, g: usize) -> Vec<(u32, Complex64)> {
        self.del_gen[g].iter().chain(&self.delbar_gen[g]).cloned().collect()
    }

    fn apply(images: &[Vec<(u32, Complex64)>], form: &SparseForm) -> SparseForm {
        let mut out = SparseForm::new();
        for (&mask, &c) in form {
            for g in bits(mask) {
                let before = mask & ((1u32 << g) - 1);
                let after = mask & !((1u32 << (g + 1)) - 1);
                let lead = if before.count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
                for &(img, ci) in &images[g] {
                    let Some(s1) = wedge_sign(before, img) else { continue };
                    let Some(s2) = wedge_sign(before | img, after) else { continue };
                    *out.entry(before | img | after).or_insert(ZERO) += c * ci * (lead * s1 * s2);
                }
            }
        }
        out.retain(|_, c| *c != ZERO);
        out
    }

    fn check_jacobi(&self) -> Result<()> {
        let n = self.n;
        let full: Vec<Vec<(u32, Complex64)>> = (0..2 * n).map(|g| self.generator_d(g)).collect();
        for g in 0..2 * n {
            let dg: SparseForm = full[g].iter().fold(SparseForm::new(), |mut acc, &(m, c)| {
                *acc.entry(m).or_insert(ZERO) += c;
                acc
            });
            let ddg = Self::apply(&full, &dg);
            if let Some((&mask, &c)) = ddg
                .iter()
                .filter(|(_, c)| c.norm() > STRUCTURE_TOL)
                .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            {
                return Err(Error::Jacobi {
                    entry: format!("d(d {}) on {}", generator_name(n, g), monomial_name(n, mask)),
                    value: c.norm(),
                });
            }
        }
        Ok(())
    }

    /// `[e_a, e_b] = sum_c C^c_{ab} e_c` on the frame dual to the generators,
    /// using `d theta(X, Y) = -theta([X, Y])` for invariant forms.
    pub fn bracket(&self, a: usize, b: usize) -> Vec<Complex64> {
        let n2 = 2 * self.n;
        let mut out = vec![ZERO; n2];
        if a == b {
            return out;
        }
        let (lo, hi, sign) = if a < b { (a, b, -1.0) } else { (b, a, 1.0) };
        let mask = (1u32 << lo) | (1u32 << hi);
        for (c, slot) in out.iter_mut().enumerate() {
            for &(m, coeff) in self.del_gen[c].iter().chain(&self.delbar_gen[c]) {
                if m == mask {
                    *slot += coeff * sign;
                }
            }
        }
        out
    }

    fn check_unimodular(&self) -> Result<()> {
        let n2 = 2 * self.n;
        for a in 0..n2 {
            let trace: Complex64 = (0..n2).map(|c| self.bracket(a, c)[c]).sum();
            if trace.norm() > STRUCTURE_TOL {
                return Err(Error::NotUnimodular {
                    generator: generator_name(self.n, a),
                    trace,
                });
            }
        }
        Ok(())
    }

    /// Lower central series test: `g^{k+1} = [g, g^k]` reaches zero.
    pub fn is_nilpotent(&self) -> bool {
        let n2 = 2 * self.n;
        let mut span = CMatrix::identity(n2, n2);
        for _ in 0..=n2 {
            if span.ncols() == 0 {
                return true;
            }
            let mut cols = Vec::new();
            for a in 0..n2 {
                for v in 0..span.ncols() {
                    let mut acc = vec![ZERO; n2];
                    for b in 0..n2 {
                        let w = span[(b, v)];
                        if w == ZERO {
                            continue;
                        }
                        for (c, x) in self.bracket(a, b).into_iter().enumerate() {
                            acc[c] += x * w;
                        }
                    }
                    cols.push(acc);
                }
            }
            let m = CMatrix::from_fn(n2, cols.len(), |r, c| cols[c][r]);
            let next = linalg::column_span(&m, 1e-12);
            if next.ncols() == span.ncols() {
                return false;
            }
            span = next;
        }
        span.ncols() == 0
    }

    fn assemble(&mut self) {
        let n = self.n;
        for p in 0..=n {
            for q in 0..=n {
                self.del_mats.push(self.operator_matrix(&self.del_gen, p, q, p + 1, q));
                self.delbar_mats.push(self.operator_matrix(&self.delbar_gen, p, q, p, q + 1));
            }
        }
    }

    fn operator_matrix(
        &self,
        images: &[Vec<(u32, Complex64)>],
        p: usize,
        q: usize,
        tp: usize,
        tq: usize,
    ) -> CMatrix {
        let n = self.n;
        let src = InvariantForm::masks(n, p, q);
        let mut m = CMatrix::zeros(form_dim(n, tp, tq), src.len());
        if m.nrows() == 0 {
            return m;
        }
        let probe = InvariantForm::zero(n, tp, tq);
        for (col, &mask) in src.iter().enumerate() {
            let image = Self::apply(images, &SparseForm::from([(mask, Complex64::new(1.0, 0.0))]));
            for (mask2, c) in image {
                let row = probe.index_of(hol_part(n, mask2), anti_part(n, mask2));
                m[(row, col)] += c;
            }
        }
        m
    }

    fn slot(&self, p: usize, q: usize) -> usize {
        assert!(p <= self.n && q <= self.n, "bidegree ({p},{q}) out of range");
        p * (self.n + 1) + q
    }

    /// Matrix of `del : (p,q) -> (p+1,q)` in the canonical bases.
    pub fn del_matrix(&self, p: usize, q: usize) -> &CMatrix {
        &self.del_mats[self.slot(p, q)]
    }

    /// Matrix of `delbar : (p,q) -> (p,q+1)`.
    pub fn delbar_matrix(&self, p: usize, q: usize) -> &CMatrix {
        &self.delbar_mats[self.slot(p, q)]
    }

    fn check_form(&self, a: &InvariantForm) {
        assert_eq!(a.n(), self.n, "form of dimension {} on a dimension {} model", a.n(), self.n);
    }

    pub fn del(&self, a: &InvariantForm) -> InvariantForm {
        self.check_form(a);
        let (p, q) = a.bidegree();
        if p > self.n || q > self.n {
            return InvariantForm::zero(self.n, p + 1, q);
        }
        a.map_coeffs(self.del_matrix(p, q), p + 1, q)
    }

    pub fn delbar(&self, a: &InvariantForm) -> InvariantForm {
        self.check_form(a);
        let (p, q) = a.bidegree();
        if p > self.n || q > self.n {
            return InvariantForm::zero(self.n, p, q + 1);
        }
        a.map_coeffs(self.delbar_matrix(p, q), p, q + 1)
    }

    pub fn d(&self, a: &InvariantForm) -> Differential {
        Differential {
            del: self.del(a),
            delbar: self.delbar(a),
        }
    }

    pub fn ddbar(&self, a: &InvariantForm) -> InvariantForm {
        self.del(&self.delbar(a))
    }

    /// Re-expresses the model in the coframe `alpha' = A alpha`.
    pub fn change_coframe(&self, a: &CMatrix) -> Result<Self> {
        let n = self.n;
        if a.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!("coframe change must be {n}x{n}")));
        }
        let a_inv = linalg::inverse(a)?;
        // Coefficients in the new basis: alpha = A^{-1} alpha'.
        let to_new_2 = form_basis_change(n, 2, 0, &a_inv);
        let to_new_11 = form_basis_change(n, 1, 1, &a_inv);
        let mut terms = Vec::new();
        let pairs20 = subsets(n, 2);
        for k in 0..n {
            // d alpha'^k = sum_j A_{kj} d alpha^j
            let mut d20 = InvariantForm::zero(n, 2, 0);
            let mut d11 = InvariantForm::zero(n, 1, 1);
            for j in 0..n {
                let gen = InvariantForm::alpha(n, j + 1)?;
                let dj = self.d(&gen);
                d20 = &d20 + &dj.del.scale(a[(k, j)]);
                d11 = &d11 + &dj.delbar.scale(a[(k, j)]);
            }
            let d20 = d20.map_coeffs(&to_new_2, 2, 0);
            let d11 = d11.map_coeffs(&to_new_11, 1, 1);
            for (idx, &mask) in pairs20.iter().enumerate() {
                let c = d20.coeffs()[idx];
                if c.norm() > 0.0 {
                    let ij: Vec<usize> = bits(mask).collect();
                    terms.push(StructureTerm::new(k + 1, TermKind::TwoZero, ij[0] + 1, ij[1] + 1, c));
                }
            }
            for i in 0..n {
                for j in 0..n {
                    let c = d11.coeffs()[i * n + j];
                    if c.norm() > 0.0 {
                        terms.push(StructureTerm::new(k + 1, TermKind::OneOne, i + 1, j + 1, c));
                    }
                }
            }
        }
        Self::new(format!("{}'", self.name), n, terms)
    }
}

/// Coefficient map for `(p,q)`-forms under the substitution `alpha = M beta`:
/// coefficients in the `alpha` basis go to coefficients in the `beta` basis.
pub fn form_basis_change(n: usize, p: usize, q: usize, m: &CMatrix) -> CMatrix {
    assert_eq!(m.shape(), (n, n));
    let hol = linalg::compound(m, p);
    let anti = linalg::compound(&m.map(|c| c.conj()), q);
    linalg::kron(&hol, &anti).transpose()
}
