//! Balanced Hermitian metrics and their parabolic flow.
//!
//! The library works on two kinds of models:
//!
//! * invariant forms on a Lie algebra with an integrable complex structure
//!   ([`algebra`], [`hermitian`], [`chern`], [`laplacians`], [`flow`]), where
//!   every operator is a finite matrix;
//! * Kähler potentials on the flat complex 2-torus ([`torus`]), discretised
//!   pseudo-spectrally.
//!
//! Form conventions: a Hermitian matrix `g` corresponds to the real (1,1)-form
//! `omega = i sum g_{jk} alpha^j ∧ alphabar^k`, and a real (n-1,n-1)-form `phi`
//! to the Hermitian matrix `Phi_{ab} = [phi ∧ i alpha^b ∧ alphabar^a] / vol0`
//! (see [`hermitian::phi_matrix`]). With these choices the forward map
//! `g -> omega^{n-1}/(n-1)!` reads `Phi = adj(g)`.

pub mod algebra;
pub mod chern;
pub mod error;
pub mod flow;
pub mod hermitian;
pub mod laplacians;
pub mod linalg;
pub mod model_io;
pub mod sampling;
pub mod torus;

pub use algebra::{Generator, InvariantForm, LieAlgebraModel, StructureTerm, TermKind};
pub use error::{Error, Result};
pub use hermitian::{BalancedStructure, InvariantMetric};
pub use num_complex::Complex64;
