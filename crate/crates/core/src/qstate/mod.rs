//! Hermitian operators, density operators and pure states on finite-dimensional
//! (possibly multipartite) Hilbert spaces.
//!
//! Composite spaces are always ordered as `X ⊗ A ⊗ B ⊗ Y`: Alice's input,
//! Alice's share, Bob's share, Bob's input. Kronecker products keep the left
//! factor varying slowest.

mod generators;
mod ops;
pub(crate) mod serde_impl;

pub use generators::{
    bell_basis, input_set_s, isotropic_state, max_entangled, qutrit_bell_states,
    tomographically_complete_set,
};
pub use ops::{embed, partial_trace, partial_transpose, permute_subsystems, tensor};
pub(crate) use ops::embed_matrix;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Elementwise tolerance for `A == A†`.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Smallest eigenvalue still accepted as positive semidefinite.
pub const PSD_TOL: f64 = 1e-10;
/// Allowed deviation of a density operator's trace from one.
pub const TRACE_TOL: f64 = 1e-10;
/// Allowed deviation of a pure state's squared norm from one.
pub const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (max |A - A^†| = {0:.3e})")]
    NotHermitian(f64),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("operator is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("density operator trace {0} is not 1")]
    NotNormalized(f64),
    #[error("state vector squared norm {0} is not 1")]
    NotUnitNorm(f64),
    #[error("dimension must be at least {min}, got {got}")]
    DimensionTooSmall { min: usize, got: usize },
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("input state set is empty")]
    EmptySet,
    #[error("invalid subsystem specification: {0}")]
    Subsystems(String),
}

/// A complex square matrix equal to its conjugate transpose.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    m: CMatrix,
}

impl HermitianOperator {
    /// Validates Hermiticity to [`HERMITIAN_TOL`] and stores the exact Hermitian part.
    pub fn new(m: CMatrix) -> Result<Self, StateError> {
        if m.nrows() != m.ncols() {
            return Err(StateError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(StateError::DimensionTooSmall { min: 1, got: 0 });
        }
        let dev = hermitian_deviation(&m);
        if dev > HERMITIAN_TOL {
            return Err(StateError::NotHermitian(dev));
        }
        Ok(Self::from_hermitian_part(m))
    }

    /// Keeps `(M + M^†) / 2` without validation.
    pub fn from_hermitian_part(m: CMatrix) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "Hermitian part of a non-square matrix");
        let adj = m.adjoint();
        Self {
            m: (m + adj).scale(0.5),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: CMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            m: CMatrix::zeros(dim, dim),
        }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d = diag.len();
        let mut m = CMatrix::zeros(d, d);
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        Self { m }
    }

    /// `|v⟩⟨v|` (not normalized).
    pub fn projector(v: &CVector) -> Self {
        Self::from_hermitian_part(v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn trace(&self) -> f64 {
        self.m.diagonal().iter().map(|z| z.re).sum()
    }

    /// Real inner product `Re Tr(A B)`.
    pub fn inner(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim());
        // Tr(AB) = Σ_ij A_ij B_ji = Σ_ij A_ij conj(B_ij) for Hermitian B
        self.m
            .iter()
            .zip(other.m.iter())
            .map(|(a, b)| (a * b.conj()).re)
            .sum()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.m.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            m: self.m.scale(c),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            m: &self.m + &other.m,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            m: &self.m - &other.m,
        }
    }

    /// `U A U^†`.
    pub fn conjugate_by(&self, u: &CMatrix) -> Self {
        Self::from_hermitian_part(u * &self.m * u.adjoint())
    }

    /// Principal square root of a PSD operator; negative eigenvalues are clipped.
    pub fn sqrt_psd(&self) -> Self {
        self.spectral_map(|l| l.max(0.0).sqrt())
    }

    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> Self {
        let eig = SymmetricEigen::new(self.m.clone());
        let d = self.dim();
        let mut diag = CMatrix::zeros(d, d);
        for i in 0..d {
            diag[(i, i)] = C64::new(f(eig.eigenvalues[i]), 0.0);
        }
        let v = &eig.eigenvectors;
        Self::from_hermitian_part(v * diag * v.adjoint())
    }

    /// Largest elementwise absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (&self.m - &other.m)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// A unit-trace positive semidefinite operator together with its tensor
/// factorization.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    op: HermitianOperator,
    subsystem_dims: Vec<usize>,
}

impl DensityOperator {
    pub fn new(op: HermitianOperator, subsystem_dims: Vec<usize>) -> Result<Self, StateError> {
        let prod: usize = subsystem_dims.iter().product();
        if subsystem_dims.is_empty() || subsystem_dims.contains(&0) || prod != op.dim() {
            return Err(StateError::DimensionMismatch {
                expected: op.dim(),
                actual: prod,
            });
        }
        let tr = op.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(StateError::NotNormalized(tr));
        }
        let min = op.min_eigenvalue();
        if min < -PSD_TOL {
            return Err(StateError::NotPsd(min));
        }
        Ok(Self { op, subsystem_dims })
    }

    /// Single-system density operator.
    pub fn single(op: HermitianOperator) -> Result<Self, StateError> {
        let d = op.dim();
        Self::new(op, vec![d])
    }

    pub fn from_pure(state: &PureState, subsystem_dims: Vec<usize>) -> Result<Self, StateError> {
        Self::new(HermitianOperator::projector(state.amplitudes()), subsystem_dims)
    }

    pub fn maximally_mixed(subsystem_dims: Vec<usize>) -> Self {
        let d: usize = subsystem_dims.iter().product();
        Self {
            op: HermitianOperator::identity(d).scaled(1.0 / d as f64),
            subsystem_dims,
        }
    }

    pub fn operator(&self) -> &HermitianOperator {
        &self.op
    }

    pub fn matrix(&self) -> &CMatrix {
        self.op.matrix()
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn subsystem_dims(&self) -> &[usize] {
        &self.subsystem_dims
    }

    /// Product state `self ⊗ other`.
    pub fn tensor(&self, other: &Self) -> Self {
        let mut dims = self.subsystem_dims.clone();
        dims.extend_from_slice(&other.subsystem_dims);
        Self {
            op: tensor(&self.op, &other.op),
            subsystem_dims: dims,
        }
    }

    /// Convex combination `w·self + (1−w)·other`.
    pub fn mix(&self, other: &Self, w: f64) -> Result<Self, StateError> {
        if !(0.0..=1.0).contains(&w) {
            return Err(StateError::ProbabilityOutOfRange(w));
        }
        if self.subsystem_dims != other.subsystem_dims {
            return Err(StateError::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(Self {
            op: self.op.scaled(w).add(&other.op.scaled(1.0 - w)),
            subsystem_dims: self.subsystem_dims.clone(),
        })
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn fidelity_with_pure(&self, psi: &PureState) -> f64 {
        let v = psi.amplitudes();
        (v.adjoint() * self.matrix() * v)[(0, 0)].re
    }
}

/// A normalized state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amps: CVector,
}

impl PureState {
    pub fn new(amps: CVector) -> Result<Self, StateError> {
        if amps.is_empty() {
            return Err(StateError::DimensionTooSmall { min: 1, got: 0 });
        }
        let n2 = amps.norm_squared();
        if (n2 - 1.0).abs() > NORM_TOL {
            return Err(StateError::NotUnitNorm(n2));
        }
        Ok(Self { amps })
    }

    /// Normalizes the given vector first.
    pub fn normalized(amps: CVector) -> Result<Self, StateError> {
        let n = amps.norm();
        if n == 0.0 {
            return Err(StateError::NotUnitNorm(0.0));
        }
        Self::new(amps.unscale(n))
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = CVector::zeros(dim);
        v[index] = C64::new(1.0, 0.0);
        Self { amps: v }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amps
    }

    pub fn inner(&self, other: &Self) -> C64 {
        self.amps.dotc(&other.amps)
    }

    pub fn projector(&self) -> HermitianOperator {
        HermitianOperator::projector(&self.amps)
    }

    pub fn density(&self) -> DensityOperator {
        DensityOperator {
            op: self.projector(),
            subsystem_dims: vec![self.dim()],
        }
    }
}

/// Trusted input states handed to one party.
#[derive(Clone, Debug, PartialEq)]
pub struct InputStateSet {
    states: Vec<DensityOperator>,
    label: String,
    complete: bool,
    span_rank: usize,
}

impl InputStateSet {
    pub fn new(states: Vec<DensityOperator>, label: impl Into<String>) -> Result<Self, StateError> {
        let first = states.first().ok_or(StateError::EmptySet)?;
        let d = first.dim();
        if let Some(bad) = states.iter().find(|s| s.dim() != d) {
            return Err(StateError::DimensionMismatch {
                expected: d,
                actual: bad.dim(),
            });
        }
        let span_rank = operator_span_rank(states.iter().map(|s| s.operator()));
        Ok(Self {
            complete: span_rank == d * d,
            states,
            label: label.into(),
            span_rank,
        })
    }

    pub fn from_pure(states: &[PureState], label: impl Into<String>) -> Result<Self, StateError> {
        Self::new(states.iter().map(PureState::density).collect(), label)
    }

    pub fn states(&self) -> &[DensityOperator] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Dimension of the real span of the states inside the space of Hermitian operators.
    pub fn span_rank(&self) -> usize {
        self.span_rank
    }

    pub fn is_tomographically_complete(&self) -> bool {
        self.complete
    }
}

/// Real coordinates of a Hermitian operator in an orthonormal basis of the
/// Hermitian operator space (diagonal, then `√2·Re`, `√2·Im` of the upper triangle).
pub fn hermitian_coordinates(op: &HermitianOperator) -> Vec<f64> {
    let m = op.matrix();
    let d = op.dim();
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        out.push(m[(i, i)].re);
    }
    let s = std::f64::consts::SQRT_2;
    for i in 0..d {
        for j in i + 1..d {
            out.push(s * m[(i, j)].re);
            out.push(s * m[(i, j)].im);
        }
    }
    out
}

/// Rank of the real linear span of a family of Hermitian operators.
pub fn operator_span_rank<'a>(ops: impl IntoIterator<Item = &'a HermitianOperator>) -> usize {
    let rows: Vec<Vec<f64>> = ops.into_iter().map(hermitian_coordinates).collect();
    if rows.is_empty() {
        return 0;
    }
    let n = rows[0].len();
    let m = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    let sv = m.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let tol = 1e-9 * max.max(1.0);
    sv.iter().filter(|&&s| s > tol).count()
}
