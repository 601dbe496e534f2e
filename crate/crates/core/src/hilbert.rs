//! Operator algebra on the truncated two-dot, two-mode Hilbert space.
//!
//! The space is ordered `QD_A ⊗ QD_B ⊗ mode₁ ⊗ mode₂` with the first factor
//! most significant. Each dot keeps the three levels `|f⟩, |g⟩, |e⟩` (in that
//! order) and each bosonic mode is truncated at `n_max` photons. Everything in
//! this module is dimensionless; physical units live in [`crate::model`].

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Levels kept per quantum dot.
pub const QD_LEVELS: usize = 3;

/// Default tolerance for Hermiticity and trace checks.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

/// Dense square complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexOperator {
    m: DMatrix<C64>,
}

impl ComplexOperator {
    pub fn zeros(dim: usize) -> Self {
        Self {
            m: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: DMatrix::identity(dim, dim),
        }
    }

    pub fn from_matrix(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::invalid("operator dimension must be positive"));
        }
        Ok(Self { m })
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self {
            m: DMatrix::from_fn(dim, dim, f),
        }
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        Self {
            m: DMatrix::from_diagonal(&DVector::from_row_slice(diag)),
        }
    }

    /// Outer product `|a⟩⟨b|`.
    pub fn outer(a: &StateVector, b: &StateVector) -> Result<Self> {
        check_dim(a.dim(), b.dim())?;
        Ok(Self {
            m: &a.v * b.v.adjoint(),
        })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.m[(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, value: C64) {
        self.m[(row, col)] = value;
    }

    pub fn dagger(&self) -> Self {
        Self { m: self.m.adjoint() }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { m: &self.m * s }
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
    }

    /// `max |X - X†|` over entries.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.m[(i, j)] - self.m[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// `max |X†X - 1|` over entries.
    pub fn unitarity_error(&self) -> f64 {
        let prod = self.m.adjoint() * &self.m;
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { ONE } else { ZERO };
                worst = worst.max((prod[(i, j)] - target).norm());
            }
        }
        worst
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_error() <= tol
    }

    /// Largest modulus among off-diagonal entries.
    pub fn off_diagonal_max(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    worst = worst.max(self.m[(i, j)].norm());
                }
            }
        }
        worst
    }

    pub fn diagonal(&self) -> Vec<C64> {
        self.m.diagonal().iter().copied().collect()
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self {
            m: &self.m * &other.m - &other.m * &self.m,
        })
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self {
            m: self.m.kronecker(&other.m),
        }
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        check_dim(self.dim(), psi.dim())?;
        Ok(StateVector { v: &self.m * &psi.v })
    }

    /// `⟨ψ|X|ψ⟩`.
    pub fn expectation(&self, psi: &StateVector) -> Result<C64> {
        let x = self.apply(psi)?;
        Ok(psi.v.dotc(&x.v))
    }

    /// Eigenvalues of a Hermitian operator, ascending. The input is
    /// symmetrised first, so small Hermiticity defects are tolerated.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let sym = (&self.m + self.m.adjoint()) * C64::new(0.5, 0.0);
        let eig = nalgebra::SymmetricEigen::new(sym);
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| a.total_cmp(b));
        vals
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

impl Add for &ComplexOperator {
    type Output = ComplexOperator;
    fn add(self, rhs: &ComplexOperator) -> ComplexOperator {
        assert_eq!(self.dim(), rhs.dim(), "operator dimension mismatch");
        ComplexOperator { m: &self.m + &rhs.m }
    }
}

impl Sub for &ComplexOperator {
    type Output = ComplexOperator;
    fn sub(self, rhs: &ComplexOperator) -> ComplexOperator {
        assert_eq!(self.dim(), rhs.dim(), "operator dimension mismatch");
        ComplexOperator { m: &self.m - &rhs.m }
    }
}

impl Mul for &ComplexOperator {
    type Output = ComplexOperator;
    fn mul(self, rhs: &ComplexOperator) -> ComplexOperator {
        assert_eq!(self.dim(), rhs.dim(), "operator dimension mismatch");
        ComplexOperator { m: &self.m * &rhs.m }
    }
}

impl Mul<C64> for &ComplexOperator {
    type Output = ComplexOperator;
    fn mul(self, rhs: C64) -> ComplexOperator {
        self.scale(rhs)
    }
}

impl Neg for &ComplexOperator {
    type Output = ComplexOperator;
    fn neg(self) -> ComplexOperator {
        ComplexOperator { m: -&self.m }
    }
}

/// Quantum-dot level, in basis order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QdLevel {
    F = 0,
    G = 1,
    E = 2,
}

impl QdLevel {
    pub const ALL: [QdLevel; 3] = [QdLevel::F, QdLevel::G, QdLevel::E];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Tensor factor of the full space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Site {
    QdA,
    QdB,
    Mode1,
    Mode2,
}

impl Site {
    pub const ALL: [Site; 4] = [Site::QdA, Site::QdB, Site::Mode1, Site::Mode2];
}

/// Shape of the truncated space `QD_A ⊗ QD_B ⊗ mode₁ ⊗ mode₂`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpaceLayout {
    n_max: usize,
}

impl SpaceLayout {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::invalid("Fock cutoff n_max must be at least 1"));
        }
        Ok(Self { n_max })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn fock_dim(&self) -> usize {
        self.n_max + 1
    }

    pub fn cavity_dim(&self) -> usize {
        self.fock_dim() * self.fock_dim()
    }

    pub fn site_dim(&self, site: Site) -> usize {
        match site {
            Site::QdA | Site::QdB => QD_LEVELS,
            Site::Mode1 | Site::Mode2 => self.fock_dim(),
        }
    }

    /// `9·(n_max+1)²`.
    pub fn dim(&self) -> usize {
        QD_LEVELS * QD_LEVELS * self.cavity_dim()
    }

    /// Flat index of `|a, b; n₁, n₂⟩`.
    pub fn index(&self, a: QdLevel, b: QdLevel, n1: usize, n2: usize) -> usize {
        debug_assert!(n1 <= self.n_max && n2 <= self.n_max);
        ((a.index() * QD_LEVELS + b.index()) * self.fock_dim() + n1) * self.fock_dim() + n2
    }

    /// Inverse of [`SpaceLayout::index`].
    pub fn decompose(&self, index: usize) -> (QdLevel, QdLevel, usize, usize) {
        let f = self.fock_dim();
        let n2 = index % f;
        let n1 = (index / f) % f;
        let qd = index / (f * f);
        (QdLevel::ALL[qd / QD_LEVELS], QdLevel::ALL[qd % QD_LEVELS], n1, n2)
    }

    pub fn basis_state(&self, a: QdLevel, b: QdLevel, n1: usize, n2: usize) -> StateVector {
        let mut v = DVector::zeros(self.dim());
        v[self.index(a, b, n1, n2)] = ONE;
        StateVector { v }
    }

    /// `|ψ_A⟩ ⊗ |ψ_B⟩ ⊗ |χ₁⟩ ⊗ |χ₂⟩`.
    pub fn product_state(
        &self,
        qd_a: &StateVector,
        qd_b: &StateVector,
        mode1: &StateVector,
        mode2: &StateVector,
    ) -> Result<StateVector> {
        check_dim(QD_LEVELS, qd_a.dim())?;
        check_dim(QD_LEVELS, qd_b.dim())?;
        check_dim(self.fock_dim(), mode1.dim())?;
        check_dim(self.fock_dim(), mode2.dim())?;
        let v = qd_a
            .v
            .kronecker(&qd_b.v)
            .kronecker(&mode1.v)
            .kronecker(&mode2.v);
        Ok(StateVector { v })
    }
}

/// Lowering operator truncated at `n_max`: entry `(k-1, k) = √k`.
pub fn fock_annihilation(n_max: usize) -> Result<ComplexOperator> {
    if n_max < 1 {
        return Err(Error::invalid("fock_annihilation requires n_max >= 1"));
    }
    let mut a = ComplexOperator::zeros(n_max + 1);
    for k in 1..=n_max {
        a.set(k - 1, k, C64::new((k as f64).sqrt(), 0.0));
    }
    Ok(a)
}

pub fn fock_creation(n_max: usize) -> Result<ComplexOperator> {
    Ok(fock_annihilation(n_max)?.dagger())
}

pub fn number_operator(n_max: usize) -> Result<ComplexOperator> {
    let diag: Vec<C64> = (0..=n_max).map(|k| C64::new(k as f64, 0.0)).collect();
    if n_max < 1 {
        return Err(Error::invalid("number_operator requires n_max >= 1"));
    }
    Ok(ComplexOperator::from_diagonal(&diag))
}

/// `σ⁺ = |e⟩⟨g|` on a single dot.
pub fn qd_sigma_plus() -> ComplexOperator {
    let mut s = ComplexOperator::zeros(QD_LEVELS);
    s.set(QdLevel::E.index(), QdLevel::G.index(), ONE);
    s
}

pub fn qd_sigma_minus() -> ComplexOperator {
    qd_sigma_plus().dagger()
}

/// `|l⟩⟨l|` on a single dot.
pub fn qd_projector(level: QdLevel) -> ComplexOperator {
    let mut p = ComplexOperator::zeros(QD_LEVELS);
    p.set(level.index(), level.index(), ONE);
    p
}

pub fn qd_ket(level: QdLevel) -> StateVector {
    let mut v = DVector::zeros(QD_LEVELS);
    v[level.index()] = ONE;
    StateVector { v }
}

/// Places `op` on `site`, identities elsewhere.
pub fn embed(op: &ComplexOperator, site: Site, layout: &SpaceLayout) -> Result<ComplexOperator> {
    check_dim(layout.site_dim(site), op.dim())?;
    let mut out: Option<ComplexOperator> = None;
    for s in Site::ALL {
        let factor = if s == site {
            op.clone()
        } else {
            ComplexOperator::identity(layout.site_dim(s))
        };
        out = Some(match out {
            None => factor,
            Some(acc) => acc.kron(&factor),
        });
    }
    Ok(out.expect("layout has four sites"))
}

/// Probability mass of a coherent state retained below the cutoff,
/// `Σ_{k≤n_max} e^{-|α|²}|α|^{2k}/k!`.
pub fn truncated_poisson_mass(alpha: C64, n_max: usize) -> f64 {
    let mean = alpha.norm_sqr();
    let mut term = (-mean).exp();
    let mut total = term;
    for k in 1..=n_max {
        term *= mean / k as f64;
        total += term;
    }
    total
}

/// Truncated coherent state `D(α)|0⟩`, renormalised on the kept levels.
pub fn coherent_state(alpha: C64, n_max: usize) -> StateVector {
    if alpha.norm_sqr() > n_max as f64 / 4.0 {
        log::warn!(
            "coherent state |alpha|^2 = {:.3} is large for n_max = {n_max}; truncation error likely",
            alpha.norm_sqr()
        );
    }
    let mut v = DVector::zeros(n_max + 1);
    let mut amp = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    v[0] = amp;
    for k in 1..=n_max {
        amp = amp * alpha / (k as f64).sqrt();
        v[k] = amp;
    }
    let mut psi = StateVector { v };
    psi.normalize();
    psi
}

/// Pure state with norm bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    v: DVector<C64>,
}

impl StateVector {
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::invalid("state vector must be non-empty"));
        }
        Ok(Self {
            v: DVector::from_vec(amps),
        })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            v: DVector::zeros(dim),
        }
    }

    pub fn vacuum(n_max: usize) -> Self {
        let mut v = DVector::zeros(n_max + 1);
        v[0] = ONE;
        Self { v }
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        self.v.as_slice()
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        self.v.as_mut_slice()
    }

    pub fn get(&self, i: usize) -> C64 {
        self.v[i]
    }

    pub fn norm(&self) -> f64 {
        self.v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Rescales to unit norm and returns the norm before rescaling.
    pub fn normalize(&mut self) -> f64 {
        let n = self.norm();
        if n > 0.0 {
            self.v /= C64::new(n, 0.0);
        }
        n
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        check_dim(self.dim(), other.dim())?;
        Ok(self.v.dotc(&other.v))
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            op: ComplexOperator {
                m: &self.v * self.v.adjoint(),
            },
            trace_drift: 0.0,
        }
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self {
            v: self.v.kronecker(&other.v),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { v: &self.v * s }
    }
}

impl Add for &StateVector {
    type Output = StateVector;
    fn add(self, rhs: &StateVector) -> StateVector {
        StateVector { v: &self.v + &rhs.v }
    }
}

/// Density operator. `trace_drift` records `|Tr ρ - 1|` as last measured by
/// whoever produced the matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    op: ComplexOperator,
    trace_drift: f64,
}

/// Physicality measurements of a density matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Physicality {
    pub trace_drift: f64,
    pub hermiticity_drift: f64,
    pub min_eigenvalue: f64,
}

impl DensityMatrix {
    pub fn from_operator(op: ComplexOperator) -> Self {
        let trace_drift = (op.trace() - ONE).norm();
        Self { op, trace_drift }
    }

    /// Builds and validates: Hermitian within `tol`, unit trace within
    /// `tol`, no eigenvalue below `-tol`.
    pub fn new_checked(op: ComplexOperator, tol: f64) -> Result<Self> {
        let rho = Self::from_operator(op);
        let p = rho.physicality();
        if p.hermiticity_drift > tol || p.trace_drift > tol || p.min_eigenvalue < -tol {
            return Err(Error::invalid(format!(
                "not a density matrix: {p:?} (tolerance {tol:e})"
            )));
        }
        Ok(rho)
    }

    pub fn operator(&self) -> &ComplexOperator {
        &self.op
    }

    pub fn into_operator(self) -> ComplexOperator {
        self.op
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.op.get(row, col)
    }

    pub fn trace_drift(&self) -> f64 {
        self.trace_drift
    }

    pub fn physicality(&self) -> Physicality {
        let eigs = self.op.hermitian_eigenvalues();
        Physicality {
            trace_drift: (self.op.trace() - ONE).norm(),
            hermiticity_drift: self.op.hermiticity_error(),
            min_eigenvalue: eigs.first().copied().unwrap_or(0.0),
        }
    }

    pub fn purity(&self) -> f64 {
        (&self.op * &self.op).trace().re
    }

    /// Reduced state of the two dots (9×9), tracing out both modes.
    pub fn reduced_qd_state(&self, layout: &SpaceLayout) -> Result<ComplexOperator> {
        check_dim(layout.dim(), self.dim())?;
        let cav = layout.cavity_dim();
        let q = QD_LEVELS * QD_LEVELS;
        Ok(ComplexOperator::from_fn(q, |i, j| {
            (0..cav)
                .map(|k| self.op.get(i * cav + k, j * cav + k))
                .sum()
        }))
    }
}

/// `Re Tr(ρ ρ′)`; the imaginary residue must stay below `1e-10`.
pub fn fidelity_trace(rho: &DensityMatrix, rho_ref: &DensityMatrix) -> Result<f64> {
    check_dim(rho.dim(), rho_ref.dim())?;
    let a = rho.op.matrix();
    let b = rho_ref.op.matrix();
    // Tr(AB) = Σ_ij A_ij B_ji
    let n = rho.dim();
    let mut acc = ZERO;
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    if acc.im.abs() > 1e-10 {
        return Err(Error::Numerical(format!(
            "Tr(rho rho') has imaginary part {:e}",
            acc.im
        )));
    }
    Ok(acc.re)
}

/// `½ Σ |λ_k(ρ - σ)|`.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    check_dim(rho.dim(), sigma.dim())?;
    let diff = &rho.op - &sigma.op;
    Ok(0.5 * diff.hermitian_eigenvalues().iter().map(|x| x.abs()).sum::<f64>())
}

/// Exact unit phasor `e^{iθ}`; multiples of π/2 land on exact values.
pub fn unit_phase(theta: f64) -> C64 {
    let quarter = theta / std::f64::consts::FRAC_PI_2;
    let nearest = quarter.round();
    if (quarter - nearest).abs() <= 8.0 * f64::EPSILON * nearest.abs().max(1.0) {
        return match (nearest as i64).rem_euclid(4) {
            0 => ONE,
            1 => I,
            2 => -ONE,
            _ => -I,
        };
    }
    C64::from_polar(1.0, theta)
}
