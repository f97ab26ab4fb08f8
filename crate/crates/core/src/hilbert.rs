//! Composite Hilbert space of two three-level ions and one truncated cavity
//! mode, with the elementary operators and states living on it.
//!
//! Tensor factors are ordered ion1 ⊗ ion2 ⊗ cavity. A basis state
//! `|l1, l2, n⟩` (ion levels `l1, l2 ∈ {1, 2, 3}`, photon number
//! `n ∈ 0..=n_max`) sits at
//!
//! ```text
//! index = ((l1 - 1) * 3 + (l2 - 1)) * (n_max + 1) + n
//! ```
//!
//! Every other module goes through [`SpaceLayout::index`] rather than
//! repeating this arithmetic.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub const ION_LEVELS: usize = 3;
pub const N_IONS: usize = 2;

/// Tolerance used by the Hermiticity assertions on [`OperatorMatrix`].
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Normalization tolerance for [`QuantumState`].
pub const NORM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpaceLayout {
    fock_cutoff: usize,
}

impl SpaceLayout {
    pub fn new(fock_cutoff: usize) -> Result<Self> {
        if fock_cutoff < 1 {
            return Err(Error::InvalidArgument(format!(
                "fock cutoff must be >= 1, got {fock_cutoff}"
            )));
        }
        Ok(Self { fock_cutoff })
    }

    /// Recovers the layout from a total dimension `9·(n_max+1)`.
    pub fn from_dim(dim: usize) -> Result<Self> {
        let per_ion_pair = ION_LEVELS * ION_LEVELS;
        if !dim.is_multiple_of(per_ion_pair) || dim < 2 * per_ion_pair {
            return Err(Error::InvalidArgument(format!(
                "dimension {dim} is not 9·(n_max+1) with n_max >= 1"
            )));
        }
        Self::new(dim / per_ion_pair - 1)
    }

    pub fn fock_cutoff(&self) -> usize {
        self.fock_cutoff
    }

    pub fn fock_dim(&self) -> usize {
        self.fock_cutoff + 1
    }

    pub fn ion_levels(&self) -> usize {
        ION_LEVELS
    }

    pub fn n_ions(&self) -> usize {
        N_IONS
    }

    pub fn total_dim(&self) -> usize {
        ION_LEVELS * ION_LEVELS * self.fock_dim()
    }

    /// Index of `|ion1, ion2, n⟩`. Levels are 1-based.
    pub fn index(&self, ion1: usize, ion2: usize, n: usize) -> Result<usize> {
        check_level(ion1)?;
        check_level(ion2)?;
        if n > self.fock_cutoff {
            return Err(Error::InvalidArgument(format!(
                "photon number {n} exceeds fock cutoff {}",
                self.fock_cutoff
            )));
        }
        Ok(((ion1 - 1) * ION_LEVELS + (ion2 - 1)) * self.fock_dim() + n)
    }

    /// Inverse of [`SpaceLayout::index`].
    pub fn decompose(&self, index: usize) -> Result<(usize, usize, usize)> {
        if index >= self.total_dim() {
            return Err(Error::InvalidArgument(format!(
                "index {index} out of range for dimension {}",
                self.total_dim()
            )));
        }
        let n = index % self.fock_dim();
        let ions = index / self.fock_dim();
        Ok((ions / ION_LEVELS + 1, ions % ION_LEVELS + 1, n))
    }

    /// All `(ion1, ion2, n)` triples in index order.
    pub fn basis(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.total_dim()).map(|i| self.decompose(i).expect("index in range"))
    }

    fn operator_from_fn<F>(&self, f: F) -> OperatorMatrix
    where
        F: Fn(usize, usize, usize) -> Option<(usize, C64)>,
    {
        // Builds Σ_k value |target⟩⟨k| from a rule mapping each basis ket.
        let dim = self.total_dim();
        let mut m = DMatrix::zeros(dim, dim);
        for (col, (l1, l2, n)) in self.basis().enumerate() {
            if let Some((row, value)) = f(l1, l2, n) {
                m[(row, col)] += value;
            }
        }
        OperatorMatrix::new(m)
    }
}

fn check_level(level: usize) -> Result<()> {
    if (1..=ION_LEVELS).contains(&level) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "ion level must be 1, 2 or 3, got {level}"
        )))
    }
}

fn check_ion(ion: usize) -> Result<()> {
    if (1..=N_IONS).contains(&ion) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "ion index must be 1 or 2, got {ion}"
        )))
    }
}

/// Dense complex square operator on the composite space.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    matrix: DMatrix<C64>,
    hermitian_hint: bool,
}

impl OperatorMatrix {
    pub fn new(matrix: DMatrix<C64>) -> Self {
        assert!(matrix.is_square(), "operator must be square");
        Self {
            matrix,
            hermitian_hint: false,
        }
    }

    /// Marks the operator as Hermitian after checking it to [`HERMITIAN_TOL`].
    pub fn hermitian(matrix: DMatrix<C64>) -> Result<Self> {
        let op = Self::new(matrix);
        let deviation = op.hermiticity_deviation();
        if deviation >= HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(Self {
            hermitian_hint: true,
            ..op
        })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(dim, dim),
            hermitian_hint: true,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
            hermitian_hint: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn hermitian_hint(&self) -> bool {
        self.hermitian_hint
    }

    /// Re-checks Hermiticity and sets the hint accordingly.
    pub fn with_hermitian_check(mut self) -> Self {
        self.hermitian_hint = self.hermiticity_deviation() < HERMITIAN_TOL;
        self
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        max_abs(&(&self.matrix - self.matrix.adjoint()))
    }

    pub fn ensure_hermitian(&self) -> Result<()> {
        let deviation = self.hermiticity_deviation();
        if deviation < HERMITIAN_TOL {
            Ok(())
        } else {
            Err(Error::NotHermitian { deviation })
        }
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            hermitian_hint: self.hermitian_hint,
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            matrix: &self.matrix * C64::new(factor, 0.0),
            hermitian_hint: self.hermitian_hint,
        }
    }

    pub fn commutator(&self, other: &Self) -> Self {
        Self::new(&self.matrix * &other.matrix - &other.matrix * &self.matrix)
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        max_abs(&self.matrix)
    }

    pub fn apply(&self, ket: &DVector<C64>) -> DVector<C64> {
        &self.matrix * ket
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    /// Spectrum of a Hermitian operator, ascending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        self.ensure_hermitian()?;
        let mut values: Vec<f64> = SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        values.sort_by(f64::total_cmp);
        Ok(values)
    }
}

impl Add for &OperatorMatrix {
    type Output = OperatorMatrix;

    fn add(self, rhs: Self) -> OperatorMatrix {
        OperatorMatrix {
            matrix: &self.matrix + &rhs.matrix,
            hermitian_hint: self.hermitian_hint && rhs.hermitian_hint,
        }
    }
}

impl Sub for &OperatorMatrix {
    type Output = OperatorMatrix;

    fn sub(self, rhs: Self) -> OperatorMatrix {
        OperatorMatrix {
            matrix: &self.matrix - &rhs.matrix,
            hermitian_hint: self.hermitian_hint && rhs.hermitian_hint,
        }
    }
}

impl Mul for &OperatorMatrix {
    type Output = OperatorMatrix;

    fn mul(self, rhs: Self) -> OperatorMatrix {
        OperatorMatrix::new(&self.matrix * &rhs.matrix)
    }
}

impl Neg for &OperatorMatrix {
    type Output = OperatorMatrix;

    fn neg(self) -> OperatorMatrix {
        self.scale(-1.0)
    }
}

pub(crate) fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `σ^ion_{alpha beta} = |alpha⟩⟨beta|` on one ion, identity on the rest.
pub fn sigma(ion: usize, alpha: usize, beta: usize, layout: &SpaceLayout) -> Result<OperatorMatrix> {
    check_ion(ion)?;
    check_level(alpha)?;
    check_level(beta)?;
    let op = layout.operator_from_fn(|l1, l2, n| {
        let (own, other) = if ion == 1 { (l1, l2) } else { (l2, l1) };
        if own != beta {
            return None;
        }
        let row = if ion == 1 {
            layout.index(alpha, other, n)
        } else {
            layout.index(other, alpha, n)
        };
        Some((row.expect("valid levels"), C64::new(1.0, 0.0)))
    });
    Ok(if alpha == beta {
        OperatorMatrix {
            hermitian_hint: true,
            ..op
        }
    } else {
        op
    })
}

/// Cavity annihilation operator, `a|n⟩ = √n |n-1⟩`.
pub fn annihilator(layout: &SpaceLayout) -> OperatorMatrix {
    layout.operator_from_fn(|l1, l2, n| {
        (n > 0).then(|| {
            let row = layout.index(l1, l2, n - 1).expect("valid index");
            (row, C64::new((n as f64).sqrt(), 0.0))
        })
    })
}

pub fn creator(layout: &SpaceLayout) -> OperatorMatrix {
    annihilator(layout).adjoint()
}

/// `a†a`, diagonal with entries `n`.
pub fn number_operator(layout: &SpaceLayout) -> OperatorMatrix {
    let diag = DVector::from_iterator(
        layout.total_dim(),
        layout.basis().map(|(_, _, n)| C64::new(n as f64, 0.0)),
    );
    OperatorMatrix {
        matrix: DMatrix::from_diagonal(&diag),
        hermitian_hint: true,
    }
}

/// Exchange of the two ions, `|l1, l2, n⟩ → |l2, l1, n⟩`.
pub fn ion_exchange(layout: &SpaceLayout) -> OperatorMatrix {
    let op = layout.operator_from_fn(|l1, l2, n| {
        Some((layout.index(l2, l1, n).expect("valid index"), C64::new(1.0, 0.0)))
    });
    OperatorMatrix {
        hermitian_hint: true,
        ..op
    }
}

/// Projector onto the states with exactly `n` cavity photons.
pub fn photon_projector(n: usize, layout: &SpaceLayout) -> OperatorMatrix {
    let dim = layout.total_dim();
    let mut m = DMatrix::zeros(dim, dim);
    for (i, (_, _, k)) in layout.basis().enumerate() {
        if k == n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
    }
    OperatorMatrix {
        matrix: m,
        hermitian_hint: true,
    }
}

/// Projector `Σ |v⟩⟨v|` onto the span of orthonormal kets.
pub fn projector_onto(kets: &[DVector<C64>], dim: usize) -> OperatorMatrix {
    let mut m = DMatrix::zeros(dim, dim);
    for v in kets {
        m += v * v.adjoint();
    }
    OperatorMatrix::new(m).with_hermitian_check()
}

/// Pure ket or density matrix on the composite space.
#[derive(Clone, Debug, PartialEq)]
pub enum QuantumState {
    Ket(DVector<C64>),
    Density(DMatrix<C64>),
}

impl QuantumState {
    /// Wraps a ket, checking `‖ψ‖² = 1` within [`NORM_TOL`].
    pub fn ket(amplitudes: DVector<C64>) -> Result<Self> {
        let norm_sqr = amplitudes.norm_squared();
        if (norm_sqr - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { value: norm_sqr });
        }
        Ok(Self::Ket(amplitudes))
    }

    pub fn ket_normalized(amplitudes: DVector<C64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NotNormalized { value: norm });
        }
        Ok(Self::Ket(amplitudes.unscale(norm)))
    }

    /// Wraps a density matrix, checking trace, Hermiticity and positivity.
    pub fn density(matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidDensity("matrix is not square".into()));
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > NORM_TOL || trace.im.abs() > NORM_TOL {
            return Err(Error::NotNormalized { value: trace.re });
        }
        let herm = max_abs(&(&matrix - matrix.adjoint()));
        if herm > NORM_TOL {
            return Err(Error::InvalidDensity(format!(
                "not Hermitian (deviation {herm:e})"
            )));
        }
        let min_eig = min_eigenvalue(&matrix);
        if min_eig < -NORM_TOL {
            return Err(Error::InvalidDensity(format!(
                "negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(Self::Density(matrix))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Ket(v) => v.len(),
            Self::Density(m) => m.nrows(),
        }
    }

    pub fn is_ket(&self) -> bool {
        matches!(self, Self::Ket(_))
    }

    pub fn as_ket(&self) -> Option<&DVector<C64>> {
        match self {
            Self::Ket(v) => Some(v),
            Self::Density(_) => None,
        }
    }

    /// `|ψ⟩⟨ψ|` for kets, a copy otherwise.
    pub fn to_density(&self) -> DMatrix<C64> {
        match self {
            Self::Ket(v) => v * v.adjoint(),
            Self::Density(m) => m.clone(),
        }
    }

    /// Norm squared for kets, trace for density matrices.
    pub fn weight(&self) -> f64 {
        match self {
            Self::Ket(v) => v.norm_squared(),
            Self::Density(m) => m.trace().re,
        }
    }

    /// Smallest eigenvalue of the density matrix (0 for a pure ket).
    pub fn min_eigenvalue(&self) -> f64 {
        match self {
            Self::Ket(_) => 0.0,
            Self::Density(m) => min_eigenvalue(m),
        }
    }

    /// Applies a unitary (or any operator) as `Uψ` or `UρU†`.
    pub fn transform(&self, op: &OperatorMatrix) -> Result<Self> {
        expect_dim(op.dim(), self.dim())?;
        Ok(match self {
            Self::Ket(v) => Self::Ket(op.matrix() * v),
            Self::Density(m) => Self::Density(op.matrix() * m * op.matrix().adjoint()),
        })
    }
}

pub(crate) fn min_eigenvalue(m: &DMatrix<C64>) -> f64 {
    // Symmetrize first so round-off in the anti-Hermitian part cannot leak in.
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn expect_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Computational basis ket `|ion1, ion2, n⟩`.
pub fn tensor_basis_state(ion1: usize, ion2: usize, n: usize, layout: &SpaceLayout) -> Result<QuantumState> {
    Ok(QuantumState::Ket(basis_ket(ion1, ion2, n, layout)?))
}

pub(crate) fn basis_ket(ion1: usize, ion2: usize, n: usize, layout: &SpaceLayout) -> Result<DVector<C64>> {
    let idx = layout.index(ion1, ion2, n)?;
    let mut v = DVector::zeros(layout.total_dim());
    v[idx] = C64::new(1.0, 0.0);
    Ok(v)
}

/// Normalized superposition `Σ c_k |l1_k, l2_k, n⟩`.
pub fn superposition(terms: &[(C64, usize, usize)], n: usize, layout: &SpaceLayout) -> Result<QuantumState> {
    let mut v = DVector::zeros(layout.total_dim());
    for &(c, l1, l2) in terms {
        v[layout.index(l1, l2, n)?] += c;
    }
    QuantumState::ket_normalized(v)
}

/// `⟨ψ|O|ψ⟩` or `tr(ρO)`.
pub fn expectation(state: &QuantumState, op: &OperatorMatrix) -> Result<C64> {
    expect_dim(op.dim(), state.dim())?;
    Ok(match state {
        QuantumState::Ket(v) => v.dotc(&(op.matrix() * v)),
        QuantumState::Density(rho) => trace_of_product(rho, op.matrix()),
    })
}

/// `tr(AB)` without forming the product.
pub(crate) fn trace_of_product(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Named two-ion states used for initial conditions and population channels.
/// All are taken with zero cavity photons unless stated otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StateLabel {
    /// Product state `|l1 l2⟩`.
    Product(u8, u8),
    /// `(|23⟩ − |32⟩)/√2`, the cavity-dark antisymmetric state.
    PsiA,
    /// `(|23⟩ + |32⟩)/√2`.
    PsiS,
    /// `(|11⟩ + |22⟩)/√2`.
    BellPlus,
    /// `(|11⟩ − |22⟩)/√2`.
    BellMinus,
}

impl StateLabel {
    pub const QUBIT_BASIS: [StateLabel; 4] = [
        StateLabel::Product(1, 1),
        StateLabel::Product(1, 2),
        StateLabel::Product(2, 1),
        StateLabel::Product(2, 2),
    ];

    /// The five states left unshifted by the cavity.
    pub const UNSHIFTED: [StateLabel; 5] = [
        StateLabel::Product(1, 1),
        StateLabel::Product(1, 2),
        StateLabel::Product(2, 1),
        StateLabel::Product(2, 2),
        StateLabel::PsiA,
    ];

    pub fn ket(&self, n: usize, layout: &SpaceLayout) -> Result<DVector<C64>> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let c = |x: f64| C64::new(x, 0.0);
        let terms: Vec<(C64, usize, usize)> = match *self {
            Self::Product(a, b) => vec![(c(1.0), a as usize, b as usize)],
            Self::PsiA => vec![(c(h), 2, 3), (c(-h), 3, 2)],
            Self::PsiS => vec![(c(h), 2, 3), (c(h), 3, 2)],
            Self::BellPlus => vec![(c(h), 1, 1), (c(h), 2, 2)],
            Self::BellMinus => vec![(c(h), 1, 1), (c(-h), 2, 2)],
        };
        let mut v = DVector::zeros(layout.total_dim());
        for (amp, l1, l2) in terms {
            v[layout.index(l1, l2, n)?] += amp;
        }
        Ok(v)
    }

    pub fn state(&self, layout: &SpaceLayout) -> Result<QuantumState> {
        QuantumState::ket(self.ket(0, layout)?)
    }

    /// Projector `|s,n⟩⟨s,n|` summed over all photon numbers.
    pub fn population_operator(&self, layout: &SpaceLayout) -> Result<OperatorMatrix> {
        let kets = (0..layout.fock_dim())
            .map(|n| self.ket(n, layout))
            .collect::<Result<Vec<_>>>()?;
        Ok(projector_onto(&kets, layout.total_dim()))
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Product(a, b) => write!(f, "{a}{b}"),
            Self::PsiA => f.write_str("psi_a"),
            Self::PsiS => f.write_str("psi_s"),
            Self::BellPlus => f.write_str("bell_plus"),
            Self::BellMinus => f.write_str("bell_minus"),
        }
    }
}

impl FromStr for StateLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "psi_a" => Ok(Self::PsiA),
            "psi_s" => Ok(Self::PsiS),
            "bell_plus" => Ok(Self::BellPlus),
            "bell_minus" => Ok(Self::BellMinus),
            _ => {
                let digits: Vec<u8> = s
                    .bytes()
                    .filter_map(|b| (b'1'..=b'3').contains(&b).then_some(b - b'0'))
                    .collect();
                if digits.len() == 2 && s.len() == 2 {
                    Ok(Self::Product(digits[0], digits[1]))
                } else {
                    Err(Error::InvalidArgument(format!("unknown state label '{s}'")))
                }
            }
        }
    }
}
