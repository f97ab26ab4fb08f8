//! Hamiltonians of the ion–cavity system and their effective descriptions.
//!
//! Everything is written in the frame rotating with the bare ionic and cavity
//! frequencies, where the laser is resonant with the bare `|2⟩ → |3⟩`
//! transition and only the detuning `Δ = ω_c − (ω_3 − ω_2)` survives:
//!
//! ```text
//! H_rot   = Δ a†a + g [a† (σ¹₂₃ + σ²₂₃) + h.c.]
//! H_drive = Ω (σ¹₃₂ − σ²₃₂ + h.c.)
//! ```
//!
//! The bare frequencies `ω_2`, `ω_3`, `ω_c` are never stored; they only enter
//! through `Δ`.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    annihilator, max_abs, number_operator, photon_projector, sigma, OperatorMatrix, QuantumState,
    SpaceLayout, StateLabel, HERMITIAN_TOL,
};

/// Threshold on `g²/Δ²` above which the dispersive regime is flagged.
pub const DISPERSIVE_WARN: f64 = 0.5;
/// Threshold on `|Ω|·Δ/g²` above which the strong-shift regime is flagged.
pub const STRONG_SHIFT_WARN: f64 = 0.2;

/// Physical parameters of one run. Rates are in units of `g` by convention.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    #[serde(default = "default_g")]
    pub g: f64,
    pub delta: f64,
    /// Rabi frequency of the laser on ion 1; ion 2 is driven with `−omega`.
    pub omega: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "default_fock_cutoff")]
    pub fock_cutoff: usize,
}

fn default_g() -> f64 {
    1.0
}

fn default_fock_cutoff() -> usize {
    2
}

impl SystemParams {
    pub fn new(g: f64, delta: f64, omega: f64, kappa: f64, gamma: f64) -> Self {
        Self {
            g,
            delta,
            omega,
            kappa,
            gamma,
            fock_cutoff: default_fock_cutoff(),
        }
    }

    pub fn with_fock_cutoff(mut self, fock_cutoff: usize) -> Self {
        self.fock_cutoff = fock_cutoff;
        self
    }

    pub fn with_decay(mut self, kappa: f64, gamma: f64) -> Self {
        self.kappa = kappa;
        self.gamma = gamma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.g, self.delta, self.omega, self.kappa, self.gamma]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("parameters must be finite".into()));
        }
        if self.g <= 0.0 {
            return Err(Error::InvalidArgument(format!("g must be > 0, got {}", self.g)));
        }
        if self.kappa < 0.0 || self.gamma < 0.0 {
            return Err(Error::InvalidArgument(
                "decay rates kappa and gamma must be >= 0".into(),
            ));
        }
        SpaceLayout::new(self.fock_cutoff)?;
        Ok(())
    }

    pub fn layout(&self) -> Result<SpaceLayout> {
        SpaceLayout::new(self.fock_cutoff)
    }

    /// Duration of one control-phase gate, `π / (√2 |Ω|)`.
    pub fn gate_time(&self) -> f64 {
        std::f64::consts::PI / (std::f64::consts::SQRT_2 * self.omega.abs())
    }

    /// Magnitude of the cavity-induced level shift, `g²/Δ`.
    pub fn cavity_shift(&self) -> f64 {
        self.g * self.g / self.delta
    }

    /// Checks the two perturbative conditions the effective model relies on.
    pub fn regime_warnings(&self) -> Vec<RegimeWarning> {
        let mut out = Vec::new();
        let dispersive = (self.g / self.delta).powi(2);
        if !(dispersive <= DISPERSIVE_WARN) {
            out.push(RegimeWarning {
                condition: RegimeCondition::Dispersive,
                value: dispersive,
                threshold: DISPERSIVE_WARN,
            });
        }
        let strong = (self.omega * self.delta / (self.g * self.g)).abs();
        if !(strong <= STRONG_SHIFT_WARN) {
            out.push(RegimeWarning {
                condition: RegimeCondition::StrongShift,
                value: strong,
                threshold: STRONG_SHIFT_WARN,
            });
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeCondition {
    /// `g²/Δ² ≪ 1`
    Dispersive,
    /// `(g²/Δ)² ≫ Ω²`
    StrongShift,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegimeWarning {
    pub condition: RegimeCondition,
    pub value: f64,
    pub threshold: f64,
}

impl fmt::Display for RegimeWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.condition {
            RegimeCondition::Dispersive => write!(
                f,
                "dispersive condition g²/Δ² ≪ 1 violated: g²/Δ² = {:.4} > {}",
                self.value, self.threshold
            ),
            RegimeCondition::StrongShift => write!(
                f,
                "strong-shift condition (g²/Δ)² ≫ Ω² violated: |Ω|Δ/g² = {:.4} > {}",
                self.value, self.threshold
            ),
        }
    }
}

fn cplx(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// `Δ a†a`.
pub fn cavity_energy(params: &SystemParams, layout: &SpaceLayout) -> OperatorMatrix {
    number_operator(layout).scale(params.delta)
}

/// `g [a† (σ¹₂₃ + σ²₂₃) + h.c.]`.
pub fn cavity_coupling(params: &SystemParams, layout: &SpaceLayout) -> Result<OperatorMatrix> {
    let a = annihilator(layout);
    let lowering = &sigma(1, 2, 3, layout)? + &sigma(2, 2, 3, layout)?;
    let emit = &a.adjoint() * &lowering;
    Ok((&emit + &emit.adjoint()).scale(params.g).with_hermitian_check())
}

/// Rotating-frame Hamiltonian without drive.
pub fn build_full_hamiltonian(params: &SystemParams, layout: &SpaceLayout) -> Result<OperatorMatrix> {
    let h = &cavity_energy(params, layout) + &cavity_coupling(params, layout)?;
    OperatorMatrix::hermitian(h.into_matrix())
}

/// Antisymmetric laser drive `Ω (σ¹₃₂ − σ²₃₂ + h.c.)`.
pub fn build_drive(params: &SystemParams, layout: &SpaceLayout) -> Result<OperatorMatrix> {
    let raise = &sigma(1, 3, 2, layout)? - &sigma(2, 3, 2, layout)?;
    let h = (&raise + &raise.adjoint()).scale(params.omega);
    OperatorMatrix::hermitian(h.into_matrix())
}

/// Closed-form second-order cavity shift on the zero-photon block:
///
/// ```text
/// −(g²/Δ) (σ¹₁₁σ²₃₃ + σ¹₂₂σ²₃₃ + σ¹₃₃σ²₁₁ + σ¹₃₃σ²₂₂ + 2σ¹₃₃σ²₃₃ + σ¹₃₂σ²₂₃ + σ¹₂₃σ²₃₂)
/// ```
///
/// Used as the reference for [`adiabatic_eliminate`].
pub fn cavity_shift_operator(params: &SystemParams, layout: &SpaceLayout) -> Result<OperatorMatrix> {
    let terms: [(f64, (usize, usize), (usize, usize)); 7] = [
        (1.0, (1, 1), (3, 3)),
        (1.0, (2, 2), (3, 3)),
        (1.0, (3, 3), (1, 1)),
        (1.0, (3, 3), (2, 2)),
        (2.0, (3, 3), (3, 3)),
        (1.0, (3, 2), (2, 3)),
        (1.0, (2, 3), (3, 2)),
    ];
    let dim = layout.total_dim();
    let mut sum = OperatorMatrix::zeros(dim);
    for (weight, (a, b), (c, d)) in terms {
        let term = &sigma(1, a, b, layout)? * &sigma(2, c, d, layout)?;
        sum = &sum + &term.scale(weight);
    }
    let p0 = photon_projector(0, layout);
    let h = (&(&p0 * &sum) * &p0).scale(-params.cavity_shift());
    OperatorMatrix::hermitian(h.into_matrix())
}

/// Second-order degenerate perturbation theory on the range of
/// `subspace_projector`:
///
/// ```text
/// H_eff = P V Q (E_P − H_D)⁻¹ Q V P
/// ```
///
/// `subspace_projector` must span an eigenspace of `h_diag` with eigenvalue
/// `E_P`, and `coupling` must have no block inside it. The result is returned
/// on the full space, supported on the subspace.
pub fn adiabatic_eliminate(
    h_diag: &OperatorMatrix,
    coupling: &OperatorMatrix,
    subspace_projector: &OperatorMatrix,
) -> Result<OperatorMatrix> {
    let dim = h_diag.dim();
    crate::hilbert::expect_dim(dim, coupling.dim())?;
    crate::hilbert::expect_dim(dim, subspace_projector.dim())?;
    h_diag.ensure_hermitian()?;
    coupling.ensure_hermitian()?;

    let p = subspace_projector.matrix();
    let rank = p.trace().re;
    if rank < 0.5 || max_abs(&(p * p - p)) > 1e-10 {
        return Err(Error::InvalidArgument(
            "subspace_projector is not a non-trivial projector".into(),
        ));
    }
    let hd = h_diag.matrix();
    let scale = max_abs(hd).max(max_abs(coupling.matrix())).max(1.0);

    let energy = (p * hd).trace().re / rank;
    let residual = max_abs(&(hd * p - p * cplx(energy)));
    if residual > 1e-10 * scale {
        return Err(Error::NotEigenspace { residual });
    }

    let v = coupling.matrix();
    let first_order = max_abs(&(p * v * p));
    if first_order > 1e-12 * scale {
        return Err(Error::FirstOrderCoupling { norm: first_order });
    }

    let q = DMatrix::<C64>::identity(dim, dim) - p;
    let eig = SymmetricEigen::new(hd.clone());
    let vp = v * p;
    let mut resolvent = DMatrix::<C64>::zeros(dim, dim);
    for (k, &e_k) in eig.eigenvalues.iter().enumerate() {
        let qk: DVector<C64> = &q * eig.eigenvectors.column(k);
        if qk.norm() < 1e-12 {
            continue;
        }
        let gap = energy - e_k;
        if gap.abs() < 1e-12 * scale {
            let leak = (qk.adjoint() * &vp).iter().map(|z| z.norm()).fold(0.0, f64::max);
            if leak > 1e-12 * scale {
                return Err(Error::ZeroDenominator {
                    subspace_energy: energy,
                    energy: e_k,
                });
            }
            continue;
        }
        resolvent += (&qk * qk.adjoint()) / cplx(gap);
    }
    let h_eff = vp.adjoint() * resolvent * &vp;
    // Symmetrize away round-off; the exact result is Hermitian.
    let h_eff = (&h_eff + h_eff.adjoint()) * cplx(0.5);
    OperatorMatrix::hermitian(h_eff)
}

fn check_orthonormal(basis: &[DVector<C64>]) -> Result<()> {
    let mut deviation: f64 = 0.0;
    for (i, a) in basis.iter().enumerate() {
        for (j, b) in basis.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            deviation = deviation.max((a.dotc(b) - cplx(target)).norm());
        }
    }
    if deviation > 1e-10 {
        Err(Error::NonOrthonormal { deviation })
    } else {
        Ok(())
    }
}

fn kets_of(states: &[QuantumState]) -> Result<Vec<DVector<C64>>> {
    states
        .iter()
        .map(|s| {
            s.as_ket()
                .cloned()
                .ok_or_else(|| Error::InvalidArgument("subspace basis must consist of kets".into()))
        })
        .collect()
}

/// First-order effective Hamiltonian `⟨b_i|H|b_j⟩` in the given orthonormal
/// basis.
pub fn project_first_order(h_pert: &OperatorMatrix, degenerate_subspace: &[QuantumState]) -> Result<DMatrix<C64>> {
    let kets = kets_of(degenerate_subspace)?;
    for k in &kets {
        crate::hilbert::expect_dim(h_pert.dim(), k.len())?;
    }
    check_orthonormal(&kets)?;
    let n = kets.len();
    let images: Vec<DVector<C64>> = kets.iter().map(|k| h_pert.apply(k)).collect();
    Ok(DMatrix::from_fn(n, n, |i, j| kets[i].dotc(&images[j])))
}

/// Lifts a matrix written in `basis` back onto the full space,
/// `Σ M_ij |b_i⟩⟨b_j|`.
pub fn embed(block: &DMatrix<C64>, basis: &[QuantumState]) -> Result<OperatorMatrix> {
    let kets = kets_of(basis)?;
    if block.nrows() != kets.len() || block.ncols() != kets.len() {
        return Err(Error::DimensionMismatch {
            expected: kets.len(),
            found: block.nrows(),
        });
    }
    let dim = kets.first().map_or(0, |k| k.len());
    let mut m = DMatrix::zeros(dim, dim);
    for (i, bi) in kets.iter().enumerate() {
        for (j, bj) in kets.iter().enumerate() {
            if block[(i, j)] != C64::new(0.0, 0.0) {
                m += bi * bj.adjoint() * block[(i, j)];
            }
        }
    }
    Ok(OperatorMatrix::new(m).with_hermitian_check())
}

/// The five cavity-unshifted zero-photon states `{|11⟩, |12⟩, |21⟩, |22⟩, |Ψ_a⟩}`.
pub fn unshifted_basis(layout: &SpaceLayout) -> Result<Vec<QuantumState>> {
    StateLabel::UNSHIFTED.iter().map(|s| s.state(layout)).collect()
}

/// Every Hamiltonian of the model, built once per parameter set.
#[derive(Clone, Debug)]
pub struct HamiltonianSet {
    pub layout: SpaceLayout,
    /// Rotating-frame ion–cavity Hamiltonian, no drive.
    pub h_full: OperatorMatrix,
    /// Second-order cavity shift on the zero-photon block.
    pub h_eff_cavity: OperatorMatrix,
    pub h_drive: OperatorMatrix,
    /// First-order drive on the unshifted subspace: couples only `|22⟩` and `|Ψ_a⟩`.
    pub h_gate: OperatorMatrix,
}

impl HamiltonianSet {
    pub fn build(params: &SystemParams) -> Result<Self> {
        params.validate()?;
        let layout = params.layout()?;
        let h_full = build_full_hamiltonian(params, &layout)?;
        let h_drive = build_drive(params, &layout)?;
        let h_eff_cavity = if params.delta != 0.0 {
            adiabatic_eliminate(
                &cavity_energy(params, &layout),
                &cavity_coupling(params, &layout)?,
                &photon_projector(0, &layout),
            )?
        } else {
            // No dispersive limit on resonance.
            OperatorMatrix::zeros(layout.total_dim())
        };
        let basis = unshifted_basis(&layout)?;
        let h_gate = embed(&project_first_order(&h_drive, &basis)?, &basis)?;
        Ok(Self {
            layout,
            h_full,
            h_eff_cavity,
            h_drive,
            h_gate,
        })
    }

    /// Driven full Hamiltonian `H_rot + H_drive`.
    pub fn h_driven(&self) -> OperatorMatrix {
        &self.h_full + &self.h_drive
    }

    pub fn all_hermitian(&self) -> bool {
        [&self.h_full, &self.h_eff_cavity, &self.h_drive, &self.h_gate]
            .iter()
            .all(|h| h.hermiticity_deviation() < HERMITIAN_TOL)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::basis_ket;
    use proptest::prelude::*;
    use std::f64::consts::SQRT_2;

    fn fig4() -> SystemParams {
        SystemParams::new(1.0, 3.0, 2.0e-3, 0.0, 0.0)
    }

    fn element(op: &OperatorMatrix, bra: (usize, usize, usize), ket: (usize, usize, usize), l: &SpaceLayout) -> C64 {
        let b = basis_ket(bra.0, bra.1, bra.2, l).unwrap();
        let k = basis_ket(ket.0, ket.1, ket.2, l).unwrap();
        b.dotc(&op.apply(&k))
    }

    #[test]
    fn full_hamiltonian_elements() {
        let p = SystemParams::new(0.7, 3.0, 0.0, 0.0, 0.0);
        let l = p.layout().unwrap();
        let h = build_full_hamiltonian(&p, &l).unwrap();
        assert!((element(&h, (1, 2, 1), (1, 3, 0), &l) - cplx(0.7)).norm() < 1e-15);
        assert!((element(&h, (1, 1, 1), (1, 1, 1), &l) - cplx(3.0)).norm() < 1e-15);
        assert!(h.hermitian_hint());

        let free = SystemParams { g: 0.0, ..p };
        let h0 = build_full_hamiltonian(&free, &l).unwrap();
        for (i, (_, _, n)) in l.basis().enumerate() {
            for j in 0..l.total_dim() {
                let expected = if i == j { 3.0 * n as f64 } else { 0.0 };
                assert_eq!(h0.entry(i, j), cplx(expected));
            }
        }
    }

    #[test]
    fn drive_elements() {
        let p = fig4();
        let l = p.layout().unwrap();
        let h2 = build_drive(&p, &l).unwrap();
        assert!((element(&h2, (3, 1, 0), (2, 1, 0), &l) - cplx(p.omega)).norm() < 1e-18);
        assert!((element(&h2, (1, 3, 0), (1, 2, 0), &l) - cplx(-p.omega)).norm() < 1e-18);
        assert_eq!(h2.commutator(&number_operator(&l)).max_abs(), 0.0);
    }

    #[test]
    fn eliminated_hamiltonian_matches_closed_form() {
        let p = fig4();
        let l = p.layout().unwrap();
        let h = adiabatic_eliminate(
            &cavity_energy(&p, &l),
            &cavity_coupling(&p, &l).unwrap(),
            &photon_projector(0, &l),
        )
        .unwrap();
        let reference = cavity_shift_operator(&p, &l).unwrap();
        assert!((&h - &reference).max_abs() < 1e-12);

        let shift = p.cavity_shift();
        assert!((element(&h, (3, 3, 0), (3, 3, 0), &l) - cplx(-2.0 * shift)).norm() < 1e-12);
        assert!((element(&h, (3, 2, 0), (2, 3, 0), &l) - cplx(-shift)).norm() < 1e-12);
        assert!((element(&h, (2, 3, 0), (3, 2, 0), &l) - cplx(-shift)).norm() < 1e-12);
        let psi_a = StateLabel::PsiA.ket(0, &l).unwrap();
        assert!(psi_a.dotc(&h.apply(&psi_a)).norm() < 1e-12);
        // The symmetric partner is shifted by −2g²/Δ.
        let psi_s = StateLabel::PsiS.ket(0, &l).unwrap();
        assert!((psi_s.dotc(&h.apply(&psi_s)) - cplx(-2.0 * shift)).norm() < 1e-12);
    }

    #[test]
    fn elimination_rejects_first_order_coupling() {
        let p = fig4();
        let l = p.layout().unwrap();
        let err = adiabatic_eliminate(
            &cavity_energy(&p, &l),
            &build_drive(&p, &l).unwrap(),
            &photon_projector(0, &l),
        )
        .unwrap_err();
        assert!(matches!(err, Error::FirstOrderCoupling { .. }));
        assert!(err.to_string().contains("subspace not protected at first order"));
    }

    #[test]
    fn elimination_rejects_zero_denominator() {
        let p = fig4();
        let l = p.layout().unwrap();
        // Flat H_D: the one-photon states are degenerate with the subspace.
        let err = adiabatic_eliminate(
            &OperatorMatrix::zeros(l.total_dim()),
            &cavity_coupling(&p, &l).unwrap(),
            &photon_projector(0, &l),
        )
        .unwrap_err();
        assert!(matches!(err, Error::ZeroDenominator { .. }));
    }

    #[test]
    fn elimination_rejects_non_eigenspace() {
        let p = fig4();
        let l = p.layout().unwrap();
        let p1 = &photon_projector(0, &l) + &photon_projector(1, &l);
        let err = adiabatic_eliminate(
            &cavity_energy(&p, &l),
            &cavity_coupling(&p, &l).unwrap(),
            &p1.with_hermitian_check(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NotEigenspace { .. }));
    }

    #[test]
    fn unshifted_states_span_null_space() {
        let p = fig4();
        let set = HamiltonianSet::build(&p).unwrap();
        let l = set.layout;
        let basis = unshifted_basis(&l).unwrap();
        let block = project_first_order(&set.h_eff_cavity, &basis).unwrap();
        assert!(max_abs(&block) < 1e-12);
        for b in &basis {
            assert!(set.h_eff_cavity.apply(b.as_ket().unwrap()).norm() < 1e-12);
        }
    }

    #[test]
    fn first_order_drive_block() {
        let p = fig4();
        let l = p.layout().unwrap();
        let h2 = build_drive(&p, &l).unwrap();
        let basis = unshifted_basis(&l).unwrap();
        let block = project_first_order(&h2, &basis).unwrap();
        // Index 3 = |22⟩, index 4 = |Ψ_a⟩. With Ψ_a = (|23⟩ − |32⟩)/√2 and
        // Ω₂ = −Ω₁ the matrix element is −√2 Ω; only its magnitude is
        // convention-independent.
        assert!((block[(4, 3)] - cplx(-SQRT_2 * p.omega)).norm() < 1e-15);
        assert!((block[(3, 4)] - cplx(-SQRT_2 * p.omega)).norm() < 1e-15);
        let nonzero = block.iter().filter(|z| z.norm() > 1e-12).count();
        assert_eq!(nonzero, 2);
        assert_eq!(block[(0, 1)], cplx(0.0));

        // The symmetric combination is not reached from |22⟩.
        let psi_s = StateLabel::PsiS.ket(0, &l).unwrap();
        let k22 = basis_ket(2, 2, 0, &l).unwrap();
        assert!(psi_s.dotc(&h2.apply(&k22)).norm() < 1e-18);
    }

    #[test]
    fn first_order_rejects_non_orthonormal_basis() {
        let p = fig4();
        let l = p.layout().unwrap();
        let h2 = build_drive(&p, &l).unwrap();
        let s = StateLabel::Product(2, 2).state(&l).unwrap();
        let bad = vec![s.clone(), s];
        assert!(matches!(
            project_first_order(&h2, &bad),
            Err(Error::NonOrthonormal { .. })
        ));
    }

    #[test]
    fn hamiltonian_set_is_hermitian() {
        for params in [fig4(), SystemParams::new(1.0, 3.0, 0.01, 1.0, 5e-4)] {
            let set = HamiltonianSet::build(&params).unwrap();
            assert!(set.all_hermitian());
        }
    }

    #[test]
    fn regime_warnings_thresholds() {
        assert!(fig4().regime_warnings().is_empty());
        let near_resonant = SystemParams::new(1.0, 1.0, 1e-3, 0.0, 0.0);
        let w = near_resonant.regime_warnings();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].condition, RegimeCondition::Dispersive);
        assert!(w[0].to_string().contains("g²/Δ² ≪ 1"));

        let strong = SystemParams::new(1.0, 3.0, 1.0 / 3.0, 0.0, 0.0);
        let w = strong.regime_warnings();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].condition, RegimeCondition::StrongShift);
    }

    #[test]
    fn invalid_params() {
        assert!(SystemParams::new(0.0, 3.0, 0.1, 0.0, 0.0).validate().is_err());
        assert!(SystemParams::new(1.0, 3.0, 0.1, -1.0, 0.0).validate().is_err());
        assert!(SystemParams::new(1.0, f64::NAN, 0.1, 0.0, 0.0).validate().is_err());
        assert!(fig4().with_fock_cutoff(0).validate().is_err());
    }

    #[test]
    fn scale_covariance() {
        let base = SystemParams::new(0.8, 2.5, 0.03, 0.0, 0.0);
        let set = HamiltonianSet::build(&base).unwrap();
        for s in [0.5, 2.0, 10.0] {
            let scaled = SystemParams::new(base.g * s, base.delta * s, base.omega * s, 0.0, 0.0);
            let other = HamiltonianSet::build(&scaled).unwrap();
            for (a, b) in [
                (&set.h_full, &other.h_full),
                (&set.h_drive, &other.h_drive),
                (&set.h_gate, &other.h_gate),
                (&set.h_eff_cavity, &other.h_eff_cavity),
            ] {
                let diff = max_abs(&(a.matrix() * cplx(s) - b.matrix()));
                assert!(diff <= 1e-13 * s * a.max_abs().max(1.0), "scale {s}: {diff:e}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn elimination_reconstructs_closed_form(g in 0.05f64..2.0, delta in 0.5f64..20.0, sign in prop::bool::ANY) {
            let delta = if sign { delta } else { -delta };
            let p = SystemParams::new(g, delta, 0.0, 0.0, 0.0);
            let l = p.layout().unwrap();
            let h = adiabatic_eliminate(
                &cavity_energy(&p, &l),
                &cavity_coupling(&p, &l).unwrap(),
                &photon_projector(0, &l),
            ).unwrap();
            let reference = cavity_shift_operator(&p, &l).unwrap();
            prop_assert!((&h - &reference).max_abs() < 1e-12);
        }
    }
}
