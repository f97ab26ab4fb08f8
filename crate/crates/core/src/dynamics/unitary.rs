use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use super::observables::names;
use super::{sample_times, Observable, TimeSeries};
use crate::error::{Error, Result};
use crate::hilbert::{expect_dim, OperatorMatrix, QuantumState, NORM_TOL};

/// `e^{−iHt}` for a time-independent Hermitian `H`, from its eigendecomposition.
#[derive(Clone, Debug)]
pub struct Propagator {
    energies: DVector<f64>,
    vectors: DMatrix<C64>,
}

impl Propagator {
    pub fn new(h: &OperatorMatrix) -> Result<Self> {
        h.ensure_hermitian()?;
        let eig = SymmetricEigen::new(h.matrix().clone());
        Ok(Self {
            energies: eig.eigenvalues,
            vectors: eig.eigenvectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &DVector<f64> {
        &self.energies
    }

    pub fn evolve(&self, psi: &DVector<C64>, t: f64) -> DVector<C64> {
        let mut coeffs = self.vectors.ad_mul(psi);
        for (c, &e) in coeffs.iter_mut().zip(self.energies.iter()) {
            *c *= C64::from_polar(1.0, -e * t);
        }
        &self.vectors * coeffs
    }

    /// Dense `e^{−iHt}`.
    pub fn unitary(&self, t: f64) -> OperatorMatrix {
        let phases = DMatrix::from_diagonal(&self.energies.map(|e| C64::from_polar(1.0, -e * t)));
        OperatorMatrix::new(&self.vectors * phases * self.vectors.adjoint())
    }
}

/// Sampled evolution together with the state at the final time.
#[derive(Clone, Debug)]
pub struct Evolution {
    pub series: TimeSeries,
    pub final_state: QuantumState,
}

/// Closed evolution `ψ(t_k) = e^{−iH t_k} ψ₀`, each sample computed directly
/// from `ψ₀`.
pub fn evolve_unitary(
    h: &OperatorMatrix,
    psi0: &QuantumState,
    t_final: f64,
    n_samples: usize,
    observables: &[Observable],
) -> Result<Evolution> {
    let propagator = Propagator::new(h)?;
    evolve_with(&propagator, psi0, t_final, n_samples, observables)
}

pub(crate) fn evolve_with(
    propagator: &Propagator,
    psi0: &QuantumState,
    t_final: f64,
    n_samples: usize,
    observables: &[Observable],
) -> Result<Evolution> {
    let psi0 = psi0
        .as_ket()
        .ok_or_else(|| Error::InvalidArgument("unitary evolution needs a ket".into()))?;
    expect_dim(propagator.dim(), psi0.len())?;
    let times = sample_times(t_final, n_samples)?;
    let mut series = TimeSeries::new(times.clone(), &names(observables));
    let mut last = psi0.clone();
    for &t in &times {
        let psi = propagator.evolve(psi0, t);
        let norm_err = (psi.norm_squared() - 1.0).abs();
        if norm_err > NORM_TOL {
            return Err(Error::NotNormalized { value: psi.norm_squared() });
        }
        let row: Vec<f64> = observables.iter().map(|o| o.eval_ket(&psi, t)).collect();
        series.push_row(&row);
        last = psi;
    }
    Ok(Evolution {
        series,
        final_state: QuantumState::Ket(last),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_level(omega: f64) -> OperatorMatrix {
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 1)] = C64::new(omega, 0.0);
        m[(1, 0)] = C64::new(omega, 0.0);
        OperatorMatrix::hermitian(m).unwrap()
    }

    fn projector(i: usize) -> OperatorMatrix {
        let mut m = DMatrix::zeros(2, 2);
        m[(i, i)] = C64::new(1.0, 0.0);
        OperatorMatrix::hermitian(m).unwrap()
    }

    #[test]
    fn rabi_oscillation_matches_closed_form() {
        let omega = 0.37;
        let h = two_level(omega);
        let psi0 = QuantumState::Ket(DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]));
        let obs = [Observable::expectation("pa", projector(0))];
        let evo = evolve_unitary(&h, &psi0, 20.0, 101, &obs).unwrap();
        for (t, p) in evo.series.times.iter().zip(evo.series.channel("pa").unwrap()) {
            assert!((p - (omega * t).cos().powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_time_returns_initial_state() {
        let h = two_level(1.0);
        let psi0 = QuantumState::Ket(DVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]));
        let evo = evolve_unitary(&h, &psi0, 1e-15, 2, &[]).unwrap();
        let diff = evo.final_state.as_ket().unwrap() - psi0.as_ket().unwrap();
        assert!(diff.norm() < 1e-12);
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 1)] = C64::new(1.0, 0.0);
        let h = OperatorMatrix::new(m);
        let psi0 = QuantumState::Ket(DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]));
        assert!(matches!(
            evolve_unitary(&h, &psi0, 1.0, 2, &[]),
            Err(Error::NotHermitian { .. })
        ));
    }
}
