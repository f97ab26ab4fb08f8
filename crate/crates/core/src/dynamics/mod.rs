//! Time evolution under a fixed Hamiltonian: closed unitary evolution, the
//! Lindblad master equation, and Monte Carlo wavefunction trajectories.

mod lindblad;
mod mcwf;
mod observables;
mod unitary;

use std::fmt;

use nalgebra::DVector;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{annihilator, expect_dim, sigma, OperatorMatrix, QuantumState, SpaceLayout};
use crate::model::SystemParams;

pub use lindblad::{evolve_lindblad, LindbladDiagnostics, LindbladEvolution, LindbladOptions, LindbladSolver};
pub use mcwf::{evolve_mcwf, JumpRecord, McwfOptions, TrajectoryEnsemble};
pub use observables::{FidelityReference, Observable, ObservableKind, ObservableSpec};
pub use unitary::{evolve_unitary, Evolution, Propagator};
pub(crate) use unitary::evolve_with as unitary_with;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpChannel {
    CavityDecay,
    Ion1Emission,
    Ion2Emission,
    Custom(String),
}

impl fmt::Display for JumpChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::CavityDecay => f.write_str("cavity_decay"),
            Self::Ion1Emission => f.write_str("ion1_emission"),
            Self::Ion2Emission => f.write_str("ion2_emission"),
            Self::Custom(s) => f.write_str(s),
        }
    }
}

#[derive(Clone, Debug)]
pub struct JumpOperator {
    pub operator: OperatorMatrix,
    pub channel: JumpChannel,
}

/// Collapse operators of the open system. Channels with zero rate are left out.
#[derive(Clone, Debug, Default)]
pub struct JumpOperatorSet {
    operators: Vec<JumpOperator>,
}

impl JumpOperatorSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// `√κ a` for cavity loss and `√Γ σⁱ₂₃` for spontaneous `|3⟩ → |2⟩` decay.
    pub fn for_params(params: &SystemParams, layout: &SpaceLayout) -> Result<Self> {
        let mut set = Self::empty();
        if params.kappa > 0.0 {
            set.push(annihilator(layout).scale(params.kappa.sqrt()), JumpChannel::CavityDecay);
        }
        if params.gamma > 0.0 {
            let rate = params.gamma.sqrt();
            set.push(sigma(1, 2, 3, layout)?.scale(rate), JumpChannel::Ion1Emission);
            set.push(sigma(2, 2, 3, layout)?.scale(rate), JumpChannel::Ion2Emission);
        }
        Ok(set)
    }

    pub fn push(&mut self, operator: OperatorMatrix, channel: JumpChannel) {
        self.operators.push(JumpOperator { operator, channel });
    }

    pub fn iter(&self) -> impl Iterator<Item = &JumpOperator> {
        self.operators.iter()
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        self.operators
            .iter()
            .try_for_each(|j| expect_dim(dim, j.operator.dim()))
    }

    /// `Σ L†L`.
    pub(crate) fn rate_operator(&self, dim: usize) -> OperatorMatrix {
        self.operators.iter().fold(OperatorMatrix::zeros(dim), |acc, j| {
            &acc + &(&j.operator.adjoint() * &j.operator)
        })
    }
}

/// Sampled observables aligned with strictly increasing times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub channels: Vec<(String, Vec<f64>)>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, names: &[String]) -> Self {
        let channels = names
            .iter()
            .map(|n| (n.clone(), Vec::with_capacity(times.len())))
            .collect();
        Self { times, channels }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.channels.iter().map(|(n, _)| n.as_str())
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub(crate) fn push_row(&mut self, row: &[f64]) {
        for ((_, values), &x) in self.channels.iter_mut().zip(row) {
            values.push(x);
        }
    }

    /// Appends `other`, shifting its times by `offset`; a leading sample that
    /// coincides with the current last time is dropped.
    pub fn append_shifted(&mut self, other: &TimeSeries, offset: f64) {
        let skip = match (self.times.last(), other.times.first()) {
            (Some(&last), Some(&first)) if (first + offset - last).abs() <= 1e-9 * last.abs().max(1.0) => 1,
            _ => 0,
        };
        self.times.extend(other.times.iter().skip(skip).map(|t| t + offset));
        for ((_, dst), (_, src)) in self.channels.iter_mut().zip(&other.channels) {
            dst.extend(src.iter().skip(skip));
        }
    }

    /// Times strictly increasing, channels aligned and finite.
    pub fn check_well_formed(&self) -> Result<()> {
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("times are not strictly increasing".into()));
        }
        for (name, values) in &self.channels {
            if values.len() != self.times.len() {
                return Err(Error::InvalidArgument(format!("channel {name} is misaligned")));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("channel {name} has non-finite values")));
            }
        }
        Ok(())
    }
}

/// `n_samples` equally spaced times from 0 to `t_final` inclusive.
pub fn sample_times(t_final: f64, n_samples: usize) -> Result<Vec<f64>> {
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(Error::InvalidArgument(format!("t_final must be > 0, got {t_final}")));
    }
    if n_samples < 2 {
        return Err(Error::InvalidArgument(format!("n_samples must be >= 2, got {n_samples}")));
    }
    let last = (n_samples - 1) as f64;
    Ok((0..n_samples)
        .map(|k| if k + 1 == n_samples { t_final } else { t_final * k as f64 / last })
        .collect())
}

/// `|⟨ref|ψ⟩|²` for kets, `⟨ref|ρ|ref⟩` for density matrices.
pub fn fidelity(state: &QuantumState, reference: &QuantumState) -> Result<f64> {
    let r = reference
        .as_ket()
        .ok_or_else(|| Error::InvalidArgument("fidelity reference must be a ket".into()))?;
    expect_dim(r.len(), state.dim())?;
    Ok(fidelity_with_ket(state, r))
}

pub(crate) fn fidelity_with_ket(state: &QuantumState, r: &DVector<C64>) -> f64 {
    let f = match state {
        QuantumState::Ket(v) => r.dotc(v).norm_sqr(),
        QuantumState::Density(rho) => r.dotc(&(rho * r)).re,
    };
    f.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{basis_ket, StateLabel};

    #[test]
    fn fidelity_examples() {
        let l = SpaceLayout::new(2).unwrap();
        let a = StateLabel::Product(1, 1).state(&l).unwrap();
        let b = StateLabel::Product(2, 2).state(&l).unwrap();
        assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(fidelity(&a, &b).unwrap(), 0.0);
        let rho = QuantumState::Density((a.to_density() + b.to_density()) * C64::new(0.5, 0.0));
        assert!((fidelity(&rho, &a).unwrap() - 0.5).abs() < 1e-15);
        assert!(fidelity(&a, &rho).is_err());
        let small = QuantumState::Ket(DVector::from_element(1, C64::new(1.0, 0.0)));
        assert!(matches!(fidelity(&a, &small), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn jump_set_labels_and_rates() {
        let l = SpaceLayout::new(2).unwrap();
        let p = SystemParams::new(1.0, 3.0, 2e-3, 0.5, 5e-4);
        let set = JumpOperatorSet::for_params(&p, &l).unwrap();
        let labels: Vec<String> = set.iter().map(|j| j.channel.to_string()).collect();
        assert_eq!(labels, ["cavity_decay", "ion1_emission", "ion2_emission"]);
        let one_photon = basis_ket(1, 1, 1, &l).unwrap();
        let out = set.iter().next().unwrap().operator.apply(&one_photon);
        assert!((out.norm() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(JumpOperatorSet::for_params(&p.with_decay(0.0, 0.0), &l).unwrap().is_empty());
    }

    #[test]
    fn sample_grid() {
        let t = sample_times(2.0, 5).unwrap();
        assert_eq!(t, [0.0, 0.5, 1.0, 1.5, 2.0]);
        assert!(sample_times(0.0, 5).is_err());
        assert!(sample_times(1.0, 1).is_err());
    }

    #[test]
    fn append_drops_duplicate_boundary() {
        let names = vec!["x".to_string()];
        let mut a = TimeSeries::new(vec![0.0, 1.0], &names);
        a.push_row(&[1.0]);
        a.push_row(&[2.0]);
        let mut b = TimeSeries::new(vec![0.0, 1.0], &names);
        b.push_row(&[2.0]);
        b.push_row(&[3.0]);
        a.append_shifted(&b, 1.0);
        assert_eq!(a.times, [0.0, 1.0, 2.0]);
        assert_eq!(a.channel("x").unwrap(), [1.0, 2.0, 3.0]);
        a.check_well_formed().unwrap();
    }
}
