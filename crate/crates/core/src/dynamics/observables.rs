use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use super::unitary::Propagator;
use crate::error::{Error, Result};
use crate::hilbert::{number_operator, photon_projector, trace_of_product, OperatorMatrix, QuantumState, SpaceLayout, StateLabel};

/// Layout-independent description of an output channel, parsed from names
/// such as `pop_bell_plus`, `p_zero_photons` or `fidelity`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ObservableSpec {
    Population(StateLabel),
    ZeroPhotons,
    OnePhoton,
    PhotonNumber,
    Fidelity,
}

impl fmt::Display for ObservableSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Population(s) => write!(f, "pop_{s}"),
            Self::ZeroPhotons => f.write_str("p_zero_photons"),
            Self::OnePhoton => f.write_str("p_one_photon"),
            Self::PhotonNumber => f.write_str("n_photons"),
            Self::Fidelity => f.write_str("fidelity"),
        }
    }
}

impl FromStr for ObservableSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p_zero_photons" => Ok(Self::ZeroPhotons),
            "p_one_photon" => Ok(Self::OnePhoton),
            "n_photons" => Ok(Self::PhotonNumber),
            "fidelity" => Ok(Self::Fidelity),
            _ => s
                .strip_prefix("pop_")
                .and_then(|label| label.parse().ok())
                .map(Self::Population)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown observable '{s}'"))),
        }
    }
}

impl ObservableSpec {
    /// Builds the concrete observable; `fidelity` needs a reference.
    pub fn resolve(&self, layout: &SpaceLayout, reference: Option<&FidelityReference>) -> Result<Observable> {
        let name = self.to_string();
        let kind = match self {
            Self::Population(label) => ObservableKind::Expectation(label.population_operator(layout)?),
            Self::ZeroPhotons => ObservableKind::Expectation(photon_projector(0, layout)),
            Self::OnePhoton => ObservableKind::Expectation(photon_projector(1, layout)),
            Self::PhotonNumber => ObservableKind::Expectation(number_operator(layout)),
            Self::Fidelity => ObservableKind::Fidelity(
                reference
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument("fidelity channel needs a reference".into()))?,
            ),
        };
        Ok(Observable { name, kind })
    }
}

/// Reference ket used by a fidelity channel, possibly time dependent.
#[derive(Clone, Debug)]
pub enum FidelityReference {
    Fixed(DVector<C64>),
    /// `e^{−iHt} ψ₀` under the given propagator.
    Evolving {
        propagator: Arc<Propagator>,
        initial: DVector<C64>,
    },
    /// `Gᵏ ψ₀` with `k = ⌊t / period⌋`: the ideal gate applied once per completed period.
    Stroboscopic {
        gate: Arc<OperatorMatrix>,
        period: f64,
        initial: DVector<C64>,
    },
}

impl FidelityReference {
    pub fn at(&self, t: f64) -> DVector<C64> {
        match self {
            Self::Fixed(v) => v.clone(),
            Self::Evolving { propagator, initial } => propagator.evolve(initial, t),
            Self::Stroboscopic { gate, period, initial } => {
                // Small slack so a sample landing on a period boundary counts the gate.
                let k = (t / period + 1e-9).floor().max(0.0) as usize;
                (0..k).fold(initial.clone(), |v, _| gate.apply(&v))
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum ObservableKind {
    /// Real part of `⟨O⟩`.
    Expectation(OperatorMatrix),
    Fidelity(FidelityReference),
}

/// Named channel evaluated on states at sample times. Every kind is linear
/// in the density matrix, so ensemble averages are meaningful.
#[derive(Clone, Debug)]
pub struct Observable {
    pub name: String,
    pub kind: ObservableKind,
}

impl Observable {
    pub fn expectation(name: impl Into<String>, op: OperatorMatrix) -> Self {
        Self {
            name: name.into(),
            kind: ObservableKind::Expectation(op),
        }
    }

    pub fn fidelity(name: impl Into<String>, reference: FidelityReference) -> Self {
        Self {
            name: name.into(),
            kind: ObservableKind::Fidelity(reference),
        }
    }

    pub(crate) fn eval_ket(&self, psi: &DVector<C64>, t: f64) -> f64 {
        match &self.kind {
            ObservableKind::Expectation(op) => psi.dotc(&op.apply(psi)).re,
            ObservableKind::Fidelity(r) => r.at(t).dotc(psi).norm_sqr(),
        }
    }

    pub(crate) fn eval_density(&self, rho: &DMatrix<C64>, t: f64) -> f64 {
        match &self.kind {
            ObservableKind::Expectation(op) => trace_of_product(rho, op.matrix()).re,
            ObservableKind::Fidelity(r) => {
                let v = r.at(t);
                v.dotc(&(rho * &v)).re
            }
        }
    }

    pub fn eval(&self, state: &QuantumState, t: f64) -> f64 {
        match state {
            QuantumState::Ket(v) => self.eval_ket(v, t),
            QuantumState::Density(m) => self.eval_density(m, t),
        }
    }
}

pub(crate) fn names(observables: &[Observable]) -> Vec<String> {
    observables.iter().map(|o| o.name.clone()).collect()
}
