//! Simulation of two three-level ions coupled to a strongly detuned, lossy
//! optical cavity, and of the cavity-mediated control-phase gate they support.
//!
//! * [`hilbert`]: composite space ion1 ⊗ ion2 ⊗ cavity and its operators.
//! * [`model`]: Hamiltonians and their effective (adiabatically eliminated) forms.
//! * [`dynamics`]: unitary, Lindblad and quantum-jump time evolution.
//! * [`gates`]: control-phase, Hadamard and CNOT with fidelity scoring.
//! * [`harness`]: experiment configs, presets and CSV/JSON output.

pub mod dynamics;
pub mod error;
pub mod gates;
pub mod harness;
pub mod hilbert;
pub mod model;

pub use error::{Error, Result};
pub use hilbert::{OperatorMatrix, QuantumState, SpaceLayout, StateLabel};
pub use model::{HamiltonianSet, SystemParams};
