//! The cavity-mediated control-phase gate, ideal single-qubit Hadamards and
//! the CNOT built from them, scored against the ideal maps.
//!
//! Single-qubit gates are ideal and instantaneous; the laser drive is only on
//! during the control-phase window of length `π / (√2 Ω)`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::dynamics::{
    evolve_mcwf, fidelity, FidelityReference, JumpOperatorSet, JumpRecord, LindbladDiagnostics, LindbladOptions,
    LindbladSolver, McwfOptions, Observable, ObservableSpec, Propagator, TimeSeries,
};
use crate::error::{Error, Result};
use crate::hilbert::{expectation, photon_projector, sigma, OperatorMatrix, QuantumState, SpaceLayout, StateLabel};
use crate::model::{HamiltonianSet, SystemParams};

/// Largest weight a gate input may have outside qubit ⊗ vacuum.
pub const QUBIT_SUPPORT_TOL: f64 = 1e-6;
/// Largest level-3 weight tolerated by [`apply_hadamard`].
pub const LEVEL3_TOL: f64 = 1e-9;

/// Dynamics used to run a gate.
#[derive(Clone, Debug, PartialEq)]
pub enum Solver {
    /// First-order effective Hamiltonian on the unshifted subspace.
    Effective,
    /// Full rotating-frame Hamiltonian with drive, no dissipation.
    FullUnitary,
    Lindblad(LindbladOptions),
    Mcwf(McwfOptions),
}

impl Solver {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Effective => "effective",
            Self::FullUnitary => "full_unitary",
            Self::Lindblad(_) => "lindblad",
            Self::Mcwf(_) => "mcwf",
        }
    }

    /// Lindblad solver with the step size derived from `params`.
    pub fn lindblad_for(params: &SystemParams) -> Self {
        Self::Lindblad(LindbladOptions::for_params(params))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct McwfSummary {
    pub n_traj: usize,
    pub seed: u64,
    pub dt: f64,
    pub total_jumps: usize,
    pub max_step_jump_probability: f64,
}

/// Result of evolving one initial state with any [`Solver`].
#[derive(Clone, Debug)]
pub struct SolverOutput {
    pub series: TimeSeries,
    /// Standard errors of the ensemble means (trajectory solver only).
    pub std_errors: Option<TimeSeries>,
    pub final_state: QuantumState,
    pub lindblad: Option<LindbladDiagnostics>,
    pub mcwf: Option<McwfSummary>,
    pub jumps: Option<Vec<Vec<JumpRecord>>>,
    pub warnings: Vec<String>,
}

impl SolverOutput {
    fn closed(series: TimeSeries, final_state: QuantumState) -> Self {
        Self {
            series,
            std_errors: None,
            final_state,
            lindblad: None,
            mcwf: None,
            jumps: None,
            warnings: Vec::new(),
        }
    }
}

/// Hamiltonians, propagators and collapse operators for one parameter set.
#[derive(Debug)]
pub struct GateSimulator {
    params: SystemParams,
    set: HamiltonianSet,
    jumps: JumpOperatorSet,
    effective: Arc<Propagator>,
    full: Propagator,
    lindblad: OnceLock<LindbladSolver>,
}

impl GateSimulator {
    pub fn new(params: &SystemParams) -> Result<Self> {
        let set = HamiltonianSet::build(params)?;
        let jumps = JumpOperatorSet::for_params(params, &set.layout)?;
        let effective = Arc::new(Propagator::new(&set.h_gate)?);
        let full = Propagator::new(&set.h_driven())?;
        Ok(Self {
            params: *params,
            set,
            jumps,
            effective,
            full,
            lindblad: OnceLock::new(),
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn layout(&self) -> SpaceLayout {
        self.set.layout
    }

    pub fn hamiltonians(&self) -> &HamiltonianSet {
        &self.set
    }

    pub fn jumps(&self) -> &JumpOperatorSet {
        &self.jumps
    }

    pub fn gate_time(&self) -> f64 {
        self.params.gate_time()
    }

    /// `e^{−iH″t} ψ₀` under the effective gate Hamiltonian.
    pub fn effective_reference(&self, psi0: &DVector<C64>) -> FidelityReference {
        FidelityReference::Evolving {
            propagator: Arc::clone(&self.effective),
            initial: psi0.clone(),
        }
    }

    /// The ideal gate applied once per completed gate period.
    pub fn stroboscopic_reference(&self, psi0: &DVector<C64>) -> FidelityReference {
        FidelityReference::Stroboscopic {
            gate: Arc::new(ideal_control_phase(&self.set.layout)),
            period: self.gate_time(),
            initial: psi0.clone(),
        }
    }

    fn lindblad_solver(&self) -> Result<&LindbladSolver> {
        if let Some(s) = self.lindblad.get() {
            return Ok(s);
        }
        let solver = LindbladSolver::new(&self.set.h_driven(), &self.jumps)?;
        Ok(self.lindblad.get_or_init(|| solver))
    }

    pub fn evolve(
        &self,
        psi0: &QuantumState,
        t_final: f64,
        n_samples: usize,
        observables: &[Observable],
        solver: &Solver,
    ) -> Result<SolverOutput> {
        let mut out = self.evolve_batch(&[(psi0.clone(), observables.to_vec())], t_final, n_samples, solver)?;
        Ok(out.remove(0))
    }

    /// Evolves several initial states; the Lindblad propagator is shared.
    pub fn evolve_batch(
        &self,
        inputs: &[(QuantumState, Vec<Observable>)],
        t_final: f64,
        n_samples: usize,
        solver: &Solver,
    ) -> Result<Vec<SolverOutput>> {
        match solver {
            Solver::Effective | Solver::FullUnitary => {
                let propagator = if matches!(solver, Solver::Effective) {
                    self.effective.as_ref()
                } else {
                    &self.full
                };
                inputs
                    .iter()
                    .map(|(psi0, obs)| {
                        let evo = crate::dynamics::unitary_with(propagator, psi0, t_final, n_samples, obs)?;
                        Ok(SolverOutput::closed(evo.series, evo.final_state))
                    })
                    .collect()
            }
            Solver::Lindblad(options) => {
                let refs: Vec<(&QuantumState, &[Observable])> =
                    inputs.iter().map(|(s, o)| (s, o.as_slice())).collect();
                let runs = self.lindblad_solver()?.evolve_batch(&refs, t_final, n_samples, options)?;
                Ok(runs
                    .into_iter()
                    .map(|r| SolverOutput {
                        lindblad: Some(r.diagnostics),
                        ..SolverOutput::closed(r.series, r.final_state)
                    })
                    .collect())
            }
            Solver::Mcwf(options) => inputs
                .iter()
                .map(|(psi0, obs)| {
                    let ens = evolve_mcwf(&self.set.h_driven(), &self.jumps, psi0, t_final, n_samples, obs, options)?;
                    Ok(SolverOutput {
                        series: ens.series,
                        std_errors: Some(ens.std_errors),
                        final_state: ens.final_state,
                        lindblad: None,
                        mcwf: Some(McwfSummary {
                            n_traj: ens.n_traj,
                            seed: ens.seed,
                            dt: ens.dt,
                            total_jumps: ens.jumps.iter().map(Vec::len).sum(),
                            max_step_jump_probability: ens.max_step_jump_probability,
                        }),
                        jumps: Some(ens.jumps),
                        warnings: ens.warnings,
                    })
                })
                .collect(),
        }
    }

    fn run_gate(
        &self,
        psi0: &QuantumState,
        solver: &Solver,
        frame: Option<&OperatorMatrix>,
        ideal: &OperatorMatrix,
        options: &GateOptions,
    ) -> Result<GateReport> {
        let layout = self.set.layout;
        check_qubit_support(psi0, &layout)?;
        let mut inputs = vec![("input".to_string(), psi0.clone())];
        if options.evaluate_probes {
            for (name, ket) in probe_states(&layout)? {
                inputs.push((name, QuantumState::Ket(ket)));
            }
        }
        let leakage = ObservableSpec::OnePhoton.resolve(&layout, None)?;
        let batch = inputs
            .iter()
            .map(|(_, s)| {
                let start = match frame {
                    Some(h) => s.transform(h)?,
                    None => s.clone(),
                };
                Ok((start, vec![leakage.clone()]))
            })
            .collect::<Result<Vec<_>>>()?;
        let outputs = self.evolve_batch(&batch, self.gate_time(), options.n_samples, solver)?;

        let mut scored = Vec::with_capacity(inputs.len());
        for ((name, start), out) in inputs.iter().zip(&outputs) {
            let final_state = match frame {
                Some(h) => out.final_state.transform(h)?,
                None => out.final_state.clone(),
            };
            let target = start.transform(ideal)?;
            let f = fidelity(&final_state, &target)?;
            let leak = out.series.channel("p_one_photon").map_or(0.0, |v| v.iter().copied().fold(0.0, f64::max));
            scored.push((name.clone(), f, leak, final_state));
        }
        let (_, input_fidelity, photon_leakage, final_state) = scored.remove(0);
        let probe_fidelities: Vec<(String, f64)> = scored.into_iter().map(|(n, f, _, _)| (n, f)).collect();
        let process_fidelity_proxy = (!probe_fidelities.is_empty())
            .then(|| probe_fidelities.iter().map(|(_, f)| f).sum::<f64>() / probe_fidelities.len() as f64);
        let warnings = outputs.iter().flat_map(|o| o.warnings.iter().cloned()).collect();
        Ok(GateReport {
            final_state,
            fidelity: input_fidelity,
            probe_fidelities,
            process_fidelity_proxy,
            photon_leakage,
            duration: self.gate_time(),
            solver: solver.name(),
            warnings,
        })
    }

    pub fn control_phase(&self, psi0: &QuantumState, solver: &Solver, options: &GateOptions) -> Result<GateReport> {
        self.run_gate(psi0, solver, None, &ideal_control_phase(&self.set.layout), options)
    }

    pub fn cnot(&self, control: usize, psi0: &QuantumState, solver: &Solver, options: &GateOptions) -> Result<GateReport> {
        let layout = self.set.layout;
        let target = target_of(control)?;
        let h = hadamard_operator(target, &layout)?;
        self.run_gate(psi0, solver, Some(&h), &ideal_cnot(control, &layout)?, options)
    }

    /// Continuous evolution over `n_gates` gate periods with the fidelity
    /// against a reference sampled throughout.
    pub fn repeat(&self, psi0: &QuantumState, n_gates: usize, solver: &Solver, options: &RepeatOptions) -> Result<SolverOutput> {
        if n_gates == 0 {
            return Err(Error::InvalidArgument("n_gates must be >= 1".into()));
        }
        if options.samples_per_gate == 0 {
            return Err(Error::InvalidArgument("samples_per_gate must be >= 1".into()));
        }
        let layout = self.set.layout;
        check_qubit_support(psi0, &layout)?;
        let ket = psi0
            .as_ket()
            .ok_or_else(|| Error::InvalidArgument("repeated gate needs a ket input".into()))?;
        let reference = match options.reference {
            ReferenceMode::Effective => self.effective_reference(ket),
            ReferenceMode::Stroboscopic => self.stroboscopic_reference(ket),
        };
        let mut observables = vec![Observable::fidelity("fidelity", reference)];
        for spec in &options.channels {
            if *spec != ObservableSpec::Fidelity {
                observables.push(spec.resolve(&layout, None)?);
            }
        }
        let n_samples = n_gates * options.samples_per_gate + 1;
        self.evolve(psi0, n_gates as f64 * self.gate_time(), n_samples, &observables, solver)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateOptions {
    /// Samples over the gate window; the photon leakage is the maximum over them.
    pub n_samples: usize,
    pub evaluate_probes: bool,
}

impl Default for GateOptions {
    fn default() -> Self {
        Self {
            n_samples: 201,
            evaluate_probes: true,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    /// Continuous ideal evolution under the effective gate Hamiltonian.
    #[default]
    Effective,
    /// Ideal gate applied once per completed period.
    Stroboscopic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RepeatOptions {
    pub samples_per_gate: usize,
    pub reference: ReferenceMode,
    /// Extra channels recorded next to `fidelity`.
    pub channels: Vec<ObservableSpec>,
}

impl Default for RepeatOptions {
    fn default() -> Self {
        Self {
            samples_per_gate: 100,
            reference: ReferenceMode::Effective,
            channels: vec![
                ObservableSpec::Population(StateLabel::BellPlus),
                ObservableSpec::Population(StateLabel::BellMinus),
                ObservableSpec::ZeroPhotons,
            ],
        }
    }
}

#[derive(Clone, Debug)]
pub struct GateReport {
    pub final_state: QuantumState,
    /// Fidelity of the evolved input against the ideal output.
    pub fidelity: f64,
    /// Fidelities of the eight probe states (four basis states, four product
    /// states of `(|1⟩ ± |2⟩)/√2`).
    pub probe_fidelities: Vec<(String, f64)>,
    /// Mean over the probes; `None` when probes were skipped.
    pub process_fidelity_proxy: Option<f64>,
    /// Largest one-photon probability sampled during the input's evolution.
    pub photon_leakage: f64,
    pub duration: f64,
    pub solver: &'static str,
    pub warnings: Vec<String>,
}

/// Kind of gate and how it is realized.
#[derive(Clone, Debug, PartialEq)]
pub enum GateKind {
    ControlPhase,
    Hadamard { ion: usize },
    Cnot { control: usize },
    /// Ideal unitary on the 4-dim qubit subspace, basis `|11⟩, |12⟩, |21⟩, |22⟩`.
    Custom(DMatrix<C64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateSpec {
    pub kind: GateKind,
    pub duration: f64,
    pub solver: Solver,
}

impl GateSpec {
    pub fn control_phase(params: &SystemParams, solver: Solver) -> Self {
        Self {
            kind: GateKind::ControlPhase,
            duration: params.gate_time(),
            solver,
        }
    }

    pub fn cnot(params: &SystemParams, control: usize, solver: Solver) -> Self {
        Self {
            kind: GateKind::Cnot { control },
            duration: params.gate_time(),
            solver,
        }
    }

    pub fn hadamard(ion: usize) -> Self {
        Self {
            kind: GateKind::Hadamard { ion },
            duration: 0.0,
            solver: Solver::Effective,
        }
    }

    pub fn custom(unitary: DMatrix<C64>) -> Result<Self> {
        if unitary.shape() != (4, 4) {
            return Err(Error::InvalidArgument("custom gate must be 4×4".into()));
        }
        let dev = crate::hilbert::max_abs(&(unitary.adjoint() * &unitary - DMatrix::identity(4, 4)));
        if dev > 1e-10 {
            return Err(Error::InvalidArgument(format!("custom gate is not unitary ({dev:e})")));
        }
        Ok(Self {
            kind: GateKind::Custom(unitary),
            duration: 0.0,
            solver: Solver::Effective,
        })
    }

    pub fn apply(&self, params: &SystemParams, psi0: &QuantumState) -> Result<GateReport> {
        let options = GateOptions::default();
        match &self.kind {
            GateKind::ControlPhase => GateSimulator::new(params)?.control_phase(psi0, &self.solver, &options),
            GateKind::Cnot { control } => GateSimulator::new(params)?.cnot(*control, psi0, &self.solver, &options),
            GateKind::Hadamard { ion } => {
                let layout = SpaceLayout::from_dim(psi0.dim())?;
                instantaneous_report(psi0, &hadamard_operator(*ion, &layout)?)
            }
            GateKind::Custom(u) => {
                let layout = SpaceLayout::from_dim(psi0.dim())?;
                instantaneous_report(psi0, &embed_qubit_operator(u, &layout)?)
            }
        }
    }
}

fn instantaneous_report(psi0: &QuantumState, op: &OperatorMatrix) -> Result<GateReport> {
    let final_state = psi0.transform(op)?;
    let target = final_state.clone();
    let f = match &target {
        QuantumState::Ket(_) => fidelity(&final_state, &target)?,
        QuantumState::Density(_) => 1.0,
    };
    Ok(GateReport {
        final_state,
        fidelity: f,
        probe_fidelities: Vec::new(),
        process_fidelity_proxy: None,
        photon_leakage: 0.0,
        duration: 0.0,
        solver: "ideal",
        warnings: Vec::new(),
    })
}

fn target_of(control: usize) -> Result<usize> {
    match control {
        1 => Ok(2),
        2 => Ok(1),
        _ => Err(Error::InvalidArgument(format!("control ion must be 1 or 2, got {control}"))),
    }
}

/// Weight of `state` outside span{|ij, 0⟩ : i, j ∈ {1, 2}}.
pub fn weight_outside_qubit_vacuum(state: &QuantumState, layout: &SpaceLayout) -> Result<f64> {
    let kets = StateLabel::QUBIT_BASIS
        .iter()
        .map(|s| s.ket(0, layout))
        .collect::<Result<Vec<_>>>()?;
    let p = crate::hilbert::projector_onto(&kets, layout.total_dim());
    Ok(state.weight() - expectation(state, &p)?.re)
}

fn check_qubit_support(state: &QuantumState, layout: &SpaceLayout) -> Result<()> {
    crate::hilbert::expect_dim(layout.total_dim(), state.dim())?;
    let weight = weight_outside_qubit_vacuum(state, layout)?;
    if weight > QUBIT_SUPPORT_TOL {
        return Err(Error::OutsideSubspace {
            weight,
            subspace: "qubit ⊗ vacuum",
        });
    }
    Ok(())
}

/// `diag(1, 1, 1, −1)` on the qubits: `−1` on every `|22, n⟩`, identity elsewhere.
pub fn ideal_control_phase(layout: &SpaceLayout) -> OperatorMatrix {
    let diag = DVector::from_iterator(
        layout.total_dim(),
        layout
            .basis()
            .map(|(a, b, _)| C64::new(if (a, b) == (2, 2) { -1.0 } else { 1.0 }, 0.0)),
    );
    OperatorMatrix::hermitian(DMatrix::from_diagonal(&diag)).expect("diagonal real matrix")
}

/// `(|1⟩⟨1| + |1⟩⟨2| + |2⟩⟨1| − |2⟩⟨2|)/√2` on one ion, identity on its level 3.
pub fn hadamard_operator(ion: usize, layout: &SpaceLayout) -> Result<OperatorMatrix> {
    let s = |a, b| sigma(ion, a, b, layout);
    let qubit = &(&(&s(1, 1)? + &s(1, 2)?) + &s(2, 1)?) - &s(2, 2)?;
    let h = &qubit.scale(FRAC_1_SQRT_2) + &s(3, 3)?;
    Ok(h.with_hermitian_check())
}

/// Ideal Hadamard on one ion's qubit levels.
pub fn apply_hadamard(ion: usize, state: &QuantumState) -> Result<QuantumState> {
    let layout = SpaceLayout::from_dim(state.dim())?;
    let level3 = expectation(state, &sigma(ion, 3, 3, &layout)?)?.re;
    if level3 > LEVEL3_TOL {
        return Err(Error::OutsideSubspace {
            weight: level3,
            subspace: "qubit levels {1, 2} of the target ion",
        });
    }
    state.transform(&hadamard_operator(ion, &layout)?)
}

/// Standard CNOT on the qubit basis `|11⟩, |12⟩, |21⟩, |22⟩`.
pub fn qubit_cnot(control: usize) -> Result<DMatrix<C64>> {
    let swap = match control {
        1 => (2, 3),
        2 => (1, 3),
        _ => return Err(Error::InvalidArgument(format!("control ion must be 1 or 2, got {control}"))),
    };
    let mut m = DMatrix::zeros(4, 4);
    for i in 0..4 {
        let j = if i == swap.0 {
            swap.1
        } else if i == swap.1 {
            swap.0
        } else {
            i
        };
        m[(j, i)] = C64::new(1.0, 0.0);
    }
    Ok(m)
}

/// `H_t · CZ · H_t` composed on the qubit basis. The Hadamards are kept
/// unnormalized and the product is divided by 2, so the result is exact.
pub fn composed_cnot(control: usize) -> Result<DMatrix<C64>> {
    let target = target_of(control)?;
    let h2 = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
    let id2 = DMatrix::<f64>::identity(2, 2);
    let h = if target == 1 { h2.kronecker(&id2) } else { id2.kronecker(&h2) };
    let cz = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 1.0, -1.0]));
    let product = &h * cz * &h / 2.0;
    Ok(product.map(|x| C64::new(x, 0.0)))
}

/// Lifts a 4×4 qubit operator to the full space, acting on every photon
/// number and as identity on states with an ion in level 3.
pub fn embed_qubit_operator(u: &DMatrix<C64>, layout: &SpaceLayout) -> Result<OperatorMatrix> {
    let dim = layout.total_dim();
    let mut m = DMatrix::<C64>::identity(dim, dim);
    let labels = [(1, 1), (1, 2), (2, 1), (2, 2)];
    for n in 0..layout.fock_dim() {
        let idx = labels
            .iter()
            .map(|&(a, b)| layout.index(a, b, n))
            .collect::<Result<Vec<_>>>()?;
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                m[(i, j)] = u[(r, c)];
            }
        }
    }
    Ok(OperatorMatrix::new(m))
}

pub fn ideal_cnot(control: usize, layout: &SpaceLayout) -> Result<OperatorMatrix> {
    embed_qubit_operator(&qubit_cnot(control)?, layout)
}

/// Four computational basis states and the four product states
/// `(|1⟩ ± |2⟩)(|1⟩ ± |2⟩)/2`, all with zero photons.
pub fn probe_states(layout: &SpaceLayout) -> Result<Vec<(String, DVector<C64>)>> {
    let mut out = Vec::with_capacity(8);
    for label in StateLabel::QUBIT_BASIS {
        out.push((label.to_string(), label.ket(0, layout)?));
    }
    for (name, s1, s2) in [("pp", 1.0, 1.0), ("pm", 1.0, -1.0), ("mp", -1.0, 1.0), ("mm", -1.0, -1.0)] {
        let mut v = DVector::zeros(layout.total_dim());
        for (a, ca) in [(1, 1.0), (2, s1)] {
            for (b, cb) in [(1, 1.0), (2, s2)] {
                v[layout.index(a, b, 0)?] = C64::new(0.5 * ca * cb, 0.0);
            }
        }
        out.push((name.to_string(), v));
    }
    Ok(out)
}

pub fn apply_control_phase(params: &SystemParams, psi0: &QuantumState, solver: &Solver) -> Result<GateReport> {
    GateSimulator::new(params)?.control_phase(psi0, solver, &GateOptions::default())
}

pub fn apply_cnot(params: &SystemParams, control: usize, psi0: &QuantumState, solver: &Solver) -> Result<GateReport> {
    GateSimulator::new(params)?.cnot(control, psi0, solver, &GateOptions::default())
}

pub fn repeat_gate(params: &SystemParams, psi0: &QuantumState, n_gates: usize, solver: &Solver) -> Result<SolverOutput> {
    GateSimulator::new(params)?.repeat(psi0, n_gates, solver, &RepeatOptions::default())
}

/// Optional duration scan: probe-averaged fidelity of the full closed
/// dynamics for durations in `T·[1 − span, 1 + span]`. Returns the best
/// `(duration, fidelity)`. Not used by the default protocol.
pub fn calibrate_gate_time(params: &SystemParams, span: f64, n_points: usize) -> Result<(f64, f64)> {
    if n_points < 2 || !(0.0..1.0).contains(&span) {
        return Err(Error::InvalidArgument("need n_points >= 2 and 0 <= span < 1".into()));
    }
    let sim = GateSimulator::new(params)?;
    let layout = sim.layout();
    let probes = probe_states(&layout)?;
    let ideal = ideal_control_phase(&layout);
    let t0 = sim.gate_time();
    let mut best = (t0, f64::NEG_INFINITY);
    for k in 0..n_points {
        let t = t0 * (1.0 - span + 2.0 * span * k as f64 / (n_points - 1) as f64);
        let mean = probes
            .iter()
            .map(|(_, v)| sim.full.evolve(v, t).dotc(&ideal.apply(v)).norm_sqr())
            .sum::<f64>()
            / probes.len() as f64;
        if mean > best.1 {
            best = (t, mean);
        }
    }
    Ok(best)
}

/// One-photon probability operator (used for leakage reporting).
pub fn one_photon_projector(layout: &SpaceLayout) -> OperatorMatrix {
    photon_projector(1, layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{basis_ket, ion_exchange};

    fn fig4() -> SystemParams {
        SystemParams::new(1.0, 3.0, 2.0e-3, 0.0, 0.0)
    }

    fn layout() -> SpaceLayout {
        SpaceLayout::new(2).unwrap()
    }

    #[test]
    fn effective_gate_leaves_11_untouched() {
        let l = layout();
        let psi = StateLabel::Product(1, 1).state(&l).unwrap();
        let report = apply_control_phase(&fig4(), &psi, &Solver::Effective).unwrap();
        assert!((report.fidelity - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ideal_map_on_bell_plus() {
        let l = layout();
        let out = StateLabel::BellPlus.state(&l).unwrap().transform(&ideal_control_phase(&l)).unwrap();
        let expected = StateLabel::BellMinus.ket(0, &l).unwrap();
        assert!((out.as_ket().unwrap() - expected).norm() < 1e-15);
    }

    #[test]
    fn effective_gate_phase_convention() {
        let l = layout();
        let sim = GateSimulator::new(&fig4()).unwrap();
        let coeffs = [C64::new(0.3, 0.1), C64::new(-0.2, 0.5), C64::new(0.4, -0.3), C64::new(0.1, 0.6)];
        let mut v = DVector::zeros(l.total_dim());
        for (c, s) in coeffs.iter().zip(StateLabel::QUBIT_BASIS) {
            v += s.ket(0, &l).unwrap() * *c;
        }
        let psi = QuantumState::ket_normalized(v).unwrap();
        let report = sim.control_phase(&psi, &Solver::Effective, &GateOptions::default()).unwrap();
        assert!((report.fidelity - 1.0).abs() < 1e-8);
        for (_, f) in &report.probe_fidelities {
            assert!((f - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn full_solver_bell_fidelity() {
        let l = layout();
        let psi = StateLabel::BellPlus.state(&l).unwrap();
        let report = apply_control_phase(&fig4(), &psi, &Solver::FullUnitary).unwrap();
        assert!(report.fidelity >= 0.99, "{}", report.fidelity);
        assert!(report.photon_leakage > 0.0 && report.photon_leakage < 1e-3);
    }

    #[test]
    fn rejects_input_outside_qubit_vacuum() {
        let l = layout();
        let psi = QuantumState::Ket(basis_ket(2, 3, 0, &l).unwrap());
        assert!(matches!(
            apply_control_phase(&fig4(), &psi, &Solver::Effective),
            Err(Error::OutsideSubspace { .. })
        ));
        let photon = QuantumState::Ket(basis_ket(1, 1, 1, &l).unwrap());
        assert!(apply_control_phase(&fig4(), &photon, &Solver::Effective).is_err());
    }

    #[test]
    fn hadamard_examples() {
        let l = layout();
        let one = StateLabel::Product(1, 1).state(&l).unwrap();
        let out = apply_hadamard(1, &one).unwrap();
        let expected = (basis_ket(1, 1, 0, &l).unwrap() + basis_ket(2, 1, 0, &l).unwrap()) * C64::new(FRAC_1_SQRT_2, 0.0);
        assert!((out.as_ket().unwrap() - &expected).norm() < 1e-15);
        let back = apply_hadamard(1, &out).unwrap();
        assert!((back.as_ket().unwrap() - one.as_ket().unwrap()).norm() < 1e-15);
        let idx = l.index(3, 1, 0).unwrap();
        assert_eq!(out.as_ket().unwrap()[idx], C64::new(0.0, 0.0));

        let excited = QuantumState::Ket(basis_ket(3, 1, 0, &l).unwrap());
        assert!(matches!(apply_hadamard(1, &excited), Err(Error::OutsideSubspace { .. })));
        // Level 3 of the other ion is fine.
        assert!(apply_hadamard(2, &excited).is_ok());
    }

    #[test]
    fn composed_cnot_is_exact() {
        for control in [1, 2] {
            let composed = composed_cnot(control).unwrap();
            assert_eq!(composed, qubit_cnot(control).unwrap());
            assert_eq!(&composed.adjoint() * &composed, DMatrix::<C64>::identity(4, 4));
        }
    }

    #[test]
    fn cnot_truth_table_ideal() {
        let l = layout();
        let cnot = ideal_cnot(1, &l).unwrap();
        let map = |a, b| cnot.apply(&basis_ket(a, b, 0, &l).unwrap());
        assert_eq!(map(2, 1), basis_ket(2, 2, 0, &l).unwrap());
        assert_eq!(map(1, 1), basis_ket(1, 1, 0, &l).unwrap());
        assert_eq!(map(1, 2), basis_ket(1, 2, 0, &l).unwrap());
        assert_eq!(map(2, 2), basis_ket(2, 1, 0, &l).unwrap());
    }

    #[test]
    fn effective_cnot_matches_truth_table() {
        let l = layout();
        for (a, b) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
            let psi = QuantumState::Ket(basis_ket(a, b, 0, &l).unwrap());
            let report = apply_cnot(&fig4(), 1, &psi, &Solver::Effective).unwrap();
            assert!((report.fidelity - 1.0).abs() < 1e-9, "|{a}{b}⟩: {}", report.fidelity);
        }
    }

    #[test]
    fn ion_exchange_symmetry() {
        let l = layout();
        let params = SystemParams::new(1.0, 3.0, 0.01, 0.0, 0.0);
        let mirrored = SystemParams { omega: -params.omega, ..params };
        let swap = ion_exchange(&l);
        let sim = GateSimulator::new(&params).unwrap();
        let sim_m = GateSimulator::new(&mirrored).unwrap();
        let opts = GateOptions {
            evaluate_probes: false,
            ..GateOptions::default()
        };
        let v = (basis_ket(1, 2, 0, &l).unwrap() * C64::new(0.8, 0.0)
            + basis_ket(2, 2, 0, &l).unwrap() * C64::new(0.0, 0.6))
            + basis_ket(2, 1, 0, &l).unwrap() * C64::new(0.3, 0.0);
        let psi = QuantumState::ket_normalized(v).unwrap();
        let f = sim.control_phase(&psi, &Solver::FullUnitary, &opts).unwrap().fidelity;
        let f_m = sim_m
            .control_phase(&psi.transform(&swap).unwrap(), &Solver::FullUnitary, &opts)
            .unwrap()
            .fidelity;
        assert!((f - f_m).abs() < 1e-9, "{f} vs {f_m}");
    }

    #[test]
    fn repeat_single_gate_matches_control_phase() {
        let l = layout();
        let params = fig4();
        let psi = StateLabel::BellPlus.state(&l).unwrap();
        let run = repeat_gate(&params, &psi, 1, &Solver::FullUnitary).unwrap();
        let report = apply_control_phase(&params, &psi, &Solver::FullUnitary).unwrap();
        let last = |v: &QuantumState| v.as_ket().unwrap().clone();
        assert!((last(&run.final_state) - last(&report.final_state)).norm() < 1e-10);
        assert!((run.series.times.last().unwrap() - params.gate_time()).abs() < 1e-9);
        assert!(repeat_gate(&params, &psi, 0, &Solver::FullUnitary).is_err());
    }

    #[test]
    fn custom_and_hadamard_specs() {
        let l = layout();
        let psi = StateLabel::Product(1, 1).state(&l).unwrap();
        let report = GateSpec::hadamard(2).apply(&fig4(), &psi).unwrap();
        assert_eq!(report.duration, 0.0);
        let cnot = GateSpec::custom(qubit_cnot(1).unwrap()).unwrap();
        let psi21 = StateLabel::Product(2, 1).state(&l).unwrap();
        let out = cnot.apply(&fig4(), &psi21).unwrap().final_state;
        assert_eq!(out.as_ket().unwrap(), &basis_ket(2, 2, 0, &l).unwrap());
        assert!(GateSpec::custom(DMatrix::from_element(4, 4, C64::new(1.0, 0.0))).is_err());
        assert_eq!(GateSpec::control_phase(&fig4(), Solver::Effective).duration, fig4().gate_time());
    }

    #[test]
    fn calibration_scan_peaks_near_nominal_time() {
        let (t, f) = calibrate_gate_time(&fig4(), 0.02, 21).unwrap();
        assert!((t / fig4().gate_time() - 1.0).abs() <= 0.02);
        assert!(f > 0.99);
    }
}
