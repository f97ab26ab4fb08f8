//! Python module `cavity_gate`.

use cavity_gate::dynamics::{LindbladOptions, McwfOptions, TimeSeries};
use cavity_gate::gates::{GateOptions, GateReport, GateSimulator, RepeatOptions, ReferenceMode, Solver};
use cavity_gate::harness::{self, ExecuteOptions, ExperimentConfig, RunOverrides};
use cavity_gate::model::{project_first_order, unshifted_basis, HamiltonianSet};
use cavity_gate::{Error, OperatorMatrix, StateLabel};
use nalgebra::DMatrix;
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Convergence(_) | Error::Io(_) | Error::Json(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

type Matrix = Vec<Vec<Complex64>>;

fn rows(m: &DMatrix<Complex64>) -> Matrix {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn operator_rows(op: &OperatorMatrix) -> Matrix {
    rows(op.matrix())
}

#[pyclass(name = "SystemParams", module = "cavity_gate", frozen)]
struct PySystemParams {
    inner: cavity_gate::SystemParams,
}

#[pymethods]
impl PySystemParams {
    #[new]
    #[pyo3(signature = (delta, omega, kappa = 0.0, gamma = 0.0, g = 1.0, fock_cutoff = 2))]
    fn new(delta: f64, omega: f64, kappa: f64, gamma: f64, g: f64, fock_cutoff: usize) -> PyResult<Self> {
        let inner = cavity_gate::SystemParams::new(g, delta, omega, kappa, gamma).with_fock_cutoff(fock_cutoff);
        inner.validate().map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn g(&self) -> f64 {
        self.inner.g
    }
    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }
    #[getter]
    fn omega(&self) -> f64 {
        self.inner.omega
    }
    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa
    }
    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }
    #[getter]
    fn fock_cutoff(&self) -> usize {
        self.inner.fock_cutoff
    }

    /// Gate duration π/(√2|Ω|).
    fn gate_time(&self) -> f64 {
        self.inner.gate_time()
    }

    /// Dispersive shift g²/Δ.
    fn cavity_shift(&self) -> f64 {
        self.inner.cavity_shift()
    }

    fn regime_warnings(&self) -> Vec<String> {
        self.inner.regime_warnings().iter().map(ToString::to_string).collect()
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "SystemParams(delta={}, omega={}, kappa={}, gamma={}, g={}, fock_cutoff={})",
            p.delta, p.omega, p.kappa, p.gamma, p.g, p.fock_cutoff
        )
    }
}

/// Hamiltonians of one parameter set as nested lists of complex numbers.
#[pyclass(name = "Hamiltonians", module = "cavity_gate", frozen)]
struct PyHamiltonians {
    set: HamiltonianSet,
}

#[pymethods]
impl PyHamiltonians {
    #[new]
    fn new(params: PyRef<'_, PySystemParams>) -> PyResult<Self> {
        Ok(Self {
            set: HamiltonianSet::build(&params.inner).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.set.layout.total_dim()
    }

    /// Basis index of |l1, l2, n⟩ (levels 1..3).
    fn index(&self, ion1: usize, ion2: usize, n: usize) -> PyResult<usize> {
        self.set.layout.index(ion1, ion2, n).map_err(to_py_err)
    }

    fn h_full(&self) -> Matrix {
        operator_rows(&self.set.h_full)
    }

    fn h_eff_cavity(&self) -> Matrix {
        operator_rows(&self.set.h_eff_cavity)
    }

    fn h_drive(&self) -> Matrix {
        operator_rows(&self.set.h_drive)
    }

    fn h_gate(&self) -> Matrix {
        operator_rows(&self.set.h_gate)
    }

    /// Drive projected onto |11⟩, |12⟩, |21⟩, |22⟩, |Ψ_a⟩.
    fn gate_block(&self) -> PyResult<Matrix> {
        let basis = unshifted_basis(&self.set.layout).map_err(to_py_err)?;
        Ok(rows(&project_first_order(&self.set.h_drive, &basis).map_err(to_py_err)?))
    }
}

#[pyclass(name = "GateReport", module = "cavity_gate", frozen, get_all)]
struct PyGateReport {
    fidelity: f64,
    probe_fidelities: Vec<(String, f64)>,
    process_fidelity_proxy: Option<f64>,
    photon_leakage: f64,
    duration: f64,
    solver: String,
    warnings: Vec<String>,
}

#[pymethods]
impl PyGateReport {
    fn __repr__(&self) -> String {
        let proxy = self.process_fidelity_proxy.map_or("None".to_string(), |f| format!("{f:.6}"));
        format!(
            "GateReport(solver={}, fidelity={:.6}, process_fidelity_proxy={proxy}, photon_leakage={:.3e})",
            self.solver, self.fidelity, self.photon_leakage
        )
    }
}

impl From<GateReport> for PyGateReport {
    fn from(r: GateReport) -> Self {
        Self {
            fidelity: r.fidelity,
            probe_fidelities: r.probe_fidelities,
            process_fidelity_proxy: r.process_fidelity_proxy,
            photon_leakage: r.photon_leakage,
            duration: r.duration,
            solver: r.solver.to_string(),
            warnings: r.warnings,
        }
    }
}

fn solver_from(
    name: &str,
    params: &cavity_gate::SystemParams,
    n_traj: usize,
    seed: u64,
    threads: Option<usize>,
) -> PyResult<Solver> {
    match name {
        "effective" => Ok(Solver::Effective),
        "full_unitary" => Ok(Solver::FullUnitary),
        "lindblad" => Ok(Solver::Lindblad(LindbladOptions::for_params(params))),
        "mcwf" => Ok(Solver::Mcwf(McwfOptions {
            threads,
            ..McwfOptions::new(n_traj, seed)
        })),
        _ => Err(PyValueError::new_err(format!(
            "unknown solver '{name}' (expected effective, full_unitary, lindblad or mcwf)"
        ))),
    }
}

fn label(name: &str) -> PyResult<StateLabel> {
    name.parse().map_err(to_py_err)
}

fn series_dict<'py>(py: Python<'py>, series: &TimeSeries, std_errors: Option<&TimeSeries>) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("time", series.times.clone())?;
    for (name, values) in &series.channels {
        out.set_item(name, values.clone())?;
    }
    if let Some(se) = std_errors {
        for (name, values) in &se.channels {
            out.set_item(format!("{name}_stderr"), values.clone())?;
        }
    }
    Ok(out)
}

/// Runs the control-phase gate on a labeled zero-photon input state.
#[pyfunction]
#[pyo3(signature = (params, initial_state = "bell_plus", solver = "full_unitary", n_traj = 100, seed = 0, threads = None, probes = true))]
fn control_phase(
    py: Python<'_>,
    params: PyRef<'_, PySystemParams>,
    initial_state: &str,
    solver: &str,
    n_traj: usize,
    seed: u64,
    threads: Option<usize>,
    probes: bool,
) -> PyResult<PyGateReport> {
    let p = params.inner;
    let label = label(initial_state)?;
    let solver = solver_from(solver, &p, n_traj, seed, threads)?;
    let options = GateOptions {
        evaluate_probes: probes,
        ..GateOptions::default()
    };
    py.detach(|| {
        let sim = GateSimulator::new(&p)?;
        let psi = label.state(&sim.layout())?;
        sim.control_phase(&psi, &solver, &options)
    })
    .map(Into::into)
    .map_err(to_py_err)
}

/// H(target) · control phase · H(target), scored against the ideal CNOT.
#[pyfunction]
#[pyo3(signature = (params, control = 1, initial_state = "21", solver = "full_unitary", n_traj = 100, seed = 0, threads = None, probes = true))]
#[allow(clippy::too_many_arguments)]
fn cnot(
    py: Python<'_>,
    params: PyRef<'_, PySystemParams>,
    control: usize,
    initial_state: &str,
    solver: &str,
    n_traj: usize,
    seed: u64,
    threads: Option<usize>,
    probes: bool,
) -> PyResult<PyGateReport> {
    let p = params.inner;
    let label = label(initial_state)?;
    let solver = solver_from(solver, &p, n_traj, seed, threads)?;
    let options = GateOptions {
        evaluate_probes: probes,
        ..GateOptions::default()
    };
    py.detach(|| {
        let sim = GateSimulator::new(&p)?;
        let psi = label.state(&sim.layout())?;
        sim.cnot(control, &psi, &solver, &options)
    })
    .map(Into::into)
    .map_err(to_py_err)
}

/// Continuous evolution over `n_gates` gate periods. Returns a dict of
/// columns: `time`, `fidelity`, populations, `p_zero_photons` (and
/// `*_stderr` columns for the trajectory solver).
#[pyfunction]
#[pyo3(signature = (params, n_gates, initial_state = "bell_plus", solver = "full_unitary", n_traj = 100, seed = 0, threads = None, samples_per_gate = 100, stroboscopic = false))]
#[allow(clippy::too_many_arguments)]
fn repeat_gate<'py>(
    py: Python<'py>,
    params: PyRef<'_, PySystemParams>,
    n_gates: usize,
    initial_state: &str,
    solver: &str,
    n_traj: usize,
    seed: u64,
    threads: Option<usize>,
    samples_per_gate: usize,
    stroboscopic: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let p = params.inner;
    let label = label(initial_state)?;
    let solver = solver_from(solver, &p, n_traj, seed, threads)?;
    let options = RepeatOptions {
        samples_per_gate,
        reference: if stroboscopic {
            ReferenceMode::Stroboscopic
        } else {
            ReferenceMode::Effective
        },
        ..RepeatOptions::default()
    };
    let out = py
        .detach(|| {
            let sim = GateSimulator::new(&p)?;
            let psi = label.state(&sim.layout())?;
            sim.repeat(&psi, n_gates, &solver, &options)
        })
        .map_err(to_py_err)?;
    series_dict(py, &out.series, out.std_errors.as_ref())
}

#[pyfunction]
fn list_presets() -> PyResult<String> {
    harness::list_presets().map_err(to_py_err)
}

#[pyfunction]
fn preset_names() -> Vec<&'static str> {
    harness::presets().iter().map(|p| p.name).collect()
}

/// TOML source of a built-in preset.
#[pyfunction]
fn preset_toml(name: &str) -> PyResult<&'static str> {
    harness::presets()
        .iter()
        .find(|p| p.name == name)
        .map(|p| p.source)
        .ok_or_else(|| PyValueError::new_err(format!("unknown preset '{name}'")))
}

/// Diagnostics for a TOML config, one string per finding.
#[pyfunction]
fn validate_config(toml: &str) -> Vec<String> {
    harness::parse_config(toml).1.items.iter().map(ToString::to_string).collect()
}

/// Executes a TOML config in memory; returns `{run_name: columns}`.
#[pyfunction]
#[pyo3(signature = (toml, seed = None, threads = None))]
fn simulate_config<'py>(py: Python<'py>, toml: &str, seed: Option<u64>, threads: Option<usize>) -> PyResult<Bound<'py, PyDict>> {
    let mut config = ExperimentConfig::from_toml_str(toml).map_err(to_py_err)?;
    RunOverrides {
        seed,
        ..RunOverrides::default()
    }
    .apply(&mut config);
    let options = ExecuteOptions {
        threads,
        ..ExecuteOptions::default()
    };
    let results = py.detach(|| harness::execute(&config, &options)).map_err(to_py_err)?;
    let out = PyDict::new(py);
    for r in &results {
        out.set_item(&r.plan.name, series_dict(py, &r.output.series, r.output.std_errors.as_ref())?)?;
    }
    Ok(out)
}

/// Executes a TOML config and writes data files and manifests; returns the
/// `(data_path, manifest_path)` pairs.
#[pyfunction]
#[pyo3(signature = (toml, out_dir = None, seed = None, threads = None))]
fn run_config(
    py: Python<'_>,
    toml: &str,
    out_dir: Option<std::path::PathBuf>,
    seed: Option<u64>,
    threads: Option<usize>,
) -> PyResult<Vec<(String, String)>> {
    let mut config = ExperimentConfig::from_toml_str(toml).map_err(to_py_err)?;
    RunOverrides {
        seed,
        out_dir,
        ..RunOverrides::default()
    }
    .apply(&mut config);
    let options = ExecuteOptions {
        threads,
        ..ExecuteOptions::default()
    };
    let artifacts = py.detach(|| harness::run(&config, &options)).map_err(to_py_err)?;
    Ok(artifacts
        .iter()
        .map(|a| (a.data_path.display().to_string(), a.manifest_path.display().to_string()))
        .collect())
}

#[pymodule(name = "cavity_gate")]
pub fn cavity_gate_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PySystemParams>()?;
    m.add_class::<PyHamiltonians>()?;
    m.add_class::<PyGateReport>()?;
    m.add_function(wrap_pyfunction!(control_phase, m)?)?;
    m.add_function(wrap_pyfunction!(cnot, m)?)?;
    m.add_function(wrap_pyfunction!(repeat_gate, m)?)?;
    m.add_function(wrap_pyfunction!(list_presets, m)?)?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(preset_toml, m)?)?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
