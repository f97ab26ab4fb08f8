use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::{ExperimentConfig, OutputFormat, RunPlan, SolverKind};
use crate::dynamics::{LindbladDiagnostics, LindbladOptions, McwfOptions, Observable, ObservableSpec, TimeSeries};
use crate::error::{Error, Result};
use crate::gates::{GateSimulator, McwfSummary, ReferenceMode, Solver, SolverOutput};
use crate::model::SystemParams;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "CAVITY_GATE_OUT_DIR";
/// Largest observable change tolerated when the Fock cutoff is doubled.
pub const FOCK_CHECK_TOL: f64 = 1e-6;

/// Command-line style overrides applied on top of a config file.
#[derive(Clone, Debug, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

impl RunOverrides {
    /// Applies file-level overrides and returns warnings for ignored ones.
    pub fn apply(&self, config: &mut ExperimentConfig) -> Vec<String> {
        let mut warnings = Vec::new();
        if let Some(seed) = self.seed {
            match config.mcwf.as_mut() {
                Some(m) => m.seed = seed,
                None => warnings.push(format!(
                    "--seed ignored: solver '{}' is deterministic",
                    config.run.solver.name()
                )),
            }
        }
        if let Some(format) = self.format {
            config.output.format = format;
        }
        if let Some(dir) = &self.out_dir {
            config.output.dir = Some(dir.clone());
        }
        warnings
    }
}

/// Output directory: config value, then the environment variable, then `results`.
pub fn resolve_out_dir(config: &ExperimentConfig) -> PathBuf {
    config
        .output
        .dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}

#[derive(Clone, Debug, Serialize)]
pub struct FockCheck {
    pub fock_cutoff: usize,
    pub doubled_cutoff: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// `same_solver`, `closed_system_proxy` (open solvers, compared under
    /// the full unitary dynamics) or `cutoff_independent` (effective model).
    pub method: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct Convergence {
    pub fock: Option<FockCheck>,
    pub dt_halving: Option<LindbladDiagnostics>,
    pub mcwf: Option<McwfSummary>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub artifact: &'static str,
    pub version: &'static str,
    pub run: String,
    pub data_file: String,
    pub format: OutputFormat,
    pub config: ExperimentConfig,
    pub params: SystemParams,
    pub solver: &'static str,
    pub gate_time: f64,
    pub t_final: f64,
    pub n_samples: usize,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub wall_clock_seconds: f64,
    pub convergence: Convergence,
    pub warnings: Vec<String>,
}

/// Outcome of one run, before anything is written.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub plan: RunPlan,
    pub output: SolverOutput,
    pub manifest: RunManifest,
}

#[derive(Clone, Debug)]
pub struct RunArtifact {
    pub data_path: PathBuf,
    pub manifest_path: PathBuf,
    pub result: RunResult,
}

#[derive(Clone, Debug)]
pub struct ExecuteOptions {
    pub threads: Option<usize>,
    pub fock_check: bool,
}

impl Default for ExecuteOptions {
    fn default() -> Self {
        Self {
            threads: None,
            fock_check: true,
        }
    }
}

fn solver_for(config: &ExperimentConfig, params: &SystemParams, threads: Option<usize>) -> Solver {
    match config.run.solver {
        SolverKind::Effective => Solver::Effective,
        SolverKind::FullUnitary => Solver::FullUnitary,
        SolverKind::Lindblad => {
            let mut options = LindbladOptions::for_params(params);
            if let Some(dt) = config.run.dt {
                options.dt = Some(dt);
            }
            Solver::Lindblad(options)
        }
        SolverKind::Mcwf => {
            let section = config.mcwf.as_ref().expect("validated config has an [mcwf] section");
            Solver::Mcwf(McwfOptions {
                n_traj: section.n_traj,
                seed: section.seed,
                dt: section.dt,
                threads,
            })
        }
    }
}

fn observables_for(config: &ExperimentConfig, sim: &GateSimulator) -> Result<Vec<Observable>> {
    let layout = sim.layout();
    let psi0 = config.initial_state()?.ket(0, &layout)?;
    let reference = match config.run.fidelity_reference {
        ReferenceMode::Effective => sim.effective_reference(&psi0),
        ReferenceMode::Stroboscopic => sim.stroboscopic_reference(&psi0),
    };
    config
        .observables()?
        .iter()
        .map(|spec| spec.resolve(&layout, Some(&reference)))
        .collect()
}

fn evolve_plan(config: &ExperimentConfig, params: &SystemParams, solver: &Solver) -> Result<SolverOutput> {
    let sim = GateSimulator::new(params)?;
    let psi0 = config.initial_state()?.state(&sim.layout())?;
    let observables = observables_for(config, &sim)?;
    sim.evolve(&psi0, config.t_final(params), config.n_samples(), &observables, solver)
}

fn max_series_deviation(a: &TimeSeries, b: &TimeSeries) -> f64 {
    a.channels
        .iter()
        .zip(&b.channels)
        .flat_map(|((_, x), (_, y))| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

fn fock_check(config: &ExperimentConfig, params: &SystemParams, output: &SolverOutput) -> Result<FockCheck> {
    let doubled = params.with_fock_cutoff(2 * params.fock_cutoff);
    let (method, max_deviation) = match config.run.solver {
        SolverKind::Effective => ("cutoff_independent", 0.0),
        SolverKind::FullUnitary => {
            let fine = evolve_plan(config, &doubled, &Solver::FullUnitary)?;
            ("same_solver", max_series_deviation(&output.series, &fine.series))
        }
        SolverKind::Lindblad | SolverKind::Mcwf => {
            let closed = SystemParams { kappa: 0.0, gamma: 0.0, ..*params };
            let coarse = evolve_plan(config, &closed, &Solver::FullUnitary)?;
            let fine = evolve_plan(config, &closed.with_fock_cutoff(doubled.fock_cutoff), &Solver::FullUnitary)?;
            ("closed_system_proxy", max_series_deviation(&coarse.series, &fine.series))
        }
    };
    Ok(FockCheck {
        fock_cutoff: params.fock_cutoff,
        doubled_cutoff: doubled.fock_cutoff,
        max_deviation,
        tolerance: FOCK_CHECK_TOL,
        passed: max_deviation < FOCK_CHECK_TOL,
        method,
    })
}

fn data_file_name(plan: &RunPlan, format: OutputFormat) -> String {
    format!("{}.{}", plan.name, format.extension())
}

fn manifest_file_name(plan: &RunPlan) -> String {
    format!("{}.manifest.json", plan.name)
}

fn validated_warnings(config: &ExperimentConfig) -> Result<Vec<String>> {
    let diagnostics = config.validate();
    if diagnostics.has_errors() {
        return Err(Error::Config(diagnostics.error_report()));
    }
    Ok(diagnostics.warnings().map(ToString::to_string).collect())
}

fn execute_plan(config: &ExperimentConfig, plan: RunPlan, regime: &[String], options: &ExecuteOptions) -> Result<RunResult> {
    let start = Instant::now();
    let params = plan.params;
    let solver = solver_for(config, &params, options.threads);
    let output = evolve_plan(config, &params, &solver)?;
    output.series.check_well_formed()?;
    let fock = options.fock_check.then(|| fock_check(config, &params, &output)).transpose()?;

    let mut warnings = regime.to_vec();
    warnings.extend(output.warnings.iter().cloned());
    if let Some(f) = fock.as_ref().filter(|f| !f.passed) {
        warnings.push(format!(
            "Fock cutoff not converged: doubling n_max changes observables by {:.3e} (> {:.0e})",
            f.max_deviation, f.tolerance
        ));
    }
    for w in &warnings {
        log::warn!("{}: {w}", plan.name);
    }
    let manifest = RunManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        artifact: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        run: plan.name.clone(),
        data_file: data_file_name(&plan, config.output.format),
        format: config.output.format,
        config: config.clone(),
        params,
        solver: config.run.solver.name(),
        gate_time: params.gate_time(),
        t_final: config.t_final(&params),
        n_samples: config.n_samples(),
        seed: config.mcwf.as_ref().map(|m| m.seed),
        threads: options.threads,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        convergence: Convergence {
            fock,
            dt_halving: output.lindblad.clone(),
            mcwf: output.mcwf.clone(),
        },
        warnings,
    };
    Ok(RunResult { plan, output, manifest })
}

/// Runs every plan of a validated config in memory.
pub fn execute(config: &ExperimentConfig, options: &ExecuteOptions) -> Result<Vec<RunResult>> {
    let regime = validated_warnings(config)?;
    config.plans().into_iter().map(|plan| execute_plan(config, plan, &regime, options)).collect()
}

/// CSV with header `time,<channel>...`, then `<channel>_stderr` columns for
/// ensemble runs. Values use 17 significant digits.
pub fn write_csv(out: &mut impl std::io::Write, series: &TimeSeries, std_errors: Option<&TimeSeries>) -> Result<()> {
    let mut header = vec!["time".to_string()];
    header.extend(series.names().map(str::to_string));
    if let Some(se) = std_errors {
        header.extend(se.names().map(|n| format!("{n}_stderr")));
    }
    writeln!(out, "{}", header.join(","))?;
    for (k, t) in series.times.iter().enumerate() {
        let mut row = vec![format!("{t:.16e}")];
        row.extend(series.channels.iter().map(|(_, v)| format!("{:.16e}", v[k])));
        if let Some(se) = std_errors {
            row.extend(se.channels.iter().map(|(_, v)| format!("{:.16e}", v[k])));
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct JsonChannel<'a> {
    name: &'a str,
    values: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    std_errors: Option<&'a [f64]>,
}

#[derive(Serialize)]
struct JsonSeries<'a> {
    times: &'a [f64],
    channels: Vec<JsonChannel<'a>>,
}

pub fn write_json_series(out: &mut impl std::io::Write, series: &TimeSeries, std_errors: Option<&TimeSeries>) -> Result<()> {
    let channels = series
        .channels
        .iter()
        .map(|(name, values)| JsonChannel {
            name,
            values,
            std_errors: std_errors.and_then(|se| se.channel(name)),
        })
        .collect();
    serde_json::to_writer_pretty(&mut *out, &JsonSeries { times: &series.times, channels })?;
    writeln!(out)?;
    Ok(())
}

fn write_file(path: &Path, written: &mut Vec<PathBuf>, body: impl FnOnce(&mut fs::File) -> Result<()>) -> Result<()> {
    let mut file = fs::File::create(path)?;
    written.push(path.to_path_buf());
    body(&mut file)?;
    file.sync_all()?;
    Ok(())
}

fn write_result(result: RunResult, dir: &Path, format: OutputFormat, written: &mut Vec<PathBuf>) -> Result<RunArtifact> {
    let data_path = dir.join(data_file_name(&result.plan, format));
    let manifest_path = dir.join(manifest_file_name(&result.plan));
    let se = result.output.std_errors.as_ref();
    write_file(&data_path, written, |f| match format {
        OutputFormat::Csv => write_csv(f, &result.output.series, se),
        OutputFormat::Json => write_json_series(f, &result.output.series, se),
    })?;
    write_file(&manifest_path, written, |f| {
        serde_json::to_writer_pretty(&mut *f, &result.manifest)?;
        writeln!(f)?;
        Ok(())
    })?;
    Ok(RunArtifact {
        data_path,
        manifest_path,
        result,
    })
}

/// Executes a config and writes one data file and one manifest per run as
/// each run finishes. On failure every file written by this call is removed.
pub fn run(config: &ExperimentConfig, options: &ExecuteOptions) -> Result<Vec<RunArtifact>> {
    let regime = validated_warnings(config)?;
    let dir = resolve_out_dir(config);
    let format = config.output.format;
    let mut written = Vec::new();
    let outcome = fs::create_dir_all(&dir).map_err(Error::from).and_then(|()| {
        config
            .plans()
            .into_iter()
            .map(|plan| write_result(execute_plan(config, plan, &regime, options)?, &dir, format, &mut written))
            .collect::<Result<Vec<_>>>()
    });
    if outcome.is_err() {
        for path in &written {
            let _ = fs::remove_file(path);
        }
    }
    outcome
}

/// Observable names a config will emit, in column order.
pub fn channel_names(config: &ExperimentConfig) -> Result<Vec<String>> {
    Ok(config.observables()?.iter().map(ObservableSpec::to_string).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::preset;

    fn small_config(solver: &str, extra: &str) -> ExperimentConfig {
        let src = format!(
            "name = \"t\"\n[params]\ndelta = 3.0\nomega = 0.01\nkappa = 0.5\n\n[run]\ninitial_state = \"bell_plus\"\n\
             solver = \"{solver}\"\nn_gates = 1\nn_samples = 11\n\
             observables = [\"fidelity\", \"pop_bell_minus\", \"p_zero_photons\"]\n{extra}"
        );
        ExperimentConfig::from_toml_str(&src).unwrap()
    }

    #[test]
    fn csv_layout() {
        let mut series = TimeSeries::new(vec![0.0, 0.5], &["a".to_string(), "b".to_string()]);
        series.push_row(&[1.0, 0.25]);
        series.push_row(&[0.1, 1.0 / 3.0]);
        let mut buf = Vec::new();
        write_csv(&mut buf, &series, Some(&series)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "time,a,b,a_stderr,b_stderr");
        assert_eq!(lines[2].split(',').count(), 5);
        let third: f64 = lines[2].split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(third, 1.0 / 3.0);
    }

    #[test]
    fn fig4_preset_executes_with_converged_cutoff() {
        let results = execute(&preset("fig4").unwrap(), &ExecuteOptions::default()).unwrap();
        assert_eq!(results.len(), 1);
        let r = &results[0];
        let p0 = r.output.series.channel("p_zero_photons").unwrap();
        assert!(p0.iter().all(|&p| p > 0.999));
        let fock = r.manifest.convergence.fock.as_ref().unwrap();
        assert!(fock.passed, "{fock:?}");
        assert!(r.manifest.warnings.is_empty());
        assert_eq!(r.manifest.n_samples, 401);
    }

    #[test]
    fn writes_data_and_manifest_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = small_config("lindblad", "\n[[variant]]\nname = \"a\"\n\n[[variant]]\nname = \"b\"\nkappa = 0.0\n");
        config.output.dir = Some(dir.path().to_path_buf());
        let artifacts = run(&config, &ExecuteOptions::default()).unwrap();
        assert_eq!(artifacts.len(), 2);
        let mut files: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        files.sort();
        assert_eq!(files, ["t_a.csv", "t_a.manifest.json", "t_b.csv", "t_b.manifest.json"]);
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&artifacts[0].manifest_path).unwrap()).unwrap();
        assert_eq!(manifest["schema_version"], 1);
        assert_eq!(manifest["data_file"], "t_a.csv");
        assert!(manifest["convergence"]["dt_halving"]["halving_deviation"].as_f64().unwrap() < 1e-8);
        assert_eq!(manifest["convergence"]["fock"]["method"], "closed_system_proxy");
    }

    #[test]
    fn json_format_and_mcwf_stderr() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = small_config("mcwf", "\n[mcwf]\nn_traj = 4\nseed = 9\n");
        let overrides = RunOverrides {
            seed: Some(11),
            format: Some(OutputFormat::Json),
            out_dir: Some(dir.path().to_path_buf()),
            threads: None,
        };
        assert!(overrides.apply(&mut config).is_empty());
        assert_eq!(config.mcwf.as_ref().unwrap().seed, 11);
        let artifacts = run(&config, &ExecuteOptions::default()).unwrap();
        let data: serde_json::Value = serde_json::from_str(&fs::read_to_string(&artifacts[0].data_path).unwrap()).unwrap();
        assert_eq!(data["times"].as_array().unwrap().len(), 11);
        assert_eq!(data["channels"][0]["name"], "fidelity");
        assert_eq!(data["channels"][0]["std_errors"].as_array().unwrap().len(), 11);
        assert_eq!(artifacts[0].result.manifest.seed, Some(11));
    }

    #[test]
    fn seed_override_warns_for_deterministic_solvers() {
        let mut config = small_config("full_unitary", "");
        let w = RunOverrides {
            seed: Some(1),
            ..RunOverrides::default()
        }
        .apply(&mut config);
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn failed_run_leaves_no_files() {
        let dir = tempfile::tempdir().unwrap();
        // The second variant drives level 3 hard, so the step is far too coarse.
        let mut config = small_config(
            "mcwf",
            "\n[mcwf]\nn_traj = 2\nseed = 1\ndt = 0.5\n\n[[variant]]\nname = \"ok\"\nkappa = 0.0\n\n[[variant]]\nname = \"bad\"\nomega = 1.0\ngamma = 2.0\n",
        );
        config.output.dir = Some(dir.path().to_path_buf());
        let err = run(&config, &ExecuteOptions::default()).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge { .. }), "{err}");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
