use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::de::{DeTable, DeValue};

use crate::dynamics::ObservableSpec;
use crate::error::{Error, Result};
use crate::gates::ReferenceMode;
use crate::hilbert::StateLabel;
use crate::model::SystemParams;

/// Samples per gate period when `n_samples` is not given.
pub const DEFAULT_SAMPLES_PER_GATE: usize = 100;
pub const DEFAULT_N_SAMPLES: usize = 201;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Effective,
    FullUnitary,
    Lindblad,
    Mcwf,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Effective => "effective",
            Self::FullUnitary => "full_unitary",
            Self::Lindblad => "lindblad",
            Self::Mcwf => "mcwf",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(Error::Config(format!("unknown output format '{s}' (expected csv or json)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// State label such as `bell_plus`, `psi_a` or `22`; always zero photons.
    pub initial_state: String,
    pub solver: SolverKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    /// Run length in gate periods `π/(√2|Ω|)`; exclusive with `t_final`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_gates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default = "default_observables")]
    pub observables: Vec<String>,
    #[serde(default)]
    pub fidelity_reference: ReferenceMode,
    /// Lindblad step override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

fn default_observables() -> Vec<String> {
    vec!["fidelity".into(), "p_zero_photons".into()]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McwfSection {
    pub n_traj: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

/// Named parameter override; each variant is run and written separately.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fock_cutoff: Option<usize>,
}

impl Variant {
    pub fn apply(&self, base: &SystemParams) -> SystemParams {
        SystemParams {
            g: self.g.unwrap_or(base.g),
            delta: self.delta.unwrap_or(base.delta),
            omega: self.omega.unwrap_or(base.omega),
            kappa: self.kappa.unwrap_or(base.kappa),
            gamma: self.gamma.unwrap_or(base.gamma),
            fock_cutoff: self.fock_cutoff.unwrap_or(base.fock_cutoff),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// File name stem; defaults to the experiment name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stem: Option<String>,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub params: SystemParams,
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcwf: Option<McwfSection>,
    #[serde(default, rename = "variant", skip_serializing_if = "Vec::is_empty")]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub output: OutputSection,
}

/// One concrete run of an experiment after variants are expanded.
#[derive(Clone, Debug, PartialEq)]
pub struct RunPlan {
    pub name: String,
    pub params: SystemParams,
}

impl ExperimentConfig {
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let (config, diagnostics) = parse_config(src);
        match config {
            Some(c) if !diagnostics.has_errors() => Ok(c),
            _ => Err(Error::Config(diagnostics.error_report())),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)?;
        Self::from_toml_str(&src).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}:\n{msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn stem(&self) -> &str {
        self.output.stem.as_deref().unwrap_or(&self.name)
    }

    /// Expanded runs; a config without variants is a single run.
    pub fn plans(&self) -> Vec<RunPlan> {
        if self.variants.is_empty() {
            return vec![RunPlan {
                name: self.stem().to_string(),
                params: self.params,
            }];
        }
        self.variants
            .iter()
            .map(|v| RunPlan {
                name: format!("{}_{}", self.stem(), v.name),
                params: v.apply(&self.params),
            })
            .collect()
    }

    pub fn initial_state(&self) -> Result<StateLabel> {
        self.run.initial_state.parse()
    }

    pub fn observables(&self) -> Result<Vec<ObservableSpec>> {
        self.run.observables.iter().map(|s| s.parse()).collect()
    }

    /// Run length for the given parameters.
    pub fn t_final(&self, params: &SystemParams) -> f64 {
        match (self.run.t_final, self.run.n_gates) {
            (Some(t), _) => t,
            (None, Some(n)) => n as f64 * params.gate_time(),
            (None, None) => params.gate_time(),
        }
    }

    pub fn n_samples(&self) -> usize {
        self.run.n_samples.unwrap_or(match self.run.n_gates {
            Some(n) => n * DEFAULT_SAMPLES_PER_GATE + 1,
            None => DEFAULT_N_SAMPLES,
        })
    }

    /// Semantic checks without source positions.
    pub fn validate(&self) -> Diagnostics {
        let mut d = Diagnostics::default();
        check_semantics(self, &mut d);
        d
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    /// 1-based line in the config source, when known.
    pub line: Option<usize>,
    /// Dotted key path such as `run.observables[1]`.
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let severity = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match self.line {
            Some(line) => write!(f, "{severity}: line {line}: ")?,
            None => write!(f, "{severity}: ")?,
        }
        if !self.path.is_empty() {
            write!(f, "{}: ", self.path)?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub items: Vec<Diagnostic>,
}

impl Diagnostics {
    fn push(&mut self, severity: Severity, path: impl Into<String>, message: impl Into<String>) {
        self.items.push(Diagnostic {
            severity,
            line: None,
            path: path.into(),
            message: message.into(),
        });
    }

    fn error(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.push(Severity::Error, path, message);
    }

    fn warning(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.push(Severity::Warning, path, message);
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.items.iter().filter(|d| d.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Diagnostic> {
        self.items.iter().filter(|d| d.severity == Severity::Warning)
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }

    pub fn error_report(&self) -> String {
        self.errors().map(ToString::to_string).collect::<Vec<_>>().join("\n")
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.items {
            writeln!(f, "{d}")?;
        }
        Ok(())
    }
}

/// Parses and validates a TOML config, attaching source lines to every
/// diagnostic that can be located.
pub fn parse_config(src: &str) -> (Option<ExperimentConfig>, Diagnostics) {
    let mut diagnostics = Diagnostics::default();
    let config = match toml::from_str::<ExperimentConfig>(src) {
        Ok(c) => c,
        Err(e) => {
            diagnostics.items.push(Diagnostic {
                severity: Severity::Error,
                line: e.span().map(|s| line_of(src, s.start)),
                path: String::new(),
                message: e.message().trim().to_string(),
            });
            return (None, diagnostics);
        }
    };
    check_semantics(&config, &mut diagnostics);
    if let Ok(doc) = DeTable::parse(src) {
        for d in &mut diagnostics.items {
            d.line = locate(doc.get_ref(), &d.path).map(|offset| line_of(src, offset));
        }
    }
    (Some(config), diagnostics)
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Byte offset of the deepest locatable key along `path`.
fn locate(table: &DeTable<'_>, path: &str) -> Option<usize> {
    let mut best = None;
    let mut table = Some(table);
    for segment in path.split('.').filter(|s| !s.is_empty()) {
        let (key, index) = match segment.split_once('[') {
            Some((k, rest)) => (k, rest.trim_end_matches(']').parse::<usize>().ok()),
            None => (segment, None),
        };
        let (k, v) = table?.iter().find(|(k, _)| k.get_ref().as_ref() == key)?;
        best = Some(k.span().start);
        let mut current = v;
        if let Some(i) = index {
            match current.get_ref() {
                DeValue::Array(items) => {
                    let item = items.get(i)?;
                    best = Some(item.span().start);
                    current = item;
                }
                _ => return best,
            }
        }
        table = match current.get_ref() {
            DeValue::Table(t) => Some(t),
            _ => None,
        };
    }
    best
}

fn is_safe_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.') && !s.starts_with('.')
}

fn check_params(params: &SystemParams, path: &str, d: &mut Diagnostics) {
    if let Err(e) = params.validate() {
        d.error(path, e.to_string());
        return;
    }
    if params.omega == 0.0 {
        d.error(format!("{path}.omega"), "omega must be nonzero (it sets the gate time)");
    }
    for w in params.regime_warnings() {
        d.warning(path, w.to_string());
    }
}

fn check_semantics(c: &ExperimentConfig, d: &mut Diagnostics) {
    if !is_safe_name(&c.name) {
        d.error("name", format!("'{}' is not a valid file name stem", c.name));
    }
    if let Some(stem) = &c.output.stem {
        if !is_safe_name(stem) {
            d.error("output.stem", format!("'{stem}' is not a valid file name stem"));
        }
    }

    if c.variants.is_empty() {
        check_params(&c.params, "params", d);
    } else {
        let mut seen = HashSet::new();
        for (i, v) in c.variants.iter().enumerate() {
            let path = format!("variant[{i}]");
            if !is_safe_name(&v.name) {
                d.error(format!("{path}.name"), format!("'{}' is not a valid variant name", v.name));
            }
            if !seen.insert(v.name.as_str()) {
                d.error(format!("{path}.name"), format!("duplicate variant name '{}'", v.name));
            }
            check_params(&v.apply(&c.params), &path, d);
        }
    }

    let run = &c.run;
    if let Err(e) = run.initial_state.parse::<StateLabel>() {
        d.error("run.initial_state", e.to_string());
    }
    match (run.t_final, run.n_gates) {
        (Some(_), Some(_)) => d.error("run.t_final", "give either t_final or n_gates, not both"),
        (None, None) => d.error("run", "missing run length: set t_final or n_gates"),
        (Some(t), None) if !(t.is_finite() && t > 0.0) => d.error("run.t_final", "t_final must be positive"),
        (None, Some(0)) => d.error("run.n_gates", "n_gates must be >= 1"),
        _ => {}
    }
    match run.n_samples {
        Some(n) if n < 2 => d.error("run.n_samples", "n_samples must be >= 2"),
        Some(n) => {
            if let Some(g) = run.n_gates.filter(|&g| g > 0) {
                if (n - 1) % g != 0 {
                    d.warning("run.n_samples", "samples do not land on gate boundaries; use n_gates·k + 1");
                }
            }
        }
        None => {}
    }
    if run.observables.is_empty() {
        d.error("run.observables", "at least one observable is required");
    }
    let mut seen = HashSet::new();
    for (i, name) in run.observables.iter().enumerate() {
        let path = format!("run.observables[{i}]");
        if let Err(e) = name.parse::<ObservableSpec>() {
            d.error(&path, e.to_string());
        }
        if !seen.insert(name.as_str()) {
            d.error(&path, format!("duplicate observable '{name}'"));
        }
    }
    if let Some(dt) = run.dt {
        if !(dt.is_finite() && dt > 0.0) {
            d.error("run.dt", "dt must be positive");
        }
        if run.solver != SolverKind::Lindblad {
            d.warning("run.dt", "run.dt only applies to the lindblad solver");
        }
    }

    match (&c.mcwf, run.solver) {
        (None, SolverKind::Mcwf) => d.error("run.solver", "solver 'mcwf' needs an [mcwf] section with n_traj and seed"),
        (Some(_), s) if s != SolverKind::Mcwf => {
            d.error("mcwf", format!("[mcwf] section given but solver is '{}'", s.name()))
        }
        (Some(m), _) => {
            if m.n_traj == 0 {
                d.error("mcwf.n_traj", "n_traj must be >= 1");
            }
            if let Some(dt) = m.dt {
                if !(dt.is_finite() && dt > 0.0) {
                    d.error("mcwf.dt", "dt must be positive");
                }
            }
        }
        (None, _) => {}
    }
}
