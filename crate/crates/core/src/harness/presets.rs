use std::fmt::Write;

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

/// Built-in experiment reproducing one figure.
#[derive(Clone, Copy, Debug)]
pub struct Preset {
    pub name: &'static str,
    pub figure: &'static str,
    pub note: Option<&'static str>,
    pub source: &'static str,
}

impl Preset {
    pub fn config(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml_str(self.source)
    }
}

// Sorted by name.
const PRESETS: &[Preset] = &[
    Preset {
        name: "fig4",
        figure: "Fig. 4: Bell-state oscillations, no dissipation",
        note: Some("drive Ω = 2.0e-3 g; fig4_text repeats the run with Ω = 0.01 g"),
        source: include_str!("../../presets/fig4.toml"),
    },
    Preset {
        name: "fig4_text",
        figure: "Fig. 4: Bell-state oscillations, no dissipation",
        note: Some("faster drive Ω = 0.01 g, otherwise identical to fig4"),
        source: include_str!("../../presets/fig4_text.toml"),
    },
    Preset {
        name: "fig5",
        figure: "Fig. 5: gate fidelity over five gates, κ = 0 and κ = 1.0 g",
        note: None,
        source: include_str!("../../presets/fig5.toml"),
    },
    Preset {
        name: "fig6",
        figure: "Fig. 6: quantum-jump simulation, κ = 0.5 g",
        note: Some("runs two emission rates, Γ = 5.0e-5 g and Γ = 5.0e-4 g"),
        source: include_str!("../../presets/fig6.toml"),
    },
];

pub fn presets() -> &'static [Preset] {
    PRESETS
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| {
            let names: Vec<_> = PRESETS.iter().map(|p| p.name).collect();
            Error::Config(format!("unknown preset '{name}' (available: {})", names.join(", ")))
        })?
        .config()
}

/// Human-readable listing of every preset with its runs and parameters.
pub fn list_presets() -> Result<String> {
    let mut out = String::new();
    for p in PRESETS {
        let config = p.config()?;
        writeln!(out, "{}  {}", p.name, p.figure).unwrap();
        if let Some(note) = p.note {
            writeln!(out, "    note: {note}").unwrap();
        }
        let run = &config.run;
        let length = match (run.t_final, run.n_gates) {
            (Some(t), _) => format!("t_final={t}"),
            (None, Some(n)) => format!("n_gates={n}"),
            (None, None) => String::new(),
        };
        writeln!(out, "    solver={} initial_state={} {length}", run.solver.name(), run.initial_state).unwrap();
        if let Some(m) = &config.mcwf {
            writeln!(out, "    n_traj={} seed={}", m.n_traj, m.seed).unwrap();
        }
        for plan in config.plans() {
            let q = plan.params;
            writeln!(
                out,
                "    {}: g={} Δ={}g Ω={}g κ={}g Γ={}g n_max={}",
                plan.name, q.g, q.delta, q.omega, q.kappa, q.gamma, q.fock_cutoff
            )
            .unwrap();
        }
    }
    Ok(out)
}
