//! Fixed-step RK4 integration of the Lindblad master equation
//!
//! ```text
//! dρ/dt = −i[H, ρ] + Σ_j (L_j ρ L_j† − ½{L_j†L_j, ρ})
//! ```
//!
//! The generator is linear and time independent, so one RK4 step is the
//! matrix polynomial `P(h) = Σ_{k≤4} (hA)^k / k!` of the superoperator `A`.
//! The step between two samples is `P(h)^m`, formed by repeated squaring;
//! the iterates are the same as stepping RK4 `m` times. `A` acts on real
//! coordinates of Hermitian matrices (`Re ρ_ij` for `i ≤ j`, `Im ρ_ij` for
//! `i < j`), which keeps `ρ` exactly Hermitian and lets the heavy products
//! run as real GEMM.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::Serialize;

use super::observables::names;
use super::{sample_times, JumpOperatorSet, Observable, TimeSeries};
use crate::error::{Error, Result};
use crate::hilbert::{expect_dim, max_abs, min_eigenvalue, OperatorMatrix, QuantumState};
use crate::model::SystemParams;

#[derive(Clone, Debug, PartialEq)]
pub struct LindbladOptions {
    /// Target RK4 step; rounded down so it divides the sample interval.
    pub dt: Option<f64>,
    /// Largest tolerated deviation of any density-matrix coordinate between
    /// a run at `dt` and one at `dt/2`.
    pub tolerance: f64,
    pub max_halvings: usize,
    pub check_convergence: bool,
}

impl Default for LindbladOptions {
    fn default() -> Self {
        Self {
            dt: None,
            tolerance: 1e-8,
            max_halvings: 3,
            check_convergence: true,
        }
    }
}

impl LindbladOptions {
    /// Step `10⁻² / max(|Δ|, g, κ)`.
    pub fn for_params(params: &SystemParams) -> Self {
        let scale = params.delta.abs().max(params.g).max(params.kappa);
        Self {
            dt: Some(1e-2 / scale),
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LindbladDiagnostics {
    pub dt: f64,
    pub steps_per_sample: usize,
    /// Max coordinate deviation between the last two step sizes; `None` when
    /// the check was disabled.
    pub halving_deviation: Option<f64>,
    pub halvings: usize,
    pub max_trace_error: f64,
    pub min_eigenvalue: f64,
}

#[derive(Clone, Debug)]
pub struct LindbladEvolution {
    pub series: TimeSeries,
    pub final_state: QuantumState,
    pub diagnostics: LindbladDiagnostics,
}

/// Real superoperator of one master equation, reusable across initial states.
#[derive(Clone, Debug)]
pub struct LindbladSolver {
    dim: usize,
    generator: DMatrix<f64>,
    rate_scale: f64,
}

fn coord(dim: usize, i: usize, j: usize) -> usize {
    i * dim + j
}

fn to_coords(m: &DMatrix<C64>) -> DVector<f64> {
    let d = m.nrows();
    let mut x = DVector::zeros(d * d);
    for i in 0..d {
        x[coord(d, i, i)] = m[(i, i)].re;
        for j in (i + 1)..d {
            // Average the two triangles so small anti-Hermitian round-off cancels.
            let z = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            x[coord(d, i, j)] = z.re;
            x[coord(d, j, i)] = z.im;
        }
    }
    x
}

fn from_coords(x: &DVector<f64>, d: usize) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        m[(i, i)] = C64::new(x[coord(d, i, i)], 0.0);
        for j in (i + 1)..d {
            let z = C64::new(x[coord(d, i, j)], x[coord(d, j, i)]);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

fn matrix_power(base: &DMatrix<f64>, mut exp: usize) -> DMatrix<f64> {
    let n = base.nrows();
    let mut result: Option<DMatrix<f64>> = None;
    let mut square = base.clone();
    while exp > 0 {
        if exp & 1 == 1 {
            result = Some(match result {
                None => square.clone(),
                Some(r) => &r * &square,
            });
        }
        exp >>= 1;
        if exp > 0 {
            square = &square * &square;
        }
    }
    result.unwrap_or_else(|| DMatrix::identity(n, n))
}

impl LindbladSolver {
    pub fn new(h: &OperatorMatrix, jumps: &JumpOperatorSet) -> Result<Self> {
        h.ensure_hermitian()?;
        let d = h.dim();
        jumps.check_dim(d)?;
        let rates = jumps.rate_operator(d);
        let h_eff: DMatrix<C64> = h.matrix() - rates.matrix() * C64::new(0.0, 0.5);
        let ls: Vec<&DMatrix<C64>> = jumps.iter().map(|j| j.operator.matrix()).collect();
        let i_unit = C64::new(0.0, 1.0);

        // L(E_ab)[r, c] = −i δ_cb H_eff[r, a] + i δ_ra conj(H_eff[c, b]) + Σ_j L_j[r, a] conj(L_j[c, b])
        let unit_image = |a: usize, b: usize| -> DMatrix<C64> {
            let mut m = DMatrix::zeros(d, d);
            for r in 0..d {
                m[(r, b)] -= i_unit * h_eff[(r, a)];
            }
            for c in 0..d {
                m[(a, c)] += i_unit * h_eff[(c, b)].conj();
            }
            for l in &ls {
                for c in 0..d {
                    let right = l[(c, b)].conj();
                    if right == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for r in 0..d {
                        m[(r, c)] += l[(r, a)] * right;
                    }
                }
            }
            m
        };

        let n = d * d;
        let mut generator = DMatrix::zeros(n, n);
        for i in 0..d {
            for j in 0..d {
                let image = if i == j {
                    unit_image(i, i)
                } else if i < j {
                    unit_image(i, j) + unit_image(j, i)
                } else {
                    let (p, q) = (j, i);
                    (unit_image(p, q) - unit_image(q, p)) * i_unit
                };
                generator.set_column(coord(d, i, j), &to_coords(&image));
            }
        }
        let rate_scale = max_abs(h.matrix()).max(rates.max_abs());
        Ok(Self {
            dim: d,
            generator,
            rate_scale,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `dρ/dt` for a Hermitian `ρ`.
    pub fn derivative(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        from_coords(&(&self.generator * to_coords(rho)), self.dim)
    }

    fn step_matrix(&self, h: f64) -> DMatrix<f64> {
        let n = self.generator.nrows();
        let id = DMatrix::<f64>::identity(n, n);
        let ha = &self.generator * h;
        let mut p = &id + &ha * 0.25;
        p = &id + (&ha * &p) / 3.0;
        p = &id + (&ha * &p) * 0.5;
        &id + &ha * &p
    }

    fn trajectories(&self, starts: &[DVector<f64>], n_samples: usize, h: f64, steps: usize) -> Vec<Vec<DVector<f64>>> {
        let propagator = matrix_power(&self.step_matrix(h), steps);
        starts
            .iter()
            .map(|x0| {
                let mut out = Vec::with_capacity(n_samples);
                out.push(x0.clone());
                for k in 1..n_samples {
                    let next = &propagator * &out[k - 1];
                    out.push(next);
                }
                out
            })
            .collect()
    }

    /// Integrates several initial states over the same sample grid, sharing
    /// the step propagators and the convergence check.
    pub fn evolve_batch(
        &self,
        inputs: &[(&QuantumState, &[Observable])],
        t_final: f64,
        n_samples: usize,
        options: &LindbladOptions,
    ) -> Result<Vec<LindbladEvolution>> {
        let times = sample_times(t_final, n_samples)?;
        let interval = times[1] - times[0];
        let starts = inputs
            .iter()
            .map(|(rho0, _)| {
                expect_dim(self.dim, rho0.dim())?;
                Ok(to_coords(&rho0.to_density()))
            })
            .collect::<Result<Vec<_>>>()?;

        let target = options
            .dt
            .unwrap_or(1e-2 / self.rate_scale.max(f64::MIN_POSITIVE));
        if !(target > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {target}")));
        }
        let mut steps = (interval / target).ceil().max(1.0) as usize;
        let mut current = self.trajectories(&starts, n_samples, interval / steps as f64, steps);
        let mut deviation = None;
        let mut halvings = 0;
        if options.check_convergence {
            loop {
                let finer = self.trajectories(&starts, n_samples, interval / (2 * steps) as f64, 2 * steps);
                let dev = current
                    .iter()
                    .flatten()
                    .zip(finer.iter().flatten())
                    .map(|(a, b)| (a - b).amax())
                    .fold(0.0, f64::max);
                steps *= 2;
                halvings += 1;
                current = finer;
                deviation = Some(dev);
                if dev <= options.tolerance {
                    break;
                }
                if halvings > options.max_halvings {
                    return Err(Error::Convergence(format!(
                        "density matrix changed by {dev:e} > {:e} when halving dt to {:e}",
                        options.tolerance,
                        interval / steps as f64
                    )));
                }
            }
        }

        let dt = interval / steps as f64;
        inputs
            .iter()
            .zip(current)
            .map(|((_, observables), coords)| {
                let mut series = TimeSeries::new(times.clone(), &names(observables));
                let mut diagnostics = LindbladDiagnostics {
                    dt,
                    steps_per_sample: steps,
                    halving_deviation: deviation,
                    halvings,
                    max_trace_error: 0.0,
                    min_eigenvalue: f64::INFINITY,
                };
                let mut rho = DMatrix::zeros(self.dim, self.dim);
                for (x, &t) in coords.iter().zip(&times) {
                    rho = from_coords(x, self.dim);
                    let trace = rho.trace().re;
                    diagnostics.max_trace_error = diagnostics.max_trace_error.max((trace - 1.0).abs());
                    diagnostics.min_eigenvalue = diagnostics.min_eigenvalue.min(min_eigenvalue(&rho));
                    let row: Vec<f64> = observables.iter().map(|o| o.eval_density(&rho, t)).collect();
                    series.push_row(&row);
                }
                Ok(LindbladEvolution {
                    series,
                    final_state: QuantumState::Density(rho),
                    diagnostics,
                })
            })
            .collect()
    }

    pub fn evolve(
        &self,
        rho0: &QuantumState,
        t_final: f64,
        n_samples: usize,
        observables: &[Observable],
        options: &LindbladOptions,
    ) -> Result<LindbladEvolution> {
        let mut out = self.evolve_batch(&[(rho0, observables)], t_final, n_samples, options)?;
        Ok(out.remove(0))
    }
}

/// Integrates the master equation from `rho0` (kets are promoted to `|ψ⟩⟨ψ|`).
pub fn evolve_lindblad(
    h: &OperatorMatrix,
    jumps: &JumpOperatorSet,
    rho0: &QuantumState,
    t_final: f64,
    n_samples: usize,
    observables: &[Observable],
    options: &LindbladOptions,
) -> Result<LindbladEvolution> {
    LindbladSolver::new(h, jumps)?.evolve(rho0, t_final, n_samples, observables, options)
}
