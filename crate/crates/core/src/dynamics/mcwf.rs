//! Monte Carlo wavefunction (quantum-jump) trajectories.
//!
//! Between jumps a trajectory follows `H_nh = H − (i/2) Σ L†L` with the exact
//! fixed-step propagator `e^{−i H_nh dt}`. Each trajectory draws a uniform
//! threshold `r`; once `‖ψ‖² ≤ r` at the end of a step, a channel `j` is
//! chosen with probability `∝ ‖L_j ψ‖²`, the state becomes `L_j ψ / ‖L_j ψ‖`
//! and a fresh threshold is drawn.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`): trajectory `k` uses the
//! generator seeded with `seed` on stream `k`, so the output does not depend
//! on how trajectories are scheduled across threads.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::observables::names;
use super::{sample_times, JumpChannel, JumpOperatorSet, Observable, TimeSeries};
use crate::error::{Error, Result};
use crate::hilbert::{expect_dim, OperatorMatrix, QuantumState};

/// Per-step jump probability above which the run is rejected.
pub const MAX_STEP_JUMP_PROBABILITY: f64 = 0.1;
/// Per-step jump probability the default step is sized for.
pub const TARGET_STEP_JUMP_PROBABILITY: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct McwfOptions {
    pub n_traj: usize,
    pub seed: u64,
    /// Step size; by default the largest step dividing the sample interval
    /// with `dt · λ_max(Σ L†L) ≤ 0.01`.
    pub dt: Option<f64>,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl McwfOptions {
    pub fn new(n_traj: usize, seed: u64) -> Self {
        Self {
            n_traj,
            seed,
            dt: None,
            threads: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JumpRecord {
    pub time: f64,
    pub channel: JumpChannel,
}

#[derive(Clone, Debug)]
pub struct TrajectoryEnsemble {
    pub n_traj: usize,
    pub seed: u64,
    pub dt: f64,
    /// Jump records, one list per trajectory.
    pub jumps: Vec<Vec<JumpRecord>>,
    /// Ensemble means.
    pub series: TimeSeries,
    /// Standard error of the mean for every channel and sample.
    pub std_errors: TimeSeries,
    /// Ensemble-averaged density matrix at the final time.
    pub final_state: QuantumState,
    pub max_step_jump_probability: f64,
    pub warnings: Vec<String>,
}

struct TrajectoryResult {
    rows: Vec<Vec<f64>>,
    jumps: Vec<JumpRecord>,
    final_ket: DVector<C64>,
    max_step_probability: f64,
}

struct Setup<'a> {
    step: DMatrix<C64>,
    jumps: Vec<(&'a DMatrix<C64>, JumpChannel)>,
    times: Vec<f64>,
    steps_per_sample: usize,
    dt: f64,
}

fn run_trajectory(setup: &Setup<'_>, psi0: &DVector<C64>, observables: &[Observable], seed: u64, index: usize) -> Result<TrajectoryResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let mut threshold: f64 = rng.random();
    let mut psi = psi0.clone();
    let mut norm_sqr = psi.norm_squared();
    let mut rows = Vec::with_capacity(setup.times.len());
    let mut jumps = Vec::new();
    let mut max_p: f64 = 0.0;

    let normalized = |v: &DVector<C64>| v.unscale(v.norm());
    rows.push(observables.iter().map(|o| o.eval_ket(&normalized(&psi), 0.0)).collect());

    for (s, &t_sample) in setup.times.iter().enumerate().skip(1) {
        let t_start = setup.times[s - 1];
        for k in 0..setup.steps_per_sample {
            let next = &setup.step * &psi;
            let next_norm = next.norm_squared();
            let p = 1.0 - next_norm / norm_sqr;
            max_p = max_p.max(p);
            if p > MAX_STEP_JUMP_PROBABILITY {
                return Err(Error::StepTooLarge {
                    probability: p,
                    dt: setup.dt,
                });
            }
            psi = next;
            norm_sqr = next_norm;
            if norm_sqr <= threshold && !setup.jumps.is_empty() {
                let weights: Vec<f64> = setup.jumps.iter().map(|(l, _)| (*l * &psi).norm_squared()).collect();
                let total: f64 = weights.iter().sum();
                if total > 0.0 {
                    let mut pick = rng.random::<f64>() * total;
                    let mut chosen = weights.len() - 1;
                    for (j, w) in weights.iter().enumerate() {
                        if pick < *w {
                            chosen = j;
                            break;
                        }
                        pick -= w;
                    }
                    let (op, channel) = &setup.jumps[chosen];
                    psi = normalized(&(*op * &psi));
                    norm_sqr = 1.0;
                    let time = if k + 1 == setup.steps_per_sample {
                        t_sample
                    } else {
                        t_start + (k + 1) as f64 * setup.dt
                    };
                    jumps.push(JumpRecord {
                        time,
                        channel: channel.clone(),
                    });
                }
                threshold = rng.random();
            }
        }
        let current = normalized(&psi);
        rows.push(observables.iter().map(|o| o.eval_ket(&current, t_sample)).collect());
    }
    Ok(TrajectoryResult {
        rows,
        jumps,
        final_ket: normalized(&psi),
        max_step_probability: max_p,
    })
}

/// Runs `options.n_traj` quantum-jump trajectories from `psi0` and averages
/// the observables over the ensemble.
pub fn evolve_mcwf(
    h: &OperatorMatrix,
    jumps: &JumpOperatorSet,
    psi0: &QuantumState,
    t_final: f64,
    n_samples: usize,
    observables: &[Observable],
    options: &McwfOptions,
) -> Result<TrajectoryEnsemble> {
    h.ensure_hermitian()?;
    let psi0 = psi0
        .as_ket()
        .ok_or_else(|| Error::InvalidArgument("trajectories need a ket initial state".into()))?;
    let dim = h.dim();
    expect_dim(dim, psi0.len())?;
    jumps.check_dim(dim)?;
    if options.n_traj == 0 {
        return Err(Error::InvalidArgument("n_traj must be >= 1".into()));
    }
    let times = sample_times(t_final, n_samples)?;
    let interval = times[1] - times[0];

    let rates = jumps.rate_operator(dim);
    let max_rate = SymmetricEigen::new(rates.matrix().clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(0.0, f64::max);
    let target = match options.dt {
        Some(dt) if dt > 0.0 => dt,
        Some(dt) => return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}"))),
        None if max_rate > 0.0 => TARGET_STEP_JUMP_PROBABILITY / max_rate,
        None => interval,
    };
    let steps_per_sample = (interval / target).ceil().max(1.0) as usize;
    let dt = interval / steps_per_sample as f64;

    let h_nh = h.matrix() - rates.matrix() * C64::new(0.0, 0.5);
    let step = (h_nh * C64::new(0.0, -dt)).exp();
    let setup = Setup {
        step,
        jumps: jumps.iter().map(|j| (j.operator.matrix(), j.channel.clone())).collect(),
        times: times.clone(),
        steps_per_sample,
        dt,
    };

    let work = || -> Result<Vec<TrajectoryResult>> {
        (0..options.n_traj)
            .into_par_iter()
            .map(|k| run_trajectory(&setup, psi0, observables, options.seed, k))
            .collect()
    };
    let results = match options.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };

    // Sequential reduction in trajectory order keeps the sums bit-for-bit stable.
    let names = names(observables);
    let n = results.len() as f64;
    let mut series = TimeSeries::new(times.clone(), &names);
    let mut std_errors = TimeSeries::new(times.clone(), &names);
    for s in 0..times.len() {
        let mut mean = vec![0.0; observables.len()];
        for r in &results {
            for (m, x) in mean.iter_mut().zip(&r.rows[s]) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut sq = vec![0.0; observables.len()];
        for r in &results {
            for ((acc, x), m) in sq.iter_mut().zip(&r.rows[s]).zip(&mean) {
                *acc += (x - m).powi(2);
            }
        }
        let se: Vec<f64> = sq
            .iter()
            .map(|acc| if results.len() > 1 { (acc / (n - 1.0) / n).sqrt() } else { 0.0 })
            .collect();
        series.push_row(&mean);
        std_errors.push_row(&se);
    }

    let mut rho = DMatrix::zeros(dim, dim);
    for r in &results {
        rho += &r.final_ket * r.final_ket.adjoint();
    }
    rho /= C64::new(n, 0.0);

    let max_step_jump_probability = results.iter().map(|r| r.max_step_probability).fold(0.0, f64::max);
    let mut warnings = Vec::new();
    if max_step_jump_probability > TARGET_STEP_JUMP_PROBABILITY {
        warnings.push(format!(
            "per-step jump probability reached {max_step_jump_probability:.4} (> {TARGET_STEP_JUMP_PROBABILITY}); consider a smaller dt than {dt:e}"
        ));
    }

    Ok(TrajectoryEnsemble {
        n_traj: options.n_traj,
        seed: options.seed,
        dt,
        jumps: results.into_iter().map(|r| r.jumps).collect(),
        series,
        std_errors,
        final_state: QuantumState::Density(rho),
        max_step_jump_probability,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{annihilator, number_operator, tensor_basis_state, SpaceLayout};
    use crate::model::{cavity_energy, SystemParams};

    #[test]
    fn photon_decay_statistics() {
        let params = SystemParams::new(1.0, 2.0, 0.0, 1.0, 0.0);
        let l = SpaceLayout::new(1).unwrap();
        let h = cavity_energy(&params, &l);
        let mut jumps = JumpOperatorSet::empty();
        jumps.push(annihilator(&l), JumpChannel::CavityDecay);
        let psi0 = tensor_basis_state(1, 1, 1, &l).unwrap();
        let obs = [Observable::expectation("n", number_operator(&l))];
        let ens = evolve_mcwf(&h, &jumps, &psi0, 2.0, 5, &obs, &McwfOptions::new(2000, 7)).unwrap();
        for ((t, n), se) in ens
            .series
            .times
            .iter()
            .zip(ens.series.channel("n").unwrap())
            .zip(ens.std_errors.channel("n").unwrap())
        {
            let exact = (-t).exp();
            assert!((n - exact).abs() <= 4.0 * se.max(1e-12) + 1e-2, "t={t}: {n} vs {exact}");
        }
        // Every trajectory starting in |1⟩ emits at most one photon.
        assert!(ens.jumps.iter().all(|j| j.len() <= 1));
    }

    #[test]
    fn oversized_step_is_rejected() {
        let params = SystemParams::new(1.0, 2.0, 0.0, 1.0, 0.0);
        let l = SpaceLayout::new(1).unwrap();
        let h = cavity_energy(&params, &l);
        let mut jumps = JumpOperatorSet::empty();
        jumps.push(annihilator(&l), JumpChannel::CavityDecay);
        let psi0 = tensor_basis_state(1, 1, 1, &l).unwrap();
        let mut opts = McwfOptions::new(4, 1);
        opts.dt = Some(1.0);
        let err = evolve_mcwf(&h, &jumps, &psi0, 2.0, 3, &[], &opts).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge { .. }));
        assert!(err.to_string().contains("smaller dt"));
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let params = SystemParams::new(1.0, 2.0, 0.0, 1.0, 0.0);
        let l = SpaceLayout::new(1).unwrap();
        let h = cavity_energy(&params, &l);
        let jumps = JumpOperatorSet::for_params(&params, &l).unwrap();
        let psi0 = tensor_basis_state(1, 1, 1, &l).unwrap();
        let obs = [Observable::expectation("n", number_operator(&l))];
        let mut a = McwfOptions::new(64, 42);
        a.threads = Some(1);
        let mut b = a.clone();
        b.threads = Some(3);
        let ra = evolve_mcwf(&h, &jumps, &psi0, 2.0, 5, &obs, &a).unwrap();
        let rb = evolve_mcwf(&h, &jumps, &psi0, 2.0, 5, &obs, &b).unwrap();
        assert_eq!(ra.jumps, rb.jumps);
        assert_eq!(ra.series, rb.series);
        assert_eq!(ra.std_errors, rb.std_errors);
    }
}
