use cavity_gate::dynamics::{
    evolve_lindblad, evolve_mcwf, evolve_unitary, JumpOperatorSet, LindbladOptions, McwfOptions, Observable, ObservableSpec,
};
use cavity_gate::gates::{GateSimulator, Solver};
use cavity_gate::hilbert::{photon_projector, tensor_basis_state};
use cavity_gate::{QuantumState, StateLabel, SystemParams};
use nalgebra::DVector;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn channels(sim: &GateSimulator, names: &[&str]) -> Vec<Observable> {
    let layout = sim.layout();
    names
        .iter()
        .map(|n| n.parse::<ObservableSpec>().unwrap().resolve(&layout, None).unwrap())
        .collect()
}

fn random_qubit_state(sim: &GateSimulator, amps: &[(f64, f64); 4]) -> QuantumState {
    let layout = sim.layout();
    let mut v = DVector::zeros(layout.total_dim());
    for (label, &(re, im)) in StateLabel::QUBIT_BASIS.iter().zip(amps) {
        v += label.ket(0, &layout).unwrap() * C64::new(re, im);
    }
    QuantumState::ket_normalized(v).unwrap()
}

fn amplitudes() -> impl Strategy<Value = [(f64, f64); 4]> {
    prop::array::uniform4((0.1f64..1.0, -1.0f64..1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn unitary_evolution_preserves_norm(
        delta in 1.0f64..6.0,
        omega in 1e-3f64..0.05,
        t in 0.0f64..400.0,
        amps in amplitudes(),
    ) {
        let sim = GateSimulator::new(&SystemParams::new(1.0, delta, omega, 0.0, 0.0)).unwrap();
        let psi = random_qubit_state(&sim, &amps);
        for solver in [Solver::Effective, Solver::FullUnitary] {
            let out = sim.evolve(&psi, t.max(1e-3), 5, &[], &solver).unwrap();
            prop_assert!((out.final_state.weight() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn hamiltonians_are_hermitian(g in 0.1f64..2.0, delta in 0.5f64..10.0, omega in -0.1f64..0.1) {
        let set = cavity_gate::HamiltonianSet::build(&SystemParams::new(g, delta, omega, 0.0, 0.0)).unwrap();
        prop_assert!(set.all_hermitian());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn lindblad_keeps_a_valid_density_matrix(
        kappa in 0.0f64..1.0,
        gamma in 0.0f64..0.05,
        omega in 0.01f64..0.1,
        amps in amplitudes(),
    ) {
        let params = SystemParams::new(1.0, 3.0, omega, kappa, gamma).with_fock_cutoff(1);
        let sim = GateSimulator::new(&params).unwrap();
        let psi = random_qubit_state(&sim, &amps);
        let out = sim.evolve(&psi, 40.0, 9, &[], &Solver::lindblad_for(&params)).unwrap();
        let diag = out.lindblad.unwrap();
        prop_assert!(diag.max_trace_error < 1e-9, "trace error {}", diag.max_trace_error);
        prop_assert!(diag.min_eigenvalue > -1e-9, "eigenvalue {}", diag.min_eigenvalue);
        let rho = out.final_state.to_density();
        prop_assert!((&rho - rho.adjoint()).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn trajectories_stay_normalized(seed in any::<u64>(), amps in amplitudes()) {
        let params = SystemParams::new(1.0, 3.0, 0.05, 0.5, 0.05).with_fock_cutoff(1);
        let sim = GateSimulator::new(&params).unwrap();
        let psi = random_qubit_state(&sim, &amps);
        let obs = channels(&sim, &["p_zero_photons", "p_one_photon"]);
        let out = sim.evolve(&psi, 60.0, 7, &obs, &Solver::Mcwf(McwfOptions::new(8, seed))).unwrap();
        let p0 = out.series.channel("p_zero_photons").unwrap();
        let p1 = out.series.channel("p_one_photon").unwrap();
        for (a, b) in p0.iter().zip(p1) {
            prop_assert!((a + b - 1.0).abs() < 1e-10);
        }
        prop_assert!((out.final_state.to_density().trace().re - 1.0).abs() < 1e-10);
        prop_assert!(out.final_state.min_eigenvalue() > -1e-10);
    }
}

#[test]
fn closed_lindblad_matches_unitary() {
    let params = SystemParams::new(1.0, 3.0, 2e-3, 0.0, 0.0);
    let sim = GateSimulator::new(&params).unwrap();
    let psi = StateLabel::BellPlus.state(&sim.layout()).unwrap();
    let obs = channels(&sim, &["pop_bell_plus", "pop_bell_minus", "p_zero_photons"]);
    let t = sim.gate_time();
    let u = sim.evolve(&psi, t, 21, &obs, &Solver::FullUnitary).unwrap();
    let l = sim.evolve(&psi, t, 21, &obs, &Solver::lindblad_for(&params)).unwrap();
    for ((_, a), (_, b)) in u.series.channels.iter().zip(&l.series.channels) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-7, "{x} vs {y}");
        }
    }
}

#[test]
fn empty_jump_set_reproduces_unitary_evolution() {
    let params = SystemParams::new(1.0, 3.0, 0.02, 0.0, 0.0);
    let layout = params.layout().unwrap();
    let h = cavity_gate::HamiltonianSet::build(&params).unwrap().h_driven();
    let psi = StateLabel::BellPlus.state(&layout).unwrap();
    let obs = [Observable::expectation("p0", photon_projector(0, &layout))];
    let u = evolve_unitary(&h, &psi, 100.0, 11, &obs).unwrap();
    let m = evolve_mcwf(&h, &JumpOperatorSet::empty(), &psi, 100.0, 11, &obs, &McwfOptions::new(3, 1)).unwrap();
    for (a, b) in u.series.channels[0].1.iter().zip(&m.series.channels[0].1) {
        assert!((a - b).abs() < 1e-10);
    }
    assert!(m.jumps.iter().all(Vec::is_empty));
    assert!(m.std_errors.channels[0].1.iter().all(|s| *s < 1e-10));
}

#[test]
fn effective_dynamics_tracks_full_dynamics() {
    let params = SystemParams::new(1.0, 3.0, 2e-3, 0.0, 0.0);
    let sim = GateSimulator::new(&params).unwrap();
    let psi = StateLabel::BellPlus.state(&sim.layout()).unwrap();
    let obs = channels(&sim, &["pop_bell_plus", "pop_bell_minus"]);
    let t = 2.0 * sim.gate_time();
    let eff = sim.evolve(&psi, t, 101, &obs, &Solver::Effective).unwrap();
    let full = sim.evolve(&psi, t, 101, &obs, &Solver::FullUnitary).unwrap();
    for ((_, a), (_, b)) in eff.series.channels.iter().zip(&full.series.channels) {
        let worst = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(worst < 0.02, "{worst}");
    }
}

#[test]
fn mcwf_error_shrinks_like_inverse_sqrt_n() {
    let params = SystemParams::new(1.0, 3.0, 0.0, 0.0, 0.2).with_fock_cutoff(1);
    let layout = params.layout().unwrap();
    // Level-3 population decaying through the emission channels only.
    let h = cavity_gate::hilbert::OperatorMatrix::zeros(layout.total_dim());
    let jumps = JumpOperatorSet::for_params(&params, &layout).unwrap();
    let psi = tensor_basis_state(3, 2, 0, &layout).unwrap();
    let obs = [StateLabel::Product(2, 2).population_operator(&layout).map(|op| Observable::expectation("p22", op)).unwrap()];
    let t = 5.0;
    let exact = 1.0 - (-params.gamma * t).exp();
    let se_at = |n| {
        let e = evolve_mcwf(&h, &jumps, &psi, t, 2, &obs, &McwfOptions::new(n, 11)).unwrap();
        let mean = e.series.channels[0].1[1];
        let se = e.std_errors.channels[0].1[1];
        assert!((mean - exact).abs() < 4.0 * se, "n={n}: {mean} vs {exact} ± {se}");
        se
    };
    let ratio = se_at(400) / se_at(6400);
    assert!((ratio - 4.0).abs() < 0.6, "ratio {ratio}");
}

#[test]
fn seeds_reproduce_and_differ() {
    let params = SystemParams::new(1.0, 3.0, 0.05, 0.5, 0.05).with_fock_cutoff(1);
    let sim = GateSimulator::new(&params).unwrap();
    let psi = StateLabel::BellPlus.state(&sim.layout()).unwrap();
    let obs = channels(&sim, &["pop_bell_plus"]);
    let run = |seed, threads| {
        let mut o = McwfOptions::new(16, seed);
        o.threads = Some(threads);
        sim.evolve(&psi, 80.0, 9, &obs, &Solver::Mcwf(o)).unwrap()
    };
    let a = run(5, 1);
    let b = run(5, 3);
    let c = run(6, 1);
    assert_eq!(a.series.channels, b.series.channels);
    assert_eq!(a.jumps, b.jumps);
    assert_ne!(a.jumps, c.jumps);
}

#[test]
fn lindblad_photon_decay_matches_closed_form() {
    let params = SystemParams::new(1.0, 3.0, 0.0, 0.7, 0.0);
    let layout = params.layout().unwrap();
    let h = cavity_gate::model::cavity_energy(&params, &layout);
    let jumps = JumpOperatorSet::for_params(&params, &layout).unwrap();
    let rho0 = tensor_basis_state(1, 1, 2, &layout).unwrap();
    let obs = [Observable::expectation("p2", photon_projector(2, &layout))];
    let evo = evolve_lindblad(&h, &jumps, &rho0, 3.0, 7, &obs, &LindbladOptions::for_params(&params)).unwrap();
    for (t, p) in evo.series.times.iter().zip(&evo.series.channels[0].1) {
        assert!((p - (-2.0 * params.kappa * t).exp()).abs() < 1e-9);
    }
}
