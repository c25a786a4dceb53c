use num_complex::Complex64;
use pilot_dirac::emtensor::CoupledRun;
use pilot_dirac::gauge::build_action_field;
use pilot_dirac::lattice::{CovectorField, Grid};
use pilot_dirac::observables::{continuity_residual, current_field};
use pilot_dirac::particle::{advance_trajectory, coupled_start, ParticleState};
use pilot_dirac::solver::{DiracStepper, Scenario, SolverConfig};
use pilot_dirac::Error;

fn packet(g: &Grid) -> pilot_dirac::lattice::SpinorField {
    Scenario::GaussianPacket { x0: 50.0, width: 5.0, p: 1.0 }.init(g, 1.0).unwrap()
}

#[test]
fn weak_coupling_approaches_free_evolution_linearly() {
    let g = Grid::default();
    let dev = |k: f64| {
        let cfg = SolverConfig { dt: 0.01, k, steps: 50, ..SolverConfig::for_grid(&g) };
        let phi = packet(&g);
        let part = coupled_start(&phi, 0.0, 52.5, k, cfg.eps, 1.0).unwrap();
        let run = CoupledRun::simulate(g, cfg, phi.clone(), part).unwrap();
        let st = DiracStepper::new(g, cfg).unwrap();
        let mut free = phi;
        for _ in 0..cfg.steps {
            st.step_free(&mut free);
        }
        run.frames.last().unwrap().phi.distance(&free)
    };
    let (a, b) = (dev(0.02), dev(0.01));
    assert!(a > 0.0 && (a / b - 2.0).abs() < 0.1, "deviation {a} at k, {b} at k/2");
}

#[test]
fn coupled_particle_stays_on_shell_and_conserves_energy() {
    let g = Grid::default();
    let cfg = SolverConfig { dt: 0.005, k: 1.0, steps: 200, ..SolverConfig::for_grid(&g) };
    let phi = packet(&g);
    let part = coupled_start(&phi, 0.0, 52.5, cfg.k, cfg.eps, 1.0).unwrap();
    let run = CoupledRun::simulate(g, cfg, phi, part).unwrap();
    for f in &run.frames {
        let u = f.particle.u;
        assert!((u[0] * u[0] - u[1] * u[1] - 1.0).abs() < 1e-12);
        assert!(f.particle.shell_defect < 1e-4);
    }
    let cons = pilot_dirac::emtensor::total_conservation_check(&run).unwrap();
    assert!(cons.drift < 0.1 * cons.exchange, "drift {} exchange {}", cons.drift, cons.exchange);
}

#[test]
fn external_potential_keeps_current_conserved_at_second_order() {
    let g = Grid::default();
    let a = CovectorField::from_fn(g, |x| [0.2 * (2.0 * std::f64::consts::PI * x / g.length()).sin(), 0.1]);
    let residual = |dt: f64| {
        let st = DiracStepper::new(g, SolverConfig { dt, ..SolverConfig::for_grid(&g) }).unwrap();
        let mut psi = packet(&g);
        let mut snaps = vec![current_field(&psi, 0.0).unwrap()];
        for n in 1..=(0.5 / dt).round() as usize {
            st.step_external(&mut psi, &a).unwrap();
            snaps.push(current_field(&psi, n as f64 * dt).unwrap());
        }
        continuity_residual(&snaps).unwrap()
    };
    let (r1, r2) = (residual(0.01), residual(0.005));
    assert!(r2 < 1e-6);
    assert!(((r1 / r2).log2() - 2.0).abs() < 0.5, "{r1} {r2}");
}

#[test]
fn guided_action_follows_the_model_action_field() {
    let g = Grid::default();
    let (k, dt) = (0.7, 0.01);
    let st = DiracStepper::new(g, SolverConfig { dt, ..SolverConfig::for_grid(&g) }).unwrap();
    let mut psi = Scenario::PlaneWave { p: 0.6 }.init(&g, 1.0).unwrap();
    let mut snaps = vec![current_field(&psi, 0.0).unwrap()];
    for n in 1..=40 {
        st.step_free(&mut psi);
        snaps.push(current_field(&psi, n as f64 * dt).unwrap());
    }
    let s = build_action_field(&snaps, k).unwrap();
    let x0 = 33.3;
    let mut p = ParticleState::guided(&snaps[0], x0, k).unwrap();
    for (n, w) in snaps.windows(2).enumerate() {
        p = advance_trajectory(&p, &w[0], &w[1], k).unwrap();
        let expect = s.value(n + 1, p.x) - s.value(0, x0);
        assert!((p.action - expect).abs() < 1e-9, "step {n}: {} vs {expect}", p.action);
    }
}

#[test]
fn superposition_with_matched_weights_has_nodes() {
    // nodes need |a| = |b| with a*b imaginary; the weight ratio below achieves it
    let g = Grid::default();
    let p = 2.0 * std::f64::consts::PI * 4.0 / g.length();
    let e = (p * p + 1.0).sqrt();
    let ratio = (e + 1.0 + p) / (e + 1.0 - p);
    let psi = Scenario::Superposition { p1: p, p2: -p, w1: Complex64::new(1.0, 0.0), w2: Complex64::new(ratio, 0.0) }
        .init(&g, 1.0)
        .unwrap();
    let snap = current_field(&psi, 0.0).unwrap();
    let nodes: Vec<usize> = (0..g.nx()).filter(|&i| snap.node_mask[i]).collect();
    assert_eq!(nodes, (0..8).map(|n| 64 * (2 * n + 1)).collect::<Vec<_>>());
    assert!(matches!(build_action_field(&[snap.clone(), current_field(&psi, 0.1).unwrap()], 1.0), Err(Error::Node { .. })));

    let st = DiracStepper::new(g, SolverConfig { k: 1.0, ..SolverConfig::for_grid(&g) }).unwrap();
    let part = ParticleState { t: 0.0, x: g.x(64), u: [1.0, 0.0], tau: 0.0, action: 0.0, p: [2.0, 0.0], shell_defect: 0.0 };
    let mut phi = psi;
    assert!(matches!(st.step_coupled(&mut phi, &part), Err(Error::Node { .. })));
}
