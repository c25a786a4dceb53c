use proptest::prelude::*;

use pilot_dirac::gauge::{equivalence_check, gauge_transform, Direction, LinearAction};
use pilot_dirac::lattice::{Grid, ScalarField};
use pilot_dirac::observables::current_field;
use pilot_dirac::solver::{DiracStepper, Scenario, SolverConfig};

fn grid() -> Grid {
    Grid::new(256, 0.2).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn currents_ignore_any_local_phase(a in -3.0f64..3.0, q in 1usize..6, shift in 0.0f64..6.3) {
        let g = grid();
        let psi = Scenario::GaussianPacket { x0: 25.6, width: 2.0, p: 0.4 }.init(&g, 1.0).unwrap();
        let s = ScalarField::from_fn(g, |x| a * (2.0 * std::f64::consts::PI * q as f64 * x / g.length() + shift).sin());
        let (j, jt) = (current_field(&psi, 0.0).unwrap(), current_field(&gauge_transform(&psi, &s, Direction::Forward), 0.0).unwrap());
        for c in 0..2 {
            for (x, y) in j.j.comps[c].iter().zip(&jt.j.comps[c]) {
                prop_assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_energy_shifts_are_pure_phases(c in -2.0f64..2.0, p in -1.0f64..1.0) {
        let g = grid();
        let psi = Scenario::GaussianPacket { x0: 25.6, width: 2.0, p }.init(&g, 1.0).unwrap();
        let cfg = SolverConfig { dt: 0.01, steps: 30, ..SolverConfig::for_grid(&g) };
        let err = equivalence_check(&psi, &LinearAction { c }, &cfg, 0.0).unwrap().max_error;
        prop_assert!(err < 1e-12, "error {}", err);
    }

    #[test]
    fn free_steps_preserve_the_norm(p in -1.5f64..1.5, width in 1.0f64..2.5, dt in 0.001f64..0.05) {
        let g = grid();
        let mut psi = Scenario::GaussianPacket { x0: 25.6, width, p }.init(&g, 1.0).unwrap();
        let st = DiracStepper::new(g, SolverConfig { dt, ..SolverConfig::for_grid(&g) }).unwrap();
        for _ in 0..20 {
            st.step_free(&mut psi);
        }
        prop_assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
    }
}
