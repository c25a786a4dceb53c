//! Benchmark fixtures for the pilot-dirac kernels.

pub use pilot_dirac::lattice::{Grid, SpinorField};
pub use pilot_dirac::observables::CurrentSnapshot;
pub use pilot_dirac::particle::ParticleState;
pub use pilot_dirac::solver::{DiracStepper, Scenario, SolverConfig};

use pilot_dirac::observables::current_field;
use pilot_dirac::particle::coupled_start;

/// Packet of width 5 and momentum 1 centred in the default box.
pub fn packet(grid: &Grid) -> SpinorField {
    Scenario::GaussianPacket { x0: 0.5 * grid.length(), width: 5.0, p: 1.0 }.init(grid, 1.0).expect("resolvable packet")
}

pub fn stepper(grid: Grid, dt: f64, k: f64) -> DiracStepper {
    DiracStepper::new(grid, SolverConfig { dt, k, ..SolverConfig::for_grid(&grid) }).expect("valid config")
}

/// A coupled particle half a width ahead of the packet centre.
pub fn coupled_particle(phi: &SpinorField, k: f64) -> ParticleState {
    let g = phi.grid;
    coupled_start(phi, 0.0, 0.5 * g.length() + 2.5, k, 4.0 * g.dx(), 1.0).expect("no node under the particle")
}

/// Current snapshots of `steps` free steps.
pub fn free_currents(grid: Grid, dt: f64, steps: usize) -> Vec<CurrentSnapshot> {
    let st = stepper(grid, dt, 1.0);
    let mut psi = packet(&grid);
    let mut out = vec![current_field(&psi, 0.0).expect("finite field")];
    for n in 1..=steps {
        st.step_free(&mut psi);
        out.push(current_field(&psi, n as f64 * dt).expect("finite field"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        let g = Grid::default();
        let snaps = free_currents(g, 0.01, 3);
        assert_eq!(snaps.len(), 4);
        assert!(coupled_particle(&packet(&g), 1.0).u[0] >= 1.0);
    }
}
