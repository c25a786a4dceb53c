//! The action field `S`, the phase change `Ψ = ψ e^{-iS}` and checks that the
//! phase-sourced and free field equations describe the same evolution.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{antiderivative_real, derivative_real, CovectorField, Grid, ScalarField, SpinorField};
use crate::observables::{uniform_dt, CurrentSnapshot};
use crate::solver::{DiracStepper, SolverConfig};

/// Relative curl above which an action field is flagged path dependent.
pub const CURL_THRESHOLD: f64 = 1e-8;

/// `S` on every site of every snapshot, with `S(t0, x = 0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionField {
    pub times: Vec<f64>,
    pub values: Vec<ScalarField>,
    /// `∂_α S = -2k j_α` at each snapshot, lower index.
    pub gradient: Vec<CovectorField>,
    /// Largest spatial `L²` norm of `∂_0 j_1 - ∂_1 j_0` over the snapshots.
    pub curl_norm: f64,
    /// `curl_norm` relative to the matching norm of `(∂_t j¹, ∂_x j⁰)`.
    pub curl_relative: f64,
    pub path_dependent: bool,
}

impl ActionField {
    pub fn grid(&self) -> Grid {
        self.values[0].grid
    }

    /// `S(t_n, x)` by periodic interpolation of the non-linear part plus the
    /// exact linear part.
    pub fn value(&self, n: usize, x: f64) -> f64 {
        let g = self.grid();
        // S carries a linear term in x; interpolate the periodic remainder.
        let slope = self.slope(n);
        let periodic: Vec<f64> = self.values[n].values.iter().zip(g.xs()).map(|(s, xi)| s - slope * xi).collect();
        crate::lattice::interpolate(&periodic, &g, x) + slope * x
    }

    /// Mean of `∂_x S` at snapshot `n`.
    fn slope(&self, n: usize) -> f64 {
        let g = self.grid();
        g.integrate(&self.gradient[n].comps[1]) / g.length()
    }
}

/// Builds `S` from `∂_α S = -2k j_α`: spatial antiderivative of `2k j¹` at
/// the first snapshot, then trapezoidal integration of `-2k j⁰` in time at
/// every site. The curl `∂_0 j_1 - ∂_1 j_0 = -(∂_t j¹ + ∂_x j⁰)` is measured
/// with finite differences in time (central inside, one-sided at the ends).
pub fn build_action_field(snaps: &[CurrentSnapshot], k: f64) -> Result<ActionField> {
    if snaps.len() < 2 {
        return Err(Error::TooFewSnapshots { needed: 2, got: snaps.len() });
    }
    let times: Vec<f64> = snaps.iter().map(|s| s.t).collect();
    let dt = uniform_dt(&times)?;
    let grid = snaps[0].grid();
    for s in snaps {
        if let Some(i) = s.node_mask.iter().position(|&m| m) {
            return Err(Error::Node { x: grid.x(i), rho0: s.rho0.values[i] });
        }
    }
    let gradient: Vec<CovectorField> = snaps
        .iter()
        .map(|s| CovectorField {
            grid,
            comps: [
                s.j.comps[0].iter().map(|v| -2.0 * k * v).collect(),
                s.j.comps[1].iter().map(|v| 2.0 * k * v).collect(),
            ],
        })
        .collect();
    let mut values = Vec::with_capacity(snaps.len());
    values.push(ScalarField { grid, values: antiderivative_real(&gradient[0].comps[1], &grid) });
    for n in 1..snaps.len() {
        let prev = &values[n - 1].values;
        let v = (0..grid.nx())
            .map(|i| prev[i] + 0.5 * dt * (gradient[n - 1].comps[0][i] + gradient[n].comps[0][i]))
            .collect();
        values.push(ScalarField { grid, values: v });
    }

    let last = snaps.len() - 1;
    let (mut curl_norm, mut scale) = (0.0f64, 0.0f64);
    for n in 0..snaps.len() {
        let dtj1: Vec<f64> = (0..grid.nx())
            .map(|i| {
                let j = |m: usize| snaps[m].j.comps[1][i];
                match n {
                    0 => (j(1) - j(0)) / dt,
                    _ if n == last => (j(last) - j(last - 1)) / dt,
                    _ => (j(n + 1) - j(n - 1)) / (2.0 * dt),
                }
            })
            .collect();
        let dxj0 = derivative_real(&snaps[n].j.comps[0], &grid);
        let curl: Vec<f64> = dtj1.iter().zip(&dxj0).map(|(a, b)| (a + b).powi(2)).collect();
        let mag: Vec<f64> = dtj1.iter().zip(&dxj0).map(|(a, b)| a * a + b * b).collect();
        curl_norm = curl_norm.max(grid.integrate(&curl).sqrt());
        scale = scale.max(grid.integrate(&mag).sqrt());
    }
    let curl_relative = if scale > 0.0 { curl_norm / scale } else { curl_norm };
    Ok(ActionField { times, values, gradient, curl_norm, curl_relative, path_dependent: curl_relative > CURL_THRESHOLD })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `Ψ = ψ e^{-iS}`.
    Forward,
    /// `ψ = Ψ e^{+iS}`.
    Backward,
}

pub fn gauge_transform(psi: &SpinorField, s: &ScalarField, direction: Direction) -> SpinorField {
    let sign = match direction {
        Direction::Forward => -1.0,
        Direction::Backward => 1.0,
    };
    let mut out = psi.clone();
    for (i, &si) in s.values.iter().enumerate() {
        let ph = Complex64::from_polar(1.0, sign * si);
        let v = psi.at(i);
        out.set(i, [v[0] * ph, v[1] * ph]);
    }
    out
}

/// A smooth real `S(t, x)` given in closed form.
pub trait AnalyticAction {
    fn value(&self, t: f64, x: f64) -> f64;
    /// `(∂_t S, ∂_x S)`.
    fn gradient(&self, t: f64, x: f64) -> [f64; 2];

    fn field(&self, grid: &Grid, t: f64) -> ScalarField {
        ScalarField::from_fn(*grid, |x| self.value(t, x))
    }

    fn gradient_field(&self, grid: &Grid, t: f64) -> CovectorField {
        CovectorField::from_fn(*grid, |x| self.gradient(t, x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroAction;

impl AnalyticAction for ZeroAction {
    fn value(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn gradient(&self, _: f64, _: f64) -> [f64; 2] {
        [0.0, 0.0]
    }
}

/// `S = c t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearAction {
    pub c: f64,
}

impl AnalyticAction for LinearAction {
    fn value(&self, t: f64, _: f64) -> f64 {
        self.c * t
    }
    fn gradient(&self, _: f64, _: f64) -> [f64; 2] {
        [self.c, 0.0]
    }
}

/// `S = a sin(2πx/L) cos(ωt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillatingAction {
    pub a: f64,
    pub omega: f64,
    pub length: f64,
}

impl AnalyticAction for OscillatingAction {
    fn value(&self, t: f64, x: f64) -> f64 {
        self.a * (2.0 * PI * x / self.length).sin() * (self.omega * t).cos()
    }
    fn gradient(&self, t: f64, x: f64) -> [f64; 2] {
        let q = 2.0 * PI / self.length;
        [
            -self.a * self.omega * (q * x).sin() * (self.omega * t).sin(),
            self.a * q * (q * x).cos() * (self.omega * t).cos(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub steps: usize,
    pub dt: f64,
    /// `max |ψ(t) - Ψ(t) e^{iS(t)}|` over sites and steps.
    pub max_error: f64,
}

/// Evolves `ψ` from `Ψ0 e^{iS(t0)}` with the phase-sourced equation and `Ψ`
/// from `Ψ0` with the free equation, and compares them through the phase.
/// The source is sampled at each step midpoint.
pub fn equivalence_check(big_psi0: &SpinorField, s: &dyn AnalyticAction, cfg: &SolverConfig, t0: f64) -> Result<EquivalenceReport> {
    let grid = big_psi0.grid;
    let stepper = DiracStepper::new(grid, *cfg)?;
    let mut big = big_psi0.clone();
    let mut psi = gauge_transform(big_psi0, &s.field(&grid, t0), Direction::Backward);
    let mut max_error = 0.0f64;
    for n in 0..cfg.steps {
        let t_mid = t0 + (n as f64 + 0.5) * cfg.dt;
        stepper.step_phase_sourced(&mut psi, &s.gradient_field(&grid, t_mid))?;
        stepper.step_free(&mut big);
        let t = t0 + (n + 1) as f64 * cfg.dt;
        let expect = gauge_transform(&big, &s.field(&grid, t), Direction::Backward);
        max_error = max_error.max(psi.max_abs_diff(&expect));
    }
    Ok(EquivalenceReport { steps: cfg.steps, dt: cfg.dt, max_error })
}

/// `A_α = -∂_α S`, the external potential whose coupling term is identical
/// to the phase-sourced one.
pub fn absorb_into_potential(ds: &CovectorField) -> CovectorField {
    ds.scaled(-1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::current_field;
    use crate::solver::Scenario;

    fn plane_wave_snaps(p: f64, k_dt: f64, n: usize) -> (Vec<CurrentSnapshot>, Grid) {
        let g = Grid::default();
        let mut cfg = SolverConfig::for_grid(&g);
        cfg.dt = k_dt;
        let st = DiracStepper::new(g, cfg).unwrap();
        let mut psi = Scenario::PlaneWave { p }.init(&g, 1.0).unwrap();
        let mut out = vec![current_field(&psi, 0.0).unwrap()];
        for i in 1..=n {
            st.step_free(&mut psi);
            out.push(current_field(&psi, i as f64 * k_dt).unwrap());
        }
        (out, g)
    }

    #[test]
    fn rest_wave_action_is_linear_in_time() {
        let (snaps, g) = plane_wave_snaps(0.0, 0.01, 50);
        let s = build_action_field(&snaps, 1.0).unwrap();
        let l = g.length();
        for (n, f) in s.values.iter().enumerate() {
            let t = n as f64 * 0.01;
            assert!(f.values.iter().all(|v| (v + 2.0 * t / l).abs() < 1e-12));
        }
        assert!(s.curl_norm < 1e-10);
        assert!(!s.path_dependent);
    }

    #[test]
    fn boosted_wave_action_is_linear_in_both() {
        let (snaps, g) = plane_wave_snaps(0.9, 0.01, 20);
        let k = 1.5;
        let s = build_action_field(&snaps, k).unwrap();
        let (j0, j1) = (snaps[0].j.comps[0][0], snaps[0].j.comps[1][0]);
        for (n, f) in s.values.iter().enumerate() {
            let t = n as f64 * 0.01;
            for (i, x) in g.xs().enumerate() {
                assert!((f.values[i] + 2.0 * k * (j0 * t - j1 * x)).abs() < 1e-10);
            }
        }
        assert!(s.curl_norm < 1e-10);
        assert!((s.value(3, 12.345) + 2.0 * k * (j0 * 0.03 - j1 * 12.345)).abs() < 1e-10);
    }

    #[test]
    fn counter_propagating_waves_are_flagged_path_dependent() {
        // curl = 4m Re(a* b), which interference between unlike spinors makes nonzero
        let g = Grid::default();
        let psi = Scenario::Superposition { p1: 0.5, p2: -0.8, w1: Complex64::new(1.0, 0.0), w2: Complex64::new(0.5, 0.2) }
            .init(&g, 1.0)
            .unwrap();
        let mut cfg = SolverConfig::for_grid(&g);
        cfg.dt = 0.01;
        let st = DiracStepper::new(g, cfg).unwrap();
        let mut p = psi;
        let mut snaps = vec![current_field(&p, 0.0).unwrap()];
        for i in 1..5 {
            st.step_free(&mut p);
            snaps.push(current_field(&p, i as f64 * 0.01).unwrap());
        }
        let s = build_action_field(&snaps, 1.0).unwrap();
        assert!(s.path_dependent, "curl {}", s.curl_relative);
    }

    #[test]
    fn nodes_on_the_path_are_errors() {
        let g = Grid::new(64, 0.5).unwrap();
        let psi = SpinorField::from_fn(g, |x| {
            let a = Complex64::new((0.3 * x).cos() + 1.5, 0.0);
            [a, Complex64::new(0.0, 1.0) * a]
        });
        let snaps = vec![current_field(&psi, 0.0).unwrap(), current_field(&psi, 0.1).unwrap()];
        assert!(matches!(build_action_field(&snaps, 1.0), Err(Error::Node { .. })));
    }

    #[test]
    fn transform_is_an_involution_and_keeps_currents() {
        let g = Grid::default();
        let psi = Scenario::GaussianPacket { x0: 50.0, width: 5.0, p: 0.5 }.init(&g, 1.0).unwrap();
        let s = OscillatingAction { a: 2.0, omega: 1.0, length: g.length() }.field(&g, 0.3);
        let big = gauge_transform(&psi, &s, Direction::Forward);
        let back = gauge_transform(&big, &s, Direction::Backward);
        assert!(back.max_abs_diff(&psi) < 1e-15);
        let (a, b) = (current_field(&psi, 0.0).unwrap(), current_field(&big, 0.0).unwrap());
        for i in 0..g.nx() {
            for c in 0..2 {
                assert!((a.j.comps[c][i] - b.j.comps[c][i]).abs() < 1e-16);
            }
        }
        assert_eq!(gauge_transform(&psi, &ScalarField::zeros(g), Direction::Forward), psi);
    }

    #[test]
    fn equivalence_for_zero_and_linear_actions() {
        let g = Grid::default();
        let psi = Scenario::GaussianPacket { x0: 50.0, width: 5.0, p: 0.5 }.init(&g, 1.0).unwrap();
        let mut cfg = SolverConfig::for_grid(&g);
        cfg.steps = 100;
        assert!(equivalence_check(&psi, &ZeroAction, &cfg, 0.0).unwrap().max_error < 1e-12);
        assert!(equivalence_check(&psi, &LinearAction { c: 0.7 }, &cfg, 0.0).unwrap().max_error < 1e-8);
    }

    #[test]
    fn absorbed_potential_gives_identical_evolution() {
        let g = Grid::default();
        let mut cfg = SolverConfig::for_grid(&g);
        cfg.dt = 0.01;
        let st = DiracStepper::new(g, cfg).unwrap();
        let s = OscillatingAction { a: 1.0, omega: 1.0, length: g.length() };
        let psi0 = Scenario::GaussianPacket { x0: 50.0, width: 5.0, p: 0.5 }.init(&g, 1.0).unwrap();
        let (mut a, mut b) = (psi0.clone(), psi0);
        for n in 0..20 {
            let ds = s.gradient_field(&g, (n as f64 + 0.5) * 0.01);
            st.step_phase_sourced(&mut a, &ds).unwrap();
            st.step_external(&mut b, &absorb_into_potential(&ds)).unwrap();
        }
        assert_eq!(a, b);
        assert_eq!(absorb_into_potential(&CovectorField::constant(g, [0.4, 0.0])), CovectorField::constant(g, [-0.4, -0.0]));
    }
}
