//! Particle mechanics: Lagrangian, generalized momentum, guidance and the
//! coupled equation of motion.
//!
//! Four-vectors are `[f64; 2]` with upper indices unless a name says
//! otherwise. Lowering flips the sign of the spatial component.

use std::io::{self, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{fmt_f64, gaussian_kernel, interpolate, Grid, SpinorField};
use crate::observables::{current_time_derivative, current_vector, CurrentSnapshot, NODE_TOL};

/// Tolerance on `|u·u - 1|` accepted as on shell.
pub const SHELL_TOL: f64 = 1e-8;
/// Largest `|u·u - 1|` tolerated before renormalization in the equation of motion.
pub const SHELL_BLOWUP: f64 = 1e-4;

pub fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] - a[1] * b[1]
}

pub fn lower(a: [f64; 2]) -> [f64; 2] {
    [a[0], -a[1]]
}

fn renormalize(u: [f64; 2]) -> Result<[f64; 2]> {
    let uu = dot(u, u);
    if !(uu > 0.0) || u[0] <= 0.0 {
        return Err(Error::MassShell(uu - 1.0));
    }
    let n = uu.sqrt();
    Ok([u[0] / n, u[1] / n])
}

fn check_rho0(rho0: f64) -> Result<()> {
    if rho0 > 0.0 && rho0.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("rho0 = {rho0} must be positive")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParticleState {
    pub t: f64,
    /// Unwrapped position.
    pub x: f64,
    pub u: [f64; 2],
    pub tau: f64,
    /// Accumulated action `∫L dτ`.
    pub action: f64,
    pub p: [f64; 2],
    /// `|u·u - 1|` before the last renormalization.
    pub shell_defect: f64,
}

impl ParticleState {
    /// A particle at `x` moving with the guidance velocity of `snap`, with
    /// `p = 2k j`.
    pub fn guided(snap: &CurrentSnapshot, x: f64, k: f64) -> Result<Self> {
        let j = interpolate_current(snap, x);
        let u = guidance_velocity(snap, x)?;
        Ok(Self { t: snap.t, x, u, tau: 0.0, action: 0.0, p: [2.0 * k * j[0], 2.0 * k * j[1]], shell_defect: 0.0 })
    }
}

/// `L = -k [ρ0 (u·u)^{1/2} + u·j]` with `u` on shell.
pub fn lagrangian_l(u: [f64; 2], j: [f64; 2], rho0: f64, k: f64) -> Result<f64> {
    check_rho0(rho0)?;
    let defect = (dot(u, u) - 1.0).abs();
    if defect >= SHELL_TOL {
        return Err(Error::MassShell(defect));
    }
    Ok(lagrangian_off_shell(u, j, rho0, k))
}

/// The Lagrangian with `(u·u)^{1/2}` kept as a variable; `u` must be timelike.
pub fn lagrangian_off_shell(u: [f64; 2], j: [f64; 2], rho0: f64, k: f64) -> f64 {
    -k * (rho0 * dot(u, u).sqrt() + dot(u, j))
}

/// `p^α = k (ρ0 u^α + j^α)`.
pub fn generalized_momentum(u: [f64; 2], j: [f64; 2], rho0: f64, k: f64) -> Result<[f64; 2]> {
    check_rho0(rho0)?;
    Ok([k * (rho0 * u[0] + j[0]), k * (rho0 * u[1] + j[1])])
}

/// `∂L/∂j^α = -k (u_α + j_α/ρ0)`, lower index.
pub fn dl_dj(u: [f64; 2], j: [f64; 2], rho0: f64, k: f64) -> Result<[f64; 2]> {
    check_rho0(rho0)?;
    let (ul, jl) = (lower(u), lower(j));
    Ok([-k * (ul[0] + jl[0] / rho0), -k * (ul[1] + jl[1] / rho0)])
}

/// Central-difference `-∂L/∂u_α` of the off-shell Lagrangian, differentiating
/// with respect to the lower components of `u`.
pub fn momentum_by_differences(u: [f64; 2], j: [f64; 2], rho0: f64, k: f64) -> [f64; 2] {
    let ul = lower(u);
    let l_of = |w: [f64; 2]| lagrangian_off_shell(lower(w), j, rho0, k);
    let mut out = [0.0; 2];
    for a in 0..2 {
        let h = 1e-5 * (1.0 + ul[a].abs());
        let (mut up, mut dn) = (ul, ul);
        up[a] += h;
        dn[a] -= h;
        out[a] = -(l_of(up) - l_of(dn)) / (2.0 * h);
    }
    out
}

/// Central-difference `∂L/∂j^α` with `ρ0 = (j·j)^{1/2}` varying with `j`.
pub fn dl_dj_by_differences(u: [f64; 2], j: [f64; 2], k: f64) -> [f64; 2] {
    let l_of = |jj: [f64; 2]| lagrangian_off_shell(u, jj, dot(jj, jj).sqrt(), k);
    let mut out = [0.0; 2];
    for a in 0..2 {
        let h = 1e-5 * (1.0 + j[a].abs());
        let (mut up, mut dn) = (j, j);
        up[a] += h;
        dn[a] -= h;
        out[a] = (l_of(up) - l_of(dn)) / (2.0 * h);
    }
    out
}

/// `j^α(x)` by periodic cubic interpolation.
pub fn interpolate_current(snap: &CurrentSnapshot, x: f64) -> [f64; 2] {
    let g = snap.grid();
    [interpolate(&snap.j.comps[0], &g, x), interpolate(&snap.j.comps[1], &g, x)]
}

fn velocity_from_current(j: [f64; 2], tol: f64, x: f64) -> Result<[f64; 2]> {
    let jj = dot(j, j);
    let rho0 = jj.max(0.0).sqrt();
    if !(rho0 >= tol) || j[0] <= 0.0 {
        return Err(Error::Node { x, rho0 });
    }
    renormalize([j[0] / rho0, j[1] / rho0])
}

/// `u = j(x)/ρ0(x)` from the interpolated current.
pub fn guidance_velocity(snap: &CurrentSnapshot, x: f64) -> Result<[f64; 2]> {
    velocity_from_current(interpolate_current(snap, x), snap.node_threshold(), x)
}

/// The time-averaged current of two consecutive snapshots, shared by every
/// trajectory crossing that step.
#[derive(Debug, Clone)]
pub struct GuidanceWindow {
    pub t_from: f64,
    pub t_to: f64,
    grid: Grid,
    j_mid: [Vec<f64>; 2],
    tol: f64,
}

impl GuidanceWindow {
    pub fn new(from: &CurrentSnapshot, to: &CurrentSnapshot) -> Self {
        let avg = |c: usize| from.j.comps[c].iter().zip(&to.j.comps[c]).map(|(a, b)| 0.5 * (a + b)).collect();
        Self {
            t_from: from.t,
            t_to: to.t,
            grid: from.grid(),
            j_mid: [avg(0), avg(1)],
            tol: from.node_threshold().max(to.node_threshold()),
        }
    }

    fn current(&self, x: f64) -> [f64; 2] {
        [interpolate(&self.j_mid[0], &self.grid, x), interpolate(&self.j_mid[1], &self.grid, x)]
    }

    fn velocity(&self, x: f64) -> Result<(f64, [f64; 2], [f64; 2])> {
        let j = self.current(x);
        let u = velocity_from_current(j, self.tol, x)?;
        Ok((u[1] / u[0], u, j))
    }
}

/// One guided step from `from.t` to `to.t` (`dt = to.t - from.t`, either sign).
///
/// Implicit midpoint: `x' = x + dt v(x̄)` with `x̄ = (x + x')/2` and `v = j¹/j⁰`
/// from the average of the two bracketing snapshots. The scheme is symmetric,
/// so stepping back with the snapshots swapped retraces the path.
pub fn advance_trajectory(state: &ParticleState, from: &CurrentSnapshot, to: &CurrentSnapshot, k: f64) -> Result<ParticleState> {
    advance_in_window(state, &GuidanceWindow::new(from, to), to, k)
}

/// [`advance_trajectory`] with a precomputed window.
pub fn advance_in_window(state: &ParticleState, win: &GuidanceWindow, to: &CurrentSnapshot, k: f64) -> Result<ParticleState> {
    let dt = win.t_to - win.t_from;
    if dt == 0.0 || (win.t_from - state.t).abs() > 1e-9 * dt.abs().max(1.0) || to.t != win.t_to {
        return Err(Error::InvalidParameter(format!(
            "snapshots at {} and {} do not bracket a step from t = {}",
            win.t_from, win.t_to, state.t
        )));
    }
    let mut x_new = state.x + dt * win.velocity(state.x)?.0;
    let mut converged = false;
    for _ in 0..100 {
        let next = state.x + dt * win.velocity(0.5 * (state.x + x_new))?.0;
        let done = (next - x_new).abs() <= 1e-15 * (1.0 + next.abs());
        x_new = next;
        if done {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonFinite("implicit midpoint iteration"));
    }
    let (_, um, jm) = win.velocity(0.5 * (state.x + x_new))?;
    let rho0m = dot(jm, jm).sqrt();
    let dtau = dt / um[0];
    let l = lagrangian_l(um, jm, rho0m, k)?;
    let j_end = interpolate_current(to, x_new);
    let u_end = velocity_from_current(j_end, to.node_threshold(), x_new)?;
    Ok(ParticleState {
        t: to.t,
        x: x_new,
        u: u_end,
        tau: state.tau + dtau,
        action: state.action + l * dtau,
        p: [2.0 * k * j_end[0], 2.0 * k * j_end[1]],
        shell_defect: 0.0,
    })
}

/// Field data seen by a regularized particle: `j`, `∂_t j`, `∂_x j` and `ρ0`
/// on the sites.
///
/// The particle couples through the kernel `N_ε(x - x_p)`, so it sees the
/// averages `J = ∫N j dx` and `R = ∫N ρ0 dx`. With the smeared force
/// `F^α = ∫N k (u_λ + j_λ/ρ0) ∂^α j^λ dx` the quantity
/// `(p/k - J)·(p/k - J) - R²` is conserved, so the velocity is recovered as
/// `u = (p/k - J)/R`. For `ε → 0` this is the point inversion of `p = k(ρ0 u + j)`.
#[derive(Debug, Clone)]
pub struct ForceField {
    grid: Grid,
    j: [Vec<f64>; 2],
    dtj: [Vec<f64>; 2],
    dxj: [Vec<f64>; 2],
    rho0: Vec<f64>,
    node_tol: f64,
}

/// Kernel averages at one particle position.
#[derive(Debug, Clone)]
pub struct Smeared {
    pub weights: Vec<f64>,
    /// `∫N j dx`.
    pub j: [f64; 2],
    /// `∫N ∂_t j dx`.
    pub dtj: [f64; 2],
    /// `∫N ρ0 dx`.
    pub rho0: f64,
}

impl ForceField {
    pub fn new(phi: &SpinorField, m: f64) -> Result<Self> {
        let grid = phi.grid;
        let kern = crate::algebra::Kernel2::standard();
        let j = current_vector(phi)?;
        let dtj = current_time_derivative(phi, m, &kern);
        let dxj = [
            crate::lattice::derivative_real(&j.comps[0], &grid),
            crate::lattice::derivative_real(&j.comps[1], &grid),
        ];
        let rho0: Vec<f64> = (0..grid.nx()).map(|i| dot(j.at(i), j.at(i)).max(0.0).sqrt()).collect();
        let node_tol = NODE_TOL * j.comps[0].iter().copied().fold(0.0, f64::max);
        Ok(Self { grid, j: j.comps, dtj: dtj.comps, dxj, rho0, node_tol })
    }

    /// Kernel averages at `x_p`; fails on a node inside the kernel support.
    pub fn smeared(&self, x_p: f64, eps: f64) -> Result<Smeared> {
        let weights = gaussian_kernel(x_p, eps, &self.grid)?;
        let dx = self.grid.dx();
        let (mut j, mut dtj, mut r) = ([0.0; 2], [0.0; 2], 0.0);
        for (i, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            if self.rho0[i] < self.node_tol {
                return Err(Error::Node { x: self.grid.x(i), rho0: self.rho0[i] });
            }
            let wd = w * dx;
            for a in 0..2 {
                j[a] += wd * self.j[a][i];
                dtj[a] += wd * self.dtj[a][i];
            }
            r += wd * self.rho0[i];
        }
        Ok(Smeared { weights, j, dtj, rho0: r })
    }

    /// Smeared force `F^α = ∫ N_ε(x - x_p) k (u_λ + j_λ/ρ0) ∂^α j^λ dx`.
    pub fn force(&self, sm: &Smeared, u: [f64; 2], k: f64) -> [f64; 2] {
        let ul = lower(u);
        let mut f = [0.0; 2];
        for (i, &wi) in sm.weights.iter().enumerate() {
            if wi == 0.0 {
                continue;
            }
            let r = self.rho0[i];
            let c0 = ul[0] + self.j[0][i] / r;
            let c1 = ul[1] - self.j[1][i] / r;
            f[0] += wi * (c0 * self.dtj[0][i] + c1 * self.dtj[1][i]);
            f[1] -= wi * (c0 * self.dxj[0][i] + c1 * self.dxj[1][i]);
        }
        let s = k * self.grid.dx();
        [f[0] * s, f[1] * s]
    }
}

/// `u = (p/k - J)/R`, renormalized, with the defect `|u·u - 1|` before
/// renormalization. `shift` advances `J` in time to first order.
fn recover(sm: &Smeared, shift: f64, p: [f64; 2], k: f64) -> Result<([f64; 2], f64)> {
    let j = [sm.j[0] + shift * sm.dtj[0], sm.j[1] + shift * sm.dtj[1]];
    let raw = [(p[0] / k - j[0]) / sm.rho0, (p[1] / k - j[1]) / sm.rho0];
    Ok((renormalize(raw)?, (dot(raw, raw) - 1.0).abs()))
}

fn checked(defect: f64) -> Result<f64> {
    if defect <= SHELL_BLOWUP {
        Ok(defect)
    } else {
        Err(Error::MassShell(defect))
    }
}

/// Particle at `x` with guidance velocity, on shell for the smeared coupling:
/// `u = j(x)/ρ0(x)`, `p = k(R u + J)`.
pub fn coupled_start(phi: &SpinorField, t: f64, x: f64, k: f64, eps: f64, m: f64) -> Result<ParticleState> {
    let ff = ForceField::new(phi, m)?;
    let sm = ff.smeared(x, eps)?;
    let j = [interpolate(&ff.j[0], &ff.grid, x), interpolate(&ff.j[1], &ff.grid, x)];
    let u = velocity_from_current(j, ff.node_tol, x)?;
    let p = [k * (sm.rho0 * u[0] + sm.j[0]), k * (sm.rho0 * u[1] + sm.j[1])];
    Ok(ParticleState { t, x, u, tau: 0.0, action: 0.0, p, shell_defect: 0.0 })
}

/// One RK2 midpoint step of `dp^α/dτ = F^α` in lab time.
///
/// `start` and `mid` hold the field at the beginning and the middle of the
/// step. The returned velocity is a prediction from the mid-step field
/// shifted by `dt/2`; [`resync_velocity`] with the end-of-step field
/// replaces it.
pub fn eom_step(state: &ParticleState, start: &ForceField, mid: &ForceField, dt: f64, k: f64, eps: f64) -> Result<ParticleState> {
    if k == 0.0 {
        return Err(Error::InvalidParameter("equation of motion requires k != 0".into()));
    }
    let h = 0.5 * dt;
    let s1 = start.smeared(state.x, eps)?;
    let (u1, d1) = recover(&s1, 0.0, state.p, k)?;
    checked(d1)?;
    let f1 = start.force(&s1, u1, k);
    let xm = state.x + h * u1[1] / u1[0];
    let pm = [state.p[0] + h * f1[0] / u1[0], state.p[1] + h * f1[1] / u1[0]];
    // The predictor is first order, so its shell defect is not checked.
    let sm = mid.smeared(xm, eps)?;
    let (um, _) = recover(&sm, 0.0, pm, k)?;
    let fm = mid.force(&sm, um, k);
    let x_new = state.x + dt * um[1] / um[0];
    let p_new = [state.p[0] + dt * fm[0] / um[0], state.p[1] + dt * fm[1] / um[0]];
    let (u_new, _) = recover(&mid.smeared(x_new, eps)?, h, p_new, k)?;
    let dtau = dt / um[0];
    let l = lagrangian_off_shell(um, sm.j, sm.rho0, k);
    Ok(ParticleState {
        t: state.t + dt,
        x: x_new,
        u: u_new,
        tau: state.tau + dtau,
        action: state.action + l * dtau,
        p: p_new,
        shell_defect: d1,
    })
}

/// Recovers `u` from `p` with the field at the end of a step.
pub fn resync_velocity(state: &ParticleState, field: &ForceField, k: f64, eps: f64) -> Result<ParticleState> {
    let (u, d) = recover(&field.smeared(state.x, eps)?, 0.0, state.p, k)?;
    Ok(ParticleState { u, shell_defect: checked(d)?, ..*state })
}

/// Equation-of-motion step with the field held fixed in time.
pub fn eom_step_frozen(state: &ParticleState, phi: &SpinorField, dt: f64, k: f64, eps: f64, m: f64) -> Result<ParticleState> {
    let ff = ForceField::new(phi, m)?;
    let next = eom_step(state, &ff, &ff, dt, k, eps)?;
    resync_velocity(&next, &ff, k, eps)
}

/// A worldline sampled at increasing lab time and proper time.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Trajectory {
    pub states: Vec<ParticleState>,
}

impl Trajectory {
    pub fn new(start: ParticleState) -> Self {
        Self { states: vec![start] }
    }

    pub fn push(&mut self, s: ParticleState) -> Result<()> {
        if let Some(last) = self.states.last() {
            if !(s.t > last.t && s.tau > last.tau) {
                return Err(Error::InvalidParameter(format!(
                    "trajectory samples must advance: t {} -> {}, tau {} -> {}",
                    last.t, s.t, last.tau, s.tau
                )));
            }
        }
        self.states.push(s);
        Ok(())
    }

    pub fn last(&self) -> Option<&ParticleState> {
        self.states.last()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// CSV `t,x,u0,u1,tau,S,p0,p1`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,x,u0,u1,tau,S,p0,p1")?;
        for s in &self.states {
            let row = [s.t, s.x, s.u[0], s.u[1], s.tau, s.action, s.p[0], s.p[1]];
            let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::current_field;
    use crate::solver::{positive_energy_spinor, DiracStepper, Scenario, SolverConfig};
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn rel(a: [f64; 2], b: [f64; 2]) -> f64 {
        let scale = b[0].abs().max(b[1].abs()).max(1e-300);
        (a[0] - b[0]).abs().max((a[1] - b[1]).abs()) / scale
    }

    #[test]
    fn lagrangian_examples() {
        assert_eq!(lagrangian_l([1.0, 0.0], [1.0, 0.0], 1.0, 1.0).unwrap(), -2.0);
        assert_eq!(lagrangian_l([1.0, 0.0], [1.0, 0.0], 1.0, 0.0).unwrap(), 0.0);
        assert_eq!(lagrangian_l([1.0, 0.0], [1.0, 0.0], 1.0, 2.0).unwrap(), -4.0);
        assert!(lagrangian_l([1.0, 0.0], [1.0, 0.0], 0.0, 1.0).is_err());
        assert!(matches!(lagrangian_l([1.1, 0.0], [1.0, 0.0], 1.0, 1.0), Err(Error::MassShell(_))));
    }

    #[test]
    fn momentum_examples() {
        assert_eq!(generalized_momentum([1.0, 0.0], [1.0, 0.0], 1.0, 1.0).unwrap(), [2.0, 0.0]);
        let (r, u) = (0.3, [1.25, 0.75]);
        let p = generalized_momentum(u, [r * u[0], r * u[1]], r, 1.5).unwrap();
        assert!(rel(p, [2.0 * 1.5 * r * u[0], 2.0 * 1.5 * r * u[1]]) < 1e-15);
        assert!(generalized_momentum(u, u, -1.0, 1.0).is_err());
    }

    #[test]
    fn dl_dj_examples() {
        assert_eq!(dl_dj([1.0, 0.0], [1.0, 0.0], 1.0, 1.0).unwrap(), [-2.0, 0.0]);
        let (r, u, k) = (0.4, [1.25, 0.75], 2.0);
        let j = [r * u[0], r * u[1]];
        let d = dl_dj(u, j, r, k).unwrap();
        let jl = lower(j);
        assert!(rel(d, [-2.0 * k * jl[0] / r, -2.0 * k * jl[1] / r]) < 1e-15);
        assert!(dl_dj(u, j, 0.0, k).is_err());
    }

    proptest! {
        #[test]
        fn momentum_matches_lagrangian_derivative(eta in -2.0f64..2.0, zeta in -2.0f64..2.0, r in 0.05f64..3.0, k in 0.1f64..3.0) {
            let u = [eta.cosh(), eta.sinh()];
            let j = [r * zeta.cosh(), r * zeta.sinh()];
            let p = generalized_momentum(u, j, r, k).unwrap();
            prop_assert!(rel(momentum_by_differences(u, j, r, k), p) < 1e-6);
        }

        #[test]
        fn dl_dj_matches_lagrangian_derivative(eta in -2.0f64..2.0, zeta in -2.0f64..2.0, r in 0.05f64..3.0, k in 0.1f64..3.0) {
            let u = [eta.cosh(), eta.sinh()];
            let j = [r * zeta.cosh(), r * zeta.sinh()];
            let d = dl_dj(u, j, r, k).unwrap();
            prop_assert!(rel(dl_dj_by_differences(u, j, k), d) < 1e-6);
        }
    }

    #[test]
    fn sign_flipped_dl_dj_fails_the_oracle() {
        let (u, j) = ([1.25, 0.75], [0.8, -0.3]);
        let r = dot(j, j).sqrt();
        let flipped = dl_dj(u, j, r, 1.0).map(|d| [-d[0], -d[1]]).unwrap();
        assert!(rel(dl_dj_by_differences(u, j, 1.0), flipped) > 1.0);
    }

    #[test]
    fn rest_plane_wave_guidance_is_at_rest() {
        let g = Grid::default();
        let psi = Scenario::PlaneWave { p: 0.0 }.init(&g, 1.0).unwrap();
        let s = current_field(&psi, 0.0).unwrap();
        for &x in &[0.0, 3.3, 77.7] {
            let u = guidance_velocity(&s, x).unwrap();
            assert!((u[0] - 1.0).abs() < 1e-14 && u[1].abs() < 1e-14);
        }
    }

    #[test]
    fn boosted_plane_wave_velocity_matches_kinematics() {
        let g = Grid::default();
        let m = 1.0;
        let p = g.nearest_wavenumber(0.8);
        let e = (p * p + m * m).sqrt();
        let psi = Scenario::PlaneWave { p }.init(&g, m).unwrap();
        let s = current_field(&psi, 0.0).unwrap();
        let u = guidance_velocity(&s, 12.34).unwrap();
        assert!((u[0] - e / m).abs() < 1e-8 && (u[1] - p / m).abs() < 1e-8, "{u:?}");
    }

    #[test]
    fn node_stops_guidance() {
        let g = Grid::default();
        let psi = SpinorField::from_fn(g, |x| {
            let a = Complex64::new((x * 0.2).cos(), 0.0);
            [a, Complex64::new(0.0, 1.0) * a]
        });
        // b = i a makes the current null everywhere.
        let s = current_field(&psi, 0.0).unwrap();
        assert!(matches!(guidance_velocity(&s, 5.0), Err(Error::Node { .. })));
    }

    fn snaps_for(psi0: &SpinorField, dt: f64, n: usize, m: f64) -> Vec<CurrentSnapshot> {
        let g = psi0.grid;
        let mut cfg = SolverConfig::for_grid(&g);
        cfg.dt = dt;
        cfg.m = m;
        let st = DiracStepper::new(g, cfg).unwrap();
        let mut psi = psi0.clone();
        let mut out = vec![current_field(&psi, 0.0).unwrap()];
        for i in 1..=n {
            st.step_free(&mut psi);
            out.push(current_field(&psi, i as f64 * dt).unwrap());
        }
        out
    }

    #[test]
    fn rest_wave_action_grows_linearly() {
        let g = Grid::default();
        let psi = Scenario::PlaneWave { p: 0.0 }.init(&g, 1.0).unwrap();
        let snaps = snaps_for(&psi, 0.01, 100, 1.0);
        let k = 1.0;
        let mut s = ParticleState::guided(&snaps[0], 20.0, k).unwrap();
        let mut traj = Trajectory::new(s);
        for w in snaps.windows(2) {
            s = advance_trajectory(&s, &w[0], &w[1], k).unwrap();
            traj.push(s).unwrap();
        }
        let rho_box = 1.0 / g.length();
        assert!((s.x - 20.0).abs() < 1e-12);
        assert!((s.tau - 1.0).abs() < 1e-12);
        assert!((s.action + 2.0 * k * rho_box * 1.0).abs() < 1e-12);
        assert_eq!(traj.len(), 101);
    }

    #[test]
    fn constant_velocity_gives_linear_motion() {
        let g = Grid::default();
        let m = 1.0;
        let p = g.nearest_wavenumber(1.2);
        let psi = Scenario::PlaneWave { p }.init(&g, m).unwrap();
        let snaps = snaps_for(&psi, 0.01, 50, m);
        let mut s = ParticleState::guided(&snaps[0], 10.0, 1.0).unwrap();
        for w in snaps.windows(2) {
            s = advance_trajectory(&s, &w[0], &w[1], 1.0).unwrap();
        }
        let v = p / (p * p + m * m).sqrt();
        assert!((s.x - (10.0 + v * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn reversed_steps_retrace_the_path() {
        let g = Grid::default();
        let psi = Scenario::GaussianPacket { x0: 50.0, width: 4.0, p: 0.7 }.init(&g, 1.0).unwrap();
        let snaps = snaps_for(&psi, 0.01, 200, 1.0);
        let start = ParticleState::guided(&snaps[0], 49.0, 1.0).unwrap();
        let mut s = start;
        for w in snaps.windows(2) {
            s = advance_trajectory(&s, &w[0], &w[1], 1.0).unwrap();
        }
        assert!((s.x - start.x).abs() > 0.5);
        for w in snaps.windows(2).rev() {
            s = advance_trajectory(&s, &w[1], &w[0], 1.0).unwrap();
        }
        assert!((s.x - start.x).abs() < 1e-9, "dx = {}", s.x - start.x);
        assert!(s.tau.abs() < 1e-9 && s.action.abs() < 1e-9);
    }

    #[test]
    fn uniform_current_exerts_no_force() {
        let g = Grid::default();
        let m = 1.0;
        let p = g.nearest_wavenumber(0.5);
        let psi = Scenario::PlaneWave { p }.init(&g, m).unwrap();
        let snap = current_field(&psi, 0.0).unwrap();
        let mut s = ParticleState::guided(&snap, 30.0, 1.0).unwrap();
        let p0 = s.p;
        let x0 = s.x;
        for _ in 0..20 {
            s = eom_step_frozen(&s, &psi, 0.01, 1.0, 0.4, m).unwrap();
        }
        assert!(rel(s.p, p0) < 1e-10);
        let e = (p * p + m * m).sqrt();
        assert!((s.x - x0 - 0.2 * p / e).abs() < 1e-10);
        assert!((s.u[0] - e / m).abs() < 1e-8);
    }

    #[test]
    fn off_shell_momentum_is_rejected() {
        let g = Grid::default();
        let psi = Scenario::PlaneWave { p: 0.0 }.init(&g, 1.0).unwrap();
        let snap = current_field(&psi, 0.0).unwrap();
        let mut s = ParticleState::guided(&snap, 30.0, 1.0).unwrap();
        s.p[1] += 0.1 * s.p[0];
        assert!(matches!(eom_step_frozen(&s, &psi, 0.01, 1.0, 0.4, 1.0), Err(Error::MassShell(_))));
    }

    #[test]
    fn positive_energy_current_is_future_pointing() {
        let u = positive_energy_spinor(0.4, 1.0);
        let j0 = u[0].norm_sqr() + u[1].norm_sqr();
        let j1 = -2.0 * (u[0].conj() * u[1]).im;
        assert!((j1 / j0 - 0.4 / (0.16f64 + 1.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn trajectory_rejects_non_advancing_samples() {
        let s = ParticleState { t: 0.0, x: 0.0, u: [1.0, 0.0], tau: 0.0, action: 0.0, p: [2.0, 0.0], shell_defect: 0.0 };
        let mut tr = Trajectory::new(s);
        assert!(tr.push(s).is_err());
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x,u0,u1,tau,S,p0,p1\n"));
    }
}
