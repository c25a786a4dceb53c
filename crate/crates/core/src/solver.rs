//! Time evolution of the two-component spinor field.
//!
//! Every supported field equation has the form
//!
//! ```text
//! i γ^α ∂_α ψ - m ψ = c_α γ^α ψ
//! ```
//!
//! for some real covector field `c_α(x)`:
//!
//! | mode                 | `c_α`                          |
//! |----------------------|--------------------------------|
//! | free                 | 0                              |
//! | phase sourced        | `-∂_α S`                       |
//! | external potential   | `A_α`                          |
//! | coupled              | `σ0 k (u_α + j_α/ρ0)`          |
//!
//! In Hamiltonian form this is `i ∂_t ψ = H0 ψ + (c_0 + c_1 α) ψ` with
//! `α = γ⁰γ¹`. The free part is advanced exactly per Fourier mode; the local
//! part is a per-site 2×2 exponential (exact because `α² = I`). The two are
//! combined by Strang splitting.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;

use crate::algebra::{mat2_apply, Kernel2, Mat2};
use crate::error::{Error, Result};
use crate::lattice::{fft_forward, fft_inverse, regularized_sigma0, CovectorField, Grid, ScalarField, SpinorField};
use crate::observables::{current_vector, FieldSnapshot, NODE_TOL};
use crate::particle::{self, ParticleState};

pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_MASS: f64 = 1.0;
pub const DEFAULT_COUPLING: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub m: f64,
    /// Coupling constant `k`.
    pub k: f64,
    /// Width of the regularized rest density.
    pub eps: f64,
    pub steps: usize,
}

impl SolverConfig {
    /// Defaults for a grid: `eps = 4 dx`.
    pub fn for_grid(grid: &Grid) -> Self {
        Self { dt: DEFAULT_DT, m: DEFAULT_MASS, k: DEFAULT_COUPLING, eps: 4.0 * grid.dx(), steps: 100 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.m >= 0.0 && self.m.is_finite()) {
            return Err(Error::InvalidParameter(format!("m = {} must be >= 0", self.m)));
        }
        if !self.k.is_finite() {
            return Err(Error::InvalidParameter("k must be finite".into()));
        }
        Ok(())
    }
}

/// Positive-energy eigenspinor of `H(p) = α p + β m`,
/// `u(p) = (E + m, -i p) / sqrt(2E(E + m))`.
pub fn positive_energy_spinor(p: f64, m: f64) -> [Complex64; 2] {
    let e = (p * p + m * m).sqrt();
    if e + m == 0.0 {
        return [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
    }
    let n = (2.0 * e * (e + m)).sqrt();
    [Complex64::new((e + m) / n, 0.0), Complex64::new(0.0, -p / n)]
}

/// Free Dirac Hamiltonian matrix for wavenumber `k`.
pub fn hamiltonian_matrix(k: f64, m: f64, kern: &Kernel2) -> Mat2 {
    let mut h = [[Complex64::new(0.0, 0.0); 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            h[r][c] = kern.alpha[r][c] * k + kern.beta[r][c] * m;
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    PlaneWave { p: f64 },
    GaussianPacket { x0: f64, width: f64, p: f64 },
    /// Two positive-energy plane waves with complex weights.
    Superposition { p1: f64, p2: f64, w1: Complex64, w2: Complex64 },
}

impl Scenario {
    /// Builds a scenario from its name and a flat parameter map.
    ///
    /// Recognised parameters: `p` (plane_wave); `x0`, `width`, `p`
    /// (gaussian_packet); `p1`, `p2`, `w1`, `w2`, `w1_im`, `w2_im`
    /// (superposition).
    pub fn from_params(name: &str, params: &BTreeMap<String, f64>, grid: &Grid) -> Result<Self> {
        let get = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);
        match name {
            "plane_wave" => Ok(Self::PlaneWave { p: get("p", 0.0) }),
            "gaussian_packet" => Ok(Self::GaussianPacket {
                x0: get("x0", 0.5 * grid.length()),
                width: get("width", 5.0),
                p: get("p", 0.0),
            }),
            "superposition" => Ok(Self::Superposition {
                p1: get("p1", 1.0),
                p2: get("p2", -1.0),
                w1: Complex64::new(get("w1", 1.0), get("w1_im", 0.0)),
                w2: Complex64::new(get("w2", 1.0), get("w2_im", 0.0)),
            }),
            other => Err(Error::UnknownScenario(other.to_string())),
        }
    }

    /// Initial field, normalized to `∫ψ†ψ dx = 1`.
    ///
    /// Plane-wave momenta are snapped to the nearest wavenumber the periodic
    /// box supports. Packets are projected onto the positive-energy branch
    /// mode by mode.
    pub fn init(&self, grid: &Grid, m: f64) -> Result<SpinorField> {
        let mut psi = match *self {
            Self::PlaneWave { p } => {
                let p = grid.nearest_wavenumber(p);
                let u = positive_energy_spinor(p, m);
                SpinorField::from_fn(*grid, |x| {
                    let ph = Complex64::from_polar(1.0, p * x);
                    [u[0] * ph, u[1] * ph]
                })
            }
            Self::GaussianPacket { x0, width, p } => {
                if !(width >= 2.0 * grid.dx()) || width > grid.length() / 8.0 {
                    return Err(Error::UnresolvableWidth { width, dx: grid.dx() });
                }
                let u = positive_energy_spinor(p, m);
                let mut psi = SpinorField::from_fn(*grid, |x| {
                    let d = grid.displacement(x, x0);
                    let env = (-d * d / (4.0 * width * width)).exp();
                    let ph = Complex64::from_polar(env, p * d);
                    [u[0] * ph, u[1] * ph]
                });
                project_positive_energy(&mut psi, m);
                psi
            }
            Self::Superposition { p1, p2, w1, w2 } => {
                let (p1, p2) = (grid.nearest_wavenumber(p1), grid.nearest_wavenumber(p2));
                let (u1, u2) = (positive_energy_spinor(p1, m), positive_energy_spinor(p2, m));
                SpinorField::from_fn(*grid, |x| {
                    let a = w1 * Complex64::from_polar(1.0, p1 * x);
                    let b = w2 * Complex64::from_polar(1.0, p2 * x);
                    [u1[0] * a + u2[0] * b, u1[1] * a + u2[1] * b]
                })
            }
        };
        psi.normalize()?;
        Ok(psi)
    }
}

/// Removes the negative-energy content of `psi` mode by mode.
pub fn project_positive_energy(psi: &mut SpinorField, m: f64) {
    let kern = Kernel2::standard();
    let grid = psi.grid;
    let ks = grid.wavenumbers();
    fft_forward(&mut psi.comps[0]);
    fft_forward(&mut psi.comps[1]);
    for (i, &k) in ks.iter().enumerate() {
        let e = (k * k + m * m).sqrt();
        let v = psi.at(i);
        let out = if e == 0.0 {
            v
        } else {
            let h = hamiltonian_matrix(k, m, &kern);
            let hv = mat2_apply(&h, v);
            [(v[0] + hv[0] / e) * 0.5, (v[1] + hv[1] / e) * 0.5]
        };
        psi.set(i, out);
    }
    fft_inverse(&mut psi.comps[0]);
    fft_inverse(&mut psi.comps[1]);
}

/// `exp(-i H(k) τ)` for every Fourier mode of the grid.
#[derive(Debug, Clone)]
pub struct FreePropagator {
    modes: Vec<Mat2>,
}

impl FreePropagator {
    pub fn new(grid: &Grid, m: f64, tau: f64, kern: &Kernel2) -> Self {
        let modes = grid
            .wavenumbers()
            .into_iter()
            .map(|k| {
                let e = (k * k + m * m).sqrt();
                let h = hamiltonian_matrix(k, m, kern);
                let (c, s) = ((e * tau).cos(), if e == 0.0 { 0.0 } else { (e * tau).sin() / e });
                let mut u = [[Complex64::new(0.0, 0.0); 2]; 2];
                for r in 0..2 {
                    for col in 0..2 {
                        let id = if r == col { c } else { 0.0 };
                        u[r][col] = Complex64::new(id, 0.0) - Complex64::new(0.0, s) * h[r][col];
                    }
                }
                u
            })
            .collect();
        Self { modes }
    }

    pub fn apply(&self, psi: &mut SpinorField) {
        fft_forward(&mut psi.comps[0]);
        fft_forward(&mut psi.comps[1]);
        for (i, u) in self.modes.iter().enumerate() {
            let v = psi.at(i);
            psi.set(i, mat2_apply(u, v));
        }
        fft_inverse(&mut psi.comps[0]);
        fft_inverse(&mut psi.comps[1]);
    }
}

/// Which field equation a stepper integrates.
#[derive(Debug, Clone, PartialEq)]
pub enum EvolutionMode {
    Free,
    /// Holds `∂_α S` (lower index).
    PhaseSourced(CovectorField),
    /// Holds `A_α` (lower index).
    ExternalPotential(CovectorField),
    Coupled,
}

/// Spinor-field stepper for a fixed grid, mass and time step.
#[derive(Debug, Clone)]
pub struct DiracStepper {
    grid: Grid,
    cfg: SolverConfig,
    kern: Kernel2,
    full: FreePropagator,
    half: FreePropagator,
}

impl DiracStepper {
    pub fn new(grid: Grid, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let kern = Kernel2::standard();
        Ok(Self {
            full: FreePropagator::new(&grid, cfg.m, cfg.dt, &kern),
            half: FreePropagator::new(&grid, cfg.m, 0.5 * cfg.dt, &kern),
            grid,
            cfg,
            kern,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn kernel(&self) -> &Kernel2 {
        &self.kern
    }

    pub fn step_free(&self, psi: &mut SpinorField) {
        self.full.apply(psi);
    }

    /// Per-site `ψ ← exp(-i τ (c_0 + c_1 α)) ψ`.
    pub fn apply_local(&self, psi: &mut SpinorField, c: &CovectorField, tau: f64) {
        let a = &self.kern.alpha;
        for i in 0..self.grid.nx() {
            let (c0, c1) = (c.comps[0][i], c.comps[1][i]);
            if c0 == 0.0 && c1 == 0.0 {
                continue;
            }
            let v = psi.at(i);
            let av = mat2_apply(a, v);
            let (cs, sn) = ((c1 * tau).cos(), (c1 * tau).sin());
            let ph = Complex64::from_polar(1.0, -c0 * tau);
            let mis = Complex64::new(0.0, -sn);
            psi.set(i, [ph * (v[0] * cs + mis * av[0]), ph * (v[1] * cs + mis * av[1])]);
        }
    }

    /// One Strang step of `iγ∂ψ - mψ = c_α γ^α ψ` with `c` held fixed.
    pub fn step_local(&self, psi: &mut SpinorField, c: &CovectorField) {
        self.apply_local(psi, c, 0.5 * self.cfg.dt);
        self.full.apply(psi);
        self.apply_local(psi, c, 0.5 * self.cfg.dt);
    }

    /// One step of `iγ^α∂_αψ - mψ = -(∂_αS)γ^αψ`; `ds` is `∂_α S` at the
    /// step midpoint.
    pub fn step_phase_sourced(&self, psi: &mut SpinorField, ds: &CovectorField) -> Result<()> {
        if !ds.is_finite() {
            return Err(Error::NonFinite("action gradient"));
        }
        self.step_local(psi, &ds.scaled(-1.0));
        Ok(())
    }

    /// One step with an external potential, `iγ∂ψ - mψ = A_α γ^α ψ`.
    pub fn step_external(&self, psi: &mut SpinorField, a: &CovectorField) -> Result<()> {
        if !a.is_finite() {
            return Err(Error::NonFinite("external potential"));
        }
        self.step_local(psi, a);
        Ok(())
    }

    /// Half-step `dt/2` of the coupled field equation with the particle frozen.
    /// The source is re-evaluated before each local kick; a kick leaves `j`
    /// unchanged, so each kick is exact for the nonlinear term.
    fn coupled_half_step(&self, phi: &mut SpinorField, particle: &ParticleState) -> Result<()> {
        let tau = 0.25 * self.cfg.dt;
        let (c, _) = coupled_source(phi, particle, self.cfg.k, self.cfg.eps)?;
        self.apply_local(phi, &c, tau);
        self.half.apply(phi);
        let (c, _) = coupled_source(phi, particle, self.cfg.k, self.cfg.eps)?;
        self.apply_local(phi, &c, tau);
        Ok(())
    }

    /// Field/particle leapfrog: half field step, full particle step using the
    /// mid-step field, half field step with the updated particle.
    pub fn step_coupled(&self, phi: &mut SpinorField, particle: &ParticleState) -> Result<ParticleState> {
        if self.cfg.k == 0.0 {
            return Err(Error::InvalidParameter("coupled mode requires k != 0".into()));
        }
        let (k, eps, m) = (self.cfg.k, self.cfg.eps, self.cfg.m);
        let start = particle::ForceField::new(phi, m)?;
        self.coupled_half_step(phi, particle)?;
        let mid = particle::ForceField::new(phi, m)?;
        let next = particle::eom_step(particle, &start, &mid, self.cfg.dt, k, eps)?;
        self.coupled_half_step(phi, &next)?;
        particle::resync_velocity(&next, &particle::ForceField::new(phi, m)?, k, eps)
    }
}

/// Source covector `c_α = σ0 k (u_α + j_α/ρ0)` of the coupled field equation
/// together with the regularized `σ0`. Fails if the field has a node inside
/// the support of `σ0`.
pub fn coupled_source(phi: &SpinorField, particle: &ParticleState, k: f64, eps: f64) -> Result<(CovectorField, ScalarField)> {
    let grid = phi.grid;
    let sigma0 = regularized_sigma0(particle.x, particle.u[0], eps, &grid)?;
    let j = current_vector(phi)?;
    let pmax = j.comps[0].iter().copied().fold(0.0, f64::max);
    let tol = NODE_TOL * pmax;
    let u_low = [particle.u[0], -particle.u[1]];
    let mut c = CovectorField::zeros(grid);
    for i in 0..grid.nx() {
        let s = sigma0.values[i];
        if s == 0.0 {
            continue;
        }
        let (j0, j1) = (j.comps[0][i], j.comps[1][i]);
        let rho0 = (j0 * j0 - j1 * j1).max(0.0).sqrt();
        if rho0 < tol {
            return Err(Error::Node { x: grid.x(i), rho0 });
        }
        c.comps[0][i] = s * k * (u_low[0] + j0 / rho0);
        c.comps[1][i] = s * k * (u_low[1] - j1 / rho0);
    }
    Ok((c, sigma0))
}

/// `L²` norm of `iγ^α∂_αψ - mψ - c_αγ^αψ` at each interior snapshot, using
/// central time differences and spectral space derivatives. `couplings`
/// supplies `c_α` per snapshot; `None` means the free equation.
pub fn dirac_residual_series(
    snaps: &[FieldSnapshot],
    couplings: Option<&[CovectorField]>,
    m: f64,
) -> Result<Vec<(f64, f64)>> {
    if snaps.len() < 3 {
        return Err(Error::TooFewSnapshots { needed: 3, got: snaps.len() });
    }
    if let Some(c) = couplings {
        if c.len() != snaps.len() {
            return Err(Error::LengthMismatch { expected: snaps.len(), got: c.len() });
        }
    }
    let times: Vec<f64> = snaps.iter().map(|s| s.t).collect();
    let dt = crate::observables::uniform_dt(&times)?;
    let kern = Kernel2::standard();
    let g1 = kern.gamma1;
    let g0 = kern.beta;
    let grid = snaps[0].psi.grid;
    let i_unit = Complex64::new(0.0, 1.0);
    let mut out = Vec::with_capacity(snaps.len() - 2);
    for n in 1..snaps.len() - 1 {
        let psi = &snaps[n].psi;
        let dx_psi = psi.derivative();
        let mut acc = 0.0;
        for i in 0..grid.nx() {
            let v = psi.at(i);
            let (a, b) = (snaps[n + 1].psi.at(i), snaps[n - 1].psi.at(i));
            let dt_v = [(a[0] - b[0]) / (2.0 * dt), (a[1] - b[1]) / (2.0 * dt)];
            let t0 = mat2_apply(&g0, dt_v);
            let t1 = mat2_apply(&g1, dx_psi.at(i));
            let (c0, c1) = couplings.map_or((0.0, 0.0), |c| (c[n].comps[0][i], c[n].comps[1][i]));
            let s0 = mat2_apply(&g0, v);
            let s1 = mat2_apply(&g1, v);
            for r in 0..2 {
                let lhs = i_unit * (t0[r] + t1[r]) - m * v[r];
                let rhs = s0[r] * c0 + s1[r] * c1;
                acc += (lhs - rhs).norm_sqr();
            }
        }
        out.push((snaps[n].t, (acc * grid.dx()).sqrt()));
    }
    Ok(out)
}

/// Largest field-equation residual over the series.
pub fn dirac_residual(snaps: &[FieldSnapshot], couplings: Option<&[CovectorField]>, m: f64) -> Result<f64> {
    Ok(dirac_residual_series(snaps, couplings, m)?.into_iter().map(|r| r.1).fold(0.0, f64::max))
}

/// Analytic centroid velocity `p/E` of a positive-energy packet.
pub fn group_velocity(p: f64, m: f64) -> f64 {
    p / (p * p + m * m).sqrt()
}

/// Packet centroid on a periodic box via the first circular moment.
pub fn circular_centroid(density: &[f64], grid: &Grid) -> f64 {
    let l = grid.length();
    let (mut s, mut c) = (0.0, 0.0);
    for (x, d) in grid.xs().zip(density) {
        let th = 2.0 * PI * x / l;
        s += d * th.sin();
        c += d * th.cos();
    }
    grid.wrap(s.atan2(c) * l / (2.0 * PI))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::current_field;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn stepper(grid: Grid, dt: f64) -> DiracStepper {
        let mut cfg = SolverConfig::for_grid(&grid);
        cfg.dt = dt;
        DiracStepper::new(grid, cfg).unwrap()
    }

    #[test]
    fn positive_energy_spinor_is_an_eigenvector() {
        let kern = Kernel2::standard();
        for &(p, m) in &[(0.0, 1.0), (0.7, 1.0), (-2.3, 0.5), (1.0, 0.0)] {
            let u = positive_energy_spinor(p, m);
            let e = (p * p + m * m).sqrt();
            let hu = mat2_apply(&hamiltonian_matrix(p, m, &kern), u);
            assert!((hu[0] - u[0] * e).norm() < 1e-14 && (hu[1] - u[1] * e).norm() < 1e-14);
            assert!((u[0].norm_sqr() + u[1].norm_sqr() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn rest_plane_wave_has_uniform_upper_component() {
        let g = Grid::default();
        let psi = Scenario::PlaneWave { p: 0.0 }.init(&g, 1.0).unwrap();
        let amp = (1.0 / g.length()).sqrt();
        for i in 0..g.nx() {
            assert!((psi.comps[0][i] - c(amp, 0.0)).norm() < 1e-14);
            assert_eq!(psi.comps[1][i], c(0.0, 0.0));
        }
    }

    #[test]
    fn packet_is_normalized() {
        let g = Grid::default();
        let psi = Scenario::GaussianPacket { x0: 30.0, width: 4.0, p: 1.0 }.init(&g, 1.0).unwrap();
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn unresolvable_packet_and_unknown_scenario_are_errors() {
        let g = Grid::default();
        assert!(matches!(
            Scenario::GaussianPacket { x0: 1.0, width: 0.1, p: 0.0 }.init(&g, 1.0),
            Err(Error::UnresolvableWidth { .. })
        ));
        assert!(matches!(Scenario::from_params("vortex", &BTreeMap::new(), &g), Err(Error::UnknownScenario(_))));
    }

    #[test]
    fn superposition_fringes_match_two_wave_oracle() {
        let g = Grid::default();
        let p = 2.0 * PI * 8.0 / g.length();
        let psi = Scenario::Superposition { p1: p, p2: -p, w1: c(1.0, 0.0), w2: c(0.6, 0.3) }.init(&g, 1.0).unwrap();
        let snap = current_field(&psi, 0.0).unwrap();
        // analytic: P(x) ∝ |a|² + |b|² with a, b built from the eigenspinors
        let (u1, u2) = (positive_energy_spinor(p, 1.0), positive_energy_spinor(-p, 1.0));
        let raw: Vec<f64> = g.xs().map(|x| {
            let e1 = Complex64::from_polar(1.0, p * x);
            let e2 = c(0.6, 0.3) * Complex64::from_polar(1.0, -p * x);
            (u1[0] * e1 + u2[0] * e2).norm_sqr() + (u1[1] * e1 + u2[1] * e2).norm_sqr()
        }).collect();
        let norm = g.integrate(&raw);
        for i in 0..g.nx() {
            assert!((snap.p.values[i] - raw[i] / norm).abs() < 1e-14);
        }
        // fringe wavelength π/p is a whole number of cells here (L/16 = 64 dx)
        let shift = (PI / p / g.dx()).round() as usize;
        assert_eq!(shift, 64);
        for i in 0..g.nx() {
            assert!((snap.p.values[i] - snap.p.values[(i + shift) % g.nx()]).abs() < 1e-14);
        }
        let (lo, hi) = (snap.p.min(), snap.p.max());
        assert!(hi - lo > 0.1 * hi, "fringes visible");
    }

    #[test]
    fn rest_wave_acquires_global_phase() {
        let g = Grid::default();
        let s = stepper(g, 0.01);
        let psi0 = Scenario::PlaneWave { p: 0.0 }.init(&g, 1.0).unwrap();
        let mut psi = psi0.clone();
        for _ in 0..250 {
            s.step_free(&mut psi);
        }
        let ph = Complex64::from_polar(1.0, -2.5);
        let err = (0..g.nx()).map(|i| (psi.comps[0][i] - psi0.comps[0][i] * ph).norm() + psi.comps[1][i].norm()).fold(0.0, f64::max);
        assert!(err < 1e-12, "err = {err}");
    }

    #[test]
    fn free_step_is_unitary() {
        let g = Grid::default();
        let s = stepper(g, 0.01);
        let mut psi = SpinorField::from_fn(g, |x| [c((0.3 * x).sin(), 0.1), c(0.2, (0.05 * x).cos())]);
        psi.normalize().unwrap();
        for _ in 0..20 {
            let before = psi.norm_sqr();
            s.step_free(&mut psi);
            assert!((psi.norm_sqr() - before).abs() < 1e-12);
        }
    }

    #[test]
    fn packet_moves_at_group_velocity() {
        let g = Grid::default();
        let (p, m) = (1.0, 1.0);
        let s = stepper(g, 0.01);
        let mut psi = Scenario::GaussianPacket { x0: 30.0, width: 6.0, p }.init(&g, m).unwrap();
        let x_start = circular_centroid(&psi.density(), &g);
        for _ in 0..1000 {
            s.step_free(&mut psi);
        }
        let x_end = circular_centroid(&psi.density(), &g);
        let v = g.displacement(x_end, x_start) / 10.0;
        let v_exact = group_velocity(p, m);
        assert!((v - v_exact).abs() < 0.01 * v_exact, "v = {v}, expected {v_exact}");
    }

    #[test]
    fn zero_source_matches_free_step() {
        let g = Grid::default();
        let s = stepper(g, 0.01);
        let psi0 = Scenario::GaussianPacket { x0: 50.0, width: 5.0, p: 0.5 }.init(&g, 1.0).unwrap();
        let (mut a, mut b) = (psi0.clone(), psi0);
        s.step_free(&mut a);
        s.step_phase_sourced(&mut b, &CovectorField::zeros(g)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_time_gradient_is_a_global_phase() {
        // S = c t solves the sourced equation with ψ = ψ_free e^{+i c t}.
        let g = Grid::default();
        let s = stepper(g, 0.01);
        let cst = 0.8;
        let psi0 = Scenario::GaussianPacket { x0: 50.0, width: 5.0, p: 0.5 }.init(&g, 1.0).unwrap();
        let (mut free, mut src) = (psi0.clone(), psi0);
        let ds = CovectorField::constant(g, [cst, 0.0]);
        for _ in 0..100 {
            s.step_free(&mut free);
            s.step_phase_sourced(&mut src, &ds).unwrap();
        }
        let ph = Complex64::from_polar(1.0, cst * 1.0);
        let expected = SpinorField { grid: g, comps: [free.comps[0].iter().map(|z| z * ph).collect(), free.comps[1].iter().map(|z| z * ph).collect()] };
        assert!(src.max_abs_diff(&expected) < 1e-10);
    }

    #[test]
    fn rest_wave_with_model_action_has_closed_form() {
        // S = -2k t with k = m = 1: ψ = (1,0) e^{-i(m+2k)t}.
        let g = Grid::default();
        let s = stepper(g, 0.01);
        let mut psi = SpinorField::from_fn(g, |_| [c(1.0, 0.0), c(0.0, 0.0)]);
        let ds = CovectorField::constant(g, [-2.0, 0.0]);
        for _ in 0..100 {
            s.step_phase_sourced(&mut psi, &ds).unwrap();
        }
        let expected = Complex64::from_polar(1.0, -3.0);
        let err = (0..g.nx()).map(|i| (psi.comps[0][i] - expected).norm() + psi.comps[1][i].norm()).fold(0.0, f64::max);
        assert!(err < 1e-8, "err = {err}");
    }

    #[test]
    fn phase_sourced_preserves_norm() {
        let g = Grid::default();
        let s = stepper(g, 0.01);
        let l = g.length();
        let mut psi = Scenario::GaussianPacket { x0: 50.0, width: 5.0, p: 0.5 }.init(&g, 1.0).unwrap();
        let ds = CovectorField::from_fn(g, |x| [0.3 * (2.0 * PI * x / l).sin(), 0.5 * (4.0 * PI * x / l).cos()]);
        for _ in 0..50 {
            let before = psi.norm_sqr();
            s.step_phase_sourced(&mut psi, &ds).unwrap();
            assert!((psi.norm_sqr() - before).abs() < 1e-10);
        }
    }

    #[test]
    fn non_finite_source_is_rejected() {
        let g = Grid::new(16, 0.5).unwrap();
        let s = stepper(g, 0.01);
        let mut psi = SpinorField::from_fn(g, |_| [c(1.0, 0.0), c(0.0, 0.0)]);
        let ds = CovectorField::constant(g, [f64::NAN, 0.0]);
        assert!(s.step_phase_sourced(&mut psi, &ds).is_err());
    }

    #[test]
    fn free_plane_wave_residual_is_small() {
        let g = Grid::default();
        let s = stepper(g, 1e-4);
        let mut psi = Scenario::PlaneWave { p: 0.0 }.init(&g, 1.0).unwrap();
        let mut snaps = vec![FieldSnapshot { t: 0.0, psi: psi.clone() }];
        for n in 1..3 {
            s.step_free(&mut psi);
            snaps.push(FieldSnapshot { t: n as f64 * 1e-4, psi: psi.clone() });
        }
        let r = dirac_residual(&snaps, None, 1.0).unwrap();
        assert!(r < 1e-8, "r = {r}");
        assert!(matches!(dirac_residual(&snaps[..2], None, 1.0), Err(Error::TooFewSnapshots { .. })));
    }

    #[test]
    fn noise_raises_the_residual() {
        use rand::{Rng, SeedableRng};
        let g = Grid::default();
        let s = stepper(g, 0.01);
        let mut psi = Scenario::GaussianPacket { x0: 50.0, width: 5.0, p: 0.5 }.init(&g, 1.0).unwrap();
        let mut snaps = vec![FieldSnapshot { t: 0.0, psi: psi.clone() }];
        for n in 1..5 {
            s.step_free(&mut psi);
            snaps.push(FieldSnapshot { t: n as f64 * 0.01, psi: psi.clone() });
        }
        let clean = dirac_residual(&snaps, None, 1.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut noisy = snaps.clone();
        for s in noisy.iter_mut() {
            for z in s.psi.comps.iter_mut().flatten() {
                *z += c(rng.random_range(-1e-3..1e-3), rng.random_range(-1e-3..1e-3));
            }
        }
        let dirty = dirac_residual(&noisy, None, 1.0).unwrap();
        assert!(dirty >= 10.0 * clean, "clean {clean}, dirty {dirty}");
    }
}
