//! Canonical energy-momentum tensor of the coupled field/particle system and
//! lattice checks of its divergence identities.
//!
//! `T_field^{αβ} = -Im(φ̄ γ^β ∂^α φ) + g^{αβ} w_λ j^λ` with
//! `w_λ = (σ0/ρ0) ∂_λS` and `∂_λS = -k(ρ0 u_λ + j_λ)` built from the
//! particle velocity and the local current. `∂_t φ` comes from the field
//! equation, so the trace term cancels the source energy and
//! `∫T_field^{00} = ∫Re(φ†H0φ)`.
//!
//! `T_particle^{αβ} = σ0 p^α u^β`. The interaction part vanishes because the
//! particle Lagrangian does not depend on `∂φ`; no type represents it.

use serde::Serialize;

use crate::algebra::{mat2_apply, sandwich, Kernel2};
use crate::error::{Error, Result};
use crate::lattice::{derivative_real, regularized_sigma0, CovectorField, FourVectorField, Grid, ScalarField, SpinorField};
use crate::observables::{current_time_derivative, current_vector, free_hamiltonian_apply, uniform_dt, NODE_TOL};
use crate::particle::{lower, ParticleState};
use crate::solver::{coupled_source, DiracStepper, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TensorPart {
    Field,
    Particle,
    Total,
}

/// `comps[α][β]` holds `T^{αβ}` on every site.
#[derive(Debug, Clone, PartialEq)]
pub struct EMTensorField {
    pub t: f64,
    pub part: TensorPart,
    pub grid: Grid,
    pub comps: [[Vec<f64>; 2]; 2],
}

impl EMTensorField {
    pub fn zeros(grid: Grid, t: f64, part: TensorPart) -> Self {
        let z = || vec![0.0; grid.nx()];
        Self { t, part, grid, comps: [[z(), z()], [z(), z()]] }
    }

    /// `∫T^{α0} dx`.
    pub fn integrated_density(&self) -> [f64; 2] {
        [self.grid.integrate(&self.comps[0][0]), self.grid.integrate(&self.comps[1][0])]
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().flatten().flatten().all(|v| v.is_finite())
    }

    /// `‖T^{01} - T^{10}‖₂`, reported only.
    pub fn symmetry_defect(&self) -> f64 {
        let d: Vec<f64> = (0..self.grid.nx()).map(|i| (self.comps[0][1][i] - self.comps[1][0][i]).powi(2)).collect();
        self.grid.integrate(&d).sqrt()
    }

    pub fn sum(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.part = TensorPart::Total;
        for a in 0..2 {
            for b in 0..2 {
                for (o, v) in out.comps[a][b].iter_mut().zip(&other.comps[a][b]) {
                    *o += v;
                }
            }
        }
        out
    }
}

/// `(σ0/ρ0) ∂_λS` on the sites, lower index. Fails on a node where `σ0 ≠ 0`.
pub fn source_covector(phi: &SpinorField, ds: &CovectorField, sigma0: &ScalarField) -> Result<CovectorField> {
    let grid = phi.grid;
    let j = current_vector(phi)?;
    let tol = NODE_TOL * j.comps[0].iter().copied().fold(0.0, f64::max);
    let mut w = CovectorField::zeros(grid);
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
        w.comps[0][i] = s / rho0 * ds.comps[0][i];
        w.comps[1][i] = s / rho0 * ds.comps[1][i];
    }
    Ok(w)
}

/// `∂_λS = -k(ρ0 u_λ + j_λ)` from the particle velocity and the local current.
pub fn model_action_gradient(phi: &SpinorField, u: [f64; 2], k: f64) -> Result<CovectorField> {
    let j = current_vector(phi)?;
    let ul = lower(u);
    let mut ds = CovectorField::zeros(phi.grid);
    for i in 0..phi.grid.nx() {
        let (j0, j1) = (j.comps[0][i], j.comps[1][i]);
        let rho0 = (j0 * j0 - j1 * j1).max(0.0).sqrt();
        ds.comps[0][i] = -k * (rho0 * ul[0] + j0);
        ds.comps[1][i] = -k * (rho0 * ul[1] - j1);
    }
    Ok(ds)
}

/// Field tensor at time `t`. `ds` is `∂_λS` and `sigma0` the particle rest
/// density; the field is assumed to obey `iγ∂φ - mφ = -w_λγ^λφ`.
pub fn t_field(phi: &SpinorField, ds: &CovectorField, sigma0: &ScalarField, m: f64, t: f64) -> Result<EMTensorField> {
    let grid = phi.grid;
    let kern = Kernel2::standard();
    let w = source_covector(phi, ds, sigma0)?;
    let h0 = free_hamiltonian_apply(phi, m, &kern);
    let dx = phi.derivative();
    let mi = num_complex::Complex64::new(0.0, -1.0);
    let mut out = EMTensorField::zeros(grid, t, TensorPart::Field);
    for i in 0..grid.nx() {
        let v = phi.at(i);
        let (c0, c1) = (-w.comps[0][i], -w.comps[1][i]);
        let av = mat2_apply(&kern.alpha, v);
        let hv = h0.at(i);
        let dt_v = [mi * (hv[0] + c0 * v[0] + c1 * av[0]), mi * (hv[1] + c0 * v[1] + c1 * av[1])];
        let dxv = dx.at(i);
        let d_up = [dt_v, [-dxv[0], -dxv[1]]];
        let j = [sandwich(v, &kern.g0g[0], v).re, sandwich(v, &kern.g0g[1], v).re];
        let trace = w.comps[0][i] * j[0] + w.comps[1][i] * j[1];
        for a in 0..2 {
            for b in 0..2 {
                let canon = -sandwich(v, &kern.g0g[b], d_up[a]).im;
                let g = if a != b { 0.0 } else if a == 0 { 1.0 } else { -1.0 };
                out.comps[a][b][i] = canon + g * trace;
            }
        }
    }
    Ok(out)
}

/// `T_particle^{αβ} = σ0 p^α u^β`.
pub fn t_particle(sigma0: &ScalarField, p: [f64; 2], u: [f64; 2], t: f64) -> EMTensorField {
    let mut out = EMTensorField::zeros(sigma0.grid, t, TensorPart::Particle);
    for a in 0..2 {
        for b in 0..2 {
            out.comps[a][b] = sigma0.values.iter().map(|s| s * p[a] * u[b]).collect();
        }
    }
    out
}

/// `∂_β T^{αβ}` at each interior snapshot: central differences in time,
/// spectral in space.
pub fn divergence(series: &[EMTensorField]) -> Result<Vec<FourVectorField>> {
    if series.len() < 3 {
        return Err(Error::TooFewSnapshots { needed: 3, got: series.len() });
    }
    let times: Vec<f64> = series.iter().map(|s| s.t).collect();
    let dt = uniform_dt(&times)?;
    let grid = series[0].grid;
    Ok((1..series.len() - 1)
        .map(|n| {
            let mut d = FourVectorField::zeros(grid);
            for a in 0..2 {
                let dx = derivative_real(&series[n].comps[a][1], &grid);
                for i in 0..grid.nx() {
                    d.comps[a][i] = (series[n + 1].comps[a][0][i] - series[n - 1].comps[a][0][i]) / (2.0 * dt) + dx[i];
                }
            }
            d
        })
        .collect())
}

/// `w_λ ∂^α j^λ`, the right side of the field-side divergence identity.
pub fn exchange_density(phi: &SpinorField, w: &CovectorField, m: f64) -> Result<FourVectorField> {
    let grid = phi.grid;
    let kern = Kernel2::standard();
    let j = current_vector(phi)?;
    let dtj = current_time_derivative(phi, m, &kern);
    let dxj = [derivative_real(&j.comps[0], &grid), derivative_real(&j.comps[1], &grid)];
    let mut out = FourVectorField::zeros(grid);
    for i in 0..grid.nx() {
        let (w0, w1) = (w.comps[0][i], w.comps[1][i]);
        out.comps[0][i] = w0 * dtj.comps[0][i] + w1 * dtj.comps[1][i];
        out.comps[1][i] = -(w0 * dxj[0][i] + w1 * dxj[1][i]);
    }
    Ok(out)
}

/// State of a coupled run at one time.
#[derive(Debug, Clone)]
pub struct CoupledFrame {
    pub t: f64,
    pub phi: SpinorField,
    pub particle: ParticleState,
}

/// Per-frame derived quantities of a coupled run.
#[derive(Debug, Clone)]
pub struct FrameTensors {
    pub field: EMTensorField,
    pub particle: EMTensorField,
    /// `w_λ ∂^α j^λ`.
    pub exchange: FourVectorField,
    /// The source covector `c_α = -w_α` of the field equation.
    pub coupling: CovectorField,
    pub sigma0: ScalarField,
}

/// A recorded coupled evolution, one frame per time step.
#[derive(Debug, Clone)]
pub struct CoupledRun {
    pub cfg: SolverConfig,
    pub frames: Vec<CoupledFrame>,
}

impl CoupledRun {
    pub fn simulate(grid: Grid, cfg: SolverConfig, phi0: SpinorField, particle0: ParticleState) -> Result<Self> {
        let stepper = DiracStepper::new(grid, cfg)?;
        let mut phi = phi0;
        let mut particle = particle0;
        let mut frames = Vec::with_capacity(cfg.steps + 1);
        frames.push(CoupledFrame { t: particle.t, phi: phi.clone(), particle });
        for _ in 0..cfg.steps {
            particle = stepper.step_coupled(&mut phi, &particle)?;
            frames.push(CoupledFrame { t: particle.t, phi: phi.clone(), particle });
        }
        Ok(Self { cfg, frames })
    }

    pub fn tensors(&self, frame: &CoupledFrame) -> Result<FrameTensors> {
        let grid = frame.phi.grid;
        let (c, sigma0) = coupled_source(&frame.phi, &frame.particle, self.cfg.k, self.cfg.eps)?;
        let ds = model_action_gradient(&frame.phi, frame.particle.u, self.cfg.k)?;
        let field = t_field(&frame.phi, &ds, &sigma0, self.cfg.m, frame.t)?;
        let particle = t_particle(&sigma0, frame.particle.p, frame.particle.u, frame.t);
        let w = c.scaled(-1.0);
        let exchange = exchange_density(&frame.phi, &w, self.cfg.m)?;
        debug_assert_eq!(grid, sigma0.grid);
        Ok(FrameTensors { field, particle, exchange, coupling: c, sigma0 })
    }

    pub fn all_tensors(&self) -> Result<Vec<FrameTensors>> {
        self.frames.iter().map(|f| self.tensors(f)).collect()
    }
}

/// Both sides of a divergence identity over the interior frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityReport {
    pub lhs_norm: f64,
    pub rhs_norm: f64,
    /// `‖lhs - rhs‖`.
    pub residual: f64,
    /// `residual / ‖rhs‖`.
    pub relative: f64,
}

fn compare(lhs: &[FourVectorField], rhs: &[FourVectorField], sign: f64) -> IdentityReport {
    let (mut l2, mut r2, mut d2) = (0.0, 0.0, 0.0);
    for (l, r) in lhs.iter().zip(rhs) {
        for a in 0..2 {
            for (x, y) in l.comps[a].iter().zip(&r.comps[a]) {
                l2 += x * x;
                r2 += y * y;
                d2 += (x - sign * y).powi(2);
            }
        }
    }
    let dx = lhs.first().map_or(1.0, |f| f.grid.dx());
    let (l, r, d) = ((l2 * dx).sqrt(), (r2 * dx).sqrt(), (d2 * dx).sqrt());
    IdentityReport { lhs_norm: l, rhs_norm: r, residual: d, relative: if r > 0.0 { d / r } else { d } }
}

/// `∂_β T_field^{αβ}` against `+w_λ ∂^α j^λ`, pointwise.
pub fn field_divergence_identity_check(tensors: &[FrameTensors]) -> Result<IdentityReport> {
    let series: Vec<EMTensorField> = tensors.iter().map(|f| f.field.clone()).collect();
    let lhs = divergence(&series)?;
    let rhs: Vec<FourVectorField> = tensors[1..tensors.len() - 1].iter().map(|f| f.exchange.clone()).collect();
    Ok(compare(&lhs, &rhs, 1.0))
}

/// `∂_β T_particle^{αβ}` against `-w_λ ∂^α j^λ`, pointwise.
pub fn particle_divergence_identity_check(tensors: &[FrameTensors]) -> Result<IdentityReport> {
    let series: Vec<EMTensorField> = tensors.iter().map(|f| f.particle.clone()).collect();
    let lhs = divergence(&series)?;
    let rhs: Vec<FourVectorField> = tensors[1..tensors.len() - 1].iter().map(|f| f.exchange.clone()).collect();
    Ok(compare(&lhs, &rhs, -1.0))
}

/// Integrated balance: `d/dt ∫T^{α0}` of each part against `∓∫w_λ∂^αj^λ`.
/// Returns `(field, particle)` reports over the interior frames.
pub fn integrated_balance_check(tensors: &[FrameTensors]) -> Result<(IdentityReport, IdentityReport)> {
    if tensors.len() < 3 {
        return Err(Error::TooFewSnapshots { needed: 3, got: tensors.len() });
    }
    let times: Vec<f64> = tensors.iter().map(|f| f.field.t).collect();
    let dt = uniform_dt(&times)?;
    let one = Grid::new(8, 1.0)?;
    let pack = |v: [f64; 2]| {
        let mut f = FourVectorField::zeros(one);
        f.comps[0][0] = v[0];
        f.comps[1][0] = v[1];
        f
    };
    let mut lf = Vec::new();
    let mut lp = Vec::new();
    let mut rhs = Vec::new();
    for n in 1..tensors.len() - 1 {
        let rate = |pick: &dyn Fn(&FrameTensors) -> [f64; 2]| {
            let (a, b) = (pick(&tensors[n + 1]), pick(&tensors[n - 1]));
            [(a[0] - b[0]) / (2.0 * dt), (a[1] - b[1]) / (2.0 * dt)]
        };
        lf.push(pack(rate(&|f| f.field.integrated_density())));
        lp.push(pack(rate(&|f| f.particle.integrated_density())));
        let g = tensors[n].exchange.grid;
        rhs.push(pack([g.integrate(&tensors[n].exchange.comps[0]), g.integrate(&tensors[n].exchange.comps[1])]));
    }
    Ok((compare(&lf, &rhs, 1.0), compare(&lp, &rhs, -1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConservationReport {
    pub times: Vec<f64>,
    pub e_field: Vec<f64>,
    pub e_particle: Vec<f64>,
    pub e_total: Vec<f64>,
    /// `max |E_field(t) - E_field(0)|`.
    pub exchange: f64,
    /// `max |E_total(t) - E_total(0)|`.
    pub drift: f64,
    /// `max |u0 ∫σ0 dx - 1|`.
    pub rest_density_defect: f64,
}

/// Energy bookkeeping of a coupled run. Field energy is `∫Re(φ†H0φ)`, which
/// equals `∫T_field^{00}` for any solution of the coupled field equation;
/// particle energy is `∫T_particle^{00} = p⁰`.
pub fn total_conservation_check(run: &CoupledRun) -> Result<ConservationReport> {
    let kern = Kernel2::standard();
    let mut rep = ConservationReport {
        times: vec![],
        e_field: vec![],
        e_particle: vec![],
        e_total: vec![],
        exchange: 0.0,
        drift: 0.0,
        rest_density_defect: 0.0,
    };
    for f in &run.frames {
        let g = f.phi.grid;
        let h = free_hamiltonian_apply(&f.phi, run.cfg.m, &kern);
        let dens: Vec<f64> = (0..g.nx())
            .map(|i| {
                let (v, hv) = (f.phi.at(i), h.at(i));
                (v[0].conj() * hv[0] + v[1].conj() * hv[1]).re
            })
            .collect();
        let ef = g.integrate(&dens);
        let sigma0 = regularized_sigma0(f.particle.x, f.particle.u[0], run.cfg.eps, &g)?;
        let ep = sigma0.integral() * f.particle.p[0] * f.particle.u[0];
        rep.rest_density_defect = rep.rest_density_defect.max((sigma0.integral() * f.particle.u[0] - 1.0).abs());
        rep.times.push(f.t);
        rep.e_field.push(ef);
        rep.e_particle.push(ep);
        rep.e_total.push(ef + ep);
    }
    let (f0, t0) = (rep.e_field[0], rep.e_total[0]);
    rep.exchange = rep.e_field.iter().map(|e| (e - f0).abs()).fold(0.0, f64::max);
    rep.drift = rep.e_total.iter().map(|e| (e - t0).abs()).fold(0.0, f64::max);
    Ok(rep)
}

/// Largest `|u - j/ρ0|` over the frames of a coupled run, with `j/ρ0` taken
/// at the particle position. The coupled equation of motion does not force
/// the particle to follow the guidance direction, so this is measured.
pub fn guidance_misalignment(run: &CoupledRun) -> Result<f64> {
    let mut worst = 0.0f64;
    for f in &run.frames {
        let snap = crate::observables::current_field(&f.phi, f.t)?;
        let g = crate::particle::guidance_velocity(&snap, f.particle.x)?;
        let d = ((f.particle.u[0] - g[0]).powi(2) + (f.particle.u[1] - g[1]).powi(2)).sqrt();
        worst = worst.max(d);
    }
    Ok(worst)
}

/// Free-field energy series for a run that never couples.
pub fn free_energy(phi: &SpinorField, m: f64) -> f64 {
    let kern = Kernel2::standard();
    let h = free_hamiltonian_apply(phi, m, &kern);
    let g = phi.grid;
    let dens: Vec<f64> = (0..g.nx())
        .map(|i| {
            let (v, hv) = (phi.at(i), h.at(i));
            (v[0].conj() * hv[0] + v[1].conj() * hv[1]).re
        })
        .collect();
    g.integrate(&dens)
}
