//! Currents, densities and continuity diagnostics of spinor fields.

use num_complex::Complex64;
use serde::Serialize;

use crate::algebra::{mat2_apply, sandwich, Kernel2, IMAGINARY_RESIDUE_TOL, NULL_CURRENT_TOL};
use crate::error::{Error, Result};
use crate::lattice::{derivative_complex, FourVectorField, Grid, ScalarField, SpinorField};

/// A site is a node when `ρ0 < NODE_TOL · max P`.
pub const NODE_TOL: f64 = 1e-10;

/// A spinor field at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    pub t: f64,
    pub psi: SpinorField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurrentSnapshot {
    pub t: f64,
    /// `j^α = ψ̄γ^αψ` (upper index).
    pub j: FourVectorField,
    pub rho0: ScalarField,
    /// Position density `P = j⁰`.
    pub p: ScalarField,
    pub node_mask: Vec<bool>,
}

impl CurrentSnapshot {
    pub fn grid(&self) -> Grid {
        self.j.grid
    }

    pub fn has_nodes(&self) -> bool {
        self.node_mask.iter().any(|&n| n)
    }

    /// Threshold below which an (interpolated) `ρ0` counts as a node.
    pub fn node_threshold(&self) -> f64 {
        NODE_TOL * self.p.max()
    }
}

/// Per-site `j^α`, checked real and non-spacelike.
pub fn current_vector(psi: &SpinorField) -> Result<FourVectorField> {
    let kern = Kernel2::standard();
    let grid = psi.grid;
    let mut j = FourVectorField::zeros(grid);
    for i in 0..grid.nx() {
        let v = psi.at(i);
        let scale = v[0].norm_sqr() + v[1].norm_sqr();
        for (lam, m) in kern.g0g.iter().enumerate() {
            let z = sandwich(v, m, v);
            if scale > 0.0 && z.im.abs() > IMAGINARY_RESIDUE_TOL * scale {
                return Err(Error::ImaginaryResidue { residue: z.im.abs() / scale });
            }
            j.comps[lam][i] = z.re;
        }
        let jj = j.comps[0][i].powi(2) - j.comps[1][i].powi(2);
        if jj < -NULL_CURRENT_TOL * scale * scale {
            return Err(Error::SpacelikeCurrent { jj });
        }
    }
    Ok(j)
}

pub fn current_field(psi: &SpinorField, t: f64) -> Result<CurrentSnapshot> {
    let grid = psi.grid;
    let j = current_vector(psi)?;
    let rho0: Vec<f64> = (0..grid.nx())
        .map(|i| (j.comps[0][i].powi(2) - j.comps[1][i].powi(2)).max(0.0).sqrt())
        .collect();
    let p = j.comps[0].clone();
    let pmax = p.iter().copied().fold(0.0, f64::max);
    let node_mask = rho0.iter().map(|&r| r < NODE_TOL * pmax).collect();
    Ok(CurrentSnapshot {
        t,
        rho0: ScalarField { grid, values: rho0 },
        p: ScalarField { grid, values: p },
        j,
        node_mask,
    })
}

/// `(∫P dx, min P)`.
pub fn born_weight_check(snap: &CurrentSnapshot) -> (f64, f64) {
    (snap.p.integral(), snap.p.min())
}

/// Uniform spacing of a time series; returns `dt`.
pub fn uniform_dt(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::TooFewSnapshots { needed: 2, got: times.len() });
    }
    let dt = times[1] - times[0];
    let tol = 1e-9 * dt.abs().max(1e-300);
    if dt == 0.0 || times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > tol) {
        return Err(Error::NonUniformSpacing);
    }
    Ok(dt)
}

fn l2(values: impl Iterator<Item = f64>, dx: f64) -> f64 {
    (values.map(|v| v * v).sum::<f64>() * dx).sqrt()
}

/// Spatial L² norm of `∂_t j⁰ + ∂_x j¹` at each interior snapshot
/// (central differences in time, spectral in space).
pub fn continuity_residual_series(snaps: &[CurrentSnapshot]) -> Result<Vec<(f64, f64)>> {
    if snaps.len() < 3 {
        return Err(Error::TooFewSnapshots { needed: 3, got: snaps.len() });
    }
    let times: Vec<f64> = snaps.iter().map(|s| s.t).collect();
    let dt = uniform_dt(&times)?;
    let grid = snaps[0].grid();
    Ok((1..snaps.len() - 1)
        .map(|n| {
            let dj1 = crate::lattice::derivative_real(&snaps[n].j.comps[1], &grid);
            let r = (0..grid.nx()).map(|i| {
                (snaps[n + 1].j.comps[0][i] - snaps[n - 1].j.comps[0][i]) / (2.0 * dt) + dj1[i]
            });
            (snaps[n].t, l2(r, grid.dx()))
        })
        .collect())
}

/// Largest continuity residual over the series.
pub fn continuity_residual(snaps: &[CurrentSnapshot]) -> Result<f64> {
    Ok(continuity_residual_series(snaps)?.into_iter().map(|(_, r)| r).fold(0.0, f64::max))
}

/// `H0 ψ = -i α ∂_x ψ + m β ψ`, the free Dirac Hamiltonian applied spectrally.
pub fn free_hamiltonian_apply(psi: &SpinorField, m: f64, kern: &Kernel2) -> SpinorField {
    let grid = psi.grid;
    let d = [derivative_complex(&psi.comps[0], &grid), derivative_complex(&psi.comps[1], &grid)];
    let mi = Complex64::new(0.0, -1.0);
    let mut out = SpinorField::zeros(grid);
    for i in 0..grid.nx() {
        let a = mat2_apply(&kern.alpha, [d[0][i], d[1][i]]);
        let b = mat2_apply(&kern.beta, psi.at(i));
        out.set(i, [mi * a[0] + m * b[0], mi * a[1] + m * b[1]]);
    }
    out
}

/// Instantaneous `∂_t j^λ = 2 Re(ψ†γ⁰γ^λ ∂_tψ)` with `∂_tψ = -i H0 ψ`.
///
/// Any local coupling of the form `(c_0 + c_1 α)` drops out of this
/// expression identically, so the result holds for every evolution mode.
pub fn current_time_derivative(psi: &SpinorField, m: f64, kern: &Kernel2) -> FourVectorField {
    let grid = psi.grid;
    let h = free_hamiltonian_apply(psi, m, kern);
    let mi = Complex64::new(0.0, -1.0);
    let mut out = FourVectorField::zeros(grid);
    for i in 0..grid.nx() {
        let v = psi.at(i);
        let hv = h.at(i);
        let dt = [mi * hv[0], mi * hv[1]];
        for lam in 0..2 {
            out.comps[lam][i] = 2.0 * sandwich(v, &kern.g0g[lam], dt).re;
        }
    }
    out
}

/// Summary of a residual time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualSummary {
    pub max: f64,
    pub mean: f64,
}

pub fn summarize(series: &[(f64, f64)]) -> ResidualSummary {
    let max = series.iter().map(|r| r.1).fold(0.0, f64::max);
    let mean = if series.is_empty() { 0.0 } else { series.iter().map(|r| r.1).sum::<f64>() / series.len() as f64 };
    ResidualSummary { max, mean }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Grid;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rest_plane_wave_current_is_uniform() {
        let g = Grid::default();
        let l = g.length();
        let amp = (1.0 / l).sqrt();
        let psi = SpinorField::from_fn(g, |_| [c(amp, 0.0), c(0.0, 0.0)]);
        let s = current_field(&psi, 0.0).unwrap();
        for i in 0..g.nx() {
            assert!((s.j.comps[0][i] - 1.0 / l).abs() < 1e-15);
            assert!(s.j.comps[1][i].abs() < 1e-15);
            assert!((s.rho0.values[i] - 1.0 / l).abs() < 1e-15);
        }
        assert!(!s.has_nodes());
    }

    #[test]
    fn probability_integral_equals_norm() {
        let g = Grid::default();
        let psi = SpinorField::from_fn(g, |x| {
            let e = (-(x - 40.0).powi(2) / 20.0).exp();
            [c(e * (0.3 * x).cos(), e * 0.2), c(0.5 * e, -e * (0.1 * x).sin())]
        });
        let s = current_field(&psi, 0.0).unwrap();
        let (int_p, min_p) = born_weight_check(&s);
        assert!((int_p - psi.norm_sqr()).abs() < 1e-14 * int_p);
        assert!(min_p >= 0.0);
        let slack = 1e-14 * s.p.max();
        for i in 0..g.nx() {
            assert!(s.rho0.values[i] <= s.p.values[i] + slack);
        }
    }

    #[test]
    fn continuity_residual_needs_three_uniform_snapshots() {
        let g = Grid::new(16, 0.5).unwrap();
        let psi = SpinorField::from_fn(g, |_| [c(1.0, 0.0), c(0.0, 0.0)]);
        let snap = |t| current_field(&psi, t).unwrap();
        assert!(matches!(continuity_residual(&[snap(0.0), snap(0.1)]), Err(Error::TooFewSnapshots { .. })));
        assert_eq!(continuity_residual(&[snap(0.0), snap(0.1), snap(0.3)]), Err(Error::NonUniformSpacing));
        assert!(continuity_residual(&[snap(0.0), snap(0.1), snap(0.2)]).unwrap() < 1e-12);
    }

    #[test]
    fn time_derivative_matches_closed_form_two_component_identity() {
        // In the standard representation ∂_t j¹ = -∂_x j⁰ - 4m Re(a* b).
        let g = Grid::default();
        let l = g.length();
        let m = 0.7;
        let psi = SpinorField::from_fn(g, |x| {
            let k = 2.0 * PI / l;
            [c((3.0 * k * x).cos(), 0.2), c(0.4 * (k * x).sin(), (5.0 * k * x).cos())]
        });
        let kern = Kernel2::standard();
        let dtj = current_time_derivative(&psi, m, &kern);
        let j = current_vector(&psi).unwrap();
        let dj0 = crate::lattice::derivative_real(&j.comps[0], &g);
        let dj1 = crate::lattice::derivative_real(&j.comps[1], &g);
        for i in 0..g.nx() {
            let v = psi.at(i);
            let re_ab = (v[0].conj() * v[1]).re;
            assert!((dtj.comps[0][i] + dj1[i]).abs() < 1e-12);
            assert!((dtj.comps[1][i] + dj0[i] + 4.0 * m * re_ab).abs() < 1e-12);
        }
    }
}
