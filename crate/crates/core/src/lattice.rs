//! Periodic 1D lattice, spectral derivatives, cubic interpolation and the
//! regularized rest density.
//!
//! Sites sit at `x_i = i·dx`, `i = 0..nx`, on a periodic box of length
//! `L = nx·dx`. Derivatives are taken in Fourier space with the Nyquist
//! mode dropped.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::io::{self, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub const DEFAULT_NX: usize = 1024;
pub const DEFAULT_DX: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    nx: usize,
    dx: f64,
}

impl Grid {
    pub fn new(nx: usize, dx: f64) -> Result<Self> {
        if nx < 8 || !nx.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("nx = {nx} must be a power of two >= 8")));
        }
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(Error::InvalidGrid(format!("dx = {dx} must be positive")));
        }
        Ok(Self { nx, dx })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn length(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.nx).map(move |i| self.x(i))
    }

    /// Maps `x` into `[0, L)`.
    pub fn wrap(&self, x: f64) -> f64 {
        x.rem_euclid(self.length())
    }

    /// Shortest signed periodic displacement `x - y`.
    pub fn displacement(&self, x: f64, y: f64) -> f64 {
        let l = self.length();
        let d = (x - y).rem_euclid(l);
        if d >= 0.5 * l {
            d - l
        } else {
            d
        }
    }

    /// Angular wavenumbers in FFT order; the Nyquist entry is `-π/dx`.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.nx as isize;
        let base = 2.0 * PI / self.length();
        (0..n).map(|i| base * (if i < n / 2 { i } else { i - n }) as f64).collect()
    }

    /// Snaps `p` to the nearest wavenumber representable on the box.
    pub fn nearest_wavenumber(&self, p: f64) -> f64 {
        let base = 2.0 * PI / self.length();
        (p / base).round() * base
    }

    /// Trapezoid (= rectangle, on a periodic grid) integral.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() * self.dx
    }
}

impl Default for Grid {
    fn default() -> Self {
        Self { nx: DEFAULT_NX, dx: DEFAULT_DX }
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn fft_pair(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(n), p.plan_fft_inverse(n))
    })
}

pub(crate) fn fft_forward(buf: &mut [Complex64]) {
    fft_pair(buf.len()).0.process(buf);
}

/// Inverse FFT including the `1/N` normalization.
pub(crate) fn fft_inverse(buf: &mut [Complex64]) {
    let n = buf.len();
    fft_pair(n).1.process(buf);
    let s = 1.0 / n as f64;
    buf.iter_mut().for_each(|z| *z *= s);
}

/// Spectral `d/dx` of a periodic complex sequence.
pub fn derivative_complex(values: &[Complex64], grid: &Grid) -> Vec<Complex64> {
    let mut buf = values.to_vec();
    fft_forward(&mut buf);
    let ks = grid.wavenumbers();
    let nyq = grid.nx() / 2;
    for (i, (z, k)) in buf.iter_mut().zip(&ks).enumerate() {
        *z = if i == nyq { Complex64::new(0.0, 0.0) } else { *z * Complex64::new(0.0, *k) };
    }
    fft_inverse(&mut buf);
    buf
}

/// Spectral `d/dx` of a periodic real sequence.
pub fn derivative_real(values: &[f64], grid: &Grid) -> Vec<f64> {
    let c: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    derivative_complex(&c, grid).into_iter().map(|z| z.re).collect()
}

/// Antiderivative `F(x) = ∫_0^x f`, exact for band-limited `f`.
///
/// A nonzero mean contributes a linear (non-periodic) term `mean·x`; the
/// oscillating remainder is integrated in Fourier space and anchored so that
/// `F(0) = 0`.
pub fn antiderivative_real(values: &[f64], grid: &Grid) -> Vec<f64> {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v - mean, 0.0)).collect();
    fft_forward(&mut buf);
    let ks = grid.wavenumbers();
    let nyq = grid.nx() / 2;
    for (i, (z, k)) in buf.iter_mut().zip(&ks).enumerate() {
        *z = if i == 0 || i == nyq { Complex64::new(0.0, 0.0) } else { *z / Complex64::new(0.0, *k) };
    }
    fft_inverse(&mut buf);
    let base = buf[0].re;
    buf.iter()
        .enumerate()
        .map(|(i, z)| z.re - base + mean * grid.x(i))
        .collect()
}

/// Four-point (cubic Lagrange) periodic interpolation of site values at `x`.
pub fn interpolate(values: &[f64], grid: &Grid, x: f64) -> f64 {
    let n = values.len();
    let mut s = grid.wrap(x) / grid.dx();
    if (s - s.round()).abs() < 1e-9 {
        s = s.round();
    }
    let i = s.floor();
    let t = s - i;
    let i = i as isize;
    let at = |k: isize| values[(i + k).rem_euclid(n as isize) as usize];
    let (f0, f1, f2, f3) = (at(-1), at(0), at(1), at(2));
    // Lagrange weights on nodes -1, 0, 1, 2 evaluated at t.
    let w0 = -t * (t - 1.0) * (t - 2.0) / 6.0;
    let w1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
    let w2 = -(t + 1.0) * t * (t - 2.0) / 2.0;
    let w3 = (t + 1.0) * t * (t - 1.0) / 6.0;
    w0 * f0 + w1 * f1 + w2 * f2 + w3 * f3
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.nx() {
            return Err(Error::LengthMismatch { expected: grid.nx(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scalar field"));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.nx()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Self { grid, values: grid.xs().map(f).collect() }
    }

    pub fn derivative(&self) -> Self {
        Self { grid: self.grid, values: derivative_real(&self.values, &self.grid) }
    }

    pub fn interpolate(&self, x: f64) -> f64 {
        interpolate(&self.values, &self.grid, x)
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Contravariant two-vector field `v^α(x)`, α = 0 (time), 1 (space).
#[derive(Debug, Clone, PartialEq)]
pub struct FourVectorField {
    pub grid: Grid,
    pub comps: [Vec<f64>; 2],
}

/// Covariant two-vector field `w_α(x)`, e.g. `∂_α S`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovectorField {
    pub grid: Grid,
    pub comps: [Vec<f64>; 2],
}

impl FourVectorField {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, comps: [vec![0.0; grid.nx()], vec![0.0; grid.nx()]] }
    }

    pub fn at(&self, i: usize) -> [f64; 2] {
        [self.comps[0][i], self.comps[1][i]]
    }

    pub fn interpolate(&self, x: f64) -> [f64; 2] {
        [interpolate(&self.comps[0], &self.grid, x), interpolate(&self.comps[1], &self.grid, x)]
    }

    pub fn lower(&self) -> CovectorField {
        CovectorField { grid: self.grid, comps: [self.comps[0].clone(), self.comps[1].iter().map(|v| -v).collect()] }
    }
}

impl CovectorField {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, comps: [vec![0.0; grid.nx()], vec![0.0; grid.nx()]] }
    }

    pub fn constant(grid: Grid, c: [f64; 2]) -> Self {
        Self { grid, comps: [vec![c[0]; grid.nx()], vec![c[1]; grid.nx()]] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> [f64; 2]) -> Self {
        let (a, b): (Vec<f64>, Vec<f64>) = grid.xs().map(|x| {
            let v = f(x);
            (v[0], v[1])
        }).unzip();
        Self { grid, comps: [a, b] }
    }

    pub fn at(&self, i: usize) -> [f64; 2] {
        [self.comps[0][i], self.comps[1][i]]
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { grid: self.grid, comps: [self.comps[0].iter().map(|v| v * s).collect(), self.comps[1].iter().map(|v| v * s).collect()] }
    }

    pub fn raise(&self) -> FourVectorField {
        FourVectorField { grid: self.grid, comps: [self.comps[0].clone(), self.comps[1].iter().map(|v| -v).collect()] }
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().flatten().all(|v| v.is_finite())
    }
}

/// Two-component complex spinor field, stored component-major for FFTs.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField {
    pub grid: Grid,
    pub comps: [Vec<Complex64>; 2],
}

impl SpinorField {
    pub fn zeros(grid: Grid) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); grid.nx()];
        Self { grid, comps: [z.clone(), z] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> [Complex64; 2]) -> Self {
        let mut out = Self::zeros(grid);
        for (i, x) in grid.xs().enumerate() {
            let v = f(x);
            out.comps[0][i] = v[0];
            out.comps[1][i] = v[1];
        }
        out
    }

    #[inline]
    pub fn at(&self, i: usize) -> [Complex64; 2] {
        [self.comps[0][i], self.comps[1][i]]
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: [Complex64; 2]) {
        self.comps[0][i] = v[0];
        self.comps[1][i] = v[1];
    }

    pub fn derivative(&self) -> Self {
        Self {
            grid: self.grid,
            comps: [derivative_complex(&self.comps[0], &self.grid), derivative_complex(&self.comps[1], &self.grid)],
        }
    }

    /// `∫ ψ†ψ dx`.
    pub fn norm_sqr(&self) -> f64 {
        self.grid.integrate(&self.density())
    }

    pub fn density(&self) -> Vec<f64> {
        (0..self.grid.nx()).map(|i| self.comps[0][i].norm_sqr() + self.comps[1][i].norm_sqr()).collect()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sqr();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidParameter("cannot normalize a zero field".into()));
        }
        let s = 1.0 / n.sqrt();
        self.comps.iter_mut().flatten().for_each(|z| *z *= s);
        Ok(())
    }

    /// `sqrt(∫ |ψ - other|² dx)`.
    pub fn distance(&self, other: &Self) -> f64 {
        let s: f64 = (0..2)
            .flat_map(|c| self.comps[c].iter().zip(&other.comps[c]).map(|(a, b)| (a - b).norm_sqr()))
            .sum();
        (s * self.grid.dx()).sqrt()
    }

    /// Largest pointwise `|ψ - other|` over sites and components.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (0..2)
            .flat_map(|c| self.comps[c].iter().zip(&other.comps[c]).map(|(a, b)| (a - b).norm()))
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Kernel support radius in units of ε.
pub const KERNEL_REACH: f64 = 8.0;

/// Smallest admissible regularization width, in units of `dx`.
pub const MIN_EPS_CELLS: f64 = 2.0;

/// Periodic Gaussian `N_ε(x - x_p)` sampled on the grid, normalized so that
/// its lattice integral is exactly one. Contributions further than `8ε` from
/// the centre (relative size below 1.3e-14) are dropped, so the support is
/// compact.
pub fn gaussian_kernel(x_p: f64, eps: f64, grid: &Grid) -> Result<Vec<f64>> {
    if !(eps >= MIN_EPS_CELLS * grid.dx() * (1.0 - 1e-12)) {
        return Err(Error::UnresolvableWidth { width: eps, dx: grid.dx() });
    }
    let l = grid.length();
    let reach = KERNEL_REACH * eps;
    let images = (reach / l).ceil() as i64;
    let inv2 = 1.0 / (2.0 * eps * eps);
    let mut vals: Vec<f64> = grid
        .xs()
        .map(|x| {
            let d0 = grid.displacement(x, x_p);
            (-images..=images)
                .map(|m| d0 + m as f64 * l)
                .filter(|d| d.abs() <= reach)
                .map(|d| (-d * d * inv2).exp())
                .sum()
        })
        .collect();
    let total = grid.integrate(&vals);
    vals.iter_mut().for_each(|v| *v /= total);
    Ok(vals)
}

/// Rest density of a point particle at `x_p` regularized to width `eps`:
/// `σ0(x) = N_ε(x - x_p) / u0`, so `∫σ0 dx = 1/u0`.
pub fn regularized_sigma0(x_p: f64, u0: f64, eps: f64, grid: &Grid) -> Result<ScalarField> {
    if !(u0 >= 1.0 - 1e-12) {
        return Err(Error::InvalidParameter(format!("u0 = {u0} must be >= 1")));
    }
    let mut vals = gaussian_kernel(x_p, eps, grid)?;
    vals.iter_mut().for_each(|v| *v /= u0);
    Ok(ScalarField { grid: *grid, values: vals })
}

/// Formats a double with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a CSV with the given header and equally long columns.
pub fn write_columns<W: Write>(mut w: W, header: &[&str], columns: &[&[f64]]) -> io::Result<()> {
    writeln!(w, "{}", header.join(","))?;
    let rows = columns.first().map_or(0, |c| c.len());
    for r in 0..rows {
        let line: Vec<String> = columns.iter().map(|c| fmt_f64(c[r])).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Field snapshot CSV: `x,re0,im0,re1,im1`.
pub fn write_spinor_csv<W: Write>(w: W, psi: &SpinorField) -> io::Result<()> {
    let xs: Vec<f64> = psi.grid.xs().collect();
    let parts: Vec<Vec<f64>> = vec![
        psi.comps[0].iter().map(|z| z.re).collect(),
        psi.comps[0].iter().map(|z| z.im).collect(),
        psi.comps[1].iter().map(|z| z.re).collect(),
        psi.comps[1].iter().map(|z| z.im).collect(),
    ];
    write_columns(w, &["x", "re0", "im0", "re1", "im1"], &[&xs, &parts[0], &parts[1], &parts[2], &parts[3]])
}

/// Scalar snapshot CSV: `x,<name>`.
pub fn write_scalar_csv<W: Write>(w: W, name: &str, f: &ScalarField) -> io::Result<()> {
    let xs: Vec<f64> = f.grid.xs().collect();
    write_columns(w, &["x", name], &[&xs, &f.values])
}

/// Current snapshot CSV: `x,j0,j1`.
pub fn write_vector_csv<W: Write>(w: W, f: &FourVectorField) -> io::Result<()> {
    let xs: Vec<f64> = f.grid.xs().collect();
    write_columns(w, &["x", "j0", "j1"], &[&xs, &f.comps[0], &f.comps[1]])
}
