//! Gamma-matrix algebra, the Minkowski metric and spinor bilinears.
//!
//! Signature is `(+, -, ..., -)`. Two representations are provided:
//!
//! * `dim = 2`: `γ⁰ = σ_z`, `γ¹ = i σ_x`. This is the representation the
//!   1+1 dimensional solvers use throughout.
//! * `dim = 4`: the standard Dirac representation,
//!   `γ⁰ = diag(I, -I)`, `γⁱ = [[0, σᵢ], [-σᵢ, 0]]`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Relative imaginary residue above which a bilinear is rejected as not real.
pub const IMAGINARY_RESIDUE_TOL: f64 = 1e-12;

/// Relative tolerance used to classify `j·j` as zero (node) or spacelike.
pub const NULL_CURRENT_TOL: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq)]
pub struct GammaSet {
    dim: usize,
    gammas: Vec<CMatrix>,
    metric: Vec<f64>,
}

impl GammaSet {
    /// Builds the fixed representation for `dim` ∈ {2, 4}.
    pub fn new(dim: usize) -> Result<Self> {
        let gammas = match dim {
            2 => vec![
                CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
                CMatrix::from_row_slice(2, 2, &[ZERO, I, I, ZERO]),
            ],
            4 => {
                let pauli = pauli_matrices();
                let mut g0 = CMatrix::zeros(4, 4);
                for d in 0..4 {
                    g0[(d, d)] = if d < 2 { ONE } else { -ONE };
                }
                let mut out = vec![g0];
                for s in &pauli {
                    let mut g = CMatrix::zeros(4, 4);
                    for r in 0..2 {
                        for c in 0..2 {
                            g[(r, c + 2)] = s[(r, c)];
                            g[(r + 2, c)] = -s[(r, c)];
                        }
                    }
                    out.push(g);
                }
                out
            }
            other => return Err(Error::UnsupportedDimension(other)),
        };
        let metric = (0..dim).map(|a| if a == 0 { 1.0 } else { -1.0 }).collect();
        Ok(Self { dim, gammas, metric })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Spinor component count (equal to `dim` for the two supported cases).
    pub fn spinor_len(&self) -> usize {
        self.gammas[0].nrows()
    }

    pub fn gamma(&self, alpha: usize) -> &CMatrix {
        &self.gammas[alpha]
    }

    pub fn gammas(&self) -> &[CMatrix] {
        &self.gammas
    }

    /// Diagonal of the metric, `g^{αα}`.
    pub fn metric(&self) -> &[f64] {
        &self.metric
    }

    /// `γ^α γ^β + γ^β γ^α`.
    pub fn anticommutator(&self, alpha: usize, beta: usize) -> CMatrix {
        let a = &self.gammas[alpha];
        let b = &self.gammas[beta];
        a * b + b * a
    }

    /// Largest entrywise deviation from `{γ^α, γ^β} = 2 g^{αβ} I` over all pairs.
    pub fn clifford_defect(&self) -> f64 {
        let n = self.spinor_len();
        let mut worst = 0.0_f64;
        for a in 0..self.dim {
            for b in a..self.dim {
                let g_ab = if a == b { self.metric[a] } else { 0.0 };
                let expected = CMatrix::identity(n, n) * Complex64::new(2.0 * g_ab, 0.0);
                let diff = self.anticommutator(a, b) - expected;
                worst = diff.iter().map(|z| z.norm()).fold(worst, f64::max);
            }
        }
        worst
    }

    /// Largest deviation from `(γ⁰)† = γ⁰`, `(γⁱ)† = -γⁱ`.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (a, g) in self.gammas.iter().enumerate() {
            let sign = if a == 0 { 1.0 } else { -1.0 };
            let diff = g.adjoint() - g * Complex64::new(sign, 0.0);
            worst = diff.iter().map(|z| z.norm()).fold(worst, f64::max);
        }
        worst
    }
}

fn pauli_matrices() -> [CMatrix; 3] {
    [
        CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
        CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
    ]
}

/// A single spinor value.
#[derive(Debug, Clone, PartialEq)]
pub struct Spinor(pub DVector<Complex64>);

impl Spinor {
    pub fn new(components: &[Complex64]) -> Result<Self> {
        if components.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("spinor"));
        }
        Ok(Self(DVector::from_column_slice(components)))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Multiplies every component by `e^{iθ}`.
    pub fn with_phase(&self, theta: f64) -> Self {
        Self(self.0.map(|z| z * Complex64::from_polar(1.0, theta)))
    }
}

/// Dirac adjoint `ψ̄ = ψ† γ⁰`, returned as the row's entries.
pub fn adjoint(psi: &Spinor, g: &GammaSet) -> Result<Vec<Complex64>> {
    check_len(psi, g)?;
    let row = psi.0.adjoint() * g.gamma(0);
    Ok(row.iter().copied().collect())
}

/// The real four-current `j^α = ψ̄ γ^α ψ`.
pub fn bilinear_current(psi: &Spinor, g: &GammaSet) -> Result<Vec<f64>> {
    let bar = adjoint(psi, g)?;
    let scale = psi.norm_sqr().max(f64::MIN_POSITIVE);
    g.gammas()
        .iter()
        .map(|gamma| {
            let gpsi = gamma * &psi.0;
            let z: Complex64 = bar.iter().zip(gpsi.iter()).map(|(a, b)| a * b).sum();
            let residue = z.im.abs() / scale;
            if residue > IMAGINARY_RESIDUE_TOL {
                Err(Error::ImaginaryResidue { residue })
            } else {
                Ok(z.re)
            }
        })
        .collect()
}

/// `a_α b^α` with signature `(+,-,...)`.
pub fn minkowski_dot(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { expected: a.len(), got: b.len() });
    }
    Ok(a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (x, y))| if i == 0 { x * y } else { -x * y })
        .sum())
}

/// `ρ0 = (j_α j^α)^{1/2}` with a node flag for (numerically) null currents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentMagnitude {
    pub rho0: f64,
    pub node: bool,
}

pub fn current_magnitude(j: &[f64]) -> Result<CurrentMagnitude> {
    let jj = minkowski_dot(j, j)?;
    let scale = j.iter().map(|c| c * c).sum::<f64>();
    let tol = NULL_CURRENT_TOL * scale;
    if jj < -tol {
        return Err(Error::SpacelikeCurrent { jj });
    }
    if jj.abs() <= tol {
        return Ok(CurrentMagnitude { rho0: 0.0, node: true });
    }
    Ok(CurrentMagnitude { rho0: jj.sqrt(), node: false })
}

fn check_len(psi: &Spinor, g: &GammaSet) -> Result<()> {
    if psi.len() != g.spinor_len() {
        return Err(Error::LengthMismatch { expected: g.spinor_len(), got: psi.len() });
    }
    Ok(())
}

/// Dense 2×2 complex matrix, used by the 1+1 dimensional lattice kernels.
pub type Mat2 = [[Complex64; 2]; 2];

/// Precomputed 2×2 products of the `dim = 2` gamma set used by the lattice
/// code: `β = γ⁰`, `α = γ⁰γ¹`, and `γ⁰γ^λ` for bilinears.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel2 {
    pub beta: Mat2,
    pub alpha: Mat2,
    /// `γ⁰ γ^λ` for λ = 0, 1.
    pub g0g: [Mat2; 2],
    /// `γ¹` itself, needed for the scalar-like term in ∂_t j¹.
    pub gamma1: Mat2,
}

impl Kernel2 {
    pub fn from_gammas(g: &GammaSet) -> Result<Self> {
        if g.dim() != 2 {
            return Err(Error::UnsupportedDimension(g.dim()));
        }
        let to2 = |m: &CMatrix| -> Mat2 { [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]] };
        let g0 = g.gamma(0);
        let g1 = g.gamma(1);
        let alpha = g0 * g1;
        let g00 = g0 * g0;
        Ok(Self {
            beta: to2(g0),
            alpha: to2(&alpha),
            g0g: [to2(&g00), to2(&alpha)],
            gamma1: to2(g1),
        })
    }

    pub fn standard() -> Self {
        // dim = 2 always constructs.
        Self::from_gammas(&GammaSet::new(2).expect("dim 2")).expect("dim 2 kernel")
    }
}

#[inline]
pub fn mat2_apply(m: &Mat2, v: [Complex64; 2]) -> [Complex64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

/// `a† M b` for 2-spinors.
#[inline]
pub fn sandwich(a: [Complex64; 2], m: &Mat2, b: [Complex64; 2]) -> Complex64 {
    let mb = mat2_apply(m, b);
    a[0].conj() * mb[0] + a[1].conj() * mb[1]
}
