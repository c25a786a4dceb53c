use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unsupported spacetime dimension {0} (expected 2 or 4)")]
    UnsupportedDimension(usize),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("bilinear has imaginary residue {residue:e} (relative), gamma set is inconsistent")]
    ImaginaryResidue { residue: f64 },

    #[error("spacelike current: j.j = {jj:e}")]
    SpacelikeCurrent { jj: f64 },

    #[error("current node at x = {x}: rho0 = {rho0:e} is below the node tolerance")]
    Node { x: f64, rho0: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("width {width} is not resolvable on a grid with dx = {dx}")]
    UnresolvableWidth { width: f64, dx: f64 },

    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("need at least {needed} snapshots, got {got}")]
    TooFewSnapshots { needed: usize, got: usize },

    #[error("snapshots are not uniformly spaced in time")]
    NonUniformSpacing,

    #[error("probability density integrates to {0}, expected 1")]
    Unnormalized(f64),

    #[error("mass shell violated before renormalization: |u.u - 1| = {0:e}")]
    MassShell(f64),

    #[error("too few surviving samples: {survivors} of {n}")]
    TooFewSurvivors { survivors: usize, n: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
}
