//! `key = value` run configuration with dotted sections.
//!
//! ```text
//! # comment
//! scenario.name = gaussian_packet
//! scenario.width = 5
//! solver.dt = 0.01
//! ```
//!
//! Every key must be known, may appear once, and is validated against the
//! model preconditions before anything runs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use pilot_dirac::lattice::{CovectorField, Grid, SpinorField};
use pilot_dirac::solver::{Scenario, SolverConfig};

const SCENARIO_PARAMS: [&str; 9] = ["p", "x0", "width", "p1", "p2", "w1", "w1_im", "w2", "w2_im"];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// 1-based line of the offending entry; 0 when the problem is a missing key.
    pub line: usize,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}: {}", self.line, self.key, self.message)
        } else {
            write!(f, "{}: {}", self.key, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Free,
    PhaseSourced,
    External,
    Coupled,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Free => "free",
            Mode::PhaseSourced => "phase_sourced",
            Mode::External => "external",
            Mode::Coupled => "coupled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Emit {
    pub fields: bool,
    pub trajectories: bool,
    pub energy: bool,
    pub plots: bool,
    /// Field snapshots are written every `every` steps.
    pub every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario_name: String,
    pub scenario: Scenario,
    pub grid: Grid,
    pub solver: SolverConfig,
    pub mode: Mode,
    /// Constant covector: `∂_α S` for `phase_sourced`, `A_α` for `external`.
    pub source: [f64; 2],
    /// Initial particle position for `coupled`.
    pub particle_x: Option<f64>,
    pub ensemble_n: usize,
    pub seed: u64,
    pub output: PathBuf,
    pub emit: Emit,
}

impl RunConfig {
    pub fn initial_field(&self) -> pilot_dirac::Result<SpinorField> {
        self.scenario.init(&self.grid, self.solver.m)
    }

    pub fn source_field(&self) -> CovectorField {
        CovectorField::constant(self.grid, self.source)
    }
}

struct Entry {
    line: usize,
    value: String,
}

struct Entries(BTreeMap<String, Entry>);

impl Entries {
    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError { line: self.0.get(key).map_or(0, |e| e.line), key: key.into(), message: message.into() }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|e| e.value.as_str())
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| self.err(key, format!("cannot parse '{v}'"))),
        }
    }

    fn number(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v: f64 = self.parsed(key, default)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(key, "must be finite"))
        }
    }
}

fn known(key: &str) -> bool {
    matches!(
        key,
        "scenario.name"
            | "grid.nx"
            | "grid.dx"
            | "solver.dt"
            | "solver.steps"
            | "solver.m"
            | "solver.k"
            | "solver.eps"
            | "solver.mode"
            | "source.c0"
            | "source.c1"
            | "particle.x"
            | "ensemble.n"
            | "ensemble.seed"
            | "output.dir"
            | "emit.fields"
            | "emit.trajectories"
            | "emit.energy"
            | "emit.plots"
            | "emit.every"
    ) || key.strip_prefix("scenario.").is_some_and(|p| SCENARIO_PARAMS.contains(&p))
}

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(ConfigError { line, key: body.into(), message: "expected 'key = value'".into() });
        };
        let (key, value) = (key.trim(), value.trim());
        if !known(key) {
            return Err(ConfigError { line, key: key.into(), message: "unknown key".into() });
        }
        if value.is_empty() {
            return Err(ConfigError { line, key: key.into(), message: "missing value".into() });
        }
        if let Some(prev) = map.insert(key.to_string(), Entry { line, value: value.to_string() }) {
            return Err(ConfigError { line, key: key.into(), message: format!("already set on line {}", prev.line) });
        }
    }
    Ok(Entries(map))
}

/// Parses and validates a configuration. Relative output paths are taken
/// relative to `base`, normally the directory holding the file.
pub fn parse(text: &str, base: &Path) -> Result<RunConfig, ConfigError> {
    let e = tokenize(text)?;

    let nx: usize = e.parsed("grid.nx", pilot_dirac::lattice::DEFAULT_NX)?;
    let dx = e.number("grid.dx", pilot_dirac::lattice::DEFAULT_DX)?;
    let grid = Grid::new(nx, dx).map_err(|err| e.err(if e.raw("grid.nx").is_some() { "grid.nx" } else { "grid.dx" }, err.to_string()))?;

    let defaults = SolverConfig::for_grid(&grid);
    let solver = SolverConfig {
        dt: e.number("solver.dt", defaults.dt)?,
        m: e.number("solver.m", defaults.m)?,
        k: e.number("solver.k", defaults.k)?,
        eps: e.number("solver.eps", defaults.eps)?,
        steps: e.parsed("solver.steps", defaults.steps)?,
    };
    if !(solver.dt > 0.0) {
        return Err(e.err("solver.dt", "must be positive"));
    }
    if solver.m < 0.0 {
        return Err(e.err("solver.m", "must be non-negative"));
    }
    if solver.steps == 0 {
        return Err(e.err("solver.steps", "must be at least 1"));
    }
    solver.validate().map_err(|err| e.err("solver", err.to_string()))?;

    let mode = match e.raw("solver.mode").unwrap_or("free") {
        "free" => Mode::Free,
        "phase_sourced" => Mode::PhaseSourced,
        "external" => Mode::External,
        "coupled" => Mode::Coupled,
        other => return Err(e.err("solver.mode", format!("unknown mode '{other}'"))),
    };
    let source = [e.number("source.c0", 0.0)?, e.number("source.c1", 0.0)?];
    if mode != Mode::PhaseSourced && mode != Mode::External {
        for key in ["source.c0", "source.c1"] {
            if e.raw(key).is_some() {
                return Err(e.err(key, format!("not used in {} mode", mode.name())));
            }
        }
    }
    let particle_x = match (mode, e.raw("particle.x")) {
        (Mode::Coupled, None) => return Err(e.err("particle.x", "required in coupled mode")),
        (Mode::Coupled, Some(_)) => Some(e.number("particle.x", 0.0)?),
        (_, Some(_)) => return Err(e.err("particle.x", "only used in coupled mode")),
        (_, None) => None,
    };
    if mode == Mode::Coupled {
        if solver.k == 0.0 {
            return Err(e.err("solver.k", "coupled mode needs k != 0"));
        }
        if solver.eps < pilot_dirac::lattice::MIN_EPS_CELLS * dx {
            return Err(e.err("solver.eps", format!("must be at least {} dx", pilot_dirac::lattice::MIN_EPS_CELLS)));
        }
    }

    let scenario_name = e.raw("scenario.name").ok_or_else(|| e.err("scenario.name", "required"))?.to_string();
    let mut params = BTreeMap::new();
    for p in SCENARIO_PARAMS {
        let key = format!("scenario.{p}");
        if e.raw(&key).is_some() {
            params.insert(p.to_string(), e.number(&key, 0.0)?);
        }
    }
    let scenario = Scenario::from_params(&scenario_name, &params, &grid).map_err(|err| e.err("scenario.name", err.to_string()))?;
    if let Err(err) = scenario.init(&grid, solver.m) {
        let key = if matches!(err, pilot_dirac::Error::UnresolvableWidth { .. }) { "scenario.width" } else { "scenario.name" };
        return Err(e.err(key, err.to_string()));
    }

    let ensemble_n: usize = e.parsed("ensemble.n", 0)?;
    if ensemble_n > 0 && mode == Mode::Coupled {
        return Err(e.err("ensemble.n", "ensembles are guided by uncoupled fields only"));
    }
    let seed: u64 = e.parsed("ensemble.seed", 0)?;

    let emit = Emit {
        fields: e.parsed("emit.fields", true)?,
        trajectories: e.parsed("emit.trajectories", true)?,
        energy: e.parsed("emit.energy", true)?,
        plots: e.parsed("emit.plots", false)?,
        every: e.parsed("emit.every", 10)?,
    };
    if emit.every == 0 {
        return Err(e.err("emit.every", "must be at least 1"));
    }
    let output = base.join(e.raw("output.dir").unwrap_or("out"));

    Ok(RunConfig { scenario_name, scenario, grid, solver, mode, source, particle_x, ensemble_n, seed, output, emit })
}
