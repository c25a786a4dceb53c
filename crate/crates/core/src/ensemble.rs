//! Born-rule sampling of particle positions, guided ensemble evolution and
//! the Kolmogorov–Smirnov equivariance test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{Grid, ScalarField};
use crate::observables::CurrentSnapshot;
use crate::particle::{advance_in_window, GuidanceWindow, ParticleState, Trajectory};

/// Two-sided KS coefficient at 1% significance: `D_crit = 1.63/√n`.
pub const KS_COEFF_1PCT: f64 = 1.63;
/// Allowance for the integration bias of the trajectories.
pub const KS_SAFETY: f64 = 1.5;
/// Largest fraction of samples that may be lost to nodes.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.1;
pub const MIN_SURVIVORS: usize = 1000;

/// Piecewise-linear CDF of a lattice density. Site `i` owns the cell
/// `[x_i - dx/2, x_i + dx/2)` with mass `P_i dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeCdf {
    grid: Grid,
    /// `cum[i]` is the mass left of cell `i`; `cum[nx]` is the total.
    cum: Vec<f64>,
}

impl LatticeCdf {
    pub fn new(p: &ScalarField) -> Result<Self> {
        let dx = p.grid.dx();
        if let Some(v) = p.values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParameter(format!("density value {v} is not a probability")));
        }
        let mut cum = Vec::with_capacity(p.values.len() + 1);
        cum.push(0.0);
        for v in &p.values {
            cum.push(cum.last().unwrap() + v * dx);
        }
        Ok(Self { grid: p.grid, cum })
    }

    pub fn total(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn left(&self) -> f64 {
        -0.5 * self.grid.dx()
    }

    /// Maps a position into the fundamental cell range `[-dx/2, L - dx/2)`.
    pub fn fold(&self, x: f64) -> f64 {
        let l = self.grid.length();
        (x - self.left()).rem_euclid(l) + self.left()
    }

    /// `F(x)` for a folded position, normalized by the total mass.
    pub fn cdf(&self, x: f64) -> f64 {
        let dx = self.grid.dx();
        let s = (self.fold(x) - self.left()) / dx;
        let i = (s.floor() as usize).min(self.grid.nx() - 1);
        let frac = s - i as f64;
        (self.cum[i] + frac * (self.cum[i + 1] - self.cum[i])) / self.total()
    }

    /// Inverse CDF for `q ∈ [0, 1)`.
    pub fn quantile(&self, q: f64) -> f64 {
        let target = q * self.total();
        // first cell whose right edge exceeds the target
        let i = self.cum[1..].partition_point(|&c| c <= target).min(self.grid.nx() - 1);
        let mass = self.cum[i + 1] - self.cum[i];
        let frac = if mass > 0.0 { ((target - self.cum[i]) / mass).clamp(0.0, 1.0) } else { 0.5 };
        self.left() + (i as f64 + frac) * self.grid.dx()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ensemble {
    pub n: usize,
    pub seed: u64,
    /// Current positions of the surviving samples, in draw order.
    pub positions: Vec<f64>,
    /// Draw indices of the surviving samples.
    pub ids: Vec<usize>,
    /// Draw indices of samples stopped by a node.
    pub excluded: Vec<usize>,
    pub trajectories: Option<Vec<Trajectory>>,
    /// Whether the initial left-to-right order of survivors was kept.
    pub order_preserved: Option<bool>,
}

/// Draws `n` positions from `P` by inverse-CDF sampling; deterministic in `seed`.
pub fn sample_positions(p: &ScalarField, n: usize, seed: u64) -> Result<Ensemble> {
    if n == 0 {
        return Err(Error::InvalidParameter("ensemble size must be at least 1".into()));
    }
    let cdf = LatticeCdf::new(p)?;
    if (cdf.total() - 1.0).abs() > 1e-6 {
        return Err(Error::Unnormalized(cdf.total()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = (0..n).map(|_| cdf.quantile(rng.random::<f64>())).collect();
    Ok(Ensemble { n, seed, positions, ids: (0..n).collect(), excluded: vec![], trajectories: None, order_preserved: None })
}

/// Advances every sample through the snapshot series with the guidance
/// equation. Samples that meet a node are excluded; more than 10% exclusions
/// is an error. `record` keeps full trajectories.
pub fn evolve_ensemble(ens: &Ensemble, snaps: &[CurrentSnapshot], k: f64, record: bool) -> Result<Ensemble> {
    if snaps.len() < 2 {
        return Err(Error::TooFewSnapshots { needed: 2, got: snaps.len() });
    }
    let windows: Vec<GuidanceWindow> = snaps.windows(2).map(|w| GuidanceWindow::new(&w[0], &w[1])).collect();
    let results: Vec<Result<(f64, Option<Trajectory>)>> = ens
        .positions
        .par_iter()
        .map(|&x| {
            let mut s = ParticleState::guided(&snaps[0], x, k)?;
            let mut traj = record.then(|| Trajectory::new(s));
            for (win, to) in windows.iter().zip(&snaps[1..]) {
                s = advance_in_window(&s, win, to, k)?;
                if let Some(t) = traj.as_mut() {
                    t.push(s)?;
                }
            }
            Ok((s.x, traj))
        })
        .collect();

    let mut out = Ensemble { positions: vec![], ids: vec![], excluded: ens.excluded.clone(), trajectories: record.then(Vec::new), ..ens.clone() };
    let mut starts = Vec::new();
    for (idx, r) in results.into_iter().enumerate() {
        match r {
            Ok((x, traj)) => {
                out.positions.push(x);
                out.ids.push(ens.ids[idx]);
                starts.push(ens.positions[idx]);
                if let (Some(all), Some(t)) = (out.trajectories.as_mut(), traj) {
                    all.push(t);
                }
            }
            Err(Error::Node { .. }) => out.excluded.push(ens.ids[idx]),
            Err(e) => return Err(e),
        }
    }
    out.excluded.sort_unstable();
    if out.excluded.len() as f64 > MAX_EXCLUDED_FRACTION * ens.n as f64 {
        return Err(Error::TooFewSurvivors { survivors: out.positions.len(), n: ens.n });
    }
    let mut order: Vec<usize> = (0..starts.len()).collect();
    order.sort_by(|&a, &b| starts[a].total_cmp(&starts[b]));
    out.order_preserved = Some(order.windows(2).all(|w| out.positions[w[0]] <= out.positions[w[1]]));
    Ok(out)
}

/// Two-sided KS statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut f: Vec<f64> = samples.iter().map(|&x| cdf(x)).collect();
    f.sort_by(f64::total_cmp);
    let n = f.len() as f64;
    f.iter()
        .enumerate()
        .map(|(i, &fi)| ((i + 1) as f64 / n - fi).max(fi - i as f64 / n))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsVerdict {
    pub n: usize,
    pub statistic: f64,
    /// `1.63/√n`.
    pub critical: f64,
    /// `critical × 1.5`, the pass threshold.
    pub threshold: f64,
    pub pass: bool,
}

/// KS test of the ensemble positions against the lattice density `p`.
pub fn equivariance_test(ens: &Ensemble, p: &ScalarField) -> Result<KsVerdict> {
    let survivors = ens.positions.len();
    if survivors < MIN_SURVIVORS || (survivors as f64) < (1.0 - MAX_EXCLUDED_FRACTION) * ens.n as f64 {
        return Err(Error::TooFewSurvivors { survivors, n: ens.n });
    }
    let cdf = LatticeCdf::new(p)?;
    let statistic = ks_statistic(&ens.positions, |x| cdf.cdf(x));
    let critical = KS_COEFF_1PCT / (survivors as f64).sqrt();
    let threshold = KS_SAFETY * critical;
    Ok(KsVerdict { n: survivors, statistic, critical, threshold, pass: statistic < threshold })
}
