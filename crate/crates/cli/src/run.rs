//! Executes a configured scenario and writes its output tree.

use std::collections::VecDeque;
use std::io;

use serde::Serialize;

use pilot_dirac::emtensor::{
    field_divergence_identity_check, free_energy, guidance_misalignment, integrated_balance_check, particle_divergence_identity_check,
    total_conservation_check, CoupledRun, IdentityReport,
};
use pilot_dirac::ensemble::{equivariance_test, evolve_ensemble, sample_positions, KsVerdict, MIN_SURVIVORS};
use pilot_dirac::lattice::{fmt_f64, write_columns, write_spinor_csv, write_vector_csv, CovectorField, SpinorField};
use pilot_dirac::observables::{continuity_residual, current_field, current_vector, CurrentSnapshot, FieldSnapshot};
use pilot_dirac::particle::{coupled_start, Trajectory};
use pilot_dirac::solver::{coupled_source, dirac_residual, DiracStepper};

use crate::config::{Mode, RunConfig};
use crate::output::{Manifest, OutputTree};
use crate::plot;

#[derive(Debug)]
pub enum RunError {
    Io(io::Error),
    /// A model error, already recorded in `diagnostic.json`.
    Model(pilot_dirac::Error),
}

impl From<io::Error> for RunError {
    fn from(e: io::Error) -> Self {
        RunError::Io(e)
    }
}

#[derive(Serialize)]
struct Diagnostic<'a> {
    error: String,
    mode: &'a str,
    scenario: &'a str,
    /// Last step completed before the failure, when known.
    step: Option<usize>,
}

#[derive(Serialize, Default)]
struct EnsembleSummary {
    n: usize,
    seed: u64,
    survivors: usize,
    excluded: usize,
    order_preserved: Option<bool>,
    /// `None` when fewer samples survive than the test needs.
    ks: Option<KsVerdict>,
}

#[derive(Serialize, Default)]
struct Checks {
    mode: String,
    steps: usize,
    dt: f64,
    norm_drift: f64,
    max_continuity_residual: f64,
    max_dirac_residual: f64,
    ensemble: Option<EnsembleSummary>,
    /// Largest `|u - j/ρ0|` at the particle over a coupled run.
    guidance_misalignment: Option<f64>,
    field_identity: Option<IdentityReport>,
    particle_identity: Option<IdentityReport>,
    field_balance: Option<IdentityReport>,
    particle_balance: Option<IdentityReport>,
    energy_drift: Option<f64>,
    energy_exchange: Option<f64>,
}

/// Outcome of a model stage: the error and the last completed step.
type Staged<T> = Result<T, (pilot_dirac::Error, Option<usize>)>;

pub fn execute(cfg: &RunConfig) -> Result<Manifest, RunError> {
    let mut tree = OutputTree::create(&cfg.output)?;
    let outcome = match cfg.mode {
        Mode::Coupled => run_coupled(cfg, &mut tree)?,
        _ => run_uncoupled(cfg, &mut tree)?,
    };
    if let Err((err, step)) = outcome {
        let diag = Diagnostic { error: err.to_string(), mode: cfg.mode.name(), scenario: &cfg.scenario_name, step };
        tree.write_json("diagnostic.json", &diag)?;
        tree.finish()?;
        return Err(RunError::Model(err));
    }
    if cfg.emit.plots {
        plot::render(&mut tree)?;
    }
    Ok(tree.finish()?)
}

fn csv(f: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> io::Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn write_snapshot(tree: &mut OutputTree, step: usize, psi: &SpinorField) -> io::Result<()> {
    tree.write(&format!("fields/psi_{step:06}.csv"), &csv(|b| write_spinor_csv(b, psi))?)?;
    // the lattice current cannot fail for a field that already evolved
    let j = current_vector(psi).map_err(io::Error::other)?;
    tree.write(&format!("fields/current_{step:06}.csv"), &csv(|b| write_vector_csv(b, &j))?)
}

fn snapshot_due(cfg: &RunConfig, step: usize) -> bool {
    cfg.emit.fields && (step % cfg.emit.every == 0 || step == cfg.solver.steps)
}

fn write_times(tree: &mut OutputTree, steps: &[f64], times: &[f64]) -> io::Result<()> {
    if !steps.is_empty() {
        tree.write("fields/times.csv", &csv(|b| write_columns(b, &["step", "t"], &[steps, times]))?)?;
    }
    Ok(())
}

fn run_uncoupled(cfg: &RunConfig, tree: &mut OutputTree) -> io::Result<Staged<()>> {
    let dt = cfg.solver.dt;
    let m = cfg.solver.m;
    let src = cfg.source_field();
    let coupling: Option<CovectorField> = match cfg.mode {
        Mode::PhaseSourced => Some(src.scaled(-1.0)),
        Mode::External => Some(src.clone()),
        _ => None,
    };
    let couplings = coupling.map(|c| vec![c; 3]);
    let keep_currents = cfg.ensemble_n > 0;

    let mut last_step = None;
    let stage = (|| -> Result<_, pilot_dirac::Error> {
        let stepper = DiracStepper::new(cfg.grid, cfg.solver)?;
        let mut psi = cfg.initial_field()?;
        let norm0 = psi.norm_sqr();
        let mut checks = Checks { mode: cfg.mode.name().into(), steps: cfg.solver.steps, dt, ..Default::default() };
        let mut fields: VecDeque<FieldSnapshot> = VecDeque::new();
        let mut window: VecDeque<CurrentSnapshot> = VecDeque::new();
        let mut currents = Vec::new();
        let (mut snap_steps, mut snap_times) = (vec![], vec![]);
        let mut energy = vec![];
        let mut snapshots = vec![];

        for n in 0..=cfg.solver.steps {
            if n > 0 {
                match cfg.mode {
                    Mode::PhaseSourced => stepper.step_phase_sourced(&mut psi, &src)?,
                    Mode::External => stepper.step_external(&mut psi, &src)?,
                    _ => stepper.step_free(&mut psi),
                }
            }
            last_step = Some(n);
            let t = n as f64 * dt;
            let cur = current_field(&psi, t)?;
            if keep_currents {
                currents.push(cur.clone());
            }
            window.push_back(cur);
            fields.push_back(FieldSnapshot { t, psi: psi.clone() });
            if window.len() == 3 {
                let w: Vec<CurrentSnapshot> = window.iter().cloned().collect();
                checks.max_continuity_residual = checks.max_continuity_residual.max(continuity_residual(&w)?);
                let f: Vec<FieldSnapshot> = fields.iter().cloned().collect();
                let r = dirac_residual(&f, couplings.as_deref(), m)?;
                checks.max_dirac_residual = checks.max_dirac_residual.max(r);
                window.pop_front();
                fields.pop_front();
            }
            checks.norm_drift = checks.norm_drift.max((psi.norm_sqr() - norm0).abs());
            let e = free_energy(&psi, m);
            energy.push([t, e, 0.0, e]);
            if snapshot_due(cfg, n) {
                snap_steps.push(n as f64);
                snap_times.push(t);
                snapshots.push((n, psi.clone()));
            }
        }
        Ok((checks, currents, energy, snapshots, snap_steps, snap_times))
    })();
    let (mut checks, currents, energy, snapshots, snap_steps, snap_times) = match stage {
        Ok(v) => v,
        Err(e) => return Ok(Err((e, last_step))),
    };

    for (n, psi) in &snapshots {
        write_snapshot(tree, *n, psi)?;
    }
    write_times(tree, &snap_steps, &snap_times)?;
    if cfg.emit.energy {
        write_energy(tree, &energy)?;
    }

    if keep_currents {
        let ens = (|| -> Result<_, pilot_dirac::Error> {
            let start = sample_positions(&currents[0].p, cfg.ensemble_n, cfg.seed)?;
            evolve_ensemble(&start, &currents, cfg.solver.k, cfg.emit.trajectories)
        })();
        let ens = match ens {
            Ok(e) => e,
            Err(e) => return Ok(Err((e, Some(cfg.solver.steps)))),
        };
        let survivors = ens.positions.len();
        let ks = if survivors >= MIN_SURVIVORS {
            match equivariance_test(&ens, &currents[cfg.solver.steps].p) {
                Ok(v) => Some(v),
                Err(e) => return Ok(Err((e, Some(cfg.solver.steps)))),
            }
        } else {
            None
        };
        if let Some(trajs) = &ens.trajectories {
            let mut buf = b"id,t,x,u0,u1,tau,S,p0,p1\n".to_vec();
            for (id, tr) in ens.ids.iter().zip(trajs) {
                for s in &tr.states {
                    let row = [s.t, s.x, s.u[0], s.u[1], s.tau, s.action, s.p[0], s.p[1]];
                    let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
                    buf.extend_from_slice(format!("{id},{}\n", cells.join(",")).as_bytes());
                }
            }
            tree.write("trajectories.csv", &buf)?;
        }
        checks.ensemble = Some(EnsembleSummary {
            n: cfg.ensemble_n,
            seed: cfg.seed,
            survivors,
            excluded: ens.excluded.len(),
            order_preserved: ens.order_preserved,
            ks,
        });
    }
    tree.write_json("checks.json", &checks)?;
    Ok(Ok(()))
}

fn write_energy(tree: &mut OutputTree, rows: &[[f64; 4]]) -> io::Result<()> {
    let col = |c: usize| rows.iter().map(|r| r[c]).collect::<Vec<f64>>();
    let (t, f, p, tot) = (col(0), col(1), col(2), col(3));
    tree.write("energy.csv", &csv(|b| write_columns(b, &["t", "e_field", "e_particle", "e_total"], &[&t, &f, &p, &tot]))?)
}

fn run_coupled(cfg: &RunConfig, tree: &mut OutputTree) -> io::Result<Staged<()>> {
    let s = cfg.solver;
    let stage = (|| -> Result<_, pilot_dirac::Error> {
        let phi = cfg.initial_field()?;
        let x = cfg.particle_x.expect("validated coupled config");
        let particle = coupled_start(&phi, 0.0, x, s.k, s.eps, s.m)?;
        let run = CoupledRun::simulate(cfg.grid, s, phi, particle)?;
        let mut checks = Checks { mode: cfg.mode.name().into(), steps: s.steps, dt: s.dt, ..Default::default() };
        let norm0 = run.frames[0].phi.norm_sqr();
        checks.norm_drift = run.frames.iter().map(|f| (f.phi.norm_sqr() - norm0).abs()).fold(0.0, f64::max);
        let snaps: Vec<FieldSnapshot> = run.frames.iter().map(|f| FieldSnapshot { t: f.t, psi: f.phi.clone() }).collect();
        let couplings =
            run.frames.iter().map(|f| Ok(coupled_source(&f.phi, &f.particle, s.k, s.eps)?.0)).collect::<pilot_dirac::Result<Vec<_>>>()?;
        let currents = run.frames.iter().map(|f| current_field(&f.phi, f.t)).collect::<pilot_dirac::Result<Vec<_>>>()?;
        if run.frames.len() >= 3 {
            checks.max_dirac_residual = dirac_residual(&snaps, Some(&couplings), s.m)?;
            checks.max_continuity_residual = currents.windows(3).map(continuity_residual).try_fold(0.0f64, |a, r| r.map(|r| a.max(r)))?;
            let tensors = run.all_tensors()?;
            checks.field_identity = Some(field_divergence_identity_check(&tensors)?);
            checks.particle_identity = Some(particle_divergence_identity_check(&tensors)?);
            let (fb, pb) = integrated_balance_check(&tensors)?;
            checks.field_balance = Some(fb);
            checks.particle_balance = Some(pb);
        }
        checks.guidance_misalignment = Some(guidance_misalignment(&run)?);
        let cons = total_conservation_check(&run)?;
        checks.energy_drift = Some(cons.drift);
        checks.energy_exchange = Some(cons.exchange);
        Ok((run, checks, cons))
    })();
    let (run, checks, cons) = match stage {
        Ok(v) => v,
        Err(e) => return Ok(Err((e, None))),
    };

    let (mut snap_steps, mut snap_times) = (vec![], vec![]);
    for (n, f) in run.frames.iter().enumerate() {
        if snapshot_due(cfg, n) {
            write_snapshot(tree, n, &f.phi)?;
            snap_steps.push(n as f64);
            snap_times.push(f.t);
        }
    }
    write_times(tree, &snap_steps, &snap_times)?;
    if cfg.emit.trajectories {
        let mut traj = Trajectory::new(run.frames[0].particle);
        for f in &run.frames[1..] {
            traj.push(f.particle).map_err(io::Error::other)?;
        }
        tree.write("particle.csv", &csv(|b| traj.write_csv(b))?)?;
    }
    if cfg.emit.energy {
        let rows: Vec<[f64; 4]> =
            (0..cons.times.len()).map(|i| [cons.times[i], cons.e_field[i], cons.e_particle[i], cons.e_total[i]]).collect();
        write_energy(tree, &rows)?;
    }
    tree.write_json("checks.json", &checks)?;
    Ok(Ok(()))
}
