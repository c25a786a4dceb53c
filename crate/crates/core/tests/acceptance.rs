//! Full-resolution acceptance battery. Prints one PASS/FAIL line per
//! criterion and exits nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use pilot_dirac::particle::dl_dj;
use pilot_dirac::verify::{self, Resolution};

const FAST_BUDGET: Duration = Duration::from_secs(60);

fn flipped(u: [f64; 2], j: [f64; 2], rho0: f64, k: f64) -> pilot_dirac::Result<[f64; 2]> {
    dl_dj(u, j, rho0, k).map(|d| [-d[0], -d[1]])
}

fn main() -> ExitCode {
    let report = verify::run(Resolution::Full);
    let mut ok = report.all_pass();
    for c in &report.checks {
        println!("criterion {}", c.line());
    }

    let t0 = Instant::now();
    let first = verify::run(Resolution::Fast);
    let elapsed = t0.elapsed();
    let second = verify::run(Resolution::Fast);
    let identical = first.render() == second.render();
    let determinism = identical && elapsed < FAST_BUDGET && first.all_pass();
    println!(
        "criterion {} [10] determinism identical_reports={identical} fast_wall_time_s={:.3} fast_all_pass={}",
        if determinism { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        first.all_pass()
    );
    ok &= determinism;

    let mutant = verify::check_dl_dj_oracle(flipped);
    println!("mutation {} (sign-flipped dL/dj must fail)", mutant.line());
    ok &= !mutant.pass;

    if ok {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILURES above");
        ExitCode::FAILURE
    }
}
