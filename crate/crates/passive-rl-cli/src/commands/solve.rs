//! `solve`: one regularized planning solve against a fixed reference.
//!
//! Config sections: `[model]` (required), `[memory]` (reference spec,
//! default uniform; `floor` defaults to 0 so the reference is used as
//! given), `[solve]` (`eta`, `tol`, `max_iters`), `[run]` (`seed`).
//! Artifacts: `solve_report.csv`, `occupancy.csv`, `policy.csv`,
//! `run_meta.csv`. Exits 2 when the solver hits its iteration cap, with the
//! artifacts still written for inspection.

use passive_rl::solver::{extract_occupancy, extract_policy, solve_dual, SolveReport};
use passive_rl::{Error, Result};

use crate::commands::{master_seed, policy_csv};
use crate::config::Config;
use crate::inputs::{load_model, resolve_memory_table};
use crate::outio::OutDir;

pub fn run(config: &Config, out: &OutDir, seed_flag: Option<u64>) -> Result<()> {
    let seed = master_seed(config, seed_flag)?;
    let mdp = load_model(config.section("model")?)?;

    let (spec, floor) = match config.section_opt("memory") {
        Some(sec) => (sec.opt_str("spec").unwrap_or("uniform").to_string(), sec.f64_or("floor", 0.0)?),
        None => ("uniform".to_string(), 0.0),
    };
    let reference = resolve_memory_table(&spec, &mdp)?.mix_uniform(floor)?;

    let (eta, tol, max_iters) = match config.section_opt("solve") {
        Some(sec) => (
            sec.f64_or("eta", 1.0)?,
            sec.f64_or("tol", 1e-8)?,
            sec.usize_or("max_iters", 200_000)?,
        ),
        None => (1.0, 1e-8, 200_000),
    };

    let report = solve_dual(&reference, &mdp, eta, tol, max_iters)?;
    let occupancy = extract_occupancy(&report.v_star, &reference, &mdp, eta)?;
    let policy = extract_policy(&occupancy);

    config.reject_unconsumed()?;
    let mut report_csv = String::from(SolveReport::csv_header());
    report_csv.push('\n');
    report_csv.push_str(&report.csv_row());
    report_csv.push('\n');
    out.write("solve_report.csv", &report_csv)?;
    out.write("occupancy.csv", &occupancy.to_csv_string())?;
    out.write("policy.csv", &policy_csv(&policy))?;
    out.write_run_meta(
        "solve",
        seed,
        &config.echo(),
        &[("converged".to_string(), report.converged.to_string())],
    )?;

    if !report.converged {
        return Err(Error::NonConvergence { max_iters, grad_inf_norm: report.grad_inf_norm });
    }
    Ok(())
}
