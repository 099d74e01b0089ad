//! `estimate`: roll out fresh episodes and estimate their occupancy.
//!
//! `[estimate]` picks the `kind`:
//!
//! * `plugin` (tabular) — `[model]` names the model; keys `policy`
//!   (`uniform`, `optimal`, `random`), `n`, `horizon` (default from the
//!   1e-3 tail rule), `delta`. Writes the visit-frequency estimate next to
//!   the exact truncated occupancy and reports the sup error against the
//!   concentration radius.
//! * `kde` (continuous) — `[model]` names the continuous benchmark; keys
//!   `bandwidth` (required), `kernel` (default `epanechnikov`), `n`,
//!   `horizon`, `resolution`, `delta`. Actions are drawn uniformly. Writes
//!   the kernel estimate on an evaluation grid and reports its bounds and
//!   grid integral.
//!
//! Artifacts: `estimate.csv` + `exact.csv` + `estimate_report.csv`
//! (plugin), or `kde_grid.csv` + `estimate_report.csv` (kde), plus
//! `run_meta.csv`.

use passive_rl::bench::random_policy;
use passive_rl::density::{
    kde_bias_bound, kde_estimate, kde_l1_bound, kernels, plugin_error_bound, plugin_estimate,
};
use passive_rl::mdp::{rollout, rollout_continuous, Policy};
use passive_rl::oracle::{optimal_policy, truncated_occupancy};
use passive_rl::{Error, Result};

use crate::commands::{master_seed, tail_horizon};
use crate::config::Config;
use crate::inputs::{load_continuous_model, load_model};
use crate::outio::OutDir;

pub fn run(config: &Config, out: &OutDir, seed_flag: Option<u64>) -> Result<()> {
    let seed = master_seed(config, seed_flag)?;
    let sec = config.section("estimate")?;
    match sec.opt_str("kind").unwrap_or("plugin") {
        "plugin" => plugin_run(config, out, seed),
        "kde" => kde_run(config, out, seed),
        other => Err(Error::invalid(format!("estimate kind must be plugin or kde, got `{other}`"))),
    }
}

fn plugin_run(config: &Config, out: &OutDir, seed: u64) -> Result<()> {
    let sec = config.section("estimate")?;
    let mdp = load_model(config.section("model")?)?;
    let policy = match sec.opt_str("policy").unwrap_or("uniform") {
        "uniform" => Policy::uniform(mdp.n_states(), mdp.n_actions()),
        "optimal" => optimal_policy(&mdp, 1e-10)?.0,
        "random" => random_policy(mdp.n_states(), mdp.n_actions(), seed ^ 0xA5A5),
        other => return Err(Error::invalid(format!("unknown policy spec `{other}`"))),
    };
    let n = sec.usize_or("n", 1000)?;
    let horizon = match sec.opt_usize("horizon")? {
        Some(h) => h,
        None => tail_horizon(mdp.gamma(), 1e-3),
    };
    let delta = sec.f64_or("delta", 0.05)?;

    let episodes = rollout(&mdp, &policy, n, horizon, seed)?;
    let estimate =
        plugin_estimate(&episodes, mdp.n_states(), mdp.n_actions(), mdp.gamma(), horizon)?;
    let exact = truncated_occupancy(&mdp, &policy, horizon);
    let sup_error = estimate
        .values()
        .iter()
        .zip(exact.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let bound = plugin_error_bound(n, mdp.n_cells(), delta)?;

    config.reject_unconsumed()?;
    out.write("estimate.csv", &estimate.to_csv_string())?;
    out.write("exact.csv", &exact.to_csv_string())?;
    out.write(
        "estimate_report.csv",
        &format!(
            "n,cells,horizon,delta,error_bound,sup_error\n{n},{},{horizon},{delta},{bound},{sup_error}\n",
            mdp.n_cells()
        ),
    )?;
    out.write_run_meta("estimate", seed, &config.echo(), &[])?;
    Ok(())
}

fn kde_run(config: &Config, out: &OutDir, seed: u64) -> Result<()> {
    let sec = config.section("estimate")?;
    let mdp = load_continuous_model(config.section("model")?)?;
    let bandwidth = sec.require_f64("bandwidth")?;
    let kernel_name = sec.opt_str("kernel").unwrap_or("epanechnikov").to_string();
    let n = sec.usize_or("n", 500)?;
    let horizon = match sec.opt_usize("horizon")? {
        Some(h) => h,
        None => tail_horizon(mdp.gamma(), 1e-3),
    };
    let resolution = sec.usize_or("resolution", 50)?;
    let delta = sec.f64_or("delta", 0.05)?;

    let kernel = kernels::by_name(&kernel_name, mdp.state_dim())
        .ok_or_else(|| Error::invalid(format!("unknown kernel `{kernel_name}`")))?
        .with_bandwidth(bandwidth)?
        .with_holder_const(mdp.smoothness().holder_const)?;
    let n_actions = mdp.n_actions();
    let uniform_act =
        move |_state: &[f64], u: f64| ((u * n_actions as f64) as usize).min(n_actions - 1);
    let episodes = rollout_continuous(&mdp, &uniform_act, n, horizon, seed)?;
    let model = kde_estimate(&episodes, &kernel, mdp.gamma(), horizon, mdp.bounds(), n_actions)?;

    let integral = model.integral_on_grid(resolution);
    let bias = kde_bias_bound(&kernel)?;
    let l1 = kde_l1_bound(&kernel, mdp.state_volume(), mdp.action_measure(), n, delta)?;

    config.reject_unconsumed()?;
    out.write("kde_grid.csv", &model.to_grid_csv(resolution))?;
    out.write(
        "estimate_report.csv",
        &format!(
            "n,bandwidth,beta,c_k,bias_bound,l1_bound,grid_integral\n{n},{bandwidth},{},{},{bias},{l1},{integral}\n",
            kernel.beta(),
            kernel.c_k()
        ),
    )?;
    out.write_run_meta("estimate", seed, &config.echo(), &[])?;
    Ok(())
}
