//! One module per subcommand, plus the small shared readers they all use.
//!
//! Every command follows the same shape: read and validate the whole config,
//! compute, reject unconsumed keys, then write artifacts. Nothing is written
//! until validation has passed, and every artifact lands inside the declared
//! output directory.

pub mod estimate;
pub mod kernel;
pub mod lowerbound;
pub mod online;
pub mod solve;
pub mod sweep;

use std::fmt::Write as _;

use passive_rl::mdp::Policy;
use passive_rl::online::{Estimator, EtaChoice, OnlineConfig};
use passive_rl::{Error, Result};

use crate::config::{Config, Section};

/// Resolves the master seed: the `--seed` flag wins, then `[run] seed`,
/// then zero. Never the clock — reruns of one command line are identical.
pub fn master_seed(config: &Config, flag: Option<u64>) -> Result<u64> {
    let from_file = match config.section_opt("run") {
        Some(run) => run.opt_u64("seed")?,
        None => None,
    };
    Ok(flag.or(from_file).unwrap_or(0))
}

/// Smallest horizon whose truncation tail `gamma^(H+1)/(1-gamma)` is at
/// most `tail` (mirrors the tabular model helper for raw discount values).
pub fn tail_horizon(gamma: f64, tail: f64) -> usize {
    let mut weight = gamma / (1.0 - gamma);
    let mut horizon = 0usize;
    while weight > tail && horizon < 100_000 {
        weight *= gamma;
        horizon += 1;
    }
    horizon
}

/// Reads the `[online]` section into a run configuration. Every key has a
/// default so sweeps can override single axes: rounds 16, episodes 100,
/// horizon from the 1e-3 tail rule, eta auto, plug-in estimator, delta
/// 0.05, smoothing floor 1e-6, solver tol 1e-8 with 200k iterations.
pub fn read_online_config(section: &Section, gamma: f64, seed: u64) -> Result<OnlineConfig> {
    let rounds = section.usize_or("rounds", 16)?;
    let episodes_per_round = section.usize_or("episodes_per_round", 100)?;
    let horizon = match section.opt_usize("horizon")? {
        Some(h) => h,
        None => tail_horizon(gamma, 1e-3),
    };
    let eta = match section.opt_str("eta") {
        None => EtaChoice::Auto,
        Some("auto") => EtaChoice::Auto,
        Some(raw) => EtaChoice::Fixed(
            raw.parse::<f64>()
                .map_err(|_| Error::invalid(format!("eta must be `auto` or a number, got `{raw}`")))?,
        ),
    };
    let estimator = match section.opt_str("estimator") {
        None | Some("plugin") => Estimator::Plugin,
        Some("kde") => Estimator::Kde { bandwidth: section.require_f64("bandwidth")? },
        Some(other) => {
            return Err(Error::invalid(format!("estimator must be plugin or kde, got `{other}`")))
        }
    };
    let config = OnlineConfig {
        rounds,
        episodes_per_round,
        horizon,
        eta,
        estimator,
        delta: section.f64_or("delta", 0.05)?,
        seed,
        smoothing_floor: section.f64_or("smoothing_floor", 1e-6)?,
        solver_tol: section.f64_or("solver_tol", 1e-8)?,
        solver_max_iters: section.usize_or("solver_max_iters", 200_000)?,
    };
    config.validate()?;
    Ok(config)
}

/// `s,a,pi` rows for a tabular policy.
pub fn policy_csv(policy: &Policy) -> String {
    let mut out = String::from("s,a,pi\n");
    for state in 0..policy.n_states() {
        for action in 0..policy.n_actions() {
            let _ = writeln!(out, "{state},{action},{}", policy.prob(state, action));
        }
    }
    out
}

/// Mean and 95% normal confidence half-width of a sample.
pub fn mean_and_half_width(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

/// Least-squares slope of `y` against `x`.
pub fn fitted_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}
