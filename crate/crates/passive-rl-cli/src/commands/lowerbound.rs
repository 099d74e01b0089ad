//! `lowerbound`: audit a hard model pair against the regret floor.
//!
//! `[pair]` declares the instance (`n_states`, `n_actions`, `gamma`), the
//! reward gap (`delta = auto` resolves the budget-optimal gap), the
//! differing cell (`cell = r,c` or `adaptive`, which probes the learner on
//! the base model and hides the gap where it looks least), the per-round
//! episode budget `n`, `rounds`, the audited `learner` (`uniform` or
//! `online`), and `seeds` (count) or `seed_list`. An optional `[kl_audit]`
//! section sizes the divergence-decomposition check (`policies`,
//! `horizon`); horizons beyond the enumeration guard fail the run before
//! anything is written. The `online` learner reads the optional `[online]`
//! section for loop parameters.
//!
//! Artifacts: `pair_audit.csv` (one row per seed: both regrets, their sum,
//! and the floor), `kl_audit.csv` (exact history divergence vs the
//! visit-count decomposition per probe policy), `run_meta.csv` (including
//! the resolved gap and cell).

use std::fmt::Write as _;

use passive_rl::adversarial::{
    adaptive_adversarial_cell, audits_to_csv, enumerate_history_kl, evaluate_learner_on_pair,
    make_hard_pair, occupancy_weighted_kl, optimal_delta, CellChoice, PairAudit,
};
use passive_rl::bench::random_policy;
use passive_rl::mdp::{episode_seed, Policy, TabularMdp};
use passive_rl::online::{run_online, PassiveMemory};
use passive_rl::oracle::OccupancyTable;
use passive_rl::{Error, Result};

use crate::commands::{master_seed, read_online_config};
use crate::config::Config;
use crate::outio::OutDir;

pub fn run(config: &Config, out: &OutDir, seed_flag: Option<u64>) -> Result<()> {
    let master = master_seed(config, seed_flag)?;
    let pair_sec = config.section("pair")?;
    let n_states = pair_sec.usize_or("n_states", 2)?;
    let n_actions = pair_sec.usize_or("n_actions", 2)?;
    let gamma = pair_sec.f64_or("gamma", 0.5)?;
    let c = pair_sec.f64_or("c", 8.0)?;
    let n = pair_sec.usize_or("n", 25)?;
    let rounds = pair_sec.usize_or("rounds", 5)?;
    let delta = match pair_sec.opt_str("delta") {
        None | Some("auto") => optimal_delta(n_states, n_actions, gamma, c, n, rounds)?,
        Some(raw) => raw
            .parse::<f64>()
            .map_err(|_| Error::invalid(format!("delta must be `auto` or a number, got `{raw}`")))?,
    };
    let cell_spec = pair_sec.opt_str("cell").unwrap_or("adaptive").to_string();
    let learner_kind = pair_sec.opt_str("learner").unwrap_or("uniform").to_string();
    let visit_horizon = pair_sec.usize_or("visit_horizon", 20)?;
    let seeds: Vec<u64> = match pair_sec.opt_u64_list("seed_list")? {
        Some(list) if !list.is_empty() => list,
        Some(_) => return Err(Error::invalid("pair `seed_list` is empty")),
        None => {
            let count = pair_sec.usize_or("seeds", 20)?;
            (0..count).map(|i| episode_seed(master, 10_000 + i as u64)).collect()
        }
    };

    // The audited learner as a policies-per-round map. The online learner
    // starts every run from the uniform memory.
    let online_base = match config.section_opt("online") {
        Some(sec) => Some(read_online_config(sec, gamma, master)?),
        None => None,
    };
    let learner = |mdp: &TabularMdp, run_seed: u64| -> Result<Vec<Policy>> {
        match learner_kind.as_str() {
            "uniform" => Ok(vec![Policy::uniform(mdp.n_states(), mdp.n_actions()); rounds]),
            "online" => {
                let memory = PassiveMemory::from_table(
                    OccupancyTable::uniform(mdp.n_states(), mdp.n_actions()),
                    1e-6,
                )?;
                let mut run_config = match &online_base {
                    Some(base) => base.clone(),
                    None => passive_rl::online::OnlineConfig::standard(mdp, rounds, n, run_seed),
                };
                run_config.rounds = rounds;
                run_config.episodes_per_round = n;
                run_config.seed = run_seed;
                Ok(run_online(mdp, &memory, &run_config)?.policies)
            }
            other => Err(Error::invalid(format!("learner must be uniform or online, got `{other}`"))),
        }
    };

    // Resolve the differing cell. The base model does not depend on it, so
    // the adaptive probe can run before the pair exists.
    let fallback_cell = if n_actions > 1 { (0, 1) } else { (1, 0) };
    let (cell, choice) = if cell_spec == "adaptive" {
        let probe = make_hard_pair(n_states, n_actions, gamma, delta, fallback_cell)?;
        let policies = learner(&probe.m, episode_seed(master, 1))?;
        let chosen = adaptive_adversarial_cell(&probe.m, &policies, visit_horizon)?;
        (chosen, CellChoice::LeastVisited)
    } else {
        let (r, a) = cell_spec
            .split_once(',')
            .ok_or_else(|| Error::invalid(format!("cell must be `adaptive` or `r,c`, got `{cell_spec}`")))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("bad cell index `{s}` in `{cell_spec}`")))
        };
        ((parse(r)?, parse(a)?), CellChoice::Static)
    };
    let mut pair = make_hard_pair(n_states, n_actions, gamma, delta, cell)?;
    pair.cell_choice = choice;

    let mut audit_rows: Vec<(u64, PairAudit, f64)> = Vec::with_capacity(seeds.len());
    for &s in &seeds {
        let audit = evaluate_learner_on_pair(&learner, &pair, n, rounds, s)?;
        audit_rows.push((s, audit, delta));
    }

    let (kl_policies, kl_horizon) = match config.section_opt("kl_audit") {
        Some(sec) => (sec.usize_or("policies", 50)?, sec.usize_or("horizon", 3)?),
        None => (50, 3),
    };
    let mut kl_csv = String::from("policy,history_kl,weighted_kl,abs_diff\n");
    for k in 0..kl_policies {
        let policy = random_policy(n_states, n_actions, episode_seed(master, 5_000 + k as u64));
        let exact = enumerate_history_kl(&pair, &policy, kl_horizon)?;
        let weighted = occupancy_weighted_kl(&pair, &policy, kl_horizon)?;
        let _ = writeln!(kl_csv, "{k},{exact},{weighted},{}", (exact - weighted).abs());
    }

    config.reject_unconsumed()?;
    out.write("pair_audit.csv", &audits_to_csv(&audit_rows))?;
    out.write("kl_audit.csv", &kl_csv)?;
    let extras = [
        ("delta".to_string(), delta.to_string()),
        ("adversarial_cell".to_string(), format!("{} {}", cell.0, cell.1)),
        ("cell_choice".to_string(), format!("{:?}", pair.cell_choice)),
    ];
    out.write_run_meta("lowerbound", master, &config.echo(), &extras)?;
    Ok(())
}
