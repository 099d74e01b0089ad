//! `online`: seeded runs of the plan/deploy/re-estimate loop on a tabular
//! model.
//!
//! Config sections: `[model]`, `[memory]` (spec + smoothing floor),
//! `[online]` (see the shared reader for keys and defaults), `[run]`
//! (`seed`, optional `seeds` list for multi-seed runs). Artifacts: one
//! `regret_<seed>.csv` per seed in the regret-trace format, an
//! `online_summary.csv` with final-round numbers, and `run_meta.csv`.

use std::fmt::Write as _;

use passive_rl::online::{run_online, PassiveMemory, RegretRecord};
use passive_rl::oracle::OccupancyTable;
use passive_rl::Result;

use crate::commands::{master_seed, read_online_config};
use crate::config::Config;
use crate::inputs::{load_memory, load_model};
use crate::outio::OutDir;

pub fn run(config: &Config, out: &OutDir, seed_flag: Option<u64>) -> Result<()> {
    let seed = master_seed(config, seed_flag)?;
    let mdp = load_model(config.section("model")?)?;
    let memory = match config.section_opt("memory") {
        Some(sec) => load_memory(sec, &mdp)?,
        None => PassiveMemory::from_table(
            OccupancyTable::uniform(mdp.n_states(), mdp.n_actions()),
            1e-6,
        )?,
    };
    let base = read_online_config(config.section("online")?, mdp.gamma(), seed)?;
    let seeds: Vec<u64> = match config.section_opt("run") {
        Some(run) => run.opt_u64_list("seeds")?.unwrap_or_else(|| vec![seed]),
        None => vec![seed],
    };

    let mut records: Vec<(u64, RegretRecord)> = Vec::with_capacity(seeds.len());
    for &s in &seeds {
        let mut run_config = base.clone();
        run_config.seed = s;
        records.push((s, run_online(&mdp, &memory, &run_config)?));
    }

    config.reject_unconsumed()?;
    let mut summary = String::from("seed,final_gap,final_cumulative,eta,optimal_value\n");
    for (s, record) in &records {
        out.write(&format!("regret_{s}.csv"), &record.to_csv_string())?;
        let _ = writeln!(
            summary,
            "{s},{},{},{},{}",
            record.per_round_gap.last().expect("at least one round"),
            record.final_cumulative(),
            record.eta,
            record.optimal_value
        );
    }
    out.write("online_summary.csv", &summary)?;
    let extras = [(
        "seeds".to_string(),
        seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" "),
    )];
    out.write_run_meta("online", seed, &config.echo(), &extras)?;
    Ok(())
}
