//! Shared resolution of `[model]` and `[memory]` config sections into
//! library objects.

use std::path::Path;

use passive_rl::bench;
use passive_rl::mdp::{load_mdp, ContinuousMdp, Policy, TabularMdp};
use passive_rl::online::PassiveMemory;
use passive_rl::oracle::{exact_occupancy, optimal_policy, OccupancyTable};
use passive_rl::{Error, Result};

use crate::config::Section;

/// Builds the tabular model named by a `[model]` section: either
/// `file = <path>` (the plain-text table format) or `builtin = <name>` with
/// the benchmark fixtures. Exactly one of the two must be present.
pub fn load_model(section: &Section) -> Result<TabularMdp> {
    let file = section.opt_str("file").map(str::to_string);
    let builtin = section.opt_str("builtin").map(str::to_string);
    match (file, builtin) {
        (Some(path), None) => load_mdp(Path::new(&path)),
        (None, Some(name)) => match name.as_str() {
            "two_state_cycle" => Ok(bench::two_state_cycle()),
            "bench_2x2" => Ok(bench::bench_2x2()),
            "bench_3x2" => Ok(bench::bench_3x2()),
            "uniform_mixing_2x2" => {
                let gamma = section.f64_or("gamma", 0.95)?;
                Ok(bench::uniform_mixing_2x2(gamma))
            }
            "random" => {
                let n_states = section.require_usize("n_states")?;
                let n_actions = section.require_usize("n_actions")?;
                let gamma = section.require_f64("gamma")?;
                let seed = section.opt_u64("model_seed")?.unwrap_or(0);
                Ok(bench::random_mdp(n_states, n_actions, gamma, seed))
            }
            other => Err(Error::invalid(format!("unknown builtin model `{other}`"))),
        },
        (Some(_), Some(_)) => {
            Err(Error::invalid("give either `file` or `builtin` in [model], not both"))
        }
        (None, None) => Err(Error::invalid("the [model] section needs `file` or `builtin`")),
    }
}

/// The continuous benchmark named by a `[model]` section.
pub fn load_continuous_model(section: &Section) -> Result<ContinuousMdp> {
    match section.require_str("builtin")? {
        "drift_walk_1d" => Ok(bench::drift_walk_1d()),
        other => Err(Error::invalid(format!("unknown continuous builtin `{other}`"))),
    }
}

/// Resolves a memory spec string against a model.
///
/// * `uniform` — the flat table.
/// * `optimal` — the exact occupancy of the optimal policy.
/// * `alpha:<x>` — the exact occupancy of the policy mixing optimal (weight
///   `x`) with uniform; `alpha:0` is the uniform policy's occupancy, not the
///   uniform table.
/// * `csv:<path>` — a table in the `s,a,d` artifact format.
pub fn resolve_memory_table(spec: &str, mdp: &TabularMdp) -> Result<OccupancyTable> {
    if spec == "uniform" {
        return Ok(OccupancyTable::uniform(mdp.n_states(), mdp.n_actions()));
    }
    if spec == "optimal" {
        let (opt, _) = optimal_policy(mdp, 1e-10)?;
        return exact_occupancy(mdp, &opt);
    }
    if let Some(alpha) = spec.strip_prefix("alpha:") {
        let alpha: f64 = alpha
            .parse()
            .map_err(|_| Error::invalid(format!("bad mixture weight in memory spec `{spec}`")))?;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("mixture weight {alpha} outside [0,1]")));
        }
        let (opt, _) = optimal_policy(mdp, 1e-10)?;
        let mixed = opt.mix(&Policy::uniform(mdp.n_states(), mdp.n_actions()), alpha)?;
        return exact_occupancy(mdp, &mixed);
    }
    if let Some(path) = spec.strip_prefix("csv:") {
        let text = std::fs::read_to_string(Path::new(path))?;
        return OccupancyTable::from_csv_str(&text);
    }
    Err(Error::invalid(format!(
        "memory spec `{spec}` is not uniform | optimal | alpha:<x> | csv:<path>"
    )))
}

/// Reads a `[memory]` section (spec plus smoothing floor) into a memory.
pub fn load_memory(section: &Section, mdp: &TabularMdp) -> Result<PassiveMemory> {
    let spec = section.opt_str("spec").unwrap_or("uniform").to_string();
    let floor = section.f64_or("floor", 1e-6)?;
    let table = resolve_memory_table(&spec, mdp)?;
    PassiveMemory::from_table(table, floor)
}

/// Worker-thread cap: `PASSIVE_RL_THREADS` when set (at least 1), otherwise
/// the machine's available parallelism.
pub fn thread_cap() -> Result<usize> {
    match std::env::var("PASSIVE_RL_THREADS") {
        Ok(raw) => {
            let n: usize = raw.parse().map_err(|_| {
                Error::invalid(format!("PASSIVE_RL_THREADS must be a positive integer, got `{raw}`"))
            })?;
            if n == 0 {
                return Err(Error::invalid("PASSIVE_RL_THREADS must be at least 1"));
            }
            Ok(n)
        }
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use passive_rl::oracle::kl_divergence;

    #[test]
    fn builtin_models_resolve() {
        let cfg = Config::parse("[model]\nbuiltin = bench_3x2\n").unwrap();
        let mdp = load_model(cfg.section("model").unwrap()).unwrap();
        assert_eq!((mdp.n_states(), mdp.n_actions()), (3, 2));

        let cfg = Config::parse("[model]\nbuiltin = random\nn_states = 4\nn_actions = 3\ngamma = 0.6\n")
            .unwrap();
        let mdp = load_model(cfg.section("model").unwrap()).unwrap();
        assert_eq!((mdp.n_states(), mdp.n_actions()), (4, 3));

        let cfg = Config::parse("[model]\nbuiltin = warp_drive\n").unwrap();
        assert!(load_model(cfg.section("model").unwrap()).is_err());

        let cfg = Config::parse("[model]\n").unwrap();
        assert!(load_model(cfg.section("model").unwrap()).is_err());
    }

    #[test]
    fn memory_specs_resolve_against_the_model() {
        let mdp = bench::bench_2x2();
        let flat = resolve_memory_table("uniform", &mdp).unwrap();
        assert!(flat.values().iter().all(|&v| v == 0.25));

        let opt_table = resolve_memory_table("optimal", &mdp).unwrap();
        let via_alpha = resolve_memory_table("alpha:1", &mdp).unwrap();
        assert!(kl_divergence(&opt_table, &via_alpha).unwrap().abs() < 1e-12);

        assert!(resolve_memory_table("alpha:1.5", &mdp).is_err());
        assert!(resolve_memory_table("nonsense", &mdp).is_err());
    }

    #[test]
    fn memory_csv_round_trip() {
        let mdp = bench::bench_2x2();
        let table = resolve_memory_table("alpha:0.5", &mdp).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("memory.csv");
        std::fs::write(&path, table.to_csv_string()).unwrap();
        let again = resolve_memory_table(&format!("csv:{}", path.display()), &mdp).unwrap();
        assert_eq!(again.values(), table.values());
    }
}
