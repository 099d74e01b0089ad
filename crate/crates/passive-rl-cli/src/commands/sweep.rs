//! `sweep`: repeat seeded online runs along one experiment axis.
//!
//! `[sweep]` declares `axis` (`T`, `n`, `H`, `memory_alpha`, or
//! `bandwidth`), `values` (comma list), and `seeds` (count; per-seed masters
//! derive from the run seed) or an explicit `seed_list`. The other sections
//! are the base `online` run the axis perturbs. Points fan out over worker
//! threads (capped by `PASSIVE_RL_THREADS`); results are merged in a fixed
//! order so the artifacts are deterministic regardless of scheduling.
//!
//! Artifacts: `point_<axis>_<index>.csv` per axis value (one row per seed)
//! and `sweep_summary.csv` with per-point means and 95% half-widths. The
//! `T` axis adds the fitted log-log slope of mean cumulative regret against
//! `T`, repeated on every row.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use passive_rl::mdp::{episode_seed, rollout_continuous, ContinuousEpisode};
use passive_rl::online::{
    run_online, run_online_continuous, Estimator, OnlineConfig, PassiveMemory,
};
use passive_rl::{Error, Result};

use crate::commands::{fitted_slope, master_seed, mean_and_half_width, read_online_config};
use crate::config::Config;
use crate::inputs::{load_continuous_model, load_model, resolve_memory_table, thread_cap};
use crate::outio::OutDir;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    Rounds,
    Episodes,
    Horizon,
    MemoryAlpha,
    Bandwidth,
}

impl Axis {
    fn parse(name: &str) -> Result<Axis> {
        match name {
            "T" => Ok(Axis::Rounds),
            "n" => Ok(Axis::Episodes),
            "H" => Ok(Axis::Horizon),
            "memory_alpha" => Ok(Axis::MemoryAlpha),
            "bandwidth" => Ok(Axis::Bandwidth),
            other => Err(Error::invalid(format!(
                "sweep axis must be one of T, n, H, memory_alpha, bandwidth; got `{other}`"
            ))),
        }
    }

    fn label(self) -> &'static str {
        match self {
            Axis::Rounds => "T",
            Axis::Episodes => "n",
            Axis::Horizon => "H",
            Axis::MemoryAlpha => "memory_alpha",
            Axis::Bandwidth => "bandwidth",
        }
    }
}

fn positive_int(value: f64, axis: &str) -> Result<usize> {
    let k = value as usize;
    if k == 0 || k as f64 != value {
        return Err(Error::invalid(format!("{axis} axis values must be positive integers, got {value}")));
    }
    Ok(k)
}

/// Final per-seed numbers for one axis point.
#[derive(Debug, Clone, Copy)]
struct PointOutcome {
    seed: u64,
    final_gap: f64,
    final_cumulative: f64,
}

pub fn run(config: &Config, out: &OutDir, seed_flag: Option<u64>) -> Result<()> {
    let master = master_seed(config, seed_flag)?;
    let sweep = config.section("sweep")?;
    let axis = Axis::parse(sweep.require_str("axis")?)?;
    let values = sweep.opt_f64_list("values")?.unwrap_or_default();
    if values.is_empty() {
        return Err(Error::invalid("sweep needs a nonempty `values` list"));
    }
    let seeds: Vec<u64> = match sweep.opt_u64_list("seed_list")? {
        Some(list) if !list.is_empty() => list,
        Some(_) => return Err(Error::invalid("sweep `seed_list` is empty")),
        None => {
            let count = sweep.usize_or("seeds", 20)?;
            if count == 0 {
                return Err(Error::invalid("sweep needs at least one seed"));
            }
            (0..count).map(|i| episode_seed(master, i as u64)).collect()
        }
    };

    let outcomes = if axis == Axis::Bandwidth {
        continuous_outcomes(config, sweep, axis, &values, &seeds, master)?
    } else {
        tabular_outcomes(config, axis, &values, &seeds, master)?
    };

    config.reject_unconsumed()?;
    write_artifacts(out, config, axis, &values, &outcomes, master)
}

/// Runs every (point, seed) task of a tabular sweep across worker threads
/// and returns outcomes grouped by point, seeds in listed order.
fn tabular_outcomes(
    config: &Config,
    axis: Axis,
    values: &[f64],
    seeds: &[u64],
    master: u64,
) -> Result<Vec<Vec<PointOutcome>>> {
    let mdp = load_model(config.section("model")?)?;
    let (memory_spec, memory_floor) = match config.section_opt("memory") {
        Some(sec) => (sec.opt_str("spec").unwrap_or("uniform").to_string(), sec.f64_or("floor", 1e-6)?),
        None => ("uniform".to_string(), 1e-6),
    };
    let base = read_online_config(config.section("online")?, mdp.gamma(), master)?;

    // Validate axis values and pre-resolve each point's configuration so
    // worker threads only run, never parse.
    let mut points: Vec<(OnlineConfig, PassiveMemory)> = Vec::with_capacity(values.len());
    for &value in values {
        let mut point_config = base.clone();
        let mut spec = memory_spec.clone();
        match axis {
            Axis::Rounds => point_config.rounds = positive_int(value, "T")?,
            Axis::Episodes => point_config.episodes_per_round = positive_int(value, "n")?,
            Axis::Horizon => point_config.horizon = positive_int(value, "H")?,
            Axis::MemoryAlpha => {
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::invalid(format!("memory_alpha values must lie in [0,1], got {value}")));
                }
                spec = format!("alpha:{value}");
            }
            Axis::Bandwidth => unreachable!("bandwidth sweeps take the continuous path"),
        }
        let table = resolve_memory_table(&spec, &mdp)?;
        let memory = PassiveMemory::from_table(table, memory_floor)?;
        points.push((point_config, memory));
    }

    run_tasks(values.len(), seeds, |point, seed| {
        let (base_config, memory) = &points[point];
        let mut run_config = base_config.clone();
        run_config.seed = seed;
        let record = run_online(&mdp, memory, &run_config)?;
        Ok(PointOutcome {
            seed,
            final_gap: *record.per_round_gap.last().expect("at least one round"),
            final_cumulative: record.final_cumulative(),
        })
    })
}

/// Bandwidth sweeps run the continuous loop on a grid-discretized model.
/// The memory is one shared batch of uniform-policy episodes, and per-round
/// values are scored against a zero baseline, so `final_cumulative` is the
/// negated sum of scores — comparable across bandwidths, not a regret.
fn continuous_outcomes(
    config: &Config,
    sweep: &crate::config::Section,
    _axis: Axis,
    values: &[f64],
    seeds: &[u64],
    master: u64,
) -> Result<Vec<Vec<PointOutcome>>> {
    let mdp = load_continuous_model(config.section("model")?)?;
    let base = read_online_config(config.section("online")?, mdp.gamma(), master)?;
    let resolution = sweep.usize_or("resolution", 8)?;
    let scoring_episodes = sweep.usize_or("scoring_episodes", 500)?;
    let memory_count = sweep.usize_or("memory_episodes", 200)?;

    for &value in values {
        if !(value > 0.0) {
            return Err(Error::invalid(format!("bandwidth values must be positive, got {value}")));
        }
    }
    let n_actions = mdp.n_actions();
    let uniform_act = move |_state: &[f64], u: f64| {
        ((u * n_actions as f64) as usize).min(n_actions - 1)
    };
    let memory: Vec<ContinuousEpisode> =
        rollout_continuous(&mdp, &uniform_act, memory_count, base.horizon, episode_seed(master, u64::MAX))?;

    run_tasks(values.len(), seeds, |point, seed| {
        let mut run_config = base.clone();
        run_config.seed = seed;
        run_config.estimator = Estimator::Kde { bandwidth: values[point] };
        let record =
            run_online_continuous(&mdp, &memory, &run_config, resolution, scoring_episodes, 0.0)?;
        Ok(PointOutcome {
            seed,
            final_gap: *record.per_round_gap.last().expect("at least one round"),
            final_cumulative: *record.cumulative.last().expect("at least one round"),
        })
    })
}

/// Shared fan-out: every (point, seed) pair becomes one task; workers pull
/// tasks from a shared counter and results are sorted back into (point,
/// seed-order) before returning.
fn run_tasks<F>(n_points: usize, seeds: &[u64], task: F) -> Result<Vec<Vec<PointOutcome>>>
where
    F: Fn(usize, u64) -> Result<PointOutcome> + Sync,
{
    let tasks: Vec<(usize, usize)> = (0..n_points)
        .flat_map(|p| (0..seeds.len()).map(move |s| (p, s)))
        .collect();
    let workers = thread_cap()?.min(tasks.len()).max(1);
    let next = AtomicUsize::new(0);
    let collected: Mutex<Vec<(usize, usize, Result<PointOutcome>)>> =
        Mutex::new(Vec::with_capacity(tasks.len()));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(point, seed_idx)) = tasks.get(i) else { break };
                let outcome = task(point, seeds[seed_idx]);
                collected.lock().expect("no poisoned worker").push((point, seed_idx, outcome));
            });
        }
    });

    let mut flat = collected.into_inner().expect("workers joined");
    flat.sort_by_key(|(p, s, _)| (*p, *s));
    let mut grouped: Vec<Vec<PointOutcome>> = vec![Vec::with_capacity(seeds.len()); n_points];
    for (point, _, outcome) in flat {
        grouped[point].push(outcome?);
    }
    Ok(grouped)
}

fn write_artifacts(
    out: &OutDir,
    config: &Config,
    axis: Axis,
    values: &[f64],
    outcomes: &[Vec<PointOutcome>],
    master: u64,
) -> Result<()> {
    for (idx, rows) in outcomes.iter().enumerate() {
        let mut csv = String::from("seed,final_gap,final_cumulative\n");
        for row in rows {
            let _ = writeln!(csv, "{},{},{}", row.seed, row.final_gap, row.final_cumulative);
        }
        out.write(&format!("point_{}_{idx}.csv", axis.label()), &csv)?;
    }

    let mut means = Vec::with_capacity(values.len());
    let mut half_widths = Vec::with_capacity(values.len());
    let mut gap_means = Vec::with_capacity(values.len());
    for rows in outcomes {
        let cums: Vec<f64> = rows.iter().map(|r| r.final_cumulative).collect();
        let gaps: Vec<f64> = rows.iter().map(|r| r.final_gap).collect();
        let (mean, hw) = mean_and_half_width(&cums);
        means.push(mean);
        half_widths.push(hw);
        gap_means.push(gaps.iter().sum::<f64>() / gaps.len() as f64);
    }

    let slope = (axis == Axis::Rounds).then(|| {
        let x: Vec<f64> = values.iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = means.iter().map(|m| m.max(1e-300).ln()).collect();
        fitted_slope(&x, &y)
    });

    let mut summary = String::from("axis,value,mean_cumulative,ci_half_width,mean_final_gap,n_seeds");
    if slope.is_some() {
        summary.push_str(",loglog_slope");
    }
    summary.push('\n');
    for (i, &value) in values.iter().enumerate() {
        let _ = write!(
            summary,
            "{},{value},{},{},{},{}",
            axis.label(),
            means[i],
            half_widths[i],
            gap_means[i],
            outcomes[i].len()
        );
        if let Some(s) = slope {
            let _ = write!(summary, ",{s}");
        }
        summary.push('\n');
    }
    out.write("sweep_summary.csv", &summary)?;
    out.write_run_meta("sweep", master, &config.echo(), &[])?;
    Ok(())
}
