//! Online planning loop seeded by a passive dataset.
//!
//! Each round solves the entropy-regularized dual against the previous
//! round's occupancy estimate (round one uses the passive memory), deploys
//! the extracted policy, rolls out fresh episodes, and re-estimates. The
//! step scale `eta` trades progress toward the reward against staying close
//! to the last estimate, so the loop is mirror descent in the KL geometry
//! with the memory as the starting iterate: better memory means a shorter
//! path and less regret.

use std::fmt::Write as _;

use crate::density::{kde_estimate, kernels, plugin_error_bound, plugin_estimate, kde_l1_bound};
use crate::error::{Error, Result};
use crate::grid::{discretize, BinnedPolicy, UniformGrid};
use crate::mdp::{
    episode_seed, discounted_return, rollout, rollout_continuous, ContinuousEpisode,
    ContinuousMdp, Policy, TabularEpisode, TabularMdp,
};
use crate::oracle::{exact_occupancy, exact_value, kl_divergence, optimal_policy, OccupancyTable};
use crate::solver::{extract_occupancy, extract_policy, solve_dual};

/// Occupancy estimator used to refresh the reference each round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    /// Discounted visit frequencies (tabular, or continuous states binned to
    /// the planning grid).
    Plugin,
    /// Per-action kernel density estimate with this bandwidth, projected
    /// onto the planning grid (continuous states only).
    Kde { bandwidth: f64 },
}

/// Step scale: fixed, or resolved from the memory/horizon/round budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaChoice {
    Auto,
    Fixed(f64),
}

/// Knobs for one online run.
#[derive(Debug, Clone)]
pub struct OnlineConfig {
    /// Rounds of solve-deploy-reestimate.
    pub rounds: usize,
    /// Episodes rolled out per round.
    pub episodes_per_round: usize,
    /// Truncation horizon of every episode.
    pub horizon: usize,
    pub eta: EtaChoice,
    pub estimator: Estimator,
    /// Confidence level fed to the estimator error bounds.
    pub delta: f64,
    /// Master seed; all round and episode seeds derive from it.
    pub seed: u64,
    /// Uniform mixing weight applied to every per-round estimate, keeping
    /// references strictly positive. Must be positive.
    pub smoothing_floor: f64,
    pub solver_tol: f64,
    pub solver_max_iters: usize,
}

impl OnlineConfig {
    /// Defaults sized for the small benchmark models: horizon chosen so the
    /// truncation tail `gamma^(H+1)/(1-gamma)` is at most 1e-3.
    pub fn standard(mdp: &TabularMdp, rounds: usize, episodes_per_round: usize, seed: u64) -> Self {
        OnlineConfig {
            rounds,
            episodes_per_round,
            horizon: mdp.horizon_for_tail(1e-3),
            eta: EtaChoice::Auto,
            estimator: Estimator::Plugin,
            delta: 0.05,
            seed,
            smoothing_floor: 1e-6,
            solver_tol: 1e-8,
            solver_max_iters: 200_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::invalid("need at least one round"));
        }
        if self.episodes_per_round == 0 {
            return Err(Error::invalid("need at least one episode per round"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        if !(self.smoothing_floor > 0.0 && self.smoothing_floor <= 1.0) {
            return Err(Error::invalid(format!(
                "smoothing floor must lie in (0,1], got {}",
                self.smoothing_floor
            )));
        }
        if let EtaChoice::Fixed(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::invalid(format!("eta must be positive, got {eta}")));
            }
        }
        if let Estimator::Kde { bandwidth } = self.estimator {
            if !(bandwidth > 0.0 && bandwidth.is_finite()) {
                return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
            }
        }
        if !(self.solver_tol > 0.0) {
            return Err(Error::invalid("solver tolerance must be positive"));
        }
        Ok(())
    }
}

/// A pre-collected dataset and the reference distribution it induces.
#[derive(Debug, Clone)]
pub struct PassiveMemory {
    transitions: Vec<(usize, usize, f64, usize)>,
    ref_dist: OccupancyTable,
    coverage_ok: bool,
}

impl PassiveMemory {
    /// Wraps a distribution given directly (an exact occupancy, a CSV table)
    /// after floor-smoothing it.
    pub fn from_table(table: OccupancyTable, smoothing_floor: f64) -> Result<Self> {
        let ref_dist = table.mix_uniform(smoothing_floor)?;
        let coverage_ok = ref_dist.values().iter().all(|&v| v > 0.0);
        Ok(PassiveMemory { transitions: Vec::new(), ref_dist, coverage_ok })
    }

    pub fn ref_dist(&self) -> &OccupancyTable {
        &self.ref_dist
    }

    /// True when the reference is strictly positive on every cell, which
    /// guarantees coverage of any optimal support.
    pub fn coverage_ok(&self) -> bool {
        self.coverage_ok
    }

    /// The raw `(s, a, r, s')` records behind the reference (empty when the
    /// memory was given as a distribution rather than data).
    pub fn transitions(&self) -> &[(usize, usize, f64, usize)] {
        &self.transitions
    }
}

/// Builds a passive memory from tabular episodes: estimate the occupancy by
/// discounted visit frequencies, then mix with uniform at weight
/// `smoothing_floor` (0 keeps the raw estimate, 1 forgets the data).
pub fn build_memory(
    episodes: &[TabularEpisode],
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    smoothing_floor: f64,
) -> Result<PassiveMemory> {
    if episodes.is_empty() {
        return Err(Error::invalid("no episodes to build a memory from"));
    }
    let horizon = episodes[0].horizon;
    let raw = plugin_estimate(episodes, n_states, n_actions, gamma, horizon)?;
    let ref_dist = raw.mix_uniform(smoothing_floor)?;
    let transitions = episodes
        .iter()
        .flat_map(|ep| ep.steps.iter().map(|st| (st.state, st.action, st.reward, st.next_state)))
        .collect();
    let coverage_ok = ref_dist.values().iter().all(|&v| v > 0.0);
    Ok(PassiveMemory { transitions, ref_dist, coverage_ok })
}

/// Regret trace of one online run.
#[derive(Debug, Clone)]
pub struct RegretRecord {
    /// Exact per-round suboptimality `V*(mu0) - V^{pi_t}(mu0)`.
    pub per_round_gap: Vec<f64>,
    /// Running sums of the gaps.
    pub cumulative: Vec<f64>,
    /// The deployed policy of each round.
    pub policies: Vec<Policy>,
    /// Solver iterations spent per round.
    pub solver_iters: Vec<usize>,
    /// Resolved step scale used by every round.
    pub eta: f64,
    /// Sup-norm radius of the per-round estimates at the configured
    /// confidence level.
    pub estimator_error_bound: f64,
    /// The exact optimal value the gaps are measured against.
    pub optimal_value: f64,
}

impl RegretRecord {
    pub fn final_cumulative(&self) -> f64 {
        *self.cumulative.last().expect("at least one round")
    }

    pub fn csv_header() -> &'static str {
        "round,gap,cumulative,eta,solver_iters,estimator_error_bound"
    }

    /// One row per round; `eta` and the error bound repeat on every row so
    /// each line is self-contained.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(RegretRecord::csv_header());
        out.push('\n');
        for (i, (gap, cum)) in self.per_round_gap.iter().zip(&self.cumulative).enumerate() {
            let _ = writeln!(
                out,
                "{},{gap},{cum},{},{},{}",
                i + 1,
                self.eta,
                self.solver_iters[i],
                self.estimator_error_bound
            );
        }
        out
    }
}

/// Resolved step scale from the mirror-descent tuning rule:
/// `sqrt(initial_radius / (T * cells * (epsilon + tail)))`, floored at 1e-6.
fn eta_from_radius(
    initial_radius: f64,
    rounds: usize,
    cells: usize,
    epsilon: f64,
    gamma: f64,
    horizon: usize,
) -> f64 {
    let tail = gamma.powi(horizon as i32 + 1) / (1.0 - gamma);
    let denom = rounds as f64 * cells as f64 * (epsilon + tail);
    (initial_radius / denom).sqrt().max(1e-6)
}

/// Step scale tuned for a tabular run: the initial radius is the exact
/// divergence from the optimal occupancy to the memory,
/// `eta = sqrt( D(d* || d^D) / (T * S * A * (epsilon + gamma^{H+1}/(1-gamma))) )`
/// with `epsilon` the plug-in error radius, floored at 1e-6.
pub fn auto_eta(mdp: &TabularMdp, memory: &PassiveMemory, config: &OnlineConfig) -> Result<f64> {
    let (opt, _) = optimal_policy(mdp, 1e-10)?;
    let d_star = exact_occupancy(mdp, &opt)?;
    let kl = kl_divergence(&d_star, memory.ref_dist())?;
    let epsilon = plugin_error_bound(config.episodes_per_round, mdp.n_cells(), config.delta)?;
    Ok(eta_from_radius(kl, config.rounds, mdp.n_cells(), epsilon, mdp.gamma(), config.horizon))
}

/// Predicted cumulative-regret ceiling for audit plots:
/// `sqrt(kl * S * A * (epsilon + gamma^H/(1-gamma)) * n * T)` with implied
/// constant one. Descriptive, not asserted as an absolute bound.
pub fn regret_upper_bound(
    mdp: &TabularMdp,
    config: &OnlineConfig,
    kl: f64,
    epsilon: f64,
) -> Result<f64> {
    if kl < 0.0 || epsilon < 0.0 {
        return Err(Error::invalid("divergence and error terms must be nonnegative"));
    }
    let tail = mdp.gamma().powi(config.horizon as i32) / (1.0 - mdp.gamma());
    Ok((kl
        * mdp.n_cells() as f64
        * (epsilon + tail)
        * config.episodes_per_round as f64
        * config.rounds as f64)
        .sqrt())
}

/// Runs the loop on a tabular model with exact regret scoring.
///
/// Round `t` (1-based): solve the dual against the previous reference
/// (round 1 uses the memory), deploy the extracted policy, roll out
/// `episodes_per_round` episodes seeded by `episode_seed(config.seed, t)`,
/// re-estimate, floor-smooth, continue. Fully deterministic given the
/// config. A solver failure aborts with the round index; per-round gaps are
/// scored against the exact optimal value.
pub fn run_online(
    mdp: &TabularMdp,
    memory: &PassiveMemory,
    config: &OnlineConfig,
) -> Result<RegretRecord> {
    config.validate()?;
    if memory.ref_dist().n_states() != mdp.n_states()
        || memory.ref_dist().n_actions() != mdp.n_actions()
    {
        return Err(Error::invalid("memory shape does not match the model"));
    }
    if config.estimator != Estimator::Plugin {
        return Err(Error::invalid(
            "tabular runs re-estimate with the plug-in estimator; kernel estimation needs a \
             continuous state space",
        ));
    }

    let eta = match config.eta {
        EtaChoice::Fixed(value) => value,
        EtaChoice::Auto => auto_eta(mdp, memory, config)?,
    };
    let (_, optimal_value) = optimal_policy(mdp, 1e-10)?;
    let estimator_error_bound =
        plugin_error_bound(config.episodes_per_round, mdp.n_cells(), config.delta)?;

    let mut ref_dist = memory.ref_dist().clone();
    let mut record = RegretRecord {
        per_round_gap: Vec::with_capacity(config.rounds),
        cumulative: Vec::with_capacity(config.rounds),
        policies: Vec::with_capacity(config.rounds),
        solver_iters: Vec::with_capacity(config.rounds),
        eta,
        estimator_error_bound,
        optimal_value,
    };
    let mut cumulative = 0.0;

    for round in 1..=config.rounds {
        let in_round = |e: Error| Error::Round { round, source: Box::new(e) };
        let report = solve_dual(&ref_dist, mdp, eta, config.solver_tol, config.solver_max_iters)
            .map_err(in_round)?;
        if !report.converged {
            return Err(in_round(Error::NonConvergence {
                max_iters: config.solver_max_iters,
                grad_inf_norm: report.grad_inf_norm,
            }));
        }
        let d_tilde = extract_occupancy(&report.v_star, &ref_dist, mdp, eta).map_err(in_round)?;
        let policy = extract_policy(&d_tilde);

        let gap = optimal_value - exact_value(mdp, &policy).map_err(in_round)?;
        cumulative += gap;

        let episodes = rollout(
            mdp,
            &policy,
            config.episodes_per_round,
            config.horizon,
            episode_seed(config.seed, round as u64),
        )
        .map_err(in_round)?;
        let estimate = plugin_estimate(
            &episodes,
            mdp.n_states(),
            mdp.n_actions(),
            mdp.gamma(),
            config.horizon,
        )
        .map_err(in_round)?;
        ref_dist = estimate.mix_uniform(config.smoothing_floor).map_err(in_round)?;

        record.per_round_gap.push(gap);
        record.cumulative.push(cumulative);
        record.policies.push(policy);
        record.solver_iters.push(report.iterations);
    }
    Ok(record)
}

/// Regret trace of a continuous-state run. Gaps are measured against a
/// caller-declared baseline value and carry rollout noise, so each comes
/// with a standard error.
#[derive(Debug, Clone)]
pub struct ContinuousRegretRecord {
    pub per_round_gap: Vec<f64>,
    pub gap_stderr: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub policies: Vec<BinnedPolicy>,
    pub solver_iters: Vec<usize>,
    pub eta: f64,
    pub estimator_error_bound: f64,
    pub baseline_value: f64,
}

impl ContinuousRegretRecord {
    pub fn csv_header() -> &'static str {
        "round,gap,gap_stderr,cumulative,eta,solver_iters,estimator_error_bound"
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(ContinuousRegretRecord::csv_header());
        out.push('\n');
        for i in 0..self.per_round_gap.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                i + 1,
                self.per_round_gap[i],
                self.gap_stderr[i],
                self.cumulative[i],
                self.eta,
                self.solver_iters[i],
                self.estimator_error_bound
            );
        }
        out
    }
}

/// Mean and standard error of the truncated discounted return of a binned
/// policy over seeded rollouts.
pub fn score_binned_policy(
    mdp: &ContinuousMdp,
    policy: &BinnedPolicy,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let act = |state: &[f64], u: f64| policy.act(state, u);
    let runs = rollout_continuous(mdp, &act, episodes, horizon, seed)?;
    let returns: Vec<f64> = runs.iter().map(|ep| discounted_return(ep, mdp.gamma())).collect();
    let mean = returns.iter().sum::<f64>() / returns.len() as f64;
    let var =
        returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / returns.len().max(2) as f64;
    Ok((mean, (var / returns.len() as f64).sqrt()))
}

/// Projects a kernel or binned-count estimate of continuous episodes onto
/// the planning grid as a normalized occupancy table.
fn estimate_on_grid(
    episodes: &[ContinuousEpisode],
    estimator: &Estimator,
    grid: &UniformGrid,
    mdp: &ContinuousMdp,
    horizon: usize,
) -> Result<OccupancyTable> {
    match *estimator {
        Estimator::Plugin => {
            let binned: Vec<TabularEpisode> = episodes
                .iter()
                .map(|ep| crate::mdp::Episode {
                    steps: ep
                        .steps
                        .iter()
                        .map(|st| crate::mdp::Step {
                            state: grid.cell_of(&st.state),
                            action: st.action,
                            reward: st.reward,
                            next_state: grid.cell_of(&st.next_state),
                        })
                        .collect(),
                    horizon: ep.horizon,
                    seed: ep.seed,
                })
                .collect();
            plugin_estimate(&binned, grid.n_cells(), mdp.n_actions(), mdp.gamma(), horizon)
        }
        Estimator::Kde { bandwidth } => {
            let kernel = kernels::epanechnikov(grid.dim()).with_bandwidth(bandwidth)?;
            let model =
                kde_estimate(episodes, &kernel, mdp.gamma(), horizon, grid.bounds(), mdp.n_actions())?;
            let volume = grid.cell_volume();
            let mut values = Vec::with_capacity(grid.n_cells() * mdp.n_actions());
            for cell in 0..grid.n_cells() {
                let center = grid.center(cell);
                for action in 0..mdp.n_actions() {
                    values.push(model.evaluate(&center, action) * volume);
                }
            }
            let total: f64 = values.iter().sum();
            if total <= 0.0 {
                return Err(Error::invalid("kernel estimate carries no mass on the grid"));
            }
            for v in &mut values {
                *v /= total;
            }
            OccupancyTable::from_values(grid.n_cells(), mdp.n_actions(), values, true)
        }
    }
}

/// Continuous-state variant of the loop: the model is discretized once onto
/// a uniform grid (fixed seed, 64 transition samples per cell), planning
/// happens on the grid, and deployed policies act through their cells.
/// Per-round values are scored by `scoring_episodes` truncated rollouts
/// against `baseline_value`, which the caller declares (typically the score
/// of a trusted reference policy under the same rollout scheme).
#[allow(clippy::too_many_arguments)]
pub fn run_online_continuous(
    mdp: &ContinuousMdp,
    memory_episodes: &[ContinuousEpisode],
    config: &OnlineConfig,
    grid_resolution: usize,
    scoring_episodes: usize,
    baseline_value: f64,
) -> Result<ContinuousRegretRecord> {
    config.validate()?;
    if memory_episodes.is_empty() {
        return Err(Error::invalid("no memory episodes"));
    }
    if scoring_episodes == 0 {
        return Err(Error::invalid("need at least one scoring episode"));
    }
    let (tabular, grid) = discretize(mdp, grid_resolution, 64, config.seed)?;
    let cells = tabular.n_cells();

    let memory_horizon = memory_episodes[0].horizon;
    let memory_raw = estimate_on_grid(memory_episodes, &config.estimator, &grid, mdp, memory_horizon)?;
    let mut ref_dist = memory_raw.mix_uniform(config.smoothing_floor)?;

    let estimator_error_bound = match config.estimator {
        Estimator::Plugin => {
            plugin_error_bound(config.episodes_per_round, cells, config.delta)?
        }
        Estimator::Kde { bandwidth } => {
            let kernel = kernels::epanechnikov(grid.dim())
                .with_bandwidth(bandwidth)?
                .with_holder_const(mdp.smoothness().holder_const)?;
            kde_l1_bound(
                &kernel,
                mdp.state_volume(),
                mdp.action_measure(),
                config.episodes_per_round,
                config.delta,
            )?
        }
    };
    let eta = match config.eta {
        EtaChoice::Fixed(value) => value,
        // No exact optimum to measure the initial radius against; use the
        // worst-case divergence-to-uniform scale ln(cells).
        EtaChoice::Auto => eta_from_radius(
            (cells as f64).ln().max(1e-6),
            config.rounds,
            cells,
            estimator_error_bound,
            mdp.gamma(),
            config.horizon,
        ),
    };

    let mut record = ContinuousRegretRecord {
        per_round_gap: Vec::with_capacity(config.rounds),
        gap_stderr: Vec::with_capacity(config.rounds),
        cumulative: Vec::with_capacity(config.rounds),
        policies: Vec::with_capacity(config.rounds),
        solver_iters: Vec::with_capacity(config.rounds),
        eta,
        estimator_error_bound,
        baseline_value,
    };
    let mut cumulative = 0.0;

    for round in 1..=config.rounds {
        let in_round = |e: Error| Error::Round { round, source: Box::new(e) };
        let report = solve_dual(&ref_dist, &tabular, eta, config.solver_tol, config.solver_max_iters)
            .map_err(in_round)?;
        if !report.converged {
            return Err(in_round(Error::NonConvergence {
                max_iters: config.solver_max_iters,
                grad_inf_norm: report.grad_inf_norm,
            }));
        }
        let d_tilde =
            extract_occupancy(&report.v_star, &ref_dist, &tabular, eta).map_err(in_round)?;
        let policy = BinnedPolicy::new(grid.clone(), extract_policy(&d_tilde)).map_err(in_round)?;

        // Even indices drive training rollouts, odd ones scoring, so the two
        // streams never share an episode seed.
        let train_seed = episode_seed(config.seed, 2 * round as u64);
        let score_seed = episode_seed(config.seed, 2 * round as u64 + 1);

        let (score, stderr) =
            score_binned_policy(mdp, &policy, scoring_episodes, config.horizon, score_seed)
                .map_err(in_round)?;
        let gap = baseline_value - score;
        cumulative += gap;

        let act = |state: &[f64], u: f64| policy.act(state, u);
        let episodes =
            rollout_continuous(mdp, &act, config.episodes_per_round, config.horizon, train_seed)
                .map_err(in_round)?;
        let estimate = estimate_on_grid(&episodes, &config.estimator, &grid, mdp, config.horizon)
            .map_err(in_round)?;
        ref_dist = estimate.mix_uniform(config.smoothing_floor).map_err(in_round)?;

        record.per_round_gap.push(gap);
        record.gap_stderr.push(stderr);
        record.cumulative.push(cumulative);
        record.policies.push(policy);
        record.solver_iters.push(report.iterations);
    }
    Ok(record)
}
