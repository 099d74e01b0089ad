//! Exact quantities for tabular models: discounted occupancy measures,
//! policy values, optimal policies, and the memory-quality performance bound.
//!
//! Occupancy tables are kept in the normalized convention: `d(s,a)` sums to
//! one over all cells, and a policy's value satisfies
//! `V(mu0) = E_d[mean reward] / (1 - gamma)`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mdp::{Policy, TabularMdp};

/// Distribution (or general nonnegative table) over state-action cells.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
    normalized: bool,
}

impl OccupancyTable {
    pub fn from_values(
        n_states: usize,
        n_actions: usize,
        values: Vec<f64>,
        normalized: bool,
    ) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::invalid(format!(
                "occupancy table has {} entries, expected {}",
                values.len(),
                n_states * n_actions
            )));
        }
        if values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::invalid("occupancy entries must be finite and nonnegative"));
        }
        if normalized {
            let sum: f64 = values.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("normalized table sums to {sum}")));
            }
        }
        Ok(OccupancyTable { n_states, n_actions, values, normalized })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let cells = n_states * n_actions;
        OccupancyTable {
            n_states,
            n_actions,
            values: vec![1.0 / cells as f64; cells],
            normalized: true,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_cells(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.n_actions + action]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Mass per state: `sum_a d(s, a)`.
    pub fn state_marginal(&self) -> Vec<f64> {
        let mut marginal = vec![0.0; self.n_states];
        for state in 0..self.n_states {
            marginal[state] = self.action_row(state).iter().sum();
        }
        marginal
    }

    pub fn action_row(&self, state: usize) -> &[f64] {
        &self.values[state * self.n_actions..(state + 1) * self.n_actions]
    }

    /// Blend with the uniform table: `(1 - floor) * self + floor * uniform`.
    /// `floor = 0` is the identity; `floor = 1` is exactly uniform.
    pub fn mix_uniform(&self, floor: f64) -> Result<OccupancyTable> {
        if !(0.0..=1.0).contains(&floor) {
            return Err(Error::invalid(format!("smoothing floor must lie in [0,1], got {floor}")));
        }
        let cells = self.values.len() as f64;
        let values = self.values.iter().map(|&v| (1.0 - floor) * v + floor / cells).collect();
        OccupancyTable::from_values(self.n_states, self.n_actions, values, self.normalized)
    }

    /// Largest violation of the stationarity (flow) constraint:
    /// `max_s | sum_a d(s,a) - (1-gamma) mu0(s) - gamma (pushforward d)(s) |`.
    pub fn flow_residual(&self, mdp: &TabularMdp) -> f64 {
        let marginal = self.state_marginal();
        let pushed = pushforward(self, mdp);
        let gamma = mdp.gamma();
        (0..self.n_states)
            .map(|s| {
                (marginal[s] - (1.0 - gamma) * mdp.initial_dist()[s] - gamma * pushed[s]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Conditional policy `d(s,a) / sum_a' d(s,a')`; states with negligible
    /// mass (< 1e-12) fall back to the uniform row.
    pub fn conditional_policy(&self) -> Policy {
        let mut probs = vec![0.0; self.values.len()];
        for state in 0..self.n_states {
            let row = self.action_row(state);
            let mass: f64 = row.iter().sum();
            let out = &mut probs[state * self.n_actions..(state + 1) * self.n_actions];
            if mass < 1e-12 {
                out.fill(1.0 / self.n_actions as f64);
            } else {
                for (o, &v) in out.iter_mut().zip(row) {
                    *o = v / mass;
                }
            }
        }
        Policy::new(self.n_states, self.n_actions, probs).expect("rows normalized by construction")
    }

    /// Serializes as `s,a,d` rows with full double precision.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("s,a,d\n");
        for state in 0..self.n_states {
            for action in 0..self.n_actions {
                let _ = writeln!(out, "{state},{action},{}", self.get(state, action));
            }
        }
        out
    }

    /// Reads the `s,a,d` format written by `to_csv_string`. Dimensions are
    /// inferred from the largest indices present; every cell must appear
    /// exactly once.
    pub fn from_csv_str(text: &str) -> Result<OccupancyTable> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || (idx == 0 && line.starts_with("s,")) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("expected 's,a,d', got '{line}'"),
                });
            }
            let parse = |field: &str, what: &str| -> Result<f64> {
                field.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: idx + 1,
                    msg: format!("bad {what} '{field}'"),
                })
            };
            let state = parse(fields[0], "state index")? as usize;
            let action = parse(fields[1], "action index")? as usize;
            let value = parse(fields[2], "density value")?;
            entries.push((state, action, value));
        }
        if entries.is_empty() {
            return Err(Error::invalid("occupancy csv has no data rows"));
        }
        let n_states = entries.iter().map(|e| e.0).max().unwrap() + 1;
        let n_actions = entries.iter().map(|e| e.1).max().unwrap() + 1;
        let mut values = vec![f64::NAN; n_states * n_actions];
        for (state, action, value) in entries {
            values[state * n_actions + action] = value;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("occupancy csv is missing cells"));
        }
        let sum: f64 = values.iter().sum();
        let normalized = (sum - 1.0).abs() <= 1e-9;
        OccupancyTable::from_values(n_states, n_actions, values, normalized)
    }
}

/// State distribution after pushing `d` through the transition kernel:
/// `(pushforward d)(s') = sum_{s,a} T(s'|s,a) d(s,a)`.
fn pushforward(d: &OccupancyTable, mdp: &TabularMdp) -> Vec<f64> {
    let mut out = vec![0.0; mdp.n_states()];
    for state in 0..mdp.n_states() {
        for action in 0..mdp.n_actions() {
            let mass = d.get(state, action);
            if mass == 0.0 {
                continue;
            }
            for (next, &p) in mdp.transition_row(state, action).iter().enumerate() {
                out[next] += p * mass;
            }
        }
    }
    out
}

/// Normalized discounted occupancy of a stationary policy, from the linear
/// stationarity system `(I - gamma P_pi^T) rho = (1 - gamma) mu0` solved by
/// LU decomposition, then `d(s,a) = rho(s) pi(a|s)`.
pub fn exact_occupancy(mdp: &TabularMdp, policy: &Policy) -> Result<OccupancyTable> {
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(Error::invalid("policy shape does not match the model"));
    }
    let n = mdp.n_states();
    let gamma = mdp.gamma();

    // system[(s', s)] = sum_a T(s'|s,a) pi(a|s)
    let mut system = DMatrix::<f64>::zeros(n, n);
    for state in 0..n {
        for action in 0..mdp.n_actions() {
            let weight = policy.prob(state, action);
            if weight == 0.0 {
                continue;
            }
            for (next, &p) in mdp.transition_row(state, action).iter().enumerate() {
                system[(next, state)] += weight * p;
            }
        }
    }
    let lhs = DMatrix::<f64>::identity(n, n) - system * gamma;
    let rhs = DVector::from_iterator(n, mdp.initial_dist().iter().map(|&p| (1.0 - gamma) * p));
    let rho = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::LinearSolve("stationarity system is singular".into()))?;

    let mut values = vec![0.0; n * mdp.n_actions()];
    for state in 0..n {
        for action in 0..mdp.n_actions() {
            values[state * mdp.n_actions() + action] = rho[state] * policy.prob(state, action);
        }
    }
    let table = OccupancyTable::from_values(n, mdp.n_actions(), values, true)?;
    let residual = table.flow_residual(mdp);
    if residual > 1e-10 {
        return Err(Error::LinearSolve(format!("flow residual {residual} exceeds 1e-10")));
    }
    Ok(table)
}

/// Expected discounted return of a policy from the start distribution:
/// `E_d[mean reward] / (1 - gamma)` with `d` the exact occupancy.
pub fn exact_value(mdp: &TabularMdp, policy: &Policy) -> Result<f64> {
    let d = exact_occupancy(mdp, policy)?;
    Ok(expected_reward(&d, mdp) / (1.0 - mdp.gamma()))
}

/// Mean reward under an occupancy table: `sum_{s,a} d(s,a) rbar(s,a)`.
pub fn expected_reward(d: &OccupancyTable, mdp: &TabularMdp) -> f64 {
    let mut total = 0.0;
    for state in 0..mdp.n_states() {
        for action in 0..mdp.n_actions() {
            total += d.get(state, action) * mdp.mean_reward(state, action);
        }
    }
    total
}

/// Value iteration to span-seminorm tolerance, followed by greedy extraction
/// (ties go to the lowest action index). The reported value is the exact
/// value of the returned policy, so it inherits the oracle's precision.
pub fn optimal_policy(mdp: &TabularMdp, tol: f64) -> Result<(Policy, f64)> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let n = mdp.n_states();
    let gamma = mdp.gamma();
    // Span stopping rule scaled so the greedy policy is tol-optimal even for
    // discounts near one.
    let threshold = (tol * (1.0 - gamma) / gamma).min(tol);

    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    // Value iteration contracts at rate gamma; cap iterations generously.
    let max_sweeps = 10_000_000usize;
    let mut sweeps = 0;
    loop {
        for state in 0..n {
            let mut best = f64::NEG_INFINITY;
            for action in 0..mdp.n_actions() {
                let q = q_value(mdp, &v, state, action);
                if q > best {
                    best = q;
                }
            }
            next[state] = best;
        }
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        for state in 0..n {
            let delta = next[state] - v[state];
            hi = hi.max(delta);
            lo = lo.min(delta);
        }
        std::mem::swap(&mut v, &mut next);
        sweeps += 1;
        if hi - lo <= threshold || sweeps >= max_sweeps {
            break;
        }
    }

    let mut actions = vec![0usize; n];
    for state in 0..n {
        let mut best_action = 0;
        let mut best = f64::NEG_INFINITY;
        for action in 0..mdp.n_actions() {
            let q = q_value(mdp, &v, state, action);
            if q > best {
                best = q;
                best_action = action;
            }
        }
        actions[state] = best_action;
    }
    let greedy = Policy::deterministic(&actions, mdp.n_actions());
    let value = exact_value(mdp, &greedy)?;
    Ok((greedy, value))
}

fn q_value(mdp: &TabularMdp, v: &[f64], state: usize, action: usize) -> f64 {
    let future: f64 = mdp
        .transition_row(state, action)
        .iter()
        .zip(v)
        .map(|(&p, &vs)| p * vs)
        .sum();
    mdp.mean_reward(state, action) + mdp.gamma() * future
}

/// Exact finite-horizon occupancy: discount-weighted state-action marginals
/// over steps `0..=horizon`, normalized to sum to one. Computed by forward
/// recursion, independent of any sampling.
pub fn truncated_occupancy(mdp: &TabularMdp, policy: &Policy, horizon: usize) -> OccupancyTable {
    let n_states = mdp.n_states();
    let n_actions = mdp.n_actions();
    let gamma = mdp.gamma();
    let mut state_dist: Vec<f64> = mdp.initial_dist().to_vec();
    let mut acc = vec![0.0; n_states * n_actions];
    let mut weight = 1.0;
    for h in 0..=horizon {
        let mut next = vec![0.0; n_states];
        for state in 0..n_states {
            if state_dist[state] == 0.0 {
                continue;
            }
            for action in 0..n_actions {
                let mass = state_dist[state] * policy.prob(state, action);
                acc[state * n_actions + action] += weight * mass;
                if mass == 0.0 {
                    continue;
                }
                for (nxt, &p) in mdp.transition_row(state, action).iter().enumerate() {
                    next[nxt] += p * mass;
                }
            }
        }
        state_dist = next;
        weight *= gamma;
        let _ = h;
    }
    let norm = (1.0 - gamma) / (1.0 - gamma.powi(horizon as i32 + 1));
    for v in &mut acc {
        *v *= norm;
    }
    OccupancyTable::from_values(n_states, n_actions, acc, true)
        .expect("forward recursion yields a distribution")
}

/// KL divergence `sum d1 ln(d1/d2)` in nats, with `0 ln(0/x) = 0`. Cells
/// where `d1 > 0` but `d2 = 0` are a support violation.
pub fn kl_divergence(d1: &OccupancyTable, d2: &OccupancyTable) -> Result<f64> {
    if d1.n_states() != d2.n_states() || d1.n_actions() != d2.n_actions() {
        return Err(Error::invalid("occupancy tables have different shapes"));
    }
    let mut total = 0.0;
    for state in 0..d1.n_states() {
        for action in 0..d1.n_actions() {
            let p = d1.get(state, action);
            if p == 0.0 {
                continue;
            }
            let q = d2.get(state, action);
            if q == 0.0 {
                return Err(Error::SupportViolation { state, action });
            }
            total += p * (p / q).ln();
        }
    }
    Ok(total)
}

/// Outcome of auditing the memory-quality bound on one (model, memory) pair.
#[derive(Debug, Clone)]
pub struct PerfBoundReport {
    /// `max_{s,a} d_star(s,a) / d_mem(s,a)` over the optimal support.
    pub ratio_sup: f64,
    /// `1 / min_s (mu0(s) / d_mem state marginal (s))`.
    pub concentrability: f64,
    /// `sqrt(ln(ratio_sup) * (1 - gamma) * concentrability * S * A)`.
    pub bound: f64,
    /// `V* - V(policy extracted from the eta = 1 regularized solution)`.
    pub actual_gap: f64,
}

/// Audits the suboptimality bound for learning against a fixed reference
/// distribution: solves the regularized dual seeded with `d_mem`, scores the
/// extracted policy exactly, and reports gap vs. bound.
pub fn performance_bound(
    mdp: &TabularMdp,
    d_star: &OccupancyTable,
    d_mem: &OccupancyTable,
) -> Result<PerfBoundReport> {
    if d_star.n_states() != mdp.n_states() || d_star.n_actions() != mdp.n_actions() {
        return Err(Error::invalid("d_star shape does not match the model"));
    }
    if d_mem.n_states() != mdp.n_states() || d_mem.n_actions() != mdp.n_actions() {
        return Err(Error::invalid("d_mem shape does not match the model"));
    }

    let mut ratio_sup = 0.0f64;
    for state in 0..mdp.n_states() {
        for action in 0..mdp.n_actions() {
            let p = d_star.get(state, action);
            if p == 0.0 {
                continue;
            }
            let q = d_mem.get(state, action);
            if q == 0.0 {
                return Err(Error::SupportViolation { state, action });
            }
            ratio_sup = ratio_sup.max(p / q);
        }
    }

    let marginal = d_mem.state_marginal();
    let mut min_ratio = f64::INFINITY;
    for (state, (&mu, &m)) in mdp.initial_dist().iter().zip(&marginal).enumerate() {
        if m <= 0.0 {
            return Err(Error::ZeroStateMarginal { state });
        }
        min_ratio = min_ratio.min(mu / m);
    }
    let concentrability = 1.0 / min_ratio;

    let cells = mdp.n_cells() as f64;
    let bound = (ratio_sup.ln() * (1.0 - mdp.gamma()) * concentrability * cells).max(0.0).sqrt();

    let report = crate::solver::solve_dual(d_mem, mdp, 1.0, 1e-9, 200_000)?;
    if !report.converged {
        return Err(Error::NonConvergence {
            max_iters: 200_000,
            grad_inf_norm: report.grad_inf_norm,
        });
    }
    let d_tilde = crate::solver::extract_occupancy(&report.v_star, d_mem, mdp, 1.0)?;
    let policy = crate::solver::extract_policy(&d_tilde);
    let (_, v_opt) = optimal_policy(mdp, 1e-10)?;
    let actual_gap = v_opt - exact_value(mdp, &policy)?;

    Ok(PerfBoundReport { ratio_sup, concentrability, bound, actual_gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench;
    use crate::mdp::{self, Policy, RewardLaw, TabularMdp};

    fn single_state(reward: RewardLaw, gamma: f64) -> TabularMdp {
        TabularMdp::new(1, 1, vec![1.0], vec![reward], gamma, vec![1.0]).unwrap()
    }

    #[test]
    fn one_state_occupancy_is_a_point_mass() {
        let mdp = single_state(RewardLaw::Deterministic(1.0), 0.5);
        let d = exact_occupancy(&mdp, &Policy::uniform(1, 1)).unwrap();
        assert!((d.get(0, 0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cycle_occupancy_matches_geometric_series() {
        // Closed form: d(s0) = (1-g) sum g^{2k} = 2/3, d(s1) = 1/3 at g = 1/2.
        let d = exact_occupancy(&bench::two_state_cycle(), &Policy::uniform(2, 1)).unwrap();
        assert!((d.get(0, 0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((d.get(1, 0) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn occupancy_matches_monte_carlo_frequencies() {
        let mdp = bench::random_mdp(4, 3, 0.5, 5);
        let policy = bench::random_policy(4, 3, 6);
        let d = exact_occupancy(&mdp, &policy).unwrap();

        // Independent sampling oracle: discount-weighted visit frequencies.
        let horizon = mdp.horizon_for_tail(1e-4);
        let n = 100_000usize;
        let episodes = mdp::rollout(&mdp, &policy, n, horizon, 99).unwrap();
        let norm = (1.0 - mdp.gamma()) / (1.0 - mdp.gamma().powi(horizon as i32 + 1));
        let cells = mdp.n_cells();
        let mut sum = vec![0.0; cells];
        let mut sumsq = vec![0.0; cells];
        for ep in &episodes {
            let mut per_ep = vec![0.0; cells];
            let mut w = norm;
            for st in &ep.steps {
                per_ep[st.state * 3 + st.action] += w;
                w *= mdp.gamma();
            }
            for (i, &v) in per_ep.iter().enumerate() {
                sum[i] += v;
                sumsq[i] += v * v;
            }
        }
        for i in 0..cells {
            let mean = sum[i] / n as f64;
            let var = (sumsq[i] / n as f64 - mean * mean).max(0.0);
            let se = (var / n as f64).sqrt();
            let diff = (mean - d.values()[i]).abs();
            assert!(
                diff <= 3.0 * se + 1e-4,
                "cell {i}: exact {} vs mc {mean} (se {se})",
                d.values()[i]
            );
        }
    }

    #[test]
    fn flow_residual_is_tiny_for_many_random_models() {
        let mut worst = 0.0f64;
        for seed in 0..1000 {
            let n_states = 1 + (seed as usize % 6);
            let n_actions = 1 + ((seed as usize / 6) % 6);
            let gamma = 0.2 + 0.6 * ((seed % 7) as f64 / 7.0);
            let mdp = bench::random_mdp(n_states, n_actions, gamma, seed);
            let policy = bench::random_policy(n_states, n_actions, seed ^ 0xABCD);
            let d = exact_occupancy(&mdp, &policy).unwrap();
            worst = worst.max(d.flow_residual(&mdp));
            assert!((d.sum() - 1.0).abs() < 1e-10);
        }
        assert!(worst <= 1e-10, "worst residual {worst}");
    }

    #[test]
    fn value_examples() {
        let always_pays = single_state(RewardLaw::Deterministic(1.0), 0.5);
        assert!((exact_value(&always_pays, &Policy::uniform(1, 1)).unwrap() - 2.0).abs() < 1e-12);

        let never_pays = single_state(RewardLaw::Bernoulli(0.0), 0.9);
        assert!(exact_value(&never_pays, &Policy::uniform(1, 1)).unwrap().abs() < 1e-12);

        let cycle = bench::two_state_cycle();
        assert!((exact_value(&cycle, &Policy::uniform(2, 1)).unwrap() - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_return_is_within_the_tail_budget() {
        // E[return truncated at H] differs from the infinite-horizon value by
        // at most gamma^(H+1)/(1-gamma).
        for seed in 0..20 {
            let mdp = bench::random_mdp(3, 2, 0.6, seed);
            let policy = bench::random_policy(3, 2, seed + 100);
            let v = exact_value(&mdp, &policy).unwrap();
            let horizon = 10usize;
            let d_h = truncated_occupancy(&mdp, &policy, horizon);
            // Un-normalize to get the raw truncated return.
            let scale = (1.0 - mdp.gamma().powi(horizon as i32 + 1)) / (1.0 - mdp.gamma());
            let truncated_return = expected_reward(&d_h, &mdp) * scale;
            let tail = mdp.gamma().powi(horizon as i32 + 1) / (1.0 - mdp.gamma());
            assert!(
                (v - truncated_return).abs() <= tail + 1e-12,
                "seed {seed}: |{v} - {truncated_return}| > {tail}"
            );
        }
    }

    #[test]
    fn optimal_policy_trivial_cases() {
        let single = single_state(RewardLaw::Deterministic(0.3), 0.5);
        let (policy, value) = optimal_policy(&single, 1e-10).unwrap();
        assert_eq!(policy.action_probs(0), &[1.0]);
        assert!((value - 0.6).abs() < 1e-10);

        // Two actions in one state; the second strictly dominates.
        let mdp = TabularMdp::new(
            1,
            2,
            vec![1.0, 1.0],
            vec![RewardLaw::Bernoulli(0.2), RewardLaw::Bernoulli(1.0)],
            0.5,
            vec![1.0],
        )
        .unwrap();
        let (policy, value) = optimal_policy(&mdp, 1e-10).unwrap();
        assert_eq!(policy.action_probs(0), &[0.0, 1.0]);
        assert!((value - 2.0).abs() < 1e-10);
    }

    #[test]
    fn optimal_policy_beats_exhaustive_enumeration() {
        for seed in 0..25 {
            let mdp = bench::random_mdp(3, 3, 0.5 + 0.3 * ((seed % 3) as f64) / 3.0, seed * 13 + 1);
            let (_, v_opt) = optimal_policy(&mdp, 1e-9).unwrap();
            let mut best = f64::NEG_INFINITY;
            for a0 in 0..3 {
                for a1 in 0..3 {
                    for a2 in 0..3 {
                        let policy = Policy::deterministic(&[a0, a1, a2], 3);
                        best = best.max(exact_value(&mdp, &policy).unwrap());
                    }
                }
            }
            assert!((v_opt - best).abs() <= 1e-9, "seed {seed}: vi {v_opt} vs brute {best}");
        }
    }

    #[test]
    fn ties_break_to_the_lowest_action() {
        // Identical actions everywhere: every policy is optimal.
        let mdp = TabularMdp::new(
            2,
            2,
            vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5],
            vec![RewardLaw::Bernoulli(0.4); 4],
            0.5,
            vec![0.5, 0.5],
        )
        .unwrap();
        let (policy, _) = optimal_policy(&mdp, 1e-10).unwrap();
        assert_eq!(policy.action_probs(0), &[1.0, 0.0]);
        assert_eq!(policy.action_probs(1), &[1.0, 0.0]);
    }

    #[test]
    fn kl_divergence_examples() {
        let d = OccupancyTable::from_values(1, 2, vec![0.5, 0.5], true).unwrap();
        assert_eq!(kl_divergence(&d, &d).unwrap(), 0.0);

        let q = OccupancyTable::from_values(1, 2, vec![0.7, 0.3], true).unwrap();
        let kl = kl_divergence(&d, &q).unwrap();
        // Two-term oracle: 0.5 ln(5/7) + 0.5 ln(5/3).
        let expected = 0.5 * (0.5f64 / 0.7).ln() + 0.5 * (0.5f64 / 0.3).ln();
        assert!((kl - expected).abs() < 1e-15);
        assert!((kl - 0.0872).abs() < 1e-4);

        let gappy = OccupancyTable::from_values(1, 2, vec![1.0, 0.0], true).unwrap();
        let err = kl_divergence(&d, &gappy).unwrap_err();
        assert!(matches!(err, Error::SupportViolation { state: 0, action: 1 }));
    }

    #[test]
    fn kl_divergence_is_nonnegative() {
        for seed in 0..200 {
            let p = bench::random_policy(1, 5, seed);
            let q = bench::random_policy(1, 5, seed + 1000);
            let dp = OccupancyTable::from_values(1, 5, p.action_probs(0).to_vec(), true).unwrap();
            let dq = OccupancyTable::from_values(1, 5, q.action_probs(0).to_vec(), true).unwrap();
            assert!(kl_divergence(&dp, &dq).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn perfect_memory_gives_zero_bound_and_zero_gap() {
        let mdp = bench::bench_2x2();
        let (opt, _) = optimal_policy(&mdp, 1e-10).unwrap();
        let d_star = exact_occupancy(&mdp, &opt).unwrap();
        // Tiny floor keeps the reference strictly positive.
        let mem = d_star.mix_uniform(1e-9).unwrap();
        let report = performance_bound(&mdp, &d_star, &mem).unwrap();
        assert!(report.bound < 2e-3, "bound {}", report.bound);
        assert!(report.actual_gap.abs() < 1e-6, "gap {}", report.actual_gap);
    }

    #[test]
    fn uniform_memory_bound_dominates_the_gap() {
        let mdp = bench::bench_2x2();
        let (opt, _) = optimal_policy(&mdp, 1e-10).unwrap();
        let d_star = exact_occupancy(&mdp, &opt).unwrap();
        let mem = OccupancyTable::uniform(2, 2);
        let report = performance_bound(&mdp, &d_star, &mem).unwrap();
        assert!(report.actual_gap <= report.bound, "{report:?}");
        assert!(report.ratio_sup >= 1.0);
        assert!(report.concentrability >= 1.0);
    }

    #[test]
    fn memory_missing_an_optimal_cell_is_an_error() {
        let mdp = bench::bench_2x2();
        let (opt, _) = optimal_policy(&mdp, 1e-10).unwrap();
        let d_star = exact_occupancy(&mdp, &opt).unwrap();
        // Memory concentrated on the second action only.
        let mem =
            OccupancyTable::from_values(2, 2, vec![0.0, 0.5, 0.0, 0.5], true).unwrap();
        assert!(matches!(
            performance_bound(&mdp, &d_star, &mem),
            Err(Error::SupportViolation { .. })
        ));
    }

    #[test]
    fn csv_round_trip_preserves_every_bit() {
        let mdp = bench::random_mdp(3, 2, 0.5, 77);
        let policy = bench::random_policy(3, 2, 78);
        let d = exact_occupancy(&mdp, &policy).unwrap();
        let text = d.to_csv_string();
        let back = OccupancyTable::from_csv_str(&text).unwrap();
        assert_eq!(d.values(), back.values());
    }

    #[test]
    fn mix_uniform_endpoints() {
        let d = OccupancyTable::from_values(1, 2, vec![0.9, 0.1], true).unwrap();
        assert_eq!(d.mix_uniform(0.0).unwrap().values(), d.values());
        let flat = d.mix_uniform(1.0).unwrap();
        assert_eq!(flat.values(), &[0.5, 0.5]);
    }
}
