//! Hard instance pairs behind the regret lower bound.
//!
//! Two models that differ only in the reward at one cell are
//! indistinguishable until the learner has spent enough visits on that cell,
//! and visiting it is costly on one of the two. The tooling here builds such
//! pairs, computes the information a run of episodes carries about which
//! model it faced (exactly, by enumerating histories, and via the
//! occupancy-weighted per-cell divergence), and scores learners on both
//! models to audit the resulting regret floor.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::mdp::{episode_seed, Policy, RewardLaw, TabularMdp};
use crate::oracle::{exact_value, optimal_policy};

/// How the differing cell of a pair was selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellChoice {
    /// Fixed by the caller.
    Static,
    /// Chosen as the cell the audited learner's policies visit least.
    LeastVisited,
}

/// Two models that agree everywhere except the reward at `adversarial_cell`.
#[derive(Debug, Clone)]
pub struct HardPair {
    pub m: TabularMdp,
    pub m_prime: TabularMdp,
    /// The cell whose elevated reward both models share.
    pub special_cell: (usize, usize),
    /// The cell where only `m_prime` pays extra.
    pub adversarial_cell: (usize, usize),
    pub delta: f64,
    pub cell_choice: CellChoice,
}

/// Builds the standard hard pair: uniform transitions and initial
/// distribution (so no policy can steer state visits), Bernoulli rewards at
/// 1/2 except `special_cell` at `1/2 + delta` in both models, and
/// `adversarial_cell` raised to `1/2 + 2*delta` in the second model only.
/// `delta` may be zero (the pair degenerates to two copies of one model) and
/// at most 1/4 so every success probability stays in [0, 1].
pub fn make_hard_pair(
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    delta: f64,
    adversarial_cell: (usize, usize),
) -> Result<HardPair> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::invalid("need at least one state and one action"));
    }
    if n_states * n_actions < 2 {
        return Err(Error::invalid("a hard pair needs at least two cells"));
    }
    if !(0.0..=0.25).contains(&delta) {
        return Err(Error::invalid(format!("delta must lie in [0, 1/4], got {delta}")));
    }
    let special_cell = (0, 0);
    if adversarial_cell == special_cell {
        return Err(Error::invalid(
            "the adversarial cell must differ from the special cell (0,0)",
        ));
    }
    if adversarial_cell.0 >= n_states || adversarial_cell.1 >= n_actions {
        return Err(Error::invalid("adversarial cell out of range"));
    }

    let uniform_row = vec![1.0 / n_states as f64; n_states];
    let transitions: Vec<f64> =
        uniform_row.iter().copied().cycle().take(n_states * n_states * n_actions).collect();
    let initial = uniform_row.clone();

    let mut rewards = vec![RewardLaw::Bernoulli(0.5); n_states * n_actions];
    rewards[special_cell.0 * n_actions + special_cell.1] = RewardLaw::Bernoulli(0.5 + delta);
    let m = TabularMdp::new(n_states, n_actions, transitions.clone(), rewards.clone(), gamma, initial.clone())?;

    rewards[adversarial_cell.0 * n_actions + adversarial_cell.1] =
        RewardLaw::Bernoulli(0.5 + 2.0 * delta);
    let m_prime = TabularMdp::new(n_states, n_actions, transitions, rewards, gamma, initial)?;

    Ok(HardPair { m, m_prime, special_cell, adversarial_cell, delta, cell_choice: CellChoice::Static })
}

/// The reward gap that balances exploration cost against distinguishability
/// for a given budget: `sqrt( S*A*(1-gamma) / (c*n*T) )`, clamped into
/// (0, 1/4] so the pair stays well formed.
pub fn optimal_delta(
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    c: f64,
    n: usize,
    rounds: usize,
) -> Result<f64> {
    if n_states * n_actions == 0 || n == 0 || rounds == 0 {
        return Err(Error::invalid("sizes and budgets must be positive"));
    }
    if !(c > 0.0) || !(0.0..1.0).contains(&gamma) {
        return Err(Error::invalid("need c > 0 and gamma in [0, 1)"));
    }
    let cells = (n_states * n_actions) as f64;
    let raw = (cells * (1.0 - gamma) / (c * n as f64 * rounds as f64)).sqrt();
    Ok(raw.min(0.25))
}

/// KL divergence between Bernoulli laws, in nats. Infinite when `p` puts
/// mass where `q` has none; the infinity is returned as a value rather than
/// an error so callers can detect and handle degenerate pairs.
pub fn bernoulli_kl(p: f64, q: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&q));
    let part = |num: f64, den: f64| {
        if num == 0.0 {
            0.0
        } else if den == 0.0 {
            f64::INFINITY
        } else {
            num * (num / den).ln()
        }
    };
    part(p, q) + part(1.0 - p, 1.0 - q)
}

/// Expected discounted visit counts of each cell over one truncated episode,
/// `sum_{h=0..H} gamma^h q_h(s,a)`, where `q_h` is the step-`h` state-action
/// law. Unnormalized: the table totals `(1-gamma^{H+1})/(1-gamma)`.
#[derive(Debug, Clone)]
pub struct VisitStats {
    counts: Vec<f64>,
    n_states: usize,
    n_actions: usize,
}

impl VisitStats {
    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.counts[state * self.n_actions + action]
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
}

/// Forward recursion for the expected discounted visit counts of `policy`
/// on `mdp` up to horizon `H` (inclusive).
pub fn expected_visits(mdp: &TabularMdp, policy: &Policy, horizon: usize) -> Result<VisitStats> {
    let (s_n, a_n) = (mdp.n_states(), mdp.n_actions());
    if policy.n_states() != s_n || policy.n_actions() != a_n {
        return Err(Error::invalid("policy shape does not match the model"));
    }
    let mut state_law = mdp.initial_dist().to_vec();
    let mut counts = vec![0.0; s_n * a_n];
    let mut discount = 1.0;
    for h in 0..=horizon {
        for s in 0..s_n {
            for a in 0..a_n {
                counts[s * a_n + a] += discount * state_law[s] * policy.prob(s, a);
            }
        }
        if h == horizon {
            break;
        }
        let mut next = vec![0.0; s_n];
        for s in 0..s_n {
            for a in 0..a_n {
                let mass = state_law[s] * policy.prob(s, a);
                if mass == 0.0 {
                    continue;
                }
                for (s2, p) in mdp.transition_row(s, a).iter().enumerate() {
                    next[s2] += mass * p;
                }
            }
        }
        state_law = next;
        discount *= mdp.gamma();
    }
    Ok(VisitStats { counts, n_states: s_n, n_actions: a_n })
}

fn reward_mean(mdp: &TabularMdp, s: usize, a: usize) -> f64 {
    mdp.mean_reward(s, a)
}

/// Exact KL divergence between the episode-history laws of a pair under one
/// policy, computed by enumerating every history of length up to `horizon`.
///
/// Episodes stop at a random time: after step `h < H` the episode continues
/// with probability `gamma`, so length `h` has probability
/// `(1-gamma)*gamma^h` and the full horizon keeps the remaining `gamma^H`.
/// Histories record states, actions, and binary rewards. The recursion
/// carries the running log-likelihood-ratio, which only reward factors at
/// cells where the two models differ can change. Work is bounded by
/// `(S*A*2)^(H+1)`; sizes beyond 1e7 are refused.
pub fn enumerate_history_kl(
    pair: &HardPair,
    policy: &Policy,
    horizon: usize,
) -> Result<f64> {
    let (s_n, a_n) = (pair.m.n_states(), pair.m.n_actions());
    let branching = (s_n as u128) * (a_n as u128) * 2;
    let size = branching
        .checked_pow(horizon as u32 + 1)
        .ok_or(Error::EnumerationTooLarge { size: u128::MAX, limit: 10_000_000 })?;
    if size > 10_000_000 {
        return Err(Error::EnumerationTooLarge { size, limit: 10_000_000 });
    }

    // Depth-first over (state, action, reward-bit) sequences, weighting each
    // prefix by the probability the episode ends exactly there.
    struct Frame<'p> {
        pair: &'p HardPair,
        policy: &'p Policy,
        horizon: usize,
        kl: f64,
    }
    fn descend(f: &mut Frame, state_law_entry: (usize, f64), h: usize, prob_m: f64, log_ratio: f64) {
        let (state, state_prob) = state_law_entry;
        let prob_here = prob_m * state_prob;
        if prob_here == 0.0 {
            return;
        }
        let gamma = f.pair.m.gamma();
        for action in 0..f.pair.m.n_actions() {
            let p_act = f.policy.prob(state, action);
            if p_act == 0.0 {
                continue;
            }
            let mean_m = reward_mean(&f.pair.m, state, action);
            let mean_mp = reward_mean(&f.pair.m_prime, state, action);
            for reward_bit in 0..2u8 {
                let (pm, pmp) = if reward_bit == 1 {
                    (mean_m, mean_mp)
                } else {
                    (1.0 - mean_m, 1.0 - mean_mp)
                };
                if pm == 0.0 {
                    continue;
                }
                let prob = prob_here * p_act * pm;
                let ratio = log_ratio + (pm / pmp).ln();
                // The episode ends after this step with probability 1-gamma
                // (or surely at the horizon); that weight times the history
                // probability feeds the divergence sum.
                let stop_weight = if h == f.horizon { 1.0 } else { 1.0 - gamma };
                f.kl += prob * stop_weight * ratio;
                if h < f.horizon {
                    for s2 in 0..f.pair.m.n_states() {
                        let p2 = f.pair.m.transition_row(state, action)[s2];
                        if p2 > 0.0 {
                            descend(f, (s2, p2), h + 1, prob * gamma, ratio);
                        }
                    }
                }
            }
        }
    }

    let mut frame = Frame { pair, policy, horizon, kl: 0.0 };
    let initial = pair.m.initial_dist().to_vec();
    for (s, p) in initial.iter().enumerate() {
        descend(&mut frame, (s, *p), 0, 1.0, 0.0);
    }
    Ok(frame.kl)
}

/// The same divergence through the visit-count decomposition:
/// `sum_{s,a} E[T_{s,a}] * KL(reward_m(s,a) || reward_m'(s,a))`. Equal to
/// the enumerated value because the pair differs only in reward laws.
pub fn occupancy_weighted_kl(pair: &HardPair, policy: &Policy, horizon: usize) -> Result<f64> {
    let visits = expected_visits(&pair.m, policy, horizon)?;
    let mut total = 0.0;
    for s in 0..pair.m.n_states() {
        for a in 0..pair.m.n_actions() {
            let cell_kl =
                bernoulli_kl(reward_mean(&pair.m, s, a), reward_mean(&pair.m_prime, s, a));
            if cell_kl > 0.0 {
                total += visits.get(s, a) * cell_kl;
            }
        }
    }
    Ok(total)
}

/// The cell (other than the special one) that the given policies visit
/// least in expectation — the hardest place to hide extra reward from this
/// learner. Ties break toward the lowest flat index.
pub fn adaptive_adversarial_cell(
    mdp: &TabularMdp,
    policies: &[Policy],
    horizon: usize,
) -> Result<(usize, usize)> {
    if policies.is_empty() {
        return Err(Error::invalid("need at least one policy"));
    }
    let mut totals = vec![0.0; mdp.n_cells()];
    for policy in policies {
        let visits = expected_visits(mdp, policy, horizon)?;
        for (t, v) in totals.iter_mut().zip(visits.counts()) {
            *t += v;
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for (idx, &total) in totals.iter().enumerate() {
        let cell = (idx / mdp.n_actions(), idx % mdp.n_actions());
        if cell == (0, 0) {
            continue;
        }
        if best.map_or(true, |(_, b)| total < b) {
            best = Some((idx, total));
        }
    }
    let (idx, _) = best.expect("at least two cells");
    Ok((idx / mdp.n_actions(), idx % mdp.n_actions()))
}

/// Outcome of auditing one learner on both halves of a hard pair.
#[derive(Debug, Clone, Copy)]
pub struct PairAudit {
    /// Cumulative regret on `m` (scaled by episodes per round).
    pub regret_m: f64,
    /// Cumulative regret on `m_prime`.
    pub regret_m_prime: f64,
    /// The floor the pair imposes on the sum of the two regrets.
    pub lower_bound_value: f64,
}

/// Regret floor `n*T*delta/(2*(1-gamma)) * (1 - sqrt(n*T*c*delta^2 / ((1-gamma)*S*A)))`
/// for reward gap `delta`, per-round episode budget `n`, `T` rounds, and
/// divergence-rate constant `c` (8 covers Bernoulli pairs at gap `2*delta`
/// near 1/2).
pub fn pair_regret_floor(
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    delta: f64,
    c: f64,
    n: usize,
    rounds: usize,
) -> f64 {
    let cells = (n_states * n_actions) as f64;
    let budget = (n * rounds) as f64;
    let lead = budget * delta / (2.0 * (1.0 - gamma));
    lead * (1.0 - (budget * c * delta * delta / ((1.0 - gamma) * cells)).sqrt())
}

/// Runs a learner on both models of a pair and reports the two cumulative
/// regrets next to the pair's regret floor.
///
/// The learner maps a model and a master seed to the sequence of policies it
/// deployed, one per round; regret is `n * sum_t (V* - V^{pi_t})` with exact
/// values. The two runs get independently derived seeds.
pub fn evaluate_learner_on_pair<L>(
    learner: L,
    pair: &HardPair,
    n: usize,
    rounds: usize,
    seed: u64,
) -> Result<PairAudit>
where
    L: Fn(&TabularMdp, u64) -> Result<Vec<Policy>>,
{
    let regret_on = |mdp: &TabularMdp, run_seed: u64| -> Result<f64> {
        let policies = learner(mdp, run_seed)?;
        if policies.len() != rounds {
            return Err(Error::invalid(format!(
                "learner deployed {} policies for {} rounds",
                policies.len(),
                rounds
            )));
        }
        let (_, v_star) = optimal_policy(mdp, 1e-10)?;
        let mut total = 0.0;
        for policy in &policies {
            total += v_star - exact_value(mdp, policy)?;
        }
        Ok(n as f64 * total)
    };
    let regret_m = regret_on(&pair.m, episode_seed(seed, 1))?;
    let regret_m_prime = regret_on(&pair.m_prime, episode_seed(seed, 2))?;
    let lower_bound_value = pair_regret_floor(
        pair.m.n_states(),
        pair.m.n_actions(),
        pair.m.gamma(),
        pair.delta,
        8.0,
        n,
        rounds,
    );
    Ok(PairAudit { regret_m, regret_m_prime, lower_bound_value })
}

/// CSV rows for a batch of pair audits:
/// `seed,R_m,R_m_prime,pair_sum,lower_bound_value,delta`.
pub fn audits_to_csv(rows: &[(u64, PairAudit, f64)]) -> String {
    let mut out = String::from("seed,R_m,R_m_prime,pair_sum,lower_bound_value,delta\n");
    for (seed, audit, delta) in rows {
        let _ = writeln!(
            out,
            "{seed},{},{},{},{},{delta}",
            audit.regret_m,
            audit.regret_m_prime,
            audit.regret_m + audit.regret_m_prime,
            audit.lower_bound_value
        );
    }
    out
}
