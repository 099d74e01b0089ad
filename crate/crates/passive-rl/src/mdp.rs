//! Markov decision process types, trajectory sampling, and the text format
//! for tabular models.
//!
//! All sampling is driven by per-episode seeds derived from a master seed
//! through a SplitMix64 hash, so episode `i` of a batch is the same whether
//! the batch is generated sequentially, in parallel, or one episode at a
//! time. Episodes run over steps `h = 0..=horizon` (horizon + 1 steps).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Tolerance for "this vector of probabilities sums to one" checks.
pub const PROB_SUM_TOL: f64 = 1e-9;

/// Reward distribution attached to a state-action cell. Supports are kept
/// inside [0,1] so mean rewards and sampled rewards share the same range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RewardLaw {
    /// Coin with success probability p paying 1 on success, 0 otherwise.
    Bernoulli(f64),
    /// Always pays the given amount.
    Deterministic(f64),
}

impl RewardLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            RewardLaw::Bernoulli(p) => p,
            RewardLaw::Deterministic(r) => r,
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            RewardLaw::Bernoulli(p) => {
                if rng.gen::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
            RewardLaw::Deterministic(r) => r,
        }
    }

    fn validate(&self, state: usize, action: usize) -> Result<()> {
        let value = self.mean();
        if !(0.0..=1.0).contains(&value) || !value.is_finite() {
            return Err(Error::RewardRange { state, action, value });
        }
        Ok(())
    }
}

/// Finite MDP with row-stochastic transitions, per-cell reward laws, a
/// discount in (0,1), and an initial state distribution.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// Transition table, indexed `(s * n_actions + a) * n_states + s'`.
    transition: Vec<f64>,
    /// Reward law per cell, indexed `s * n_actions + a`.
    reward: Vec<RewardLaw>,
    gamma: f64,
    initial_dist: Vec<f64>,
}

impl TabularMdp {
    /// Builds and validates a tabular model. `transition` and `reward` are
    /// row-major over `(s, a)`; each transition row must be a probability
    /// vector over next states.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<RewardLaw>,
        gamma: f64,
        initial_dist: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::invalid("state and action counts must be positive"));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::invalid(format!("gamma must lie in (0,1), got {gamma}")));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::invalid(format!(
                "transition table has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::invalid(format!(
                "reward table has {} entries, expected {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        if initial_dist.len() != n_states {
            return Err(Error::invalid(format!(
                "initial distribution has {} entries, expected {}",
                initial_dist.len(),
                n_states
            )));
        }
        let mdp = TabularMdp { n_states, n_actions, transition, reward, gamma, initial_dist };
        mdp.validate()?;
        Ok(mdp)
    }

    fn validate(&self) -> Result<()> {
        for state in 0..self.n_states {
            for action in 0..self.n_actions {
                let row = self.transition_row(state, action);
                if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                    return Err(Error::invalid(format!(
                        "negative or non-finite transition probability in row (s={state},a={action})"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > PROB_SUM_TOL {
                    return Err(Error::RowSum { state, action, sum });
                }
                self.reward[state * self.n_actions + action].validate(state, action)?;
            }
        }
        if self.initial_dist.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::invalid("negative entry in initial distribution"));
        }
        let sum: f64 = self.initial_dist.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InitialDistSum { sum });
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_cells(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn transition_row(&self, state: usize, action: usize) -> &[f64] {
        let base = (state * self.n_actions + action) * self.n_states;
        &self.transition[base..base + self.n_states]
    }

    pub fn reward_law(&self, state: usize, action: usize) -> RewardLaw {
        self.reward[state * self.n_actions + action]
    }

    pub fn mean_reward(&self, state: usize, action: usize) -> f64 {
        self.reward_law(state, action).mean()
    }

    /// Smallest horizon H with `gamma^(H+1) / (1 - gamma) <= tail`, i.e. the
    /// episode length at which the discarded discounted tail is negligible.
    pub fn horizon_for_tail(&self, tail: f64) -> usize {
        assert!(tail > 0.0, "tail budget must be positive");
        let mut horizon = 0usize;
        let mut pow = self.gamma; // gamma^(H+1) at H = 0
        while pow / (1.0 - self.gamma) > tail {
            horizon += 1;
            pow *= self.gamma;
        }
        horizon
    }
}

/// Stationary stochastic policy over a finite model: one probability row per
/// state.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::invalid(format!(
                "policy table has {} entries, expected {}",
                probs.len(),
                n_states * n_actions
            )));
        }
        for state in 0..n_states {
            let row = &probs[state * n_actions..(state + 1) * n_actions];
            if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                return Err(Error::invalid(format!("negative action probability at state {state}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                return Err(Error::invalid(format!(
                    "policy row for state {state} sums to {sum}"
                )));
            }
        }
        Ok(Policy { n_states, n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Policy {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// Point-mass policy; `actions[s]` is the action taken in state `s`.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Self {
        let n_states = actions.len();
        let mut probs = vec![0.0; n_states * n_actions];
        for (state, &action) in actions.iter().enumerate() {
            assert!(action < n_actions, "action index out of range");
            probs[state * n_actions + action] = 1.0;
        }
        Policy { n_states, n_actions, probs }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn action_probs(&self, state: usize) -> &[f64] {
        &self.probs[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[state * self.n_actions + action]
    }

    /// Convex blend: `weight` of `self`, `1 - weight` of `other`, row by row.
    pub fn mix(&self, other: &Policy, weight: f64) -> Result<Policy> {
        if self.n_states != other.n_states || self.n_actions != other.n_actions {
            return Err(Error::invalid("policy shapes differ"));
        }
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::invalid(format!("mix weight must lie in [0,1], got {weight}")));
        }
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(&a, &b)| weight * a + (1.0 - weight) * b)
            .collect();
        Policy::new(self.n_states, self.n_actions, probs)
    }
}

/// One transition record inside an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Step<S> {
    pub state: S,
    pub action: usize,
    pub reward: f64,
    pub next_state: S,
}

/// A finite trajectory of `horizon + 1` steps together with the seed that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode<S> {
    pub steps: Vec<Step<S>>,
    pub horizon: usize,
    pub seed: u64,
}

pub type TabularEpisode = Episode<usize>;
pub type ContinuousEpisode = Episode<Vec<f64>>;

/// SplitMix64-style hash of (master seed, episode index). Every episode gets
/// an independent RNG stream regardless of generation order.
pub fn episode_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Inverse-CDF draw from a probability row given a uniform variate.
pub(crate) fn sample_categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Samples one episode of `horizon + 1` steps from its own seed.
pub fn rollout_one(
    mdp: &TabularMdp,
    policy: &Policy,
    horizon: usize,
    seed: u64,
) -> TabularEpisode {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = sample_categorical(mdp.initial_dist(), rng.gen());
    let mut steps = Vec::with_capacity(horizon + 1);
    for _ in 0..=horizon {
        let action = sample_categorical(policy.action_probs(state), rng.gen());
        let reward = mdp.reward_law(state, action).sample(&mut rng);
        let next_state = sample_categorical(mdp.transition_row(state, action), rng.gen());
        steps.push(Step { state, action, reward, next_state });
        state = next_state;
    }
    Episode { steps, horizon, seed }
}

/// Samples `n` episodes. Episode `i` uses `episode_seed(seed, i)`, so the
/// batch is reproducible and order-independent.
pub fn rollout(
    mdp: &TabularMdp,
    policy: &Policy,
    n: usize,
    horizon: usize,
    seed: u64,
) -> Result<Vec<TabularEpisode>> {
    if n == 0 {
        return Err(Error::invalid("episode count must be at least 1"));
    }
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(Error::invalid("policy shape does not match the model"));
    }
    Ok((0..n)
        .map(|i| rollout_one(mdp, policy, horizon, episode_seed(seed, i as u64)))
        .collect())
}

/// Discounted sum of an episode's rewards: sum_h gamma^h r_h.
pub fn discounted_return<S>(episode: &Episode<S>, gamma: f64) -> f64 {
    debug_assert!(gamma > 0.0 && gamma < 1.0);
    let mut total = 0.0;
    let mut weight = 1.0;
    for step in &episode.steps {
        total += weight * step.reward;
        weight *= gamma;
    }
    total
}

// ---------------------------------------------------------------------------
// Text format for tabular models.
//
//   # comment
//   states N
//   actions M
//   gamma G
//   mu0 p0 ... p_{N-1}
//   trans s a q0 ... q_{N-1}
//   reward s a bernoulli p
//   reward s a det r
// ---------------------------------------------------------------------------

pub fn load_mdp(path: &Path) -> Result<TabularMdp> {
    parse_mdp(&fs::read_to_string(path)?)
}

pub fn parse_mdp(text: &str) -> Result<TabularMdp> {
    let mut n_states: Option<usize> = None;
    let mut n_actions: Option<usize> = None;
    let mut gamma: Option<f64> = None;
    let mut initial: Option<Vec<f64>> = None;
    let mut trans_rows: Vec<Option<Vec<f64>>> = Vec::new();
    let mut reward_cells: Vec<Option<RewardLaw>> = Vec::new();

    let parse_err = |line: usize, msg: String| Error::Parse { line, msg };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let keyword = parts.next().unwrap();
        let rest: Vec<&str> = parts.collect();
        match keyword {
            "states" | "actions" => {
                let value: usize = rest
                    .first()
                    .and_then(|t| t.parse().ok())
                    .filter(|&v| v > 0)
                    .ok_or_else(|| {
                        parse_err(line_no, format!("expected a positive count after '{keyword}'"))
                    })?;
                if keyword == "states" {
                    n_states = Some(value);
                } else {
                    n_actions = Some(value);
                }
                if let (Some(s), Some(a)) = (n_states, n_actions) {
                    trans_rows = vec![None; s * a];
                    reward_cells = vec![None; s * a];
                }
            }
            "gamma" => {
                let value: f64 = rest
                    .first()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| parse_err(line_no, "expected a number after 'gamma'".into()))?;
                gamma = Some(value);
            }
            "mu0" => {
                let s = n_states
                    .ok_or_else(|| parse_err(line_no, "'mu0' before 'states'".into()))?;
                let values = parse_floats(&rest)
                    .map_err(|msg| parse_err(line_no, msg))?;
                if values.len() != s {
                    return Err(parse_err(
                        line_no,
                        format!("'mu0' lists {} entries, expected {}", values.len(), s),
                    ));
                }
                initial = Some(values);
            }
            "trans" => {
                let (s, a) = dims(n_states, n_actions)
                    .ok_or_else(|| parse_err(line_no, "'trans' before 'states'/'actions'".into()))?;
                if rest.len() != 2 + s {
                    return Err(parse_err(
                        line_no,
                        format!("'trans' needs state, action, and {s} probabilities"),
                    ));
                }
                let (state, action) = parse_cell(&rest[0..2], s, a)
                    .map_err(|msg| parse_err(line_no, msg))?;
                let row = parse_floats(&rest[2..]).map_err(|msg| parse_err(line_no, msg))?;
                trans_rows[state * a + action] = Some(row);
            }
            "reward" => {
                let (s, a) = dims(n_states, n_actions)
                    .ok_or_else(|| parse_err(line_no, "'reward' before 'states'/'actions'".into()))?;
                if rest.len() != 4 {
                    return Err(parse_err(
                        line_no,
                        "'reward' needs state, action, kind, and a parameter".into(),
                    ));
                }
                let (state, action) = parse_cell(&rest[0..2], s, a)
                    .map_err(|msg| parse_err(line_no, msg))?;
                let value: f64 = rest[3]
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad reward parameter '{}'", rest[3])))?;
                let law = match rest[2] {
                    "bernoulli" => RewardLaw::Bernoulli(value),
                    "det" => RewardLaw::Deterministic(value),
                    other => {
                        return Err(parse_err(
                            line_no,
                            format!("unknown reward kind '{other}' (expected 'bernoulli' or 'det')"),
                        ))
                    }
                };
                reward_cells[state * a + action] = Some(law);
            }
            other => {
                return Err(parse_err(line_no, format!("unknown directive '{other}'")));
            }
        }
    }

    let n_states = n_states.ok_or_else(|| Error::invalid("missing 'states' line"))?;
    let n_actions = n_actions.ok_or_else(|| Error::invalid("missing 'actions' line"))?;
    let gamma = gamma.ok_or_else(|| Error::invalid("missing 'gamma' line"))?;
    let initial = initial.ok_or_else(|| Error::invalid("missing 'mu0' line"))?;

    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    let mut reward = Vec::with_capacity(n_states * n_actions);
    for state in 0..n_states {
        for action in 0..n_actions {
            let row = trans_rows[state * n_actions + action].take().ok_or_else(|| {
                Error::invalid(format!("missing 'trans' row for (s={state},a={action})"))
            })?;
            transition.extend_from_slice(&row);
            let law = reward_cells[state * n_actions + action].ok_or_else(|| {
                Error::invalid(format!("missing 'reward' entry for (s={state},a={action})"))
            })?;
            reward.push(law);
        }
    }

    TabularMdp::new(n_states, n_actions, transition, reward, gamma, initial)
}

fn dims(n_states: Option<usize>, n_actions: Option<usize>) -> Option<(usize, usize)> {
    Some((n_states?, n_actions?))
}

fn parse_floats(tokens: &[&str]) -> std::result::Result<Vec<f64>, String> {
    tokens
        .iter()
        .map(|t| t.parse::<f64>().map_err(|_| format!("bad number '{t}'")))
        .collect()
}

fn parse_cell(tokens: &[&str], n_states: usize, n_actions: usize) -> std::result::Result<(usize, usize), String> {
    let state: usize = tokens[0].parse().map_err(|_| format!("bad state index '{}'", tokens[0]))?;
    let action: usize = tokens[1].parse().map_err(|_| format!("bad action index '{}'", tokens[1]))?;
    if state >= n_states {
        return Err(format!("state index {state} out of range (states {n_states})"));
    }
    if action >= n_actions {
        return Err(format!("action index {action} out of range (actions {n_actions})"));
    }
    Ok((state, action))
}

/// Renders a tabular model in the same text format `parse_mdp` reads.
pub fn format_mdp(mdp: &TabularMdp) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "states {}", mdp.n_states());
    let _ = writeln!(out, "actions {}", mdp.n_actions());
    let _ = writeln!(out, "gamma {}", mdp.gamma());
    let mu0: Vec<String> = mdp.initial_dist().iter().map(|p| p.to_string()).collect();
    let _ = writeln!(out, "mu0 {}", mu0.join(" "));
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let row: Vec<String> = mdp.transition_row(s, a).iter().map(|p| p.to_string()).collect();
            let _ = writeln!(out, "trans {s} {a} {}", row.join(" "));
        }
    }
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            match mdp.reward_law(s, a) {
                RewardLaw::Bernoulli(p) => {
                    let _ = writeln!(out, "reward {s} {a} bernoulli {p}");
                }
                RewardLaw::Deterministic(r) => {
                    let _ = writeln!(out, "reward {s} {a} det {r}");
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Continuous-state models: a compact box of states, finitely many actions,
// and sampler/evaluator closures supplied by the caller.
// ---------------------------------------------------------------------------

pub type TransitionSampler = Arc<dyn Fn(&[f64], usize, &mut ChaCha8Rng) -> Vec<f64> + Send + Sync>;
pub type TransitionDensity = Arc<dyn Fn(&[f64], usize, &[f64]) -> f64 + Send + Sync>;
pub type RewardFn = Arc<dyn Fn(&[f64], usize) -> f64 + Send + Sync>;
pub type InitialSampler = Arc<dyn Fn(&mut ChaCha8Rng) -> Vec<f64> + Send + Sync>;

/// Smoothness class of an occupancy density: the order of the Hölder
/// condition and its constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothness {
    pub holder_order: f64,
    pub holder_const: f64,
}

/// MDP over a compact state box with finitely many actions. Dynamics and
/// rewards are closures; sampled next states are folded back into the box by
/// reflection so trajectories never leave the declared domain.
#[derive(Clone)]
pub struct ContinuousMdp {
    bounds: Vec<(f64, f64)>,
    n_actions: usize,
    action_measure: f64,
    gamma: f64,
    smoothness: Smoothness,
    transition: TransitionSampler,
    transition_density: Option<TransitionDensity>,
    reward: RewardFn,
    initial: InitialSampler,
}

impl std::fmt::Debug for ContinuousMdp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ContinuousMdp")
            .field("bounds", &self.bounds)
            .field("n_actions", &self.n_actions)
            .field("gamma", &self.gamma)
            .field("smoothness", &self.smoothness)
            .finish_non_exhaustive()
    }
}

impl ContinuousMdp {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        bounds: Vec<(f64, f64)>,
        n_actions: usize,
        action_measure: f64,
        gamma: f64,
        smoothness: Smoothness,
        transition: TransitionSampler,
        reward: RewardFn,
        initial: InitialSampler,
    ) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::invalid("state box needs at least one dimension"));
        }
        if bounds.iter().any(|&(lo, hi)| !(hi > lo) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::invalid("state box bounds must be finite with lo < hi"));
        }
        if n_actions == 0 {
            return Err(Error::invalid("action count must be positive"));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::invalid(format!("gamma must lie in (0,1), got {gamma}")));
        }
        if action_measure <= 0.0 {
            return Err(Error::invalid("action measure must be positive"));
        }
        Ok(ContinuousMdp {
            bounds,
            n_actions,
            action_measure,
            gamma,
            smoothness,
            transition,
            transition_density: None,
            reward,
            initial,
        })
    }

    pub fn with_transition_density(mut self, density: TransitionDensity) -> Self {
        self.transition_density = Some(density);
        self
    }

    pub fn state_dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn action_measure(&self) -> f64 {
        self.action_measure
    }

    pub fn state_volume(&self) -> f64 {
        self.bounds.iter().map(|&(lo, hi)| hi - lo).product()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn transition_density(&self) -> Option<&TransitionDensity> {
        self.transition_density.as_ref()
    }

    pub fn reward(&self, state: &[f64], action: usize) -> f64 {
        let r = (self.reward)(state, action);
        debug_assert!((0.0..=1.0).contains(&r), "reward {r} outside [0,1]");
        r.clamp(0.0, 1.0)
    }

    pub fn sample_initial(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.fold_into_box((self.initial)(rng))
    }

    pub fn sample_transition(&self, state: &[f64], action: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.fold_into_box((self.transition)(state, action, rng))
    }

    /// Reflects each coordinate at the box walls until it lands inside.
    fn fold_into_box(&self, mut state: Vec<f64>) -> Vec<f64> {
        assert_eq!(state.len(), self.bounds.len(), "state dimension mismatch");
        for (x, &(lo, hi)) in state.iter_mut().zip(&self.bounds) {
            let width = hi - lo;
            let mut t = (*x - lo).rem_euclid(2.0 * width);
            if t > width {
                t = 2.0 * width - t;
            }
            *x = lo + t;
        }
        state
    }
}

/// Samples one continuous-state episode.
pub fn rollout_one_continuous(
    mdp: &ContinuousMdp,
    act: &dyn Fn(&[f64], f64) -> usize,
    horizon: usize,
    seed: u64,
) -> ContinuousEpisode {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = mdp.sample_initial(&mut rng);
    let mut steps = Vec::with_capacity(horizon + 1);
    for _ in 0..=horizon {
        let action = act(&state, rng.gen());
        let reward = mdp.reward(&state, action);
        let next_state = mdp.sample_transition(&state, action, &mut rng);
        steps.push(Step { state: state.clone(), action, reward, next_state: next_state.clone() });
        state = next_state;
    }
    Episode { steps, horizon, seed }
}

/// Samples `n` continuous-state episodes with the same per-episode seeding
/// scheme as the tabular `rollout`.
pub fn rollout_continuous(
    mdp: &ContinuousMdp,
    act: &(dyn Fn(&[f64], f64) -> usize + Sync),
    n: usize,
    horizon: usize,
    seed: u64,
) -> Result<Vec<ContinuousEpisode>> {
    if n == 0 {
        return Err(Error::invalid("episode count must be at least 1"));
    }
    Ok((0..n)
        .map(|i| rollout_one_continuous(mdp, act, horizon, episode_seed(seed, i as u64)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle() -> TabularMdp {
        crate::bench::two_state_cycle()
    }

    #[test]
    fn parses_the_cycle_fixture() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../assets/two_state_cycle.mdp");
        let mdp = load_mdp(Path::new(path)).unwrap();
        assert_eq!(mdp.n_states(), 2);
        assert_eq!(mdp.n_actions(), 1);
        assert_eq!(mdp.gamma(), 0.5);
        assert_eq!(mdp.initial_dist(), &[1.0, 0.0]);
        assert_eq!(mdp.transition_row(0, 0), &[0.0, 1.0]);
        assert_eq!(mdp.mean_reward(0, 0), 1.0);
        assert_eq!(mdp.mean_reward(1, 0), 0.0);
    }

    #[test]
    fn format_round_trips() {
        let mdp = crate::bench::bench_3x2();
        let again = parse_mdp(&format_mdp(&mdp)).unwrap();
        assert_eq!(again.n_states(), mdp.n_states());
        for s in 0..3 {
            for a in 0..2 {
                assert_eq!(again.transition_row(s, a), mdp.transition_row(s, a));
                assert_eq!(again.reward_law(s, a), mdp.reward_law(s, a));
            }
        }
    }

    #[test]
    fn bad_row_sum_names_the_row() {
        let text = "states 2\nactions 2\ngamma 0.5\nmu0 0.5 0.5\n\
                    trans 0 0 1 0\ntrans 0 1 0.5 0.25\ntrans 1 0 0 1\ntrans 1 1 0 1\n\
                    reward 0 0 det 1\nreward 0 1 det 0\nreward 1 0 det 0\nreward 1 1 det 0\n";
        let err = parse_mdp(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(s=0,a=1)"), "unexpected message: {msg}");
        assert!(msg.contains("0.75"), "unexpected message: {msg}");
    }

    #[test]
    fn reward_parameter_out_of_range_is_rejected() {
        let text = "states 1\nactions 1\ngamma 0.5\nmu0 1\ntrans 0 0 1\nreward 0 0 bernoulli 1.2\n";
        let err = parse_mdp(text).unwrap_err();
        assert!(err.to_string().contains("reward parameter out of [0,1]"));
    }

    #[test]
    fn parse_error_reports_line_number() {
        let text = "states 2\nactions 1\nwat 3\n";
        let err = parse_mdp(text).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "got {err}");
    }

    #[test]
    fn rollout_on_a_self_loop_is_all_ones() {
        let mdp = TabularMdp::new(
            1,
            1,
            vec![1.0],
            vec![RewardLaw::Deterministic(1.0)],
            0.5,
            vec![1.0],
        )
        .unwrap();
        let policy = Policy::uniform(1, 1);
        let episodes = rollout(&mdp, &policy, 2, 3, 7).unwrap();
        assert_eq!(episodes.len(), 2);
        for ep in &episodes {
            assert_eq!(ep.steps.len(), 4);
            assert!(ep.steps.iter().all(|st| st.state == 0 && st.reward == 1.0));
        }
    }

    #[test]
    fn cycle_alternates_states() {
        let episodes = rollout(&cycle(), &Policy::uniform(2, 1), 1, 3, 0).unwrap();
        let states: Vec<usize> = episodes[0].steps.iter().map(|st| st.state).collect();
        assert_eq!(states, vec![0, 1, 0, 1]);
    }

    #[test]
    fn bernoulli_rewards_have_the_right_frequency() {
        let mdp = TabularMdp::new(
            1,
            1,
            vec![1.0],
            vec![RewardLaw::Bernoulli(0.5)],
            0.5,
            vec![1.0],
        )
        .unwrap();
        let episodes = rollout(&mdp, &Policy::uniform(1, 1), 10_000, 0, 11).unwrap();
        let mean: f64 =
            episodes.iter().map(|ep| ep.steps[0].reward).sum::<f64>() / episodes.len() as f64;
        // 3 sigma for 10^4 fair-coin draws is 0.015.
        assert!((mean - 0.5).abs() < 0.02, "empirical mean {mean}");
    }

    #[test]
    fn discounted_return_examples() {
        let make = |rewards: &[f64]| Episode::<usize> {
            steps: rewards
                .iter()
                .map(|&r| Step { state: 0, action: 0, reward: r, next_state: 0 })
                .collect(),
            horizon: rewards.len().saturating_sub(1),
            seed: 0,
        };
        assert_eq!(discounted_return(&make(&[1.0, 1.0, 1.0, 1.0]), 0.5), 1.875);
        assert_eq!(discounted_return(&make(&[0.0, 0.0]), 0.9), 0.0);
        assert!((discounted_return(&make(&[0.0, 1.0]), 0.9) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn rollouts_are_deterministic_and_order_independent() {
        let mdp = crate::bench::bench_2x2();
        let policy = Policy::uniform(2, 2);
        let a = rollout(&mdp, &policy, 64, 10, 99).unwrap();
        let b = rollout(&mdp, &policy, 64, 10, 99).unwrap();
        assert_eq!(a, b);

        // Recompute a few episodes out of order on worker threads.
        let picked = [5usize, 63, 0, 17];
        let handles: Vec<_> = picked
            .iter()
            .map(|&i| {
                let mdp = mdp.clone();
                let policy = policy.clone();
                std::thread::spawn(move || {
                    (i, rollout_one(&mdp, &policy, 10, episode_seed(99, i as u64)))
                })
            })
            .collect();
        for h in handles {
            let (i, ep) = h.join().unwrap();
            assert_eq!(ep, a[i], "episode {i} differs when computed in isolation");
        }
    }

    #[test]
    fn horizon_for_tail_matches_definition() {
        let mdp = cycle();
        let h = mdp.horizon_for_tail(1e-3);
        let gamma: f64 = 0.5;
        assert!(gamma.powi(h as i32 + 1) / (1.0 - gamma) <= 1e-3);
        if h > 0 {
            assert!(gamma.powi(h as i32) / (1.0 - gamma) > 1e-3);
        }
    }

    #[test]
    fn continuous_rollout_stays_in_the_box() {
        let mdp = crate::bench::drift_walk_1d();
        let act = |_s: &[f64], u: f64| usize::from(u > 0.5);
        let episodes = rollout_continuous(&mdp, &act, 32, 20, 3).unwrap();
        for ep in &episodes {
            for st in &ep.steps {
                assert!((0.0..=1.0).contains(&st.state[0]));
                assert!((0.0..=1.0).contains(&st.next_state[0]));
                assert!((0.0..=1.0).contains(&st.reward));
            }
        }
    }

    #[test]
    fn policy_mix_blends_rows() {
        let det = Policy::deterministic(&[1, 0], 2);
        let mixed = det.mix(&Policy::uniform(2, 2), 0.5).unwrap();
        assert_eq!(mixed.action_probs(0), &[0.25, 0.75]);
        assert_eq!(mixed.action_probs(1), &[0.75, 0.25]);
    }
}
