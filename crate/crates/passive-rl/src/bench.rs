//! Small fixed models and seeded random generators used by experiments and
//! tests.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::mdp::{ContinuousMdp, Policy, RewardLaw, Smoothness, TabularMdp};

/// Deterministic 2-cycle with a single action; state 0 pays 1, state 1 pays 0.
/// Discounted occupancy and values have closed forms, which makes this the
/// standard fixture for oracle tests.
pub fn two_state_cycle() -> TabularMdp {
    TabularMdp::new(
        2,
        1,
        vec![0.0, 1.0, 1.0, 0.0],
        vec![RewardLaw::Deterministic(1.0), RewardLaw::Deterministic(0.0)],
        0.5,
        vec![1.0, 0.0],
    )
    .expect("fixture is valid")
}

/// 2-state, 2-action benchmark: action 0 tends to hold position, action 1
/// tends to switch, and the best cell by far is staying in state 0.
pub fn bench_2x2() -> TabularMdp {
    TabularMdp::new(
        2,
        2,
        vec![
            0.9, 0.1, // s0 a0
            0.2, 0.8, // s0 a1
            0.7, 0.3, // s1 a0
            0.1, 0.9, // s1 a1
        ],
        vec![
            RewardLaw::Bernoulli(0.9),
            RewardLaw::Bernoulli(0.2),
            RewardLaw::Bernoulli(0.4),
            RewardLaw::Bernoulli(0.1),
        ],
        0.6,
        vec![0.5, 0.5],
    )
    .expect("fixture is valid")
}

/// 3-state, 2-action chain: action 1 drifts toward state 2 where it pays
/// well, action 0 drifts back toward state 0 with a weak decoy reward.
pub fn bench_3x2() -> TabularMdp {
    TabularMdp::new(
        3,
        2,
        vec![
            0.9, 0.1, 0.0, // s0 a0
            0.2, 0.7, 0.1, // s0 a1
            0.7, 0.25, 0.05, // s1 a0
            0.05, 0.25, 0.7, // s1 a1
            0.1, 0.6, 0.3, // s2 a0
            0.05, 0.15, 0.8, // s2 a1
        ],
        vec![
            RewardLaw::Bernoulli(0.15),
            RewardLaw::Bernoulli(0.05),
            RewardLaw::Bernoulli(0.2),
            RewardLaw::Bernoulli(0.1),
            RewardLaw::Bernoulli(0.3),
            RewardLaw::Bernoulli(0.85),
        ],
        0.7,
        vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    )
    .expect("fixture is valid")
}

/// Uniformly mixing 2x2 model: every transition row and the initial
/// distribution are uniform, so successive state visits are independent.
/// Useful when an estimator audit needs i.i.d.-like visit indicators.
pub fn uniform_mixing_2x2(gamma: f64) -> TabularMdp {
    TabularMdp::new(
        2,
        2,
        vec![0.5; 8],
        vec![
            RewardLaw::Bernoulli(0.8),
            RewardLaw::Bernoulli(0.4),
            RewardLaw::Bernoulli(0.6),
            RewardLaw::Bernoulli(0.2),
        ],
        gamma,
        vec![0.5, 0.5],
    )
    .expect("fixture is valid")
}

/// Draws a probability vector from a flat Dirichlet by normalizing
/// exponentials.
fn random_simplex(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len).map(|_| -rng.gen::<f64>().max(1e-12).ln()).collect();
    let sum: f64 = v.iter().sum();
    for x in &mut v {
        *x /= sum;
    }
    v
}

/// Seeded random tabular model. Transition rows are flat-Dirichlet draws,
/// rewards are Bernoulli with uniform parameters, and the initial
/// distribution is blended 20% toward uniform so every state keeps
/// non-negligible starting mass.
pub fn random_mdp(n_states: usize, n_actions: usize, gamma: f64, seed: u64) -> TabularMdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    let mut reward = Vec::with_capacity(n_states * n_actions);
    for _ in 0..n_states * n_actions {
        transition.extend(random_simplex(n_states, &mut rng));
        reward.push(RewardLaw::Bernoulli(rng.gen::<f64>()));
    }
    let mut initial = random_simplex(n_states, &mut rng);
    for p in &mut initial {
        *p = 0.8 * *p + 0.2 / n_states as f64;
    }
    TabularMdp::new(n_states, n_actions, transition, reward, gamma, initial)
        .expect("generated model is valid")
}

/// Seeded random stochastic policy with flat-Dirichlet rows.
pub fn random_policy(n_states: usize, n_actions: usize, seed: u64) -> Policy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probs = Vec::with_capacity(n_states * n_actions);
    for _ in 0..n_states {
        probs.extend(random_simplex(n_actions, &mut rng));
    }
    Policy::new(n_states, n_actions, probs).expect("generated policy is valid")
}

/// One-dimensional drifting walk on [0,1] with two actions (drift left /
/// drift right) and smooth bump rewards. The right-hand bump pays more, so
/// good play drifts right and hovers near 0.75. Boundaries reflect.
pub fn drift_walk_1d() -> ContinuousMdp {
    let transition = Arc::new(|state: &[f64], action: usize, rng: &mut ChaCha8Rng| {
        let drift = if action == 1 { 0.15 } else { -0.15 };
        let noise = 0.1 * (2.0 * rng.gen::<f64>() - 1.0);
        vec![state[0] + drift + noise]
    });
    let reward = Arc::new(|state: &[f64], action: usize| {
        let x = state[0];
        if action == 1 {
            0.9 * (-(x - 0.75) * (x - 0.75) / 0.02).exp()
        } else {
            0.45 * (-(x - 0.25) * (x - 0.25) / 0.02).exp()
        }
    });
    let initial = Arc::new(|rng: &mut ChaCha8Rng| vec![0.2 + 0.2 * rng.gen::<f64>()]);
    ContinuousMdp::new(
        vec![(0.0, 1.0)],
        2,
        2.0,
        0.5,
        Smoothness { holder_order: 2.0, holder_const: 50.0 },
        transition,
        reward,
        initial,
    )
    .expect("fixture is valid")
}
