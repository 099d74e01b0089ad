//! Cross-module flows through the public API only: the paths an external
//! consumer strings together, where unit tests inside each module cannot see
//! the seams.

use passive_rl::bench::{bench_3x2, random_mdp, random_policy};
use passive_rl::mdp::{discounted_return, episode_seed, rollout, Policy};
use passive_rl::online::{build_memory, run_online, OnlineConfig, PassiveMemory};
use passive_rl::oracle::{
    exact_occupancy, exact_value, expected_reward, optimal_policy, performance_bound,
    OccupancyTable,
};
use passive_rl::solver::{extract_occupancy, extract_policy, solve_dual};

/// Solve against a uniform reference, read the occupancy off the potential,
/// and check it against the independent oracle: the flow constraint, the
/// value identity, and the exact occupancy of the extracted policy.
#[test]
fn solve_extract_and_oracle_agree() {
    let mdp = random_mdp(4, 3, 0.8, 20_260_819);
    let reference = OccupancyTable::uniform(4, 3);
    let report = solve_dual(&reference, &mdp, 1.5, 1e-10, 200_000).expect("solver runs");
    assert!(report.converged);

    let table = extract_occupancy(&report.v_star, &reference, &mdp, 1.5).expect("extraction");
    assert!(table.flow_residual(&mdp) <= 1e-8, "stationarity violated");

    let policy = extract_policy(&table);
    let replayed = exact_occupancy(&mdp, &policy).expect("policy occupancy");
    for (got, want) in table.values().iter().zip(replayed.values()) {
        assert!((got - want).abs() <= 1e-6, "extracted table disagrees with its own policy");
    }

    let value_from_table = expected_reward(&table, &mdp) / (1.0 - mdp.gamma());
    let value_from_policy = exact_value(&mdp, &policy).expect("policy value");
    assert!((value_from_table - value_from_policy).abs() <= 1e-6);
}

/// Roll out a behavior policy, distill the batch into a memory, run the
/// online loop from it, and check the whole chain stays consistent: the
/// memory covers every cell, gaps are bounded by the value range, and the
/// first-round gap obeys the audit bound computed from the same memory.
#[test]
fn rollouts_to_memory_to_online_loop() {
    let mdp = bench_3x2();
    let behavior = random_policy(3, 2, 99);
    let horizon = mdp.horizon_for_tail(1e-3);
    let episodes = rollout(&mdp, &behavior, 400, horizon, 7).expect("batch");

    // Sanity on the raw batch: empirical discounted return should sit near
    // the behavior policy's truncated value.
    let mc_value: f64 = episodes.iter().map(|ep| discounted_return(ep, mdp.gamma())).sum::<f64>()
        / episodes.len() as f64;
    let exact = exact_value(&mdp, &behavior).expect("behavior value");
    assert!((mc_value - exact).abs() <= 0.15, "MC value {mc_value} vs exact {exact}");

    let memory = build_memory(&episodes, 3, 2, mdp.gamma(), 1e-6).expect("memory");
    assert!(memory.coverage_ok());
    assert_eq!(memory.transitions().len(), 400 * (horizon + 1));

    let config = OnlineConfig::standard(&mdp, 6, 200, 11);
    let record = run_online(&mdp, &memory, &config).expect("online run");

    let (_, v_star) = optimal_policy(&mdp, 1e-10).expect("optimal value");
    let d_star = exact_occupancy(&mdp, &optimal_policy(&mdp, 1e-10).unwrap().0).unwrap();
    let audit = performance_bound(&mdp, &d_star, memory.ref_dist()).expect("audit");
    for (round, &gap) in record.per_round_gap.iter().enumerate() {
        assert!(gap >= -1e-9, "round {round}: negative gap {gap}");
        assert!(gap <= v_star.abs() + 1.0 / (1.0 - mdp.gamma()), "round {round}: gap {gap}");
    }
    // The audit solves against the same reference the loop starts from, so
    // its measured gap can differ from round one only through the step
    // scale; the certified bound must cover both.
    assert!(audit.actual_gap <= audit.bound + 1e-12);
}

/// Occupancy tables survive the CSV round trip bit-for-bit, including
/// non-representable decimal values.
#[test]
fn occupancy_csv_round_trip_is_exact() {
    let mdp = random_mdp(3, 3, 0.77, 5);
    let table = exact_occupancy(&mdp, &random_policy(3, 3, 6)).expect("occupancy");
    let text = table.to_csv_string();
    let back = OccupancyTable::from_csv_str(&text).expect("parse back");
    assert_eq!(table.values(), back.values());
    assert!(back.is_normalized());
}

/// A memory built from one policy's exact occupancy seeds the loop no worse
/// than the uniform table, matching the qualitative promise that better
/// coverage of the optimal support can only help.
#[test]
fn informed_memory_does_not_lose_to_uniform() {
    let mdp = bench_3x2();
    let (pi_star, _) = optimal_policy(&mdp, 1e-10).expect("optimal policy");
    let informed = PassiveMemory::from_table(
        exact_occupancy(&mdp, &pi_star).expect("optimal occupancy"),
        1e-6,
    )
    .expect("informed memory");
    let uniform =
        PassiveMemory::from_table(OccupancyTable::uniform(3, 2), 1e-6).expect("uniform memory");

    let run = |memory: &PassiveMemory| -> f64 {
        let mut total = 0.0;
        for seed in 0..3u64 {
            let config = OnlineConfig::standard(&mdp, 4, 200, episode_seed(17, seed));
            total += run_online(&mdp, memory, &config).expect("run").final_cumulative();
        }
        total / 3.0
    };
    assert!(run(&informed) <= run(&uniform) + 1e-9);
}

/// Shapes are validated at the seams: a policy from the wrong model is
/// rejected by rollouts, and a memory of the wrong shape by the loop.
#[test]
fn shape_mismatches_are_rejected_across_modules() {
    let mdp = bench_3x2();
    let wrong_policy = Policy::uniform(2, 2);
    assert!(rollout(&mdp, &wrong_policy, 10, 5, 0).is_err());

    let wrong_memory =
        PassiveMemory::from_table(OccupancyTable::uniform(2, 2), 1e-6).expect("memory");
    let config = OnlineConfig::standard(&mdp, 2, 10, 0);
    assert!(run_online(&mdp, &wrong_memory, &config).is_err());
}
