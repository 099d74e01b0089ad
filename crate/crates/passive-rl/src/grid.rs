//! Uniform box grids over continuous state spaces, and the Monte-Carlo
//! discretization that turns a continuous model into a tabular one.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{episode_seed, sample_categorical, ContinuousMdp, Policy, RewardLaw, TabularMdp};

/// Axis-aligned uniform grid: `resolution` cells per dimension over a box.
/// Cells are indexed row-major with the first dimension slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformGrid {
    bounds: Vec<(f64, f64)>,
    resolution: usize,
}

impl UniformGrid {
    pub fn new(bounds: Vec<(f64, f64)>, resolution: usize) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::invalid("grid needs at least one dimension"));
        }
        if resolution == 0 {
            return Err(Error::invalid("grid resolution must be at least 1"));
        }
        for &(lo, hi) in &bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!("degenerate grid bounds [{lo}, {hi}]")));
            }
        }
        let cells = (resolution as u128).checked_pow(bounds.len() as u32);
        match cells {
            Some(c) if c <= 1_000_000 => {}
            _ => {
                return Err(Error::invalid(format!(
                    "grid of {resolution}^{} cells is too large",
                    bounds.len()
                )))
            }
        }
        Ok(UniformGrid { bounds, resolution })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn n_cells(&self) -> usize {
        self.resolution.pow(self.dim() as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.bounds
            .iter()
            .map(|&(lo, hi)| (hi - lo) / self.resolution as f64)
            .product()
    }

    /// Cell containing a point. Coordinates outside the box clamp to the
    /// nearest boundary cell, so every point maps somewhere.
    pub fn cell_of(&self, point: &[f64]) -> usize {
        debug_assert_eq!(point.len(), self.dim());
        let mut index = 0;
        for (&x, &(lo, hi)) in point.iter().zip(&self.bounds) {
            let frac = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            let i = ((frac * self.resolution as f64) as usize).min(self.resolution - 1);
            index = index * self.resolution + i;
        }
        index
    }

    /// Center point of a cell.
    pub fn center(&self, cell: usize) -> Vec<f64> {
        debug_assert!(cell < self.n_cells());
        let mut rest = cell;
        let mut coords = vec![0.0; self.dim()];
        for d in (0..self.dim()).rev() {
            let i = rest % self.resolution;
            rest /= self.resolution;
            let (lo, hi) = self.bounds[d];
            let width = (hi - lo) / self.resolution as f64;
            coords[d] = lo + (i as f64 + 0.5) * width;
        }
        coords
    }
}

/// Tabular policy applied to continuous states through a grid: the action
/// distribution of a state is that of its cell.
#[derive(Debug, Clone)]
pub struct BinnedPolicy {
    grid: UniformGrid,
    policy: Policy,
}

impl BinnedPolicy {
    pub fn new(grid: UniformGrid, policy: Policy) -> Result<Self> {
        if policy.n_states() != grid.n_cells() {
            return Err(Error::invalid(format!(
                "policy has {} states but the grid has {} cells",
                policy.n_states(),
                grid.n_cells()
            )));
        }
        Ok(BinnedPolicy { grid, policy })
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    /// Draws an action from the cell's distribution using a uniform variate,
    /// matching the rollout driver's `(state, draw) -> action` shape.
    pub fn act(&self, state: &[f64], u: f64) -> usize {
        sample_categorical(self.policy.action_probs(self.grid.cell_of(state)), u)
    }
}

/// Replaces a continuous model with a tabular one on a uniform grid.
///
/// Each (cell, action) transition row is the empirical distribution of the
/// landing cell over `mc_samples` draws started from the cell center; the
/// reward is the reward function at the center. The initial distribution is
/// the empirical cell distribution of `mc_samples * cells` draws (at least
/// 4096). Everything is seeded, so the same arguments always produce the
/// same table.
pub fn discretize(
    mdp: &ContinuousMdp,
    resolution: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<(TabularMdp, UniformGrid)> {
    if mc_samples == 0 {
        return Err(Error::invalid("need at least one sample per cell"));
    }
    let grid = UniformGrid::new(mdp.bounds().to_vec(), resolution)?;
    let cells = grid.n_cells();
    let n_actions = mdp.n_actions();

    let mut transition = vec![0.0; cells * n_actions * cells];
    let mut rewards = Vec::with_capacity(cells * n_actions);
    for cell in 0..cells {
        let center = grid.center(cell);
        for action in 0..n_actions {
            let pair = cell * n_actions + action;
            let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(seed, pair as u64));
            let row = &mut transition[pair * cells..(pair + 1) * cells];
            for _ in 0..mc_samples {
                let next = mdp.sample_transition(&center, action, &mut rng);
                row[grid.cell_of(&next)] += 1.0;
            }
            for p in row.iter_mut() {
                *p /= mc_samples as f64;
            }
            rewards.push(RewardLaw::Deterministic(mdp.reward(&center, action)));
        }
    }

    let init_draws = (mc_samples * cells).max(4096);
    let mut initial = vec![0.0; cells];
    let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(seed, (cells * n_actions) as u64));
    for _ in 0..init_draws {
        initial[grid.cell_of(&mdp.sample_initial(&mut rng))] += 1.0;
    }
    for p in &mut initial {
        *p /= init_draws as f64;
    }

    let tabular = TabularMdp::new(cells, n_actions, transition, rewards, mdp.gamma(), initial)?;
    Ok((tabular, grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench;
    use proptest::prelude::*;

    #[test]
    fn one_dimensional_layout() {
        let grid = UniformGrid::new(vec![(0.0, 1.0)], 4).unwrap();
        assert_eq!(grid.n_cells(), 4);
        assert!((grid.cell_volume() - 0.25).abs() < 1e-15);
        assert_eq!(grid.cell_of(&[0.1]), 0);
        assert_eq!(grid.cell_of(&[0.99]), 3);
        // Clamping on both sides.
        assert_eq!(grid.cell_of(&[-5.0]), 0);
        assert_eq!(grid.cell_of(&[5.0]), 3);
        assert_eq!(grid.center(1), vec![0.375]);
    }

    #[test]
    fn two_dimensional_layout() {
        let grid = UniformGrid::new(vec![(0.0, 1.0), (-1.0, 1.0)], 3).unwrap();
        assert_eq!(grid.n_cells(), 9);
        assert!((grid.cell_volume() - 2.0 / 9.0).abs() < 1e-15);
        // First dimension is the slow index.
        assert_eq!(grid.cell_of(&[0.1, -0.9]), 0);
        assert_eq!(grid.cell_of(&[0.1, 0.9]), 2);
        assert_eq!(grid.cell_of(&[0.9, 0.9]), 8);
        assert_eq!(grid.center(4), vec![0.5, 0.0]);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(UniformGrid::new(vec![], 4).is_err());
        assert!(UniformGrid::new(vec![(0.0, 1.0)], 0).is_err());
        assert!(UniformGrid::new(vec![(1.0, 1.0)], 4).is_err());
        assert!(UniformGrid::new(vec![(0.0, 1.0); 8], 100).is_err());
    }

    #[test]
    fn binned_policy_follows_its_table() {
        let grid = UniformGrid::new(vec![(0.0, 1.0)], 2).unwrap();
        let policy = Policy::deterministic(&[1, 0], 2);
        let binned = BinnedPolicy::new(grid, policy).unwrap();
        assert_eq!(binned.act(&[0.2], 0.7), 1);
        assert_eq!(binned.act(&[0.8], 0.7), 0);
    }

    #[test]
    fn discretized_walk_is_a_valid_reproducible_table() {
        let mdp = bench::drift_walk_1d();
        let (tab1, grid) = discretize(&mdp, 8, 64, 7).unwrap();
        let (tab2, _) = discretize(&mdp, 8, 64, 7).unwrap();
        assert_eq!(tab1.n_states(), 8);
        assert_eq!(tab1.n_actions(), 2);
        assert_eq!(tab1.gamma(), mdp.gamma());
        for s in 0..8 {
            assert_eq!(tab1.transition_row(s, 0), tab2.transition_row(s, 0));
            assert_eq!(tab1.transition_row(s, 1), tab2.transition_row(s, 1));
            for a in 0..2 {
                let sum: f64 = tab1.transition_row(s, a).iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
                let r = tab1.mean_reward(s, a);
                assert!((0.0..=1.0).contains(&r));
            }
        }
        // The walk starts in [0.2, 0.4], which overlaps cells 1..=3 of 8
        // (cell 2, [0.25, 0.375), holds 5/8 of the interval).
        let init = tab1.initial_dist();
        let covered = init[1] + init[2] + init[3];
        assert!((covered - 1.0).abs() < 1e-12, "{init:?}");
        assert!(init[2] > 0.5 && init[1] > 0.15, "{init:?}");
        assert!(init[0] < 1e-12 && init[5] < 1e-12);
        let _ = grid;
    }

    #[test]
    fn different_seeds_give_different_tables() {
        let mdp = bench::drift_walk_1d();
        let (a, _) = discretize(&mdp, 8, 64, 7).unwrap();
        let (b, _) = discretize(&mdp, 8, 64, 8).unwrap();
        let same = (0..8).all(|s| a.transition_row(s, 0) == b.transition_row(s, 0));
        assert!(!same);
    }

    proptest! {
        #[test]
        fn centers_map_back_to_their_cells(
            resolution in 1usize..12,
            dim in 1usize..4,
            lo in -3.0f64..0.0,
            width in 0.5f64..4.0,
        ) {
            let grid = UniformGrid::new(vec![(lo, lo + width); dim], resolution).unwrap();
            for cell in 0..grid.n_cells() {
                prop_assert_eq!(grid.cell_of(&grid.center(cell)), cell);
            }
        }

        #[test]
        fn every_point_lands_in_a_cell(
            x in -10.0f64..10.0,
            y in -10.0f64..10.0,
        ) {
            let grid = UniformGrid::new(vec![(0.0, 1.0), (-1.0, 1.0)], 5).unwrap();
            let cell = grid.cell_of(&[x, y]);
            prop_assert!(cell < grid.n_cells());
        }
    }
}
