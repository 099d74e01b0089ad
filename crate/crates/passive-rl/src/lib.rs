//! Occupancy-measure reinforcement learning from pre-collected experience.
//!
//! The crate is organized around the normalized discounted occupancy measure
//! of a policy. [`mdp`] defines tabular and continuous models plus seeded
//! rollouts; [`oracle`] computes exact occupancies, values, and optimal
//! policies for tabular models; [`solver`] plans against a reference
//! distribution by minimizing an entropy-regularized dual; [`density`]
//! estimates occupancies from episodes (discounted visit frequencies, and a
//! per-action kernel estimator for continuous states); [`grid`] discretizes
//! continuous models onto uniform grids; [`online`] runs the round-based
//! plan/deploy/re-estimate loop seeded by a passive dataset; [`adversarial`]
//! builds the hard instance pairs behind the regret lower bound; [`bench`]
//! holds small fixture models shared by tests and binaries.

pub mod adversarial;
pub mod bench;
pub mod density;
pub mod error;
pub mod grid;
pub mod mdp;
pub mod online;
pub mod oracle;
pub mod solver;

pub use error::{Error, Result};
