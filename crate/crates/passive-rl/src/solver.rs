//! Entropy-regularized dual solver.
//!
//! The planning step maximizes `eta * E_d[reward] - KL(d || ref)` over
//! occupancy measures `d` satisfying the stationarity constraints. Dualizing
//! the constraints with a potential `v` over states gives the unconstrained
//! convex objective
//!
//! ```text
//! J(v) = (1 - gamma) <mu0, v>
//!      + ln sum_{s,a} ref(s,a) exp(eta rbar(s,a) + gamma (Tv)(s,a) - v(s))
//! ```
//!
//! which this module minimizes by gradient descent with a backtracking line
//! search. The softmax weights of the exponential sum are exactly the primal
//! candidate `d~`, and the gradient coordinates are exactly the negated flow
//! residuals of `d~`, so the gradient norm doubles as a feasibility
//! certificate. `J` is invariant under adding a constant to `v` (the
//! constraints sum to a redundant normalization), so the descent is over an
//! unpinned gauge; this is harmless for convergence.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::oracle::OccupancyTable;

/// Dual variable: one potential per state.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPotential(Vec<f64>);

impl DualPotential {
    pub fn zeros(n_states: usize) -> Self {
        DualPotential(vec![0.0; n_states])
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("potential entries must be finite"));
        }
        Ok(DualPotential(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn n_states(&self) -> usize {
        self.0.len()
    }

    /// Same potential shifted by a constant; the objective is blind to this.
    pub fn shift(&self, c: f64) -> Self {
        DualPotential(self.0.iter().map(|v| v + c).collect())
    }
}

/// Result of one dual solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub v_star: DualPotential,
    /// Final objective value `J(v_star)`.
    pub objective: f64,
    /// Max-norm of the final gradient; equals the worst stationarity
    /// violation of the extracted occupancy.
    pub grad_inf_norm: f64,
    /// Accepted descent steps taken.
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted step (index 0 is the starting value).
    pub objective_trace: Vec<f64>,
}

impl SolveReport {
    pub fn csv_header() -> &'static str {
        "objective,grad_inf_norm,iterations,converged"
    }

    pub fn csv_row(&self) -> String {
        let mut row = String::new();
        let _ = write!(
            row,
            "{},{},{},{}",
            self.objective, self.grad_inf_norm, self.iterations, self.converged
        );
        row
    }
}

fn check_inputs(ref_dist: &OccupancyTable, mdp: &TabularMdp, eta: f64) -> Result<()> {
    if ref_dist.n_states() != mdp.n_states() || ref_dist.n_actions() != mdp.n_actions() {
        return Err(Error::invalid("reference distribution shape does not match the model"));
    }
    if ref_dist.values().iter().all(|&v| v == 0.0) {
        return Err(Error::invalid("reference distribution is identically zero"));
    }
    if !eta.is_finite() || eta < 0.0 {
        return Err(Error::invalid(format!("regularization weight must be >= 0, got {eta}")));
    }
    Ok(())
}

/// Exponents `eta rbar(s,a) + gamma (Tv)(s,a) - v(s)` for every cell.
fn exponents(ref_dist: &OccupancyTable, mdp: &TabularMdp, v: &DualPotential, eta: f64) -> Vec<f64> {
    let n_actions = mdp.n_actions();
    let mut out = vec![f64::NEG_INFINITY; mdp.n_cells()];
    for state in 0..mdp.n_states() {
        for action in 0..n_actions {
            if ref_dist.get(state, action) == 0.0 {
                continue; // cell carries no weight; keep it out of the max
            }
            let future: f64 = mdp
                .transition_row(state, action)
                .iter()
                .zip(v.values())
                .map(|(&p, &vs)| p * vs)
                .sum();
            out[state * n_actions + action] =
                eta * mdp.mean_reward(state, action) + mdp.gamma() * future - v.values()[state];
        }
    }
    out
}

/// `ln sum ref(s,a) exp(x(s,a))`, shifted by the max exponent for stability.
fn log_weighted_sum(ref_dist: &OccupancyTable, exps: &[f64]) -> f64 {
    let m = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = ref_dist
        .values()
        .iter()
        .zip(exps)
        .filter(|(&r, _)| r > 0.0)
        .map(|(&r, &x)| r * (x - m).exp())
        .sum();
    m + total.ln()
}

/// Dual objective `J(v)`.
pub fn dual_objective(
    ref_dist: &OccupancyTable,
    mdp: &TabularMdp,
    v: &DualPotential,
    eta: f64,
) -> Result<f64> {
    check_inputs(ref_dist, mdp, eta)?;
    if v.n_states() != mdp.n_states() {
        return Err(Error::invalid("potential length does not match the state count"));
    }
    let exps = exponents(ref_dist, mdp, v, eta);
    let linear: f64 = mdp
        .initial_dist()
        .iter()
        .zip(v.values())
        .map(|(&mu, &vs)| mu * vs)
        .sum();
    Ok((1.0 - mdp.gamma()) * linear + log_weighted_sum(ref_dist, &exps))
}

/// Softmax weights of the exponential sum: the primal candidate read off the
/// potential, `d~(s,a) = ref(s,a) e^{x(s,a)} / sum ref e^x`. Always sums to
/// one; cells outside the reference support get zero.
pub fn softmax_weights(
    ref_dist: &OccupancyTable,
    mdp: &TabularMdp,
    v: &DualPotential,
    eta: f64,
) -> Result<Vec<f64>> {
    check_inputs(ref_dist, mdp, eta)?;
    if v.n_states() != mdp.n_states() {
        return Err(Error::invalid("potential length does not match the state count"));
    }
    let exps = exponents(ref_dist, mdp, v, eta);
    let m = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = ref_dist
        .values()
        .iter()
        .zip(&exps)
        .map(|(&r, &x)| if r > 0.0 { r * (x - m).exp() } else { 0.0 })
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(weights)
}

/// Gradient of `J`: for each state,
/// `(1-gamma) mu0(s) - w(s) + gamma sum_{s',a'} w(s',a') T(s|s',a')`
/// with `w` the softmax weights. This is the negated flow residual of `w`.
pub fn dual_gradient(
    ref_dist: &OccupancyTable,
    mdp: &TabularMdp,
    v: &DualPotential,
    eta: f64,
) -> Result<Vec<f64>> {
    let weights = softmax_weights(ref_dist, mdp, v, eta)?;
    Ok(gradient_from_weights(&weights, mdp))
}

fn gradient_from_weights(weights: &[f64], mdp: &TabularMdp) -> Vec<f64> {
    let n_states = mdp.n_states();
    let n_actions = mdp.n_actions();
    let gamma = mdp.gamma();
    let mut grad: Vec<f64> =
        mdp.initial_dist().iter().map(|&mu| (1.0 - gamma) * mu).collect();
    for state in 0..n_states {
        for action in 0..n_actions {
            let w = weights[state * n_actions + action];
            if w == 0.0 {
                continue;
            }
            grad[state] -= w;
            for (next, &p) in mdp.transition_row(state, action).iter().enumerate() {
                grad[next] += gamma * p * w;
            }
        }
    }
    grad
}

fn inf_norm(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Minimizes the dual objective from `v = 0` by gradient descent with an
/// Armijo backtracking line search (sufficient-decrease constant `1e-4`,
/// halving on rejection, doubling the accepted step as the next trial).
/// Once the predicted decrease falls below floating-point resolution the
/// comparison is pure noise, so the search yields to a fixed safe step:
/// the objective's curvature never exceeds `(1 + gamma)^2 < 4`, making a
/// step of `1/4` a guaranteed descent direction regardless of the model.
/// Convergence means the gradient max-norm reached `tol`.
pub fn solve_dual(
    ref_dist: &OccupancyTable,
    mdp: &TabularMdp,
    eta: f64,
    tol: f64,
    max_iters: usize,
) -> Result<SolveReport> {
    check_inputs(ref_dist, mdp, eta)?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }

    const ARMIJO_C1: f64 = 1e-4;
    const SAFE_STEP: f64 = 0.25;

    let mut v = DualPotential::zeros(mdp.n_states());
    let mut objective = dual_objective(ref_dist, mdp, &v, eta)?;
    let mut trace = vec![objective];
    let mut step = 1.0f64;
    let mut iterations = 0;

    loop {
        let grad = dual_gradient(ref_dist, mdp, &v, eta)?;
        let grad_inf = inf_norm(&grad);
        if grad_inf <= tol || iterations >= max_iters {
            return Ok(SolveReport {
                v_star: v,
                objective,
                grad_inf_norm: grad_inf,
                iterations,
                converged: grad_inf <= tol,
                objective_trace: trace,
            });
        }

        let take_step = |alpha: f64| -> Result<(DualPotential, f64)> {
            let candidate = DualPotential(
                v.values().iter().zip(&grad).map(|(&vs, &g)| vs - alpha * g).collect(),
            );
            let value = dual_objective(ref_dist, mdp, &candidate, eta)?;
            Ok((candidate, value))
        };

        let grad_sq: f64 = grad.iter().map(|g| g * g).sum();
        // Try twice the last accepted step first so the search can grow back
        // after a cautious stretch, halving until the sufficient-decrease
        // test passes or the trial drops to the safe step.
        let mut alpha = (step * 2.0).max(SAFE_STEP);
        let mut accepted = None;
        while alpha > SAFE_STEP {
            let predicted = ARMIJO_C1 * alpha * grad_sq;
            if predicted <= 1e-15 * objective.abs().max(1.0) {
                break; // below resolution: the comparison means nothing
            }
            let (candidate, value) = take_step(alpha)?;
            if value <= objective - predicted {
                accepted = Some((candidate, value, alpha));
                break;
            }
            alpha *= 0.5;
        }
        let (next_v, next_obj, used) = match accepted {
            Some(found) => found,
            None => {
                let (candidate, value) = take_step(SAFE_STEP)?;
                (candidate, value, SAFE_STEP)
            }
        };
        debug_assert!(
            next_obj <= objective + 1e-12 * objective.abs().max(1.0),
            "objective increased: {objective} -> {next_obj}"
        );
        v = next_v;
        objective = next_obj;
        step = used;
        iterations += 1;
        trace.push(objective);
    }
}

/// Primal occupancy candidate at a potential, as a table. At the dual
/// optimum this is the KL projection of the reference onto the feasible set
/// (tilted by the reward when `eta > 0`).
pub fn extract_occupancy(
    v: &DualPotential,
    ref_dist: &OccupancyTable,
    mdp: &TabularMdp,
    eta: f64,
) -> Result<OccupancyTable> {
    let weights = softmax_weights(ref_dist, mdp, v, eta)?;
    OccupancyTable::from_values(mdp.n_states(), mdp.n_actions(), weights, true)
}

/// Conditional policy of an occupancy table. States carrying negligible mass
/// (< 1e-12 total) act uniformly.
pub fn extract_policy(d: &OccupancyTable) -> crate::mdp::Policy {
    d.conditional_policy()
}
