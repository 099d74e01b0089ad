//! Occupancy estimation from rollouts: discounted visit frequencies for
//! tabular models, and per-action kernel density estimates for continuous
//! state spaces, together with their computable error bounds.
//!
//! Both estimators share the same weighting: step `h` of an episode carries
//! weight `gamma^h`, and the batch is scaled by
//! `(1 - gamma) / (n (1 - gamma^{H+1}))` so the estimate is a probability
//! distribution over cells (tabular) or over the state box times the action
//! set (continuous). Estimates therefore target the *truncated* occupancy of
//! the sampling policy; the untruncated one differs by at most
//! `gamma^{H+1} / (1 - gamma)` in total mass.

use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mdp::{ContinuousEpisode, TabularEpisode};
use crate::oracle::OccupancyTable;

/// Composite Simpson quadrature on `2^k + 1` nodes, doubling `k` until the
/// result moves by less than 1e-9.
pub fn simpson_auto(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    assert!(lo < hi, "empty integration range");
    let simpson = |panels: usize| -> f64 {
        let h = (hi - lo) / panels as f64;
        let mut acc = f(lo) + f(hi);
        for i in 1..panels {
            let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += weight * f(lo + i as f64 * h);
        }
        acc * h / 3.0
    };
    let mut panels = 16usize;
    let mut value = simpson(panels);
    for _ in 0..18 {
        panels *= 2;
        let refined = simpson(panels);
        let done = (refined - value).abs() < 1e-9;
        value = refined;
        if done {
            break;
        }
    }
    value
}

/// Discounted visit-frequency estimate of the truncated occupancy, from
/// fixed-horizon tabular episodes.
///
/// Cell `(s,a)` accumulates `gamma^h` for every step `h` that visits it; the
/// total is scaled by `(1-gamma)/(n(1-gamma^{H+1}))`, which makes the table
/// sum to one, and the result is renormalized by its computed sum to absorb
/// accumulation rounding. The estimate is unbiased for the truncated
/// occupancy of the policy that generated the episodes.
pub fn plugin_estimate(
    episodes: &[TabularEpisode],
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    horizon: usize,
) -> Result<OccupancyTable> {
    if episodes.is_empty() {
        return Err(Error::invalid("no episodes to estimate from"));
    }
    if !(0.0 < gamma && gamma < 1.0) {
        return Err(Error::invalid(format!("discount must lie in (0,1), got {gamma}")));
    }
    let mut values = vec![0.0; n_states * n_actions];
    for ep in episodes {
        if ep.horizon != horizon || ep.steps.len() != horizon + 1 {
            return Err(Error::invalid(format!(
                "episode horizon {} does not match requested horizon {horizon}",
                ep.horizon
            )));
        }
        let mut weight = 1.0;
        for step in &ep.steps {
            if step.state >= n_states || step.action >= n_actions {
                return Err(Error::invalid(format!(
                    "step ({}, {}) outside the {n_states}x{n_actions} table",
                    step.state, step.action
                )));
            }
            values[step.state * n_actions + step.action] += weight;
            weight *= gamma;
        }
    }
    let scale =
        (1.0 - gamma) / (episodes.len() as f64 * (1.0 - gamma.powi(horizon as i32 + 1)));
    for v in &mut values {
        *v *= scale;
    }
    let total: f64 = values.iter().sum();
    for v in &mut values {
        *v /= total;
    }
    OccupancyTable::from_values(n_states, n_actions, values, true)
}

/// High-probability sup-norm radius for the visit-frequency estimate:
/// with probability at least `1 - delta` over `n` episodes, every cell of
/// the estimate is within this distance of the truncated occupancy.
///
/// Writing `l = ln(2 * cells / delta)`, the radius is
/// `(l/3 + sqrt(l^2/9 + 8 l)) / (2n)`.
pub fn plugin_error_bound(n: usize, cells: usize, delta: f64) -> Result<f64> {
    if n == 0 || cells == 0 {
        return Err(Error::invalid("need n >= 1 and at least one cell"));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!("confidence level must lie in (0,1], got {delta}")));
    }
    let l = (2.0 * cells as f64 / delta).ln();
    Ok((l / 3.0 + (l * l / 9.0 + 8.0 * l).sqrt()) / (2.0 * n as f64))
}

/// A univariate kernel `G` on `[-1,1]` with its smoothness order, validated
/// constants, and (once set) the bandwidth and smoothness constant used by
/// the error bounds. Multivariate evaluation is the product of `G` across
/// the `dim` state coordinates.
#[derive(Clone)]
pub struct KernelSpec {
    g: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    beta: f64,
    dim: usize,
    c_k: f64,
    bandwidth: f64,
    holder_const: f64,
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelSpec")
            .field("beta", &self.beta)
            .field("dim", &self.dim)
            .field("c_k", &self.c_k)
            .field("bandwidth", &self.bandwidth)
            .field("holder_const", &self.holder_const)
            .finish_non_exhaustive()
    }
}

impl KernelSpec {
    pub fn g_eval(&self, t: f64) -> f64 {
        if t.abs() > 1.0 {
            0.0
        } else {
            (self.g)(t)
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Moment constant `int |t|^beta |G(t)| dt`, from quadrature.
    pub fn c_k(&self) -> f64 {
        self.c_k
    }

    /// Bandwidth, or 0 when not set yet.
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Smoothness constant of the target class, or 0 when not set yet.
    pub fn holder_const(&self) -> f64 {
        self.holder_const
    }

    pub fn with_bandwidth(mut self, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
        }
        self.bandwidth = bandwidth;
        Ok(self)
    }

    pub fn with_holder_const(mut self, holder_const: f64) -> Result<Self> {
        if !(holder_const > 0.0 && holder_const.is_finite()) {
            return Err(Error::invalid(format!(
                "smoothness constant must be positive, got {holder_const}"
            )));
        }
        self.holder_const = holder_const;
        Ok(self)
    }
}

/// Checks that `g` is a valid order-`beta` kernel on `[-1,1]`: it integrates
/// to one (within 1e-8), its moments of order `1..=ceil(beta)-1` vanish
/// (within 1e-8), and its moment constant `C_K` is finite. Returns the
/// populated spec; bandwidth and smoothness constant start unset.
pub fn kernel_validate(
    g: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    beta: f64,
    dim: usize,
) -> Result<KernelSpec> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!("kernel order must be positive, got {beta}")));
    }
    if dim == 0 {
        return Err(Error::invalid("kernel dimension must be at least 1"));
    }
    let integral = simpson_auto(|t| g(t), -1.0, 1.0);
    if (integral - 1.0).abs() > 1e-8 {
        return Err(Error::KernelIntegral { integral });
    }
    let top_moment = beta.ceil() as usize;
    for order in 1..top_moment {
        let value = simpson_auto(|t| t.powi(order as i32) * g(t), -1.0, 1.0);
        if value.abs() > 1e-8 {
            return Err(Error::KernelMoment { order, value });
        }
    }
    let c_k = simpson_auto(|t| t.abs().powf(beta) * g(t).abs(), -1.0, 1.0);
    Ok(KernelSpec { g, beta, dim, c_k, bandwidth: 0.0, holder_const: 0.0 })
}

/// Stock kernels, all of order 2 (symmetric, so the first moment vanishes).
pub mod kernels {
    use super::{kernel_validate, KernelSpec};
    use std::sync::Arc;

    /// `0.75 (1 - t^2)` on `[-1,1]`; moment constant 0.2.
    pub fn epanechnikov(dim: usize) -> KernelSpec {
        kernel_validate(Arc::new(|t: f64| 0.75 * (1.0 - t * t)), 2.0, dim)
            .expect("stock kernel validates")
    }

    /// Constant `0.5` on `[-1,1]`; moment constant 1/3.
    pub fn box_uniform(dim: usize) -> KernelSpec {
        kernel_validate(Arc::new(|_| 0.5), 2.0, dim).expect("stock kernel validates")
    }

    /// `(15/16)(1 - t^2)^2` on `[-1,1]`; moment constant 1/7.
    pub fn quartic(dim: usize) -> KernelSpec {
        kernel_validate(
            Arc::new(|t: f64| {
                let u = 1.0 - t * t;
                15.0 / 16.0 * u * u
            }),
            2.0,
            dim,
        )
        .expect("stock kernel validates")
    }

    /// `1 - |t|` on `[-1,1]`; moment constant 1/6.
    pub fn triangle(dim: usize) -> KernelSpec {
        kernel_validate(Arc::new(|t: f64| 1.0 - t.abs()), 2.0, dim)
            .expect("stock kernel validates")
    }

    /// Looks a kernel up by name (`epanechnikov`, `box`, `quartic`,
    /// `triangle`).
    pub fn by_name(name: &str, dim: usize) -> Option<KernelSpec> {
        match name {
            "epanechnikov" => Some(epanechnikov(dim)),
            "box" => Some(box_uniform(dim)),
            "quartic" => Some(quartic(dim)),
            "triangle" => Some(triangle(dim)),
            _ => None,
        }
    }
}

/// Kernel density estimate of a continuous-state occupancy: a weighted
/// sample cloud smoothed per action by a product kernel over the state
/// coordinates.
#[derive(Debug, Clone)]
pub struct KdeModel {
    /// Sample coordinates, row-major `samples x dim`.
    points: Vec<f64>,
    actions: Vec<usize>,
    weights: Vec<f64>,
    kernel: KernelSpec,
    domain: Vec<(f64, f64)>,
    n_actions: usize,
}

impl KdeModel {
    pub fn n_samples(&self) -> usize {
        self.actions.len()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Density value at a state-action point. Nonnegative for nonnegative
    /// kernels; integrates to one over box x actions up to boundary loss.
    pub fn evaluate(&self, state: &[f64], action: usize) -> f64 {
        debug_assert_eq!(state.len(), self.kernel.dim());
        let b = self.kernel.bandwidth();
        let dim = self.kernel.dim();
        let mut total = 0.0;
        'samples: for i in 0..self.n_samples() {
            if self.actions[i] != action {
                continue;
            }
            let mut product = self.weights[i];
            for (d, &x) in state.iter().enumerate() {
                let t = (x - self.points[i * dim + d]) / b;
                if t.abs() > 1.0 {
                    continue 'samples;
                }
                product *= self.kernel.g_eval(t) / b;
            }
            total += product;
        }
        total
    }

    /// True when the point sits within one bandwidth of the domain edge,
    /// where the kernel window is clipped and the estimate is biased low.
    pub fn is_boundary(&self, state: &[f64]) -> bool {
        let b = self.kernel.bandwidth();
        state
            .iter()
            .zip(&self.domain)
            .any(|(&x, &(lo, hi))| x - lo < b || hi - x < b)
    }

    /// Midpoint-rule integral of the estimate over the domain box and all
    /// actions, on a uniform grid with `resolution` cells per dimension.
    pub fn integral_on_grid(&self, resolution: usize) -> f64 {
        let grid = crate::grid::UniformGrid::new(self.domain.clone(), resolution)
            .expect("model domain is a valid box");
        let volume = grid.cell_volume();
        let mut total = 0.0;
        for cell in 0..grid.n_cells() {
            let center = grid.center(cell);
            for action in 0..self.n_actions {
                total += self.evaluate(&center, action) * volume;
            }
        }
        total
    }

    /// Grid dump `x1,...,xd,action,density` for plotting and audits.
    pub fn to_grid_csv(&self, resolution: usize) -> String {
        let grid = crate::grid::UniformGrid::new(self.domain.clone(), resolution)
            .expect("model domain is a valid box");
        let mut out = String::new();
        for d in 1..=self.kernel.dim() {
            let _ = write!(out, "x{d},");
        }
        out.push_str("action,density\n");
        for cell in 0..grid.n_cells() {
            let center = grid.center(cell);
            for action in 0..self.n_actions {
                for coord in &center {
                    let _ = write!(out, "{coord},");
                }
                let _ = writeln!(out, "{action},{}", self.evaluate(&center, action));
            }
        }
        out
    }
}

/// Builds the kernel occupancy estimate from fixed-horizon episodes. Sample
/// `(i, h)` is the state-action pair at step `h` of episode `i` with weight
/// `gamma^h (1-gamma) / (n (1-gamma^{H+1}))`; actions index disjoint kernel
/// sums (the product kernel runs over state coordinates only).
pub fn kde_estimate(
    episodes: &[ContinuousEpisode],
    kernel: &KernelSpec,
    gamma: f64,
    horizon: usize,
    domain: &[(f64, f64)],
    n_actions: usize,
) -> Result<KdeModel> {
    if episodes.is_empty() {
        return Err(Error::invalid("no episodes to estimate from"));
    }
    if !(0.0 < gamma && gamma < 1.0) {
        return Err(Error::invalid(format!("discount must lie in (0,1), got {gamma}")));
    }
    if kernel.bandwidth() <= 0.0 {
        return Err(Error::invalid("kernel bandwidth must be set and positive"));
    }
    if kernel.dim() != domain.len() {
        return Err(Error::invalid(format!(
            "kernel dimension {} does not match domain dimension {}",
            kernel.dim(),
            domain.len()
        )));
    }
    if n_actions == 0 {
        return Err(Error::invalid("need at least one action"));
    }

    let n = episodes.len();
    let scale = (1.0 - gamma) / (n as f64 * (1.0 - gamma.powi(horizon as i32 + 1)));
    let dim = kernel.dim();
    let mut points = Vec::with_capacity(n * (horizon + 1) * dim);
    let mut actions = Vec::with_capacity(n * (horizon + 1));
    let mut weights = Vec::with_capacity(n * (horizon + 1));
    for ep in episodes {
        if ep.horizon != horizon || ep.steps.len() != horizon + 1 {
            return Err(Error::invalid(format!(
                "episode horizon {} does not match requested horizon {horizon}",
                ep.horizon
            )));
        }
        let mut weight = scale;
        for step in &ep.steps {
            if step.state.len() != dim {
                return Err(Error::invalid(format!(
                    "state dimension {} does not match kernel dimension {dim}",
                    step.state.len()
                )));
            }
            if step.action >= n_actions {
                return Err(Error::invalid(format!(
                    "action {} outside the declared {n_actions} actions",
                    step.action
                )));
            }
            points.extend_from_slice(&step.state);
            actions.push(step.action);
            weights.push(weight);
            weight *= gamma;
        }
    }
    debug_assert!(weights.iter().all(|&w| w > 0.0 && w <= 1.0));
    Ok(KdeModel {
        points,
        actions,
        weights,
        kernel: kernel.clone(),
        domain: domain.to_vec(),
        n_actions,
    })
}

/// Worst-case smoothing bias of the kernel estimate over the smoothness
/// class: `L * C_K * b^beta`. Requires bandwidth and smoothness constant to
/// be set on the spec.
pub fn kde_bias_bound(kernel: &KernelSpec) -> Result<f64> {
    if kernel.bandwidth() <= 0.0 {
        return Err(Error::invalid("bandwidth not set"));
    }
    if kernel.holder_const() <= 0.0 {
        return Err(Error::invalid("smoothness constant not set"));
    }
    Ok(kernel.holder_const() * kernel.c_k() * kernel.bandwidth().powf(kernel.beta()))
}

/// High-probability L1 error bound for the kernel estimate:
/// `L*C_K*b^beta*S*A + sqrt(ln(1/delta) / (2 n b^{2 dim}))`, where `S` and
/// `A` are the state-box volume and the action count (the measures the L1
/// norm integrates against).
pub fn kde_l1_bound(
    kernel: &KernelSpec,
    state_measure: f64,
    action_measure: f64,
    n: usize,
    delta: f64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("need at least one episode"));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!("confidence level must lie in (0,1], got {delta}")));
    }
    if !(state_measure > 0.0 && action_measure > 0.0) {
        return Err(Error::invalid("measures must be positive"));
    }
    let bias = kde_bias_bound(kernel)? * state_measure * action_measure;
    let b = kernel.bandwidth();
    let deviation =
        ((1.0 / delta).ln() / (2.0 * n as f64 * b.powi(2 * kernel.dim() as i32))).sqrt();
    Ok(bias + deviation)
}
