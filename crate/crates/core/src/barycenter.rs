//! Free-support Wasserstein barycenters of weighted point clouds.
//!
//! Support locations follow the fixed-point update of Cuturi and Doucet; the
//! optional mass update is one entropic mirror-descent step per iteration on
//! the barycenter-side dual potentials.

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::embed_io::{check_probability, squared_euclidean_cost, DiscreteDistribution};
use crate::error::{Error, Result};
use crate::ot::{sinkhorn, Coupling, SinkhornConfig};

/// Support points lighter than this are treated as dead: their locations are
/// frozen and they are left out of the transport solves.
pub const DEAD_MASS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct BarycenterConfig {
    /// Number of support points; `None` picks twice the average input size.
    pub support_size: Option<usize>,
    /// Weight of each input; `None` means uniform.
    pub lambda: Option<Vec<f64>>,
    pub max_iters: usize,
    /// Stop once no support point moves farther than this.
    pub location_tolerance: f64,
    pub optimize_weights: bool,
    /// Mirror-descent step; `None` means `0.5 / m`.
    pub weight_step: Option<f64>,
    pub seed: u64,
    /// Independent random starts (seeds `seed`, `seed + 1`, ...); the run
    /// with the lowest final objective wins.
    pub restarts: usize,
}

impl Default for BarycenterConfig {
    fn default() -> Self {
        Self {
            support_size: None,
            lambda: None,
            max_iters: 10,
            location_tolerance: 1e-4,
            optimize_weights: true,
            weight_step: None,
            seed: 0,
            restarts: 1,
        }
    }
}

/// Per-run values of the optional config fields.
#[derive(Clone, Debug)]
struct Resolved {
    support_size: usize,
    lambda: Array1<f64>,
    weight_step: f64,
}

impl BarycenterConfig {
    fn resolve(&self, inputs: &[DiscreteDistribution]) -> Result<Resolved> {
        let m = inputs.len();
        if m == 0 {
            return Err(Error::InvalidInput("barycenter of zero distributions".into()));
        }
        let support_size = match self.support_size {
            Some(0) => return Err(Error::Config("support_size must be at least 1".into())),
            Some(s) => s,
            None => default_support_size(inputs.iter().map(|d| d.len())),
        };
        let lambda = match &self.lambda {
            None => Array1::from_elem(m, 1.0 / m as f64),
            Some(l) if l.len() != m => {
                return Err(Error::Config(format!("{} lambda weights for {m} inputs", l.len())));
            }
            Some(l) => {
                let l = Array1::from(l.clone());
                check_probability(&l, "lambda").map_err(|e| Error::Config(e.to_string()))?;
                l
            }
        };
        let weight_step = self.weight_step.unwrap_or(0.5 / m as f64);
        if !(weight_step > 0.0) || !weight_step.is_finite() {
            return Err(Error::Config(format!("weight_step must be positive, got {weight_step}")));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("barycenter max_iters must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be at least 1".into()));
        }
        if !(self.location_tolerance > 0.0) {
            return Err(Error::Config("location_tolerance must be positive".into()));
        }
        Ok(Resolved {
            support_size,
            lambda,
            weight_step,
        })
    }
}

/// Twice the average input size, at least 1.
pub fn default_support_size(sizes: impl Iterator<Item = usize>) -> usize {
    let (count, total) = sizes.fold((0usize, 0usize), |(c, t), n| (c + 1, t + n));
    if count == 0 {
        return 1;
    }
    ((2 * total + count / 2) / count).max(1)
}

/// One row of the convergence log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `sum_i lambda_i <P_i, C_i>` before this iteration's updates.
    pub objective: f64,
    /// Largest support-point move made by this iteration.
    pub displacement: f64,
}

#[derive(Clone, Debug)]
pub struct BarycenterState {
    pub distribution: DiscreteDistribution,
    /// Input-to-barycenter plans, `n_i x s`.
    pub couplings: Vec<Coupling>,
    /// Barycenter-side dual potential of each transport (zero on dead points).
    pub potentials: Vec<Array1<f64>>,
    /// `sum_i lambda_i W_2^2(pi_i, nu)` for the current support and couplings.
    pub objective: f64,
    pub iteration: usize,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    /// Transports that hit the Sinkhorn iteration cap.
    pub unconverged_solves: usize,
    /// Mass updates were switched off after a rejected step.
    pub weights_frozen: bool,
}

impl BarycenterState {
    /// Objective values: one per iteration, then the final one.
    pub fn objective_trace(&self) -> Vec<f64> {
        self.history
            .iter()
            .map(|r| r.objective)
            .chain(std::iter::once(self.objective))
            .collect()
    }
}

/// `s x d` support with i.i.d. standard-normal entries and uniform mass.
pub fn init_support(d: usize, s: usize, seed: u64) -> Result<DiscreteDistribution> {
    if s == 0 {
        return Err(Error::Config("support_size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let support = Array2::from_shape_simple_fn((s, d), || StandardNormal.sample(&mut rng));
    Ok(DiscreteDistribution::uniform(support))
}

/// `Y_l <- sum_i lambda_i (P_i^T X_i)_l / b_l`; dead points keep their location.
pub fn update_locations(
    state: &BarycenterState,
    inputs: &[DiscreteDistribution],
    lambda: &Array1<f64>,
) -> Array2<f64> {
    let mass = &state.distribution.mass;
    let mut acc = Array2::<f64>::zeros(state.distribution.support.raw_dim());
    for ((coupling, input), &l) in state.couplings.iter().zip(inputs).zip(lambda) {
        acc.scaled_add(l, &coupling.matrix.t().dot(&input.support));
    }
    let mut next = state.distribution.support.clone();
    for (l, (mut row, &b)) in next.rows_mut().into_iter().zip(mass).enumerate() {
        if b >= DEAD_MASS {
            row.assign(&(&acc.row(l) / b));
        }
    }
    next
}

/// Mirror-descent step `b <- normalize(b * exp(-step * G / |G|_inf))` with
/// `G = sum_i lambda_i g_i` and each `g_i` centered over the live points.
/// Scaling by the largest entry makes the step independent of the cost
/// units: no log-mass moves by more than `step`. Points that fall below
/// [`DEAD_MASS`] are zeroed.
pub fn update_weights(state: &BarycenterState, lambda: &Array1<f64>, step: f64) -> Array1<f64> {
    let mass = &state.distribution.mass;
    let live: Vec<usize> = (0..mass.len()).filter(|&l| mass[l] > 0.0).collect();
    let mut grad = Array1::<f64>::zeros(mass.len());
    for (g, &lam) in state.potentials.iter().zip(lambda) {
        let mean = live.iter().map(|&l| g[l]).sum::<f64>() / live.len() as f64;
        for &l in &live {
            grad[l] += lam * (g[l] - mean);
        }
    }
    let scale = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(scale > 0.0) || !scale.is_finite() {
        return mass.clone();
    }
    grad /= scale;
    let mut log_b = Array1::from_elem(mass.len(), f64::NEG_INFINITY);
    for &l in &live {
        log_b[l] = mass[l].ln() - step * grad[l];
    }
    let top = log_b.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut next = log_b.mapv(|v| (v - top).exp());
    let total = next.sum();
    next /= total;
    if next.iter().any(|&b| b > 0.0 && b < DEAD_MASS) {
        next.mapv_inplace(|b| if b < DEAD_MASS { 0.0 } else { b });
        let total = next.sum();
        next /= total;
    }
    next
}

/// Barycenter from a seeded standard-normal start, placed at the weighted
/// mean of the inputs.
pub fn compute_barycenter(
    inputs: &[DiscreteDistribution],
    cfg: &BarycenterConfig,
    ot_cfg: &SinkhornConfig,
) -> Result<BarycenterState> {
    let resolved = cfg.resolve(inputs)?;
    let d = check_inputs(inputs)?;
    let mut center = Array1::<f64>::zeros(d);
    for (input, &l) in inputs.iter().zip(&resolved.lambda) {
        center.scaled_add(l, &input.mass.dot(&input.support));
    }
    let mut best: Option<BarycenterState> = None;
    for r in 0..cfg.restarts {
        let mut init = init_support(d, resolved.support_size, cfg.seed.wrapping_add(r as u64))?;
        init.support += &center;
        let state = run(inputs, init, &resolved, cfg, ot_cfg)?;
        if best.as_ref().is_none_or(|b| state.objective < b.objective) {
            best = Some(state);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Barycenter iterations from a given starting distribution (warm start).
pub fn compute_barycenter_from(
    inputs: &[DiscreteDistribution],
    init: DiscreteDistribution,
    cfg: &BarycenterConfig,
    ot_cfg: &SinkhornConfig,
) -> Result<BarycenterState> {
    let mut resolved = cfg.resolve(inputs)?;
    let d = check_inputs(inputs)?;
    if init.dim() != d {
        return Err(Error::Dimension(format!("initial support is {}-d, inputs are {d}-d", init.dim())));
    }
    check_probability(&init.mass, "initial barycenter mass")?;
    resolved.support_size = init.len();
    run(inputs, init, &resolved, cfg, ot_cfg)
}

fn check_inputs(inputs: &[DiscreteDistribution]) -> Result<usize> {
    let d = inputs[0].dim();
    for (i, input) in inputs.iter().enumerate() {
        if input.dim() != d {
            return Err(Error::Dimension(format!("input {i} is {}-d, input 0 is {d}-d", input.dim())));
        }
        if input.support.nrows() != input.mass.len() {
            return Err(Error::Dimension(format!("input {i} has mismatched support and mass")));
        }
        check_probability(&input.mass, "input mass")?;
        if input.support.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!("input {i} has non-finite coordinates")));
        }
    }
    Ok(d)
}

fn run(
    inputs: &[DiscreteDistribution],
    init: DiscreteDistribution,
    resolved: &Resolved,
    cfg: &BarycenterConfig,
    ot_cfg: &SinkhornConfig,
) -> Result<BarycenterState> {
    let mut state = solve_transports(inputs, init, &resolved.lambda, ot_cfg)?;
    let mut weights_active = cfg.optimize_weights;
    for iteration in 0..cfg.max_iters {
        let objective = state.objective;
        let support = update_locations(&state, inputs, &resolved.lambda);
        let displacement = (&support - &state.distribution.support)
            .rows()
            .into_iter()
            .map(|r| r.dot(&r).sqrt())
            .fold(0.0, f64::max);
        log::debug!("barycenter iteration {iteration}: objective {objective:.6e}, displacement {displacement:.3e}");
        let mut history = std::mem::take(&mut state.history);
        history.push(IterationRecord {
            iteration,
            objective,
            displacement,
        });
        let unconverged = state.unconverged_solves;
        let mass = state.distribution.mass.clone();
        state = solve_transports(inputs, DiscreteDistribution { support, mass }, &resolved.lambda, ot_cfg)?;
        if weights_active {
            let moved = state.unconverged_solves;
            let (next, accepted) = weighted_step(inputs, state, resolved, ot_cfg)?;
            state = next;
            state.unconverged_solves += moved;
            // the objective is convex in the mass at fixed support, so a
            // rejected step means the mass is already close to optimal here
            weights_active = accepted;
            state.weights_frozen = !accepted;
        }
        state.history = history;
        state.iteration = iteration + 1;
        state.unconverged_solves += unconverged;
        if displacement <= cfg.location_tolerance {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}

/// Shrinkings (by 4) of the weight step tried before a mass update is abandoned.
const MAX_STEP_SHRINKS: usize = 2;

/// Mirror-descent mass update at fixed support, with the step shrunk until
/// the objective does not increase. If no trial step helps, `current` is
/// returned unchanged together with `false`.
fn weighted_step(
    inputs: &[DiscreteDistribution],
    current: BarycenterState,
    resolved: &Resolved,
    ot_cfg: &SinkhornConfig,
) -> Result<(BarycenterState, bool)> {
    let mut step = resolved.weight_step;
    for _ in 0..=MAX_STEP_SHRINKS {
        let mass = update_weights(&current, &resolved.lambda, step);
        let dist = DiscreteDistribution {
            support: current.distribution.support.clone(),
            mass,
        };
        let trial = solve_transports(inputs, dist, &resolved.lambda, ot_cfg)?;
        if trial.objective <= current.objective {
            return Ok((trial, true));
        }
        step *= 0.25;
    }
    log::debug!("barycenter weight step rejected at every trial size");
    Ok((current, false))
}

/// Solves the input-to-barycenter transports on the live support points.
fn solve_transports(
    inputs: &[DiscreteDistribution],
    dist: DiscreteDistribution,
    lambda: &Array1<f64>,
    ot_cfg: &SinkhornConfig,
) -> Result<BarycenterState> {
    let s = dist.len();
    let live: Vec<usize> = (0..s).filter(|&l| dist.mass[l] > 0.0).collect();
    let all_live = live.len() == s;
    let (live_support, live_mass) = if all_live {
        (dist.support.clone(), dist.mass.clone())
    } else {
        (dist.support.select(Axis(0), &live), dist.mass.select(Axis(0), &live))
    };

    let mut couplings = Vec::with_capacity(inputs.len());
    let mut potentials = Vec::with_capacity(inputs.len());
    let mut objective = 0.0;
    let mut unconverged = 0;
    for (input, &lam) in inputs.iter().zip(lambda) {
        let cost = squared_euclidean_cost(input.support.view(), live_support.view())?;
        let sol = sinkhorn(&input.mass, &live_mass, cost.view(), ot_cfg)?;
        if !sol.converged {
            unconverged += 1;
        }
        objective += lam * sol.transport_cost(cost.view());
        let (matrix, g) = if all_live {
            (sol.coupling.matrix, sol.g)
        } else {
            let mut matrix = Array2::zeros((input.len(), s));
            let mut g = Array1::zeros(s);
            for (k, &l) in live.iter().enumerate() {
                matrix.column_mut(l).assign(&sol.coupling.matrix.column(k));
                g[l] = sol.g[k];
            }
            (matrix, g)
        };
        couplings.push(Coupling {
            matrix,
            row_marginal: input.mass.clone(),
            col_marginal: dist.mass.clone(),
        });
        potentials.push(g);
    }
    Ok(BarycenterState {
        distribution: dist,
        couplings,
        potentials,
        objective,
        iteration: 0,
        history: Vec::new(),
        converged: false,
        unconverged_solves: unconverged,
        weights_frozen: false,
    })
}
