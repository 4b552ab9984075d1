use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use super::{Coupling, SinkhornConfig, Stabilization};
use crate::embed_io::{check_probability, squared_euclidean_cost, DiscreteDistribution};
use crate::error::{Error, Result};

/// Output of an entropic transport solve.
///
/// The plan is `P[i][j] = exp((f[i] + g[j] - C[i][j]) / epsilon)`; `f` and `g`
/// are the dual potentials of the row and column marginals.
#[derive(Clone, Debug)]
pub struct SinkhornSolution {
    pub coupling: Coupling,
    pub f: Array1<f64>,
    pub g: Array1<f64>,
    pub epsilon: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Max marginal violation of the returned plan.
    pub violation: f64,
}

impl SinkhornSolution {
    /// `<P, C>` of the returned plan.
    pub fn transport_cost(&self, cost: ArrayView2<f64>) -> f64 {
        self.coupling.transport_cost(cost)
    }
}

/// Entropic optimal transport between `a` and `b` under `cost`.
///
/// Non-convergence is not an error: the last iterate comes back with
/// `converged == false`.
pub fn sinkhorn(
    a: &Array1<f64>,
    b: &Array1<f64>,
    cost: ArrayView2<f64>,
    cfg: &SinkhornConfig,
) -> Result<SinkhornSolution> {
    sinkhorn_warm(a, b, cost, cfg, None)
}

/// [`sinkhorn`] started from given dual potentials, e.g. those of a nearby problem.
pub fn sinkhorn_warm(
    a: &Array1<f64>,
    b: &Array1<f64>,
    cost: ArrayView2<f64>,
    cfg: &SinkhornConfig,
    init: Option<(&Array1<f64>, &Array1<f64>)>,
) -> Result<SinkhornSolution> {
    cfg.validate()?;
    if cost.dim() != (a.len(), b.len()) {
        return Err(Error::Dimension(format!(
            "cost is {:?} but marginals have lengths ({}, {})",
            cost.dim(),
            a.len(),
            b.len()
        )));
    }
    check_probability(a, "row marginal")?;
    check_probability(b, "column marginal")?;
    if a.iter().chain(b.iter()).any(|&x| x <= 0.0) {
        return Err(Error::InvalidInput("marginals must be strictly positive".into()));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numerical("cost matrix has non-finite entries".into()));
    }
    let eps = cfg.epsilon.resolve(cost);
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Numerical(format!("resolved epsilon {eps} is not positive")));
    }

    let log_a = a.mapv(f64::ln);
    let log_b = b.mapv(f64::ln);
    let solver_at = |eps: f64| Solver {
        a: a.view(),
        b: b.view(),
        cost,
        eps,
        log_a: &log_a,
        log_b: &log_b,
    };
    let solver = solver_at(eps);
    let (f, g, iterations, converged) = match cfg.stabilization {
        Stabilization::Never => solver.run_naive(cfg)?,
        Stabilization::Always => solver.run_log(cfg, init)?,
        Stabilization::Auto => {
            let mut warm = init.map(|(f, g)| (f.clone(), g.clone()));
            let mut spent = 0;
            if warm.is_none() && cfg.epsilon_scaling {
                // Anneal from the cost spread down to the target regularization.
                let (lo, hi) = cost
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| (lo.min(c), hi.max(c)));
                let mut stage_eps = 0.5 * (hi - lo);
                let stage_cfg = SinkhornConfig {
                    tolerance: cfg.tolerance.max(1e-4),
                    max_iters: SCALING_STAGE_ITERS,
                    ..*cfg
                };
                while stage_eps > 2.0 * eps {
                    let stage = solver_at(stage_eps).run_absorbing(
                        &stage_cfg,
                        warm.as_ref().map(|(f, g)| (f, g)),
                    )?;
                    spent += stage.2;
                    warm = Some((stage.0, stage.1));
                    stage_eps *= SCALING_FACTOR;
                }
            }
            let (f, g, it, ok) = solver.run_absorbing(cfg, warm.as_ref().map(|(f, g)| (f, g)))?;
            (f, g, it + spent, ok)
        }
    };

    let mut matrix = solver.plan(&f, &g);
    if matrix.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numerical("NaN in transport plan".into()));
    }
    let violation = marginal_violation(&matrix, a, b);
    round_to_marginals(&mut matrix, a, b);
    let coupling = Coupling {
        matrix,
        row_marginal: a.clone(),
        col_marginal: b.clone(),
    };
    Ok(SinkhornSolution {
        coupling,
        f,
        g,
        epsilon: eps,
        iterations,
        converged: converged || violation <= cfg.tolerance,
        violation,
    })
}

/// Iteration cap for each intermediate stage of epsilon scaling.
const SCALING_STAGE_ITERS: usize = 100;
/// Ratio between consecutive regularization levels during epsilon scaling.
const SCALING_FACTOR: f64 = 0.5;

fn marginal_violation(p: &Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let rows = p.sum_axis(Axis(1));
    let cols = p.sum_axis(Axis(0));
    rows.iter()
        .zip(a)
        .chain(cols.iter().zip(b))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Projects a nearly feasible plan onto the transport polytope: shrink rows
/// and columns that carry too much mass, then spread the deficit as a rank-one
/// correction. Entries stay nonnegative and move by at most the violation.
fn round_to_marginals(p: &mut Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) {
    let rows = p.sum_axis(Axis(1));
    for (mut row, (&s, &target)) in p.rows_mut().into_iter().zip(rows.iter().zip(a)) {
        if s > target {
            row *= target / s;
        }
    }
    let cols = p.sum_axis(Axis(0));
    for (mut col, (&s, &target)) in p.columns_mut().into_iter().zip(cols.iter().zip(b)) {
        if s > target {
            col *= target / s;
        }
    }
    // deficits can come out as -1 ulp after scaling; clamping keeps P >= 0
    let err_r: Array1<f64> = (a - &p.sum_axis(Axis(1))).mapv(|v| v.max(0.0));
    let err_c: Array1<f64> = (b - &p.sum_axis(Axis(0))).mapv(|v| v.max(0.0));
    let total = err_r.sum();
    if total > 0.0 {
        Zip::indexed(p).for_each(|(i, j), x| *x += err_r[i] * err_c[j] / total);
    }
}

/// `W_2^2` between two distributions: the sharp cost `<P, C>` of the entropic plan.
pub fn wasserstein_sq(
    mu: &DiscreteDistribution,
    nu: &DiscreteDistribution,
    cfg: &SinkhornConfig,
) -> Result<f64> {
    let cost = squared_euclidean_cost(mu.support.view(), nu.support.view())?;
    let sol = sinkhorn(&mu.mass, &nu.mass, cost.view(), cfg)?;
    Ok(sol.transport_cost(cost.view()).max(0.0))
}

struct Solver<'a> {
    a: ArrayView1<'a, f64>,
    b: ArrayView1<'a, f64>,
    cost: ArrayView2<'a, f64>,
    eps: f64,
    log_a: &'a Array1<f64>,
    log_b: &'a Array1<f64>,
}

impl Solver<'_> {
    fn plan(&self, f: &Array1<f64>, g: &Array1<f64>) -> Array2<f64> {
        let mut k = Array2::zeros(self.cost.dim());
        Zip::indexed(&mut k).and(&self.cost).for_each(|(i, j), k, &c| {
            *k = ((f[i] + g[j] - c) / self.eps).exp();
        });
        k
    }

    /// Exact log-domain updates of `f` then `g`.
    fn log_step(&self, f: &mut Array1<f64>, g: &mut Array1<f64>) {
        let eps = self.eps;
        for (i, row) in self.cost.rows().into_iter().enumerate() {
            let lse = log_sum_exp(row.iter().zip(g.iter()).map(|(&c, &gj)| (gj - c) / eps));
            f[i] = eps * (self.log_a[i] - lse);
        }
        for (j, col) in self.cost.columns().into_iter().enumerate() {
            let lse = log_sum_exp(col.iter().zip(f.iter()).map(|(&c, &fi)| (fi - c) / eps));
            g[j] = eps * (self.log_b[j] - lse);
        }
    }

    /// Row-marginal violation of the plan defined by `(f, g)`.
    fn log_row_violation(&self, f: &Array1<f64>, g: &Array1<f64>) -> f64 {
        let eps = self.eps;
        self.cost
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                let s: f64 = row
                    .iter()
                    .zip(g.iter())
                    .map(|(&c, &gj)| ((f[i] + gj - c) / eps).exp())
                    .sum();
                (s - self.a[i]).abs()
            })
            .fold(0.0, f64::max)
    }

    fn run_log(
        &self,
        cfg: &SinkhornConfig,
        init: Option<(&Array1<f64>, &Array1<f64>)>,
    ) -> Result<(Array1<f64>, Array1<f64>, usize, bool)> {
        let (mut f, mut g) = self.initial(init);
        for it in 1..=cfg.max_iters {
            self.log_step(&mut f, &mut g);
            if f.iter().chain(g.iter()).any(|x| x.is_nan()) {
                return Err(Error::Numerical(format!("NaN potential at iteration {it}")));
            }
            if self.log_row_violation(&f, &g) <= cfg.tolerance {
                return Ok((f, g, it, true));
            }
        }
        Ok((f, g, cfg.max_iters, false))
    }

    fn run_naive(&self, cfg: &SinkhornConfig) -> Result<(Array1<f64>, Array1<f64>, usize, bool)> {
        let kernel = self.cost.mapv(|c| (-c / self.eps).exp());
        let mut u = Array1::<f64>::ones(self.a.len());
        let mut v = Array1::<f64>::ones(self.b.len());
        let mut converged = false;
        let mut iterations = cfg.max_iters;
        for it in 1..=cfg.max_iters {
            let kv = kernel.dot(&v);
            if it > 1 && row_violation(&u, &kv, &self.a) <= cfg.tolerance {
                converged = true;
                iterations = it - 1;
                break;
            }
            u = &self.a / &kv;
            let ktu = kernel.t().dot(&u);
            v = &self.b / &ktu;
            if u.iter().chain(v.iter()).any(|x| !x.is_finite() || *x == 0.0) {
                return Err(Error::Numerical(format!(
                    "scaling overflow at iteration {it} (epsilon {:e} too small without stabilization)",
                    self.eps
                )));
            }
        }
        Ok((u.mapv(|x| self.eps * x.ln()), v.mapv(|x| self.eps * x.ln()), iterations, converged))
    }

    fn initial(&self, init: Option<(&Array1<f64>, &Array1<f64>)>) -> (Array1<f64>, Array1<f64>) {
        match init {
            Some((f, g)) if f.len() == self.a.len() && g.len() == self.b.len() => (f.clone(), g.clone()),
            _ => (Array1::zeros(self.a.len()), Array1::zeros(self.b.len())),
        }
    }

    fn run_absorbing(
        &self,
        cfg: &SinkhornConfig,
        init: Option<(&Array1<f64>, &Array1<f64>)>,
    ) -> Result<(Array1<f64>, Array1<f64>, usize, bool)> {
        let eps = self.eps;
        let thr = cfg.log_domain_threshold;
        let (mut f, mut g) = self.initial(init);
        // One exact step makes every row and column of the kernel carry mass.
        self.log_step(&mut f, &mut g);
        let mut kernel = self.plan(&f, &g);
        // contiguous copy so K^T u streams memory like K v does
        let mut kernel_t = kernel.t().as_standard_layout().into_owned();
        let mut u = Array1::<f64>::ones(self.a.len());
        let mut v = Array1::<f64>::ones(self.b.len());

        for it in 1..=cfg.max_iters {
            let kv = kernel.dot(&v);
            if row_violation(&u, &kv, &self.a) <= cfg.tolerance {
                absorb(&mut f, &u, eps);
                absorb(&mut g, &v, eps);
                return Ok((f, g, it - 1, true));
            }
            let u_next = &self.a / &kv;
            let ktu = kernel_t.dot(&u_next);
            let v_next = &self.b / &ktu;

            let finite = u_next
                .iter()
                .chain(v_next.iter())
                .all(|x| x.is_finite() && *x > 0.0);
            if !finite {
                // Kernel underflow: fold the last good scalings in and take an exact step.
                absorb(&mut f, &u, eps);
                absorb(&mut g, &v, eps);
                self.log_step(&mut f, &mut g);
                if f.iter().chain(g.iter()).any(|x| x.is_nan()) {
                    return Err(Error::Numerical(format!("NaN potential at iteration {it}")));
                }
                kernel = self.plan(&f, &g);
                kernel_t = kernel.t().as_standard_layout().into_owned();
                u.fill(1.0);
                v.fill(1.0);
                continue;
            }
            u = u_next;
            v = v_next;
            let out_of_range = u
                .iter()
                .chain(v.iter())
                .any(|&x| x > thr || x < 1.0 / thr);
            if out_of_range {
                absorb(&mut f, &u, eps);
                absorb(&mut g, &v, eps);
                kernel = self.plan(&f, &g);
                kernel_t = kernel.t().as_standard_layout().into_owned();
                u.fill(1.0);
                v.fill(1.0);
            }
        }
        absorb(&mut f, &u, eps);
        absorb(&mut g, &v, eps);
        Ok((f, g, cfg.max_iters, false))
    }
}

fn absorb(potential: &mut Array1<f64>, scaling: &Array1<f64>, eps: f64) {
    Zip::from(potential).and(scaling).for_each(|p, &s| *p += eps * s.ln());
}

fn row_violation(u: &Array1<f64>, kv: &Array1<f64>, a: &ArrayView1<f64>) -> f64 {
    u.iter()
        .zip(kv)
        .zip(a)
        .map(|((u, kv), a)| (u * kv - a).abs())
        .fold(0.0, f64::max)
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot::{exact_ot_oracle, Epsilon};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(n: usize) -> Array1<f64> {
        Array1::from_elem(n, 1.0 / n as f64)
    }

    fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
        let v: Array1<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let s = v.sum();
        v / s
    }

    #[test]
    fn zero_cost_gives_product_measure() {
        let cfg = SinkhornConfig::default();
        let sol = sinkhorn(&uniform(2), &uniform(2), Array2::zeros((2, 2)).view(), &cfg).unwrap();
        for p in sol.coupling.matrix.iter() {
            assert!((p - 0.25).abs() < 1e-12);
        }
        assert!(sol.converged);
    }

    #[test]
    fn matched_supports_concentrate_on_diagonal() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 3.0]];
        let c = squared_euclidean_cost(x.view(), x.view()).unwrap();
        let cfg = SinkhornConfig {
            epsilon: Epsilon::MedianRelative(1e-3),
            ..Default::default()
        };
        let sol = sinkhorn(&uniform(4), &uniform(4), c.view(), &cfg).unwrap();
        for (i, row) in sol.coupling.matrix.rows().into_iter().enumerate() {
            let arg = crate::util::argmax(row.iter().copied()).unwrap();
            assert_eq!(arg, i);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = SinkhornConfig::default();
        let c = Array2::zeros((2, 3));
        assert!(matches!(
            sinkhorn(&uniform(2), &uniform(2), c.view(), &cfg),
            Err(Error::Dimension(_))
        ));
        let a = array![1.0, 0.0];
        assert!(sinkhorn(&a, &uniform(2), Array2::zeros((2, 2)).view(), &cfg).is_err());
        let a = array![0.7, 0.7];
        assert!(sinkhorn(&a, &uniform(2), Array2::zeros((2, 2)).view(), &cfg).is_err());
    }

    #[test]
    fn naive_overflow_is_fatal_but_auto_recovers() {
        let c = array![[0.0, 1000.0], [1000.0, 0.0], [800.0, 900.0]];
        let a = array![0.2, 0.3, 0.5];
        let b = array![0.6, 0.4];
        let naive = SinkhornConfig {
            epsilon: Epsilon::Absolute(1.0),
            stabilization: Stabilization::Never,
            ..Default::default()
        };
        assert!(matches!(sinkhorn(&a, &b, c.view(), &naive), Err(Error::Numerical(_))));
        let auto = SinkhornConfig {
            stabilization: Stabilization::Auto,
            ..naive
        };
        let sol = sinkhorn(&a, &b, c.view(), &auto).unwrap();
        assert!(sol.converged);
        assert!(sol.violation <= 1e-6);
    }

    #[test]
    fn stabilized_and_naive_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let (k, l) = (rng.random_range(2..8), rng.random_range(2..8));
            let a = random_simplex(&mut rng, k);
            let b = random_simplex(&mut rng, l);
            let c = Array2::from_shape_fn((k, l), |_| rng.random::<f64>());
            let base = SinkhornConfig {
                epsilon: Epsilon::Absolute(0.1),
                tolerance: 1e-14,
                max_iters: 100_000,
                ..Default::default()
            };
            let plans: Vec<Array2<f64>> = [Stabilization::Never, Stabilization::Auto, Stabilization::Always]
                .into_iter()
                .map(|s| {
                    let cfg = SinkhornConfig { stabilization: s, ..base };
                    sinkhorn(&a, &b, c.view(), &cfg).unwrap().coupling.matrix
                })
                .collect();
            for p in &plans[1..] {
                for (x, y) in p.iter().zip(plans[0].iter()) {
                    assert!((x - y).abs() <= 1e-8, "{x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn potentials_reproduce_the_plan() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = Array2::from_shape_fn((4, 6), |_| rng.random::<f64>() * 5.0);
        let a = random_simplex(&mut rng, 4);
        let b = random_simplex(&mut rng, 6);
        let cfg = SinkhornConfig {
            epsilon: Epsilon::Absolute(0.05),
            ..Default::default()
        };
        let sol = sinkhorn(&a, &b, c.view(), &cfg).unwrap();
        for ((i, j), &p) in sol.coupling.matrix.indexed_iter() {
            // equal up to the final rounding onto the marginals
            let q = ((sol.f[i] + sol.g[j] - c[[i, j]]) / sol.epsilon).exp();
            assert!((p - q).abs() <= sol.violation + 1e-15);
        }
    }

    #[test]
    fn warm_start_converges_faster() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = Array2::from_shape_fn((30, 30), |_| rng.random::<f64>());
        let cfg = SinkhornConfig {
            epsilon: Epsilon::Absolute(0.01),
            max_iters: 10_000,
            ..Default::default()
        };
        let cold = sinkhorn(&uniform(30), &uniform(30), c.view(), &cfg).unwrap();
        let warm = sinkhorn_warm(&uniform(30), &uniform(30), c.view(), &cfg, Some((&cold.f, &cold.g))).unwrap();
        assert!(warm.iterations <= 1);
        assert!(warm.iterations < cold.iterations);
    }

    #[test]
    fn wasserstein_examples() {
        let cfg = SinkhornConfig::default();
        let mu = DiscreteDistribution::uniform(array![[0.0, 0.0]]);
        let nu = DiscreteDistribution::uniform(array![[3.0, 4.0]]);
        assert_eq!(wasserstein_sq(&mu, &nu, &cfg).unwrap(), 25.0);

        let x = array![[0.0, 0.0], [1.0, 2.0], [-1.0, 0.5]];
        let mu = DiscreteDistribution::uniform(x);
        let small = SinkhornConfig {
            epsilon: Epsilon::MedianRelative(1e-3),
            ..cfg
        };
        assert!(wasserstein_sq(&mu, &mu, &small).unwrap() <= 1e-4);
    }

    #[test]
    fn three_point_wasserstein_close_to_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let xs = Array2::from_shape_fn((3, 2), |_| rng.random::<f64>() * 4.0);
            let ys = Array2::from_shape_fn((3, 2), |_| rng.random::<f64>() * 4.0);
            let a = random_simplex(&mut rng, 3);
            let b = random_simplex(&mut rng, 3);
            let mu = DiscreteDistribution::new(xs.clone(), a.clone()).unwrap();
            let nu = DiscreteDistribution::new(ys.clone(), b.clone()).unwrap();
            let cfg = SinkhornConfig {
                epsilon: Epsilon::MedianRelative(1e-3),
                ..Default::default()
            };
            let w = wasserstein_sq(&mu, &nu, &cfg).unwrap();
            let c = squared_euclidean_cost(xs.view(), ys.view()).unwrap();
            let (_, exact) = exact_ot_oracle(&a, &b, c.view()).unwrap();
            assert!(w >= exact);
            assert!(w <= exact * 1.05 + 1e-12, "{w} vs {exact}");
        }
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        let v = [-1000.0, -1000.0];
        assert!((log_sum_exp(v.iter().copied()) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp([f64::NEG_INFINITY].iter().copied()), f64::NEG_INFINITY);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, usize, usize, f64)> {
            (1usize..10, 1usize..10, 1e-3f64..1.0).prop_flat_map(|(k, l, rel)| {
                (
                    prop::collection::vec(0.05f64..1.0, k),
                    prop::collection::vec(0.05f64..1.0, l),
                    prop::collection::vec(0.0f64..50.0, k * l),
                    Just(k),
                    Just(l),
                    Just(rel),
                )
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn plans_are_feasible_and_nonnegative((a, b, c, k, l, rel) in instance()) {
                let norm = |v: Vec<f64>| { let s: f64 = v.iter().sum(); Array1::from(v) / s };
                let (a, b) = (norm(a), norm(b));
                let cost = Array2::from_shape_vec((k, l), c).unwrap();
                let cfg = SinkhornConfig { epsilon: Epsilon::MedianRelative(rel), ..Default::default() };
                let sol = sinkhorn(&a, &b, cost.view(), &cfg).unwrap();
                prop_assert!(sol.coupling.matrix.iter().all(|&p| p >= 0.0));
                prop_assert!(sol.coupling.max_violation() <= 1e-6);
                let exact = if k * l <= crate::ot::EXACT_MAX_CELLS {
                    Some(exact_ot_oracle(&a, &b, cost.view()).unwrap().1)
                } else {
                    None
                };
                if let Some(exact) = exact {
                    prop_assert!(sol.transport_cost(cost.view()) >= exact - 1e-9);
                }
            }

            #[test]
            fn shifting_the_cost_keeps_the_plan((a, b, c, k, l, _rel) in instance(), shift in -5.0f64..5.0) {
                let norm = |v: Vec<f64>| { let s: f64 = v.iter().sum(); Array1::from(v) / s };
                let (a, b) = (norm(a), norm(b));
                let cost = Array2::from_shape_vec((k, l), c).unwrap();
                let cfg = SinkhornConfig { epsilon: Epsilon::Absolute(1.0), epsilon_scaling: false, ..Default::default() };
                let p = sinkhorn(&a, &b, cost.view(), &cfg).unwrap().coupling.matrix;
                let shifted = cost.mapv(|v| v + shift);
                let q = sinkhorn(&a, &b, shifted.view(), &cfg).unwrap().coupling.matrix;
                let gap = (&p - &q).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                prop_assert!(gap <= 1e-6, "{}", gap);
            }
        }
    }
}
