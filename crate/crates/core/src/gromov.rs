//! Entropic Gromov-Wasserstein between two metric-measure spaces with the
//! square loss, solved by repeated Sinkhorn projections of the linearized cost.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::embed_io::check_probability;
use crate::error::{Error, Result};
use crate::ot::{sinkhorn_warm, Coupling, Epsilon, SinkhornConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GWConfig {
    pub epsilon: f64,
    pub max_outer_iters: usize,
    /// Inner Sinkhorn settings; its epsilon is replaced by `epsilon`.
    pub inner: SinkhornConfig,
    /// Stop once no coupling entry moves by more than this between iterations.
    pub tolerance: f64,
}

impl Default for GWConfig {
    fn default() -> Self {
        Self {
            epsilon: 5e-5,
            max_outer_iters: 200,
            inner: SinkhornConfig::default(),
            tolerance: 1e-7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GWSolution {
    pub coupling: Coupling,
    /// Square-loss objective of the coupling after each outer iteration.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Outer iterations whose inner Sinkhorn hit its iteration cap.
    pub inner_unconverged: usize,
}

impl GWSolution {
    pub fn objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(f64::NAN)
    }
}

/// Precomputed pieces of the square-loss tensor contraction
/// `L(P)[i][j] = sum_kl (C1[i][k] - C2[j][l])^2 P[k][l]`.
struct SquareLoss<'a> {
    c1: ArrayView2<'a, f64>,
    c2: ArrayView2<'a, f64>,
    /// `(C1^2 p) 1^T + 1 (C2^2 q)^T`
    constant: Array2<f64>,
}

impl<'a> SquareLoss<'a> {
    fn new(c1: ArrayView2<'a, f64>, c2: ArrayView2<'a, f64>, p: &Array1<f64>, q: &Array1<f64>) -> Self {
        let row = c1.mapv(|x| x * x).dot(p);
        let col = c2.mapv(|x| x * x).dot(q);
        let mut constant = Array2::zeros((p.len(), q.len()));
        for ((i, j), v) in constant.indexed_iter_mut() {
            *v = row[i] + col[j];
        }
        Self { c1, c2, constant }
    }

    /// Linearized cost at `plan`: `constant - 2 C1 P C2^T`.
    fn tensor(&self, plan: &Array2<f64>) -> Array2<f64> {
        let cross = self.c1.dot(plan).dot(&self.c2.t());
        &self.constant - &(cross * 2.0)
    }
}

/// Square-loss Gromov-Wasserstein objective of `plan`.
pub fn gw_objective(c1: ArrayView2<f64>, c2: ArrayView2<f64>, plan: &Array2<f64>) -> f64 {
    let p = plan.sum_axis(Axis(1));
    let q = plan.sum_axis(Axis(0));
    let loss = SquareLoss::new(c1, c2, &p, &q);
    loss.tensor(plan).iter().zip(plan.iter()).map(|(t, x)| t * x).sum()
}

fn check_distance_matrix(c: ArrayView2<f64>, name: &str) -> Result<()> {
    let (r, k) = c.dim();
    if r != k {
        return Err(Error::Dimension(format!("{name} is {r}x{k}, expected square")));
    }
    let scale = c.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    for i in 0..r {
        if c[[i, i]].abs() > 1e-12 * scale {
            return Err(Error::InvalidInput(format!("{name} has nonzero diagonal at {i}")));
        }
        for j in (i + 1)..r {
            if (c[[i, j]] - c[[j, i]]).abs() > 1e-12 * scale {
                return Err(Error::InvalidInput(format!("{name} is not symmetric at ({i}, {j})")));
            }
        }
    }
    if c.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!("{name} has non-finite entries")));
    }
    Ok(())
}

/// Local minimizer of the entropic square-loss GW problem between `(c1, p)` and `(c2, q)`,
/// started from the product coupling `p q^T`.
pub fn gromov_wasserstein(
    c1: ArrayView2<f64>,
    c2: ArrayView2<f64>,
    p: &Array1<f64>,
    q: &Array1<f64>,
    cfg: &GWConfig,
) -> Result<GWSolution> {
    if !(cfg.epsilon > 0.0) {
        return Err(Error::Config(format!("GW epsilon must be positive, got {}", cfg.epsilon)));
    }
    if cfg.max_outer_iters == 0 {
        return Err(Error::Config("GW max_outer_iters must be at least 1".into()));
    }
    check_distance_matrix(c1, "C1")?;
    check_distance_matrix(c2, "C2")?;
    if c1.nrows() != p.len() || c2.nrows() != q.len() {
        return Err(Error::Dimension(format!(
            "distance matrices {}x{} / {}x{} vs marginals {} / {}",
            c1.nrows(),
            c1.ncols(),
            c2.nrows(),
            c2.ncols(),
            p.len(),
            q.len()
        )));
    }
    check_probability(p, "p")?;
    check_probability(q, "q")?;
    if p.iter().chain(q.iter()).any(|&x| x <= 0.0) {
        return Err(Error::InvalidInput("GW marginals must be strictly positive".into()));
    }

    let inner = SinkhornConfig {
        epsilon: Epsilon::Absolute(cfg.epsilon),
        ..cfg.inner
    };
    let loss = SquareLoss::new(c1, c2, p, q);
    let mut plan = outer(p, q);
    let mut history = Vec::new();
    let mut potentials: Option<(Array1<f64>, Array1<f64>)> = None;
    let mut inner_unconverged = 0;
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=cfg.max_outer_iters {
        iterations = it;
        let tensor = loss.tensor(&plan);
        let sol = sinkhorn_warm(
            p,
            q,
            tensor.view(),
            &inner,
            potentials.as_ref().map(|(f, g)| (f, g)),
        )?;
        if !sol.converged {
            inner_unconverged += 1;
        }
        let next = sol.coupling.matrix;
        if next.iter().any(|x| x.is_nan()) {
            return Err(Error::Numerical(format!("NaN in GW coupling at iteration {it}")));
        }
        let delta = next
            .iter()
            .zip(plan.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        plan = next;
        potentials = Some((sol.f, sol.g));
        history.push(loss.tensor(&plan).iter().zip(plan.iter()).map(|(t, x)| t * x).sum());
        if delta < cfg.tolerance {
            converged = true;
            break;
        }
    }

    Ok(GWSolution {
        coupling: Coupling {
            matrix: plan,
            row_marginal: p.clone(),
            col_marginal: q.clone(),
        },
        objective_history: history,
        iterations,
        converged,
        inner_unconverged,
    })
}

fn outer(p: &Array1<f64>, q: &Array1<f64>) -> Array2<f64> {
    let mut m = Array2::zeros((p.len(), q.len()));
    for ((i, j), v) in m.indexed_iter_mut() {
        *v = p[i] * q[j];
    }
    m
}
