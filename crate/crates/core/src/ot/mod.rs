//! Discrete optimal transport: the entropic Sinkhorn solver used throughout the
//! pipeline and an exact solver for small instances.

pub(crate) mod exact;
mod sinkhorn;

use ndarray::{Array1, Array2, ArrayView2, Axis};

pub use exact::{exact_ot_oracle, EXACT_MAX_CELLS};
pub use sinkhorn::{sinkhorn, sinkhorn_warm, wasserstein_sq, SinkhornSolution};

use crate::error::{Error, Result};

/// Nonnegative transport plan together with the marginals it was solved for.
#[derive(Clone, Debug, PartialEq)]
pub struct Coupling {
    pub matrix: Array2<f64>,
    pub row_marginal: Array1<f64>,
    pub col_marginal: Array1<f64>,
}

impl Coupling {
    pub fn shape(&self) -> (usize, usize) {
        self.matrix.dim()
    }

    /// Largest absolute deviation of the row sums from `row_marginal`.
    pub fn row_violation(&self) -> f64 {
        max_abs_diff(&self.matrix.sum_axis(Axis(1)), &self.row_marginal)
    }

    pub fn col_violation(&self) -> f64 {
        max_abs_diff(&self.matrix.sum_axis(Axis(0)), &self.col_marginal)
    }

    pub fn max_violation(&self) -> f64 {
        self.row_violation().max(self.col_violation())
    }

    /// `<P, C>`, the unregularized cost of moving mass along this plan.
    pub fn transport_cost(&self, cost: ArrayView2<f64>) -> f64 {
        debug_assert_eq!(cost.dim(), self.matrix.dim());
        self.matrix.iter().zip(cost.iter()).map(|(p, c)| p * c).sum()
    }

    /// Shannon entropy `-sum P log P` (zero entries contribute nothing).
    pub fn entropy(&self) -> f64 {
        -self
            .matrix
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }

    /// Plan with rows and columns swapped.
    pub fn transposed(&self) -> Coupling {
        Coupling {
            matrix: self.matrix.t().to_owned(),
            row_marginal: self.col_marginal.clone(),
            col_marginal: self.row_marginal.clone(),
        }
    }
}

fn max_abs_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Entropic regularization strength.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Epsilon {
    Absolute(f64),
    /// Multiple of the median entry of the cost matrix being solved.
    MedianRelative(f64),
}

impl Epsilon {
    pub fn resolve(self, cost: ArrayView2<f64>) -> f64 {
        match self {
            Epsilon::Absolute(e) => e,
            Epsilon::MedianRelative(r) => {
                let med = median(cost.iter().copied());
                // an all-zero cost still needs a positive regularizer
                if med > 0.0 {
                    r * med
                } else {
                    r
                }
            }
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Epsilon::Absolute(e) | Epsilon::MedianRelative(e) => e,
        }
    }
}

impl Default for Epsilon {
    fn default() -> Self {
        Epsilon::MedianRelative(1e-2)
    }
}

pub(crate) fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return 0.0;
    }
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *m;
    if v.len() % 2 == 1 {
        upper
    } else {
        let lower = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// How the scaling iterations guard against overflow.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Stabilization {
    /// Plain scaling on `exp(-C/eps)`; overflow is reported as an error.
    Never,
    /// Scaling iterations whose factors are absorbed into log-potentials once
    /// they leave `[1/threshold, threshold]`.
    #[default]
    Auto,
    /// Log-sum-exp updates on every iteration.
    Always,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornConfig {
    pub epsilon: Epsilon,
    pub max_iters: usize,
    /// Maximum tolerated marginal violation.
    pub tolerance: f64,
    pub log_domain_threshold: f64,
    pub stabilization: Stabilization,
    /// Anneal the regularization from the cost spread down to `epsilon`
    /// (stabilized mode, cold starts only).
    pub epsilon_scaling: bool,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: Epsilon::default(),
            max_iters: 1000,
            tolerance: 1e-6,
            log_domain_threshold: 1e30,
            stabilization: Stabilization::Auto,
            epsilon_scaling: true,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.value() > 0.0) || !self.epsilon.value().is_finite() {
            return Err(Error::Config(format!("epsilon must be positive, got {:?}", self.epsilon)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.log_domain_threshold > 1.0) {
            return Err(Error::Config("log_domain_threshold must exceed 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median([3.0, 1.0, 2.0].into_iter()), 2.0);
        assert_eq!(median([4.0, 1.0, 3.0, 2.0].into_iter()), 2.5);
        assert_eq!(median(std::iter::empty()), 0.0);
    }

    #[test]
    fn epsilon_resolution() {
        let c = array![[0.0, 2.0], [4.0, 6.0]];
        assert_eq!(Epsilon::Absolute(0.5).resolve(c.view()), 0.5);
        assert!((Epsilon::MedianRelative(0.1).resolve(c.view()) - 0.3).abs() < 1e-15);
        assert_eq!(Epsilon::MedianRelative(0.1).resolve(Array2::zeros((2, 2)).view()), 0.1);
    }

    #[test]
    fn config_validation() {
        assert!(SinkhornConfig::default().validate().is_ok());
        let bad = SinkhornConfig {
            epsilon: Epsilon::Absolute(0.0),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SinkhornConfig {
            tolerance: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
