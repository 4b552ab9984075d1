use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Largest tolerated `|Q^T Q - I|` entry.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-8;
/// Products drifting further than this from orthogonal are re-projected.
const DRIFT_TOLERANCE: f64 = 1e-10;

/// `d x d` orthogonal matrix, applied to row vectors as `x -> x Q`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthogonalMap {
    matrix: Array2<f64>,
}

impl OrthogonalMap {
    pub fn identity(d: usize) -> Self {
        Self {
            matrix: Array2::eye(d),
        }
    }

    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Dimension(format!("orthogonal map must be square, got {:?}", matrix.dim())));
        }
        let map = Self { matrix };
        let err = map.orthogonality_error();
        if !(err <= ORTHOGONALITY_TOLERANCE) {
            return Err(Error::InvalidInput(format!("matrix is not orthogonal (|Q^T Q - I| = {err:e})")));
        }
        Ok(map)
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `max |Q^T Q - I|`.
    pub fn orthogonality_error(&self) -> f64 {
        let gram = self.matrix.t().dot(&self.matrix);
        gram.indexed_iter()
            .map(|((i, j), &v)| (v - if i == j { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }

    pub fn determinant(&self) -> f64 {
        to_dmatrix(self.matrix.view()).determinant()
    }

    /// `self . other`, re-projected onto the orthogonal group if rounding drift
    /// exceeds 1e-10.
    pub fn compose(&self, other: &OrthogonalMap) -> OrthogonalMap {
        let product = Self {
            matrix: self.matrix.dot(&other.matrix),
        };
        if product.orthogonality_error() > DRIFT_TOLERANCE {
            Self {
                matrix: nearest_orthogonal(product.matrix.view()),
            }
        } else {
            product
        }
    }

    pub fn inverse(&self) -> OrthogonalMap {
        Self {
            matrix: self.matrix.t().to_owned(),
        }
    }

    /// `X Q`.
    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.matrix)
    }

    /// `X Q^T`, undoing [`apply`](Self::apply).
    pub fn unapply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.matrix.t())
    }
}

/// Orthogonal `Q` maximizing `<X^T P Y, Q>`, i.e. minimizing
/// `sum_jl P_jl |x_j Q - y_l|^2`: `Q = U V^T` for `X^T P Y = U S V^T`.
pub fn procrustes(x: ArrayView2<f64>, coupling: &Array2<f64>, y: ArrayView2<f64>) -> Result<OrthogonalMap> {
    if coupling.dim() != (x.nrows(), y.nrows()) || x.ncols() != y.ncols() {
        return Err(Error::Dimension(format!(
            "procrustes with {:?} points, {:?} coupling and {:?} targets",
            x.dim(),
            coupling.dim(),
            y.dim()
        )));
    }
    let m = x.t().dot(&coupling.dot(&y));
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite cross-covariance in procrustes".into()));
    }
    Ok(OrthogonalMap {
        matrix: polar_factor(m.view())?,
    })
}

fn polar_factor(m: ArrayView2<f64>) -> Result<Array2<f64>> {
    let svd = to_dmatrix(m).svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Numerical("SVD did not return singular vectors".into())),
    };
    Ok(from_dmatrix(&(u * v_t)))
}

fn nearest_orthogonal(m: ArrayView2<f64>) -> Array2<f64> {
    polar_factor(m).unwrap_or_else(|_| m.to_owned())
}

pub(crate) fn to_dmatrix(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_dmatrix(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Random orthogonal matrix: QR of a Gaussian matrix with the signs of `R`'s
/// diagonal folded into `Q`.
pub fn random_orthogonal(d: usize, rng: &mut impl rand::Rng) -> OrthogonalMap {
    use rand_distr::{Distribution, StandardNormal};
    let g = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    OrthogonalMap { matrix: from_dmatrix(&q) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
        Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(rng))
    }

    fn diag_coupling(n: usize) -> Array2<f64> {
        Array2::eye(n) / n as f64
    }

    #[test]
    fn identity_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = gaussian(&mut rng, 30, 4);
        let q = procrustes(x.view(), &diag_coupling(30), x.view()).unwrap();
        let err = (q.matrix() - &Array2::<f64>::eye(4)).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn planted_rotation_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for d in [2, 5, 20] {
            let x = gaussian(&mut rng, 50, d);
            let planted = random_orthogonal(d, &mut rng);
            let y = planted.apply(x.view());
            let q = procrustes(x.view(), &diag_coupling(50), y.view()).unwrap();
            let err = (q.matrix() - planted.matrix()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(err < 1e-8, "d={d}: {err}");
        }
    }

    #[test]
    fn one_dimensional_sign() {
        let x = array![[1.0], [2.0], [-0.5]];
        let y = -&x;
        let q = procrustes(x.view(), &diag_coupling(3), y.view()).unwrap();
        assert_eq!(q.matrix(), &array![[-1.0]]);
        let q = procrustes(x.view(), &diag_coupling(3), (&x * 3.0).view()).unwrap();
        assert_eq!(q.matrix(), &array![[1.0]]);
    }

    #[test]
    fn result_is_orthogonal_with_unit_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = gaussian(&mut rng, 12, 6);
        let y = gaussian(&mut rng, 9, 6);
        let p = Array2::from_elem((12, 9), 1.0 / 108.0);
        let q = procrustes(x.view(), &p, y.view()).unwrap();
        assert!(q.orthogonality_error() <= ORTHOGONALITY_TOLERANCE);
        assert!((q.determinant().abs() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn beats_random_orthogonal_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let x = gaussian(&mut rng, 8, 3);
            let y = gaussian(&mut rng, 8, 3);
            let p = diag_coupling(8);
            let m = x.t().dot(&p.dot(&y));
            let q = procrustes(x.view(), &p, y.view()).unwrap();
            let best = (&m * q.matrix()).sum();
            for _ in 0..1000 {
                let r = random_orthogonal(3, &mut rng);
                assert!(best >= (&m * r.matrix()).sum());
            }
        }
    }

    #[test]
    fn compose_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_orthogonal(7, &mut rng);
        let b = random_orthogonal(7, &mut rng);
        let ab = a.compose(&b);
        assert!(ab.orthogonality_error() <= 1e-12);
        let back = ab.compose(&b.inverse()).compose(&a.inverse());
        let err = (back.matrix() - &Array2::<f64>::eye(7)).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-12);
    }

    #[test]
    fn drift_is_projected_away() {
        let mut drifted = Array2::<f64>::eye(3);
        drifted[[0, 1]] = 1e-9;
        let a = OrthogonalMap { matrix: drifted };
        let fixed = a.compose(&OrthogonalMap::identity(3));
        assert!(fixed.orthogonality_error() <= 1e-14);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(OrthogonalMap::new(array![[1.0, 0.0], [0.0, 2.0]]).is_err());
        assert!(OrthogonalMap::new(Array2::zeros((2, 3))).is_err());
        let x = array![[1.0, 0.0], [0.0, f64::NAN]];
        assert!(procrustes(x.view(), &diag_coupling(2), x.view()).is_err());
        assert!(procrustes(x.view(), &diag_coupling(3), x.view()).is_err());
    }
}
