//! Range-difference measurement model and maximum-likelihood cost.
//!
//! For receivers `p_1..p_N` and a candidate position `p`, each pair `i < j`
//! contributes `g_m(p) = |p - p_i| - |p - p_j|`, stacked in lexicographic
//! pair order. The cost is the Mahalanobis form
//! `J(p) = (d - g(p))^T C^{-1} (d - g(p))` and its gradient is
//! `-2 G(p)^T C^{-1} (d - g(p))`, where row `m` of `G` is the difference of
//! unit vectors from each receiver of the pair towards `p`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type Point = Vector2<f64>;

/// Jacobian rows are undefined this close to a receiver.
pub const GUARD_RADIUS: f64 = 1e-9;
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;
pub const INVERSE_TOLERANCE: f64 = 1e-8;

/// Number of unordered receiver pairs.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// 1-based lexicographic rank of the pair `(i, j)` among all pairs of `n`
/// receivers (also 1-based).
pub fn pair_index(i: usize, j: usize, n: usize) -> Result<usize> {
    if !(1 <= i && i < j && j <= n) {
        return Err(Error::InvalidArgument(format!(
            "pair ({i}, {j}) is not an ordered pair within 1..={n}"
        )));
    }
    // Pairs with first index below i, then the offset within row i.
    let before: usize = (1..i).map(|r| n - r).sum();
    Ok(before + (j - i))
}

/// 0-based pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverSet {
    positions: Vec<Point>,
}

impl ReceiverSet {
    pub fn new(positions: Vec<Point>) -> Result<Self> {
        if positions.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "at least three receivers are required, got {}",
                positions.len()
            )));
        }
        if let Some(p) = positions.iter().find(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::InvalidArgument(format!("receiver position {p:?} is not finite")));
        }
        for (i, j) in pairs(positions.len()) {
            if positions[i] == positions[j] {
                return Err(Error::InvalidArgument(format!(
                    "receivers {} and {} share position ({}, {})",
                    i + 1,
                    j + 1,
                    positions[i].x,
                    positions[i].y
                )));
            }
        }
        Ok(Self { positions })
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn pair_count(&self) -> usize {
        pair_count(self.len())
    }

    pub fn centroid(&self) -> Point {
        self.positions.iter().sum::<Point>() / self.len() as f64
    }
}

/// `|p - p_i| - |p - p_j|`.
pub fn range_difference(p: &Point, p_i: &Point, p_j: &Point) -> f64 {
    (p - p_i).norm() - (p - p_j).norm()
}

/// Stacked range differences for every receiver pair.
pub fn predict(p: &Point, receivers: &ReceiverSet) -> DVector<f64> {
    let pos = receivers.positions();
    DVector::from_iterator(
        receivers.pair_count(),
        pairs(pos.len()).map(|(i, j)| range_difference(p, &pos[i], &pos[j])),
    )
}

/// `M x 2` matrix of partial derivatives of [`predict`].
pub fn jacobian(p: &Point, receivers: &ReceiverSet) -> Result<DMatrix<f64>> {
    let units = receivers
        .positions()
        .iter()
        .enumerate()
        .map(|(idx, anchor)| {
            let offset = p - anchor;
            let dist = offset.norm();
            if dist <= GUARD_RADIUS {
                Err(Error::Singularity {
                    receiver: idx,
                    position: [p.x, p.y],
                })
            } else {
                Ok(offset / dist)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut jac = DMatrix::zeros(receivers.pair_count(), 2);
    for (row, (i, j)) in pairs(receivers.len()).enumerate() {
        let diff = units[i] - units[j];
        jac[(row, 0)] = diff.x;
        jac[(row, 1)] = diff.y;
    }
    Ok(jac)
}

/// How the measurement covariance is specified.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceSpec {
    /// Constant diagonal and constant off-diagonal entries.
    Uniform { diag: f64, offdiag: f64 },
    /// Full row-major matrix.
    Full { matrix: Vec<Vec<f64>> },
}

impl CovarianceSpec {
    pub fn to_matrix(&self, m: usize) -> Result<DMatrix<f64>> {
        match self {
            CovarianceSpec::Uniform { diag, offdiag } => {
                Ok(DMatrix::from_fn(m, m, |a, b| if a == b { *diag } else { *offdiag }))
            }
            CovarianceSpec::Full { matrix } => {
                if matrix.len() != m || matrix.iter().any(|row| row.len() != m) {
                    return Err(Error::Covariance(format!("expected a {m}x{m} matrix")));
                }
                Ok(DMatrix::from_fn(m, m, |a, b| matrix[a][b]))
            }
        }
    }
}

/// A validated covariance with its Cholesky factor and inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
    cholesky: DMatrix<f64>,
}

impl Covariance {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let m = matrix.nrows();
        if m == 0 || matrix.ncols() != m {
            return Err(Error::Covariance(format!(
                "covariance must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Covariance("covariance has non-finite entries".into()));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        for a in 0..m {
            for b in a + 1..m {
                if (matrix[(a, b)] - matrix[(b, a)]).abs() > SYMMETRY_TOLERANCE * scale {
                    return Err(Error::Covariance(format!("not symmetric at ({a}, {b})")));
                }
            }
        }
        let chol = Cholesky::<f64, Dyn>::new(matrix.clone())
            .ok_or_else(|| Error::Covariance("not positive definite".into()))?;
        let inverse = chol.inverse();
        let residual = (&inverse * &matrix - DMatrix::<f64>::identity(m, m)).amax();
        if residual > INVERSE_TOLERANCE {
            return Err(Error::Covariance(format!(
                "ill-conditioned: inverse check residual {residual:e}"
            )));
        }
        Ok(Self {
            cholesky: chol.l(),
            matrix,
            inverse,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// Lower-triangular `L` with `L L^T = C`.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.cholesky
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Draws `L u` with `u` standard normal.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let u = DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)),
        );
        &self.cholesky * u
    }
}

/// Observed range differences together with their error covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub values: DVector<f64>,
    pub covariance: Covariance,
}

impl MeasurementSet {
    pub fn new(values: DVector<f64>, covariance: Covariance) -> Result<Self> {
        if values.len() != covariance.dim() {
            return Err(Error::InvalidArgument(format!(
                "{} measurements but covariance is {}x{}",
                values.len(),
                covariance.dim(),
                covariance.dim()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("measurement vector".into()));
        }
        Ok(Self { values, covariance })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `g(p_true) + L u`: one correlated-noise draw of the measurement vector.
pub fn generate_measurements<R: Rng + ?Sized>(
    receivers: &ReceiverSet,
    true_position: &Point,
    covariance: &Covariance,
    rng: &mut R,
) -> Result<MeasurementSet> {
    if covariance.dim() != receivers.pair_count() {
        return Err(Error::Covariance(format!(
            "covariance dimension {} does not match {} receiver pairs",
            covariance.dim(),
            receivers.pair_count()
        )));
    }
    let values = predict(true_position, receivers) + covariance.sample(rng);
    MeasurementSet::new(values, covariance.clone())
}

/// Receiver geometry bound to one set of measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    receivers: ReceiverSet,
    measurements: MeasurementSet,
}

impl CostModel {
    pub fn new(receivers: ReceiverSet, measurements: MeasurementSet) -> Result<Self> {
        if measurements.len() != receivers.pair_count() {
            return Err(Error::InvalidArgument(format!(
                "{} measurements for {} receivers, expected {}",
                measurements.len(),
                receivers.len(),
                receivers.pair_count()
            )));
        }
        Ok(Self {
            receivers,
            measurements,
        })
    }

    pub fn receivers(&self) -> &ReceiverSet {
        &self.receivers
    }

    pub fn measurements(&self) -> &MeasurementSet {
        &self.measurements
    }

    pub fn residual(&self, p: &Point) -> DVector<f64> {
        &self.measurements.values - predict(p, &self.receivers)
    }

    pub fn cost(&self, p: &Point) -> f64 {
        let eps = self.residual(p);
        eps.dot(&(self.measurements.covariance.inverse() * &eps))
    }

    pub fn gradient(&self, p: &Point) -> Result<Point> {
        let jac = jacobian(p, &self.receivers)?;
        let weighted = self.measurements.covariance.inverse() * self.residual(p);
        let g = jac.transpose() * weighted * -2.0;
        Ok(Point::new(g[0], g[1]))
    }
}
