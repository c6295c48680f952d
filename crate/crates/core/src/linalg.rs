//! Dense linear-algebra helpers shared by the topology, plant and analysis
//! modules.
//!
//! Every inversion goes through [`Factorized`], which pairs a partially
//! pivoted LU factorization with a 1-norm reciprocal condition number. A
//! factorization whose reciprocal condition falls below [`RCOND_MIN`] is
//! reported as singular instead of producing garbage.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Reciprocal condition numbers below this are treated as singular.
pub const RCOND_MIN: f64 = 1e-12;

/// LU factorization of a square matrix together with its explicit inverse.
///
/// The matrices handled here are at most a few tens of rows, so forming the
/// inverse is cheap and gives an exact 1-norm condition number.
#[derive(Debug, Clone)]
pub struct Factorized {
    inverse: DMatrix<f64>,
    rcond: f64,
}

impl Factorized {
    /// Factorizes `a`, naming it `block` in the error if it is singular.
    pub fn new(a: &DMatrix<f64>, block: &str) -> Result<Self> {
        assert!(a.is_square(), "factorizing a non-square matrix");
        if a.nrows() == 0 {
            return Ok(Self {
                inverse: DMatrix::zeros(0, 0),
                rcond: 1.0,
            });
        }
        let singular = |rcond| Error::SingularBlock {
            block: block.to_string(),
            rcond,
        };
        let norm = norm_1(a);
        if norm == 0.0 || !norm.is_finite() {
            return Err(singular(0.0));
        }
        let inverse = a.clone().lu().try_inverse().ok_or_else(|| singular(0.0))?;
        let rcond = 1.0 / (norm * norm_1(&inverse));
        if !(rcond >= RCOND_MIN) {
            return Err(singular(rcond));
        }
        Ok(Self { inverse, rcond })
    }

    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        &self.inverse * b
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        &self.inverse * b
    }
}

/// Maximum absolute column sum.
pub fn norm_1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn norm_inf(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Rows `rows` and columns `cols` of `a`, in the given order.
pub fn submatrix(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}

/// Scatters `values` into a length-`n` zero vector at positions `idx`.
pub fn scatter(n: usize, idx: &[usize], values: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(n);
    for (k, &i) in idx.iter().enumerate() {
        out[i] = values[k];
    }
    out
}

/// Relative equality used for ratio comparisons.
pub fn rel_eq(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
