//! Evaluation metrics: scaled Frobenius error, row-wise KL divergence,
//! principal-subspace distance, and leading-spectrum summaries.

use nalgebra::DMatrix;

use crate::compositional::logsumexp_row;
use crate::error::{Error, Result};
use crate::svd::thin_svd;

/// Leading `k` singular triples of a matrix with a deterministic sign
/// convention.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary {
    /// Descending, nonnegative.
    pub singular_values: Vec<f64>,
    /// n×k, orthonormal columns.
    pub left_vectors: DMatrix<f64>,
    /// p×k, orthonormal columns.
    pub right_vectors: DMatrix<f64>,
}

fn check_same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(Error::dims((a.nrows(), a.ncols()), (b.nrows(), b.ncols())));
    }
    Ok(())
}

/// Squared Frobenius distance scaled by the number of rows:
/// `(1/n) * sum_ij (a_ij - b_ij)^2`.
pub fn frob_error(z_hat: &DMatrix<f64>, z_star: &DMatrix<f64>) -> Result<f64> {
    check_same_shape(z_hat, z_star)?;
    let diff = z_hat - z_star;
    Ok(diff.norm_squared() / z_hat.nrows() as f64)
}

/// Mean over rows of `KL(softmax(z_star_i) || softmax(z_hat_i))`, computed
/// through log-softmax differences so extreme entries cannot overflow.
pub fn kl_rowwise(z_star: &DMatrix<f64>, z_hat: &DMatrix<f64>) -> Result<f64> {
    check_same_shape(z_star, z_hat)?;
    let n = z_star.nrows();
    let mut total = 0.0;
    for i in 0..n {
        let lse_star = logsumexp_row(z_star, i);
        let lse_hat = logsumexp_row(z_hat, i);
        for j in 0..z_star.ncols() {
            let log_p = z_star[(i, j)] - lse_star;
            let log_q = z_hat[(i, j)] - lse_hat;
            total += log_p.exp() * (log_p - log_q);
        }
    }
    Ok((total / n as f64).max(0.0))
}

fn check_orthonormal(v: &DMatrix<f64>, name: &str, tol: f64) -> Result<()> {
    let gram = v.transpose() * v;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            if (gram[(i, j)] - target).abs() > tol {
                return Err(Error::domain(
                    i,
                    j,
                    format!(
                        "{name} does not have orthonormal columns: gram[{i},{j}] = {}",
                        gram[(i, j)]
                    ),
                ));
            }
        }
    }
    Ok(())
}

/// Squared sin-Theta distance between the column spans of two orthonormal
/// p×k frames: `k - ||v_hat^T v_star||_F^2`, clamped to `[0, k]`.
pub fn sin_theta_sq(v_hat: &DMatrix<f64>, v_star: &DMatrix<f64>) -> Result<f64> {
    check_same_shape(v_hat, v_star)?;
    check_orthonormal(v_hat, "v_hat", 1e-6)?;
    check_orthonormal(v_star, "v_star", 1e-6)?;
    let k = v_hat.ncols() as f64;
    let overlap = (v_hat.transpose() * v_star).norm_squared();
    Ok((k - overlap).clamp(0.0, k))
}

/// Leading-`k` singular value decomposition. Signs are fixed so the
/// largest-magnitude entry of each right vector is positive (first such
/// entry wins on exact ties), with the matching left vector flipped in step.
pub fn top_k_svd(z: &DMatrix<f64>, k: usize) -> Result<SpectralSummary> {
    let max_k = z.nrows().min(z.ncols());
    if k < 1 || k > max_k {
        return Err(Error::Config(format!(
            "requested {k} singular triples; valid range is [1, {max_k}]"
        )));
    }
    let svd = thin_svd(z)?;
    let mut left = svd.u.columns(0, k).clone_owned();
    let mut right = svd.v_t.rows(0, k).transpose();
    for j in 0..k {
        let col = right.column(j);
        let mut pivot = 0;
        for (idx, value) in col.iter().enumerate() {
            if value.abs() > col[pivot].abs() {
                pivot = idx;
            }
        }
        if col[pivot] < 0.0 {
            right.column_mut(j).neg_mut();
            left.column_mut(j).neg_mut();
        }
    }
    Ok(SpectralSummary {
        singular_values: svd.sigma.iter().take(k).copied().collect(),
        left_vectors: left,
        right_vectors: right,
    })
}
