//! Scaled negative multinomial log-likelihood in CLR coordinates.
//!
//! For counts `W` with row depths `N_i` and grand total `N`, the loss is
//!
//! ```text
//! L_N(Z; W) = (1/N) * sum_i [ N_i * logsumexp(z_i) - sum_j W_ij * z_ij ]
//! ```
//!
//! It is convex, invariant to adding a constant to any row of `Z`, and its
//! gradient rows sum to zero — so gradient steps never leave the zero-row-sum
//! subspace that makes CLR coordinates identifiable.
//!
//! Both the loss and gradient accept arbitrary real matrices rather than
//! validated [`ClrMatrix`] values: line-search probes can drift off the
//! subspace by rounding, and the row shift invariance makes that harmless.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::compositional::{logsumexp_row, softmax_row_in_place, CountMatrix};
use crate::error::{Error, Result};

/// Penalized objective value split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Objective {
    /// Scaled negative log-likelihood, in nats.
    pub loss: f64,
    /// `lambda` times the nuclear norm of the estimate.
    pub penalty: f64,
    /// `loss + penalty`.
    pub total: f64,
}

impl Objective {
    pub fn new(loss: f64, penalty: f64) -> Self {
        Objective { loss, penalty, total: loss + penalty }
    }
}

fn check_shape(z: &DMatrix<f64>, w: &CountMatrix) -> Result<()> {
    if z.shape() != w.shape() {
        return Err(Error::dims(w.shape(), z.shape()));
    }
    Ok(())
}

/// Scaled negative log-likelihood `L_N(z; w)`.
pub fn neg_loglik(z: &DMatrix<f64>, w: &CountMatrix) -> Result<f64> {
    check_shape(z, w)?;
    let n_total = w.grand_total() as f64;
    let mut acc = 0.0;
    for i in 0..z.nrows() {
        let lse = logsumexp_row(z, i);
        let mut dot = 0.0;
        for j in 0..z.ncols() {
            dot += w.floats()[(i, j)] * z[(i, j)];
        }
        acc += w.row_totals()[i] as f64 * lse - dot;
    }
    Ok(acc / n_total)
}

/// Gradient of [`neg_loglik`]: entry `(i,j)` is `(N_i/N) softmax(z_i)_j - W_ij/N`.
pub fn grad_neg_loglik(z: &DMatrix<f64>, w: &CountMatrix) -> Result<DMatrix<f64>> {
    check_shape(z, w)?;
    let n_total = w.grand_total() as f64;
    let mut grad = z.clone();
    for i in 0..z.nrows() {
        softmax_row_in_place(&mut grad, i);
        let scale = w.row_totals()[i] as f64 / n_total;
        for j in 0..z.ncols() {
            grad[(i, j)] = scale * grad[(i, j)] - w.floats()[(i, j)] / n_total;
        }
    }
    Ok(grad)
}

/// Backtracking line-search gap: the error of the quadratic majorizer at `L`.
///
/// ```text
/// F_L(z_new, y_old) = L_N(z_new) - L_N(y_old)
///                     - <z_new - y_old, grad L_N(y_old)> - (L/2) ||z_new - y_old||_F^2
/// ```
///
/// Nonpositive exactly when the step from `y_old` to `z_new` is covered by
/// the majorizer, i.e. when `L` is large enough.
pub fn line_search_gap(z_new: &DMatrix<f64>, y_old: &DMatrix<f64>, w: &CountMatrix, l: f64) -> Result<f64> {
    if !(l > 0.0) {
        return Err(Error::Config(format!("line-search constant must be positive, got {l}")));
    }
    check_shape(z_new, w)?;
    check_shape(y_old, w)?;
    let loss_new = neg_loglik(z_new, w)?;
    let loss_old = neg_loglik(y_old, w)?;
    let grad_old = grad_neg_loglik(y_old, w)?;
    Ok(gap_from_parts(z_new, y_old, loss_new, loss_old, &grad_old, l))
}

/// Gap evaluation when the caller already has the pieces in hand (the solver
/// reuses `loss_old` and `grad_old` across backtracking trials).
pub(crate) fn gap_from_parts(
    z_new: &DMatrix<f64>,
    y_old: &DMatrix<f64>,
    loss_new: f64,
    loss_old: f64,
    grad_old: &DMatrix<f64>,
    l: f64,
) -> f64 {
    let mut inner = 0.0;
    let mut sq = 0.0;
    for (idx, g) in grad_old.iter().enumerate() {
        let d = z_new.as_slice()[idx] - y_old.as_slice()[idx];
        inner += d * g;
        sq += d * d;
    }
    loss_new - loss_old - inner - 0.5 * l * sq
}
