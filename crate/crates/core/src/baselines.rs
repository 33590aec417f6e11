//! Closed-form comparison estimators: plain zero-replacement and its
//! rank-truncated refinement.

use serde::Serialize;

use crate::compositional::{clr, zero_replace, ClrMatrix, CountMatrix};
use crate::error::{Error, Result};
use crate::likelihood::{neg_loglik, Objective};
use crate::solver::{Estimate, SolveTrace, Termination, ESTIMATE_ROW_SUM_TOL};
use crate::svd::thin_svd;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    ZeroReplacement,
    TruncatedSvt { rank: usize },
}

/// Replaces zero counts by 0.5, normalizes each row, and takes the CLR
/// transform. No shrinkage is applied; this is the plug-in estimator.
pub fn zr_estimate(w: &CountMatrix) -> Result<Estimate> {
    let z_hat = clr(&zero_replace(w, 0.5)?);
    let svd = thin_svd(z_hat.values())?;
    let loss = neg_loglik(z_hat.values(), w)?;
    Ok(Estimate {
        z_hat,
        objective: Objective::new(loss, 0.0),
        trace: SolveTrace { records: Vec::new(), termination: Termination::ClosedForm },
        singular_values: svd.sigma.iter().copied().collect(),
    })
}

/// Best rank-`rank` approximation (truncated SVD) of the zero-replacement
/// estimate. Truncation keeps rows summing to zero because the all-ones
/// vector stays in the null space of every retained singular triple.
pub fn svt_estimate(w: &CountMatrix, rank: usize) -> Result<Estimate> {
    let max_rank = w.nrows().min(w.ncols());
    if rank < 1 || rank > max_rank {
        return Err(Error::Config(format!(
            "truncation rank must lie in [1, {max_rank}], got {rank}"
        )));
    }
    if rank == max_rank {
        return zr_estimate(w);
    }

    let zr = clr(&zero_replace(w, 0.5)?);
    let svd = thin_svd(zr.values())?;
    let mut u_scaled = svd.u.columns(0, rank).clone_owned();
    for (j, mut col) in u_scaled.column_iter_mut().enumerate() {
        col *= svd.sigma[j];
    }
    let truncated = u_scaled * svd.v_t.rows(0, rank);

    let loss = neg_loglik(&truncated, w)?;
    let mut singular_values = vec![0.0; svd.sigma.len()];
    singular_values[..rank].copy_from_slice(&svd.sigma.as_slice()[..rank]);

    Ok(Estimate {
        z_hat: ClrMatrix::with_row_sum_tol(truncated, ESTIMATE_ROW_SUM_TOL)?,
        objective: Objective::new(loss, 0.0),
        trace: SolveTrace { records: Vec::new(), termination: Termination::ClosedForm },
        singular_values,
    })
}
