//! Thin deterministic SVD with guaranteed descending singular values.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) struct ThinSvd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

/// Computes a thin SVD and sorts the triplets by descending singular value.
///
/// nalgebra's SVD is already ordered in current releases; the sort is a cheap
/// defensive guarantee since downstream code (thresholding, truncation, sign
/// conventions) silently assumes it.
pub(crate) fn thin_svd(m: &DMatrix<f64>) -> Result<ThinSvd> {
    let svd = m.clone().try_svd(true, true, f64::EPSILON, 0).ok_or_else(|| {
        let max = m.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        Error::Numeric(format!(
            "SVD did not converge on a {}x{} matrix (max |entry| = {max:e})",
            m.nrows(),
            m.ncols()
        ))
    })?;
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let sigma = svd.singular_values;

    let k = sigma.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    if order.iter().enumerate().all(|(pos, &idx)| pos == idx) {
        return Ok(ThinSvd { u, sigma, v_t });
    }
    let mut u_sorted = DMatrix::zeros(u.nrows(), k);
    let mut vt_sorted = DMatrix::zeros(k, v_t.ncols());
    let mut s_sorted = DVector::zeros(k);
    for (pos, &idx) in order.iter().enumerate() {
        u_sorted.set_column(pos, &u.column(idx));
        vt_sorted.set_row(pos, &v_t.row(idx));
        s_sorted[pos] = sigma[idx];
    }
    Ok(ThinSvd { u: u_sorted, sigma: s_sorted, v_t: vt_sorted })
}

/// Sum of singular values.
pub(crate) fn nuclear_norm(m: &DMatrix<f64>) -> Result<f64> {
    Ok(thin_svd(m)?.sigma.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn singular_values_are_descending() {
        let m = dmatrix![1.0, 2.0, 0.5; -0.3, 0.8, 2.2; 0.0, 1.0, -1.0; 2.0, 0.1, 0.4];
        let svd = thin_svd(&m).unwrap();
        for i in 1..svd.sigma.len() {
            assert!(svd.sigma[i - 1] >= svd.sigma[i]);
        }
        let recon = &svd.u * DMatrix::from_diagonal(&svd.sigma) * &svd.v_t;
        assert_relative_eq!(recon, m, epsilon = 1e-12);
    }

    #[test]
    fn nuclear_norm_of_diagonal() {
        let m = dmatrix![3.0, 0.0; 0.0, 1.0];
        assert_relative_eq!(nuclear_norm(&m).unwrap(), 4.0, epsilon = 1e-12);
    }
}
