//! Count, composition, and CLR matrix types plus the transforms between them.
//!
//! All transforms are numerically stable: softmax and log-sum-exp use per-row
//! max shifts so entries like 1000 do not overflow.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Nonnegative integer read counts, `n` samples by `p` taxa.
///
/// Stores both the integer counts and a cached float view used by the
/// likelihood kernels. Row totals are the per-sample read depths `N_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    values: DMatrix<u64>,
    floats: DMatrix<f64>,
    row_totals: Vec<u64>,
    grand_total: u64,
}

impl CountMatrix {
    /// Wraps a count matrix, requiring at least one sample and two taxa.
    pub fn new(values: DMatrix<u64>) -> Result<Self> {
        let (n, p) = values.shape();
        if n < 1 || p < 2 {
            return Err(Error::Config(format!(
                "count matrix must be at least 1x2, got {n}x{p}"
            )));
        }
        let floats = values.map(|v| v as f64);
        let row_totals: Vec<u64> = (0..n).map(|i| values.row(i).iter().sum()).collect();
        let grand_total = row_totals.iter().sum();
        Ok(CountMatrix { values, floats, row_totals, grand_total })
    }

    /// Parses a float matrix as counts, rejecting negative or fractional entries.
    pub fn from_float(values: &DMatrix<f64>) -> Result<Self> {
        let mut ints = DMatrix::<u64>::zeros(values.nrows(), values.ncols());
        for i in 0..values.nrows() {
            for j in 0..values.ncols() {
                let v = values[(i, j)];
                if !v.is_finite() || v < 0.0 || v.fract() != 0.0 {
                    return Err(Error::domain(i, j, format!("{v} is not a nonnegative integer count")));
                }
                ints[(i, j)] = v as u64;
            }
        }
        CountMatrix::new(ints)
    }

    pub fn values(&self) -> &DMatrix<u64> {
        &self.values
    }

    /// Counts as floats (cached at construction).
    pub fn floats(&self) -> &DMatrix<f64> {
        &self.floats
    }

    /// Per-sample read depths `N_i`.
    pub fn row_totals(&self) -> &[u64] {
        &self.row_totals
    }

    /// Total read count `N` across all samples.
    pub fn grand_total(&self) -> u64 {
        self.grand_total
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }
}

/// Row-stochastic matrix of strictly positive proportions.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionMatrix {
    values: DMatrix<f64>,
}

impl CompositionMatrix {
    const ROW_SUM_TOL: f64 = 1e-12;

    /// Validates that every entry is strictly positive and every row sums to 1.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        for i in 0..values.nrows() {
            let mut sum = 0.0;
            for j in 0..values.ncols() {
                let v = values[(i, j)];
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::domain(i, j, format!("proportion {v} is not strictly positive")));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > Self::ROW_SUM_TOL {
                return Err(Error::Invariant(format!(
                    "row {i} of a composition matrix sums to {sum}, not 1"
                )));
            }
        }
        Ok(CompositionMatrix { values })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }
}

/// Real matrix whose every row sums to zero: the CLR coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ClrMatrix {
    values: DMatrix<f64>,
}

impl ClrMatrix {
    pub const ROW_SUM_TOL: f64 = 1e-10;

    /// Validates row sums against the default tolerance of 1e-10.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        Self::with_row_sum_tol(values, Self::ROW_SUM_TOL)
    }

    /// Validates row sums against a caller-chosen absolute tolerance.
    ///
    /// Iterative solvers accumulate slightly more rounding than direct
    /// transforms; their outputs are checked at 1e-8.
    pub fn with_row_sum_tol(values: DMatrix<f64>, tol: f64) -> Result<Self> {
        for i in 0..values.nrows() {
            let sum: f64 = values.row(i).iter().sum();
            if !(sum.abs() <= tol) {
                return Err(Error::Invariant(format!(
                    "row {i} of a CLR matrix sums to {sum:e}, exceeding tolerance {tol:e}"
                )));
            }
        }
        Ok(ClrMatrix { values })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }
}

/// Log of each proportion minus the row mean of logs.
///
/// Maps the open simplex isometrically onto the zero-row-sum subspace; the
/// inverse is [`softmax_inv`].
pub fn clr(x: &CompositionMatrix) -> ClrMatrix {
    let mut logs = x.values().map(f64::ln);
    center_rows(&mut logs);
    ClrMatrix::with_row_sum_tol(logs, ClrMatrix::ROW_SUM_TOL)
        .expect("row centering of finite logs stays within tolerance")
}

/// Row-wise softmax: exp and normalize with a max shift for stability.
pub fn softmax_inv(z: &ClrMatrix) -> CompositionMatrix {
    let mut out = z.values().clone();
    for i in 0..out.nrows() {
        softmax_row_in_place(&mut out, i);
    }
    CompositionMatrix::new(out).expect("softmax rows are positive and normalized")
}

/// Jacobian of the softmax at one CLR row: `diag(s) - s sᵀ`.
///
/// Symmetric, positive semidefinite, and annihilates the all-ones vector,
/// which is what keeps gradient steps on the zero-row-sum subspace.
pub fn softmax_jacobian(z_row: &DVector<f64>) -> Result<DMatrix<f64>> {
    let p = z_row.len();
    for (j, v) in z_row.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::domain(0, j, format!("non-finite entry {v}")));
        }
    }
    let max = z_row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut s = DVector::from_iterator(p, z_row.iter().map(|&v| (v - max).exp()));
    let total: f64 = s.iter().sum();
    s /= total;
    let mut jac = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in 0..p {
            jac[(a, b)] = if a == b { s[a] * (1.0 - s[a]) } else { -s[a] * s[b] };
        }
    }
    Ok(jac)
}

/// Floors counts at `a` (default 0.5) and renormalizes each row.
///
/// The floor guarantees strictly positive proportions so the CLR transform is
/// defined even for rows containing zero counts.
pub fn zero_replace(w: &CountMatrix, a: f64) -> Result<CompositionMatrix> {
    if !(a > 0.0) {
        return Err(Error::Config(format!("pseudo-count must be positive, got {a}")));
    }
    let (n, p) = w.shape();
    let mut out = DMatrix::zeros(n, p);
    for i in 0..n {
        let mut sum = 0.0;
        for j in 0..p {
            let v = w.floats()[(i, j)].max(a);
            out[(i, j)] = v;
            sum += v;
        }
        for j in 0..p {
            out[(i, j)] /= sum;
        }
    }
    CompositionMatrix::new(out)
}

/// Subtracts each row's mean in place.
pub(crate) fn center_rows(m: &mut DMatrix<f64>) {
    let p = m.ncols();
    for i in 0..m.nrows() {
        let mean: f64 = m.row(i).iter().sum::<f64>() / p as f64;
        for j in 0..p {
            m[(i, j)] -= mean;
        }
    }
}

/// `log(sum_j exp(row_j))` with max shift.
pub(crate) fn logsumexp_row(m: &DMatrix<f64>, i: usize) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for j in 0..m.ncols() {
        max = max.max(m[(i, j)]);
    }
    let mut sum = 0.0;
    for j in 0..m.ncols() {
        sum += (m[(i, j)] - max).exp();
    }
    max + sum.ln()
}

/// Overwrites row `i` with its softmax.
pub(crate) fn softmax_row_in_place(m: &mut DMatrix<f64>, i: usize) {
    let mut max = f64::NEG_INFINITY;
    for j in 0..m.ncols() {
        max = max.max(m[(i, j)]);
    }
    let mut sum = 0.0;
    for j in 0..m.ncols() {
        let e = (m[(i, j)] - max).exp();
        m[(i, j)] = e;
        sum += e;
    }
    for j in 0..m.ncols() {
        m[(i, j)] /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    fn comp(rows: Vec<Vec<f64>>) -> CompositionMatrix {
        let n = rows.len();
        let p = rows[0].len();
        CompositionMatrix::new(DMatrix::from_fn(n, p, |i, j| rows[i][j])).unwrap()
    }

    #[test]
    fn clr_of_uniform_row_is_zero() {
        let x = comp(vec![vec![1.0 / 3.0; 3]]);
        let z = clr(&x);
        for v in z.values().iter() {
            assert!(v.abs() < 1e-14);
        }
    }

    #[test]
    fn clr_matches_direct_evaluation() {
        let x = comp(vec![vec![0.5, 0.25, 0.25]]);
        let z = clr(&x);
        assert_relative_eq!(z.values()[(0, 0)], 0.46210, epsilon = 1e-5);
        assert_relative_eq!(z.values()[(0, 1)], -0.23105, epsilon = 1e-5);
        assert_relative_eq!(z.values()[(0, 2)], -0.23105, epsilon = 1e-5);
    }

    #[test]
    fn softmax_inv_symmetry() {
        let z = ClrMatrix::new(dmatrix![0.0, 0.0]).unwrap();
        let x = softmax_inv(&z);
        assert_relative_eq!(x.values()[(0, 0)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(x.values()[(0, 1)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn softmax_inv_inverts_clr_example() {
        let z = ClrMatrix::new(dmatrix![0.46210, -0.23105, -0.23105]).unwrap();
        let x = softmax_inv(&z);
        assert_relative_eq!(x.values()[(0, 0)], 0.5, epsilon = 1e-5);
        assert_relative_eq!(x.values()[(0, 1)], 0.25, epsilon = 1e-5);
        assert_relative_eq!(x.values()[(0, 2)], 0.25, epsilon = 1e-5);
    }

    #[test]
    fn softmax_inv_handles_large_entries_without_overflow() {
        let z = DMatrix::from_row_slice(1, 2, &[1000.0, 0.0]);
        // Not a zero-sum row; exercise the kernel directly.
        let mut m = z;
        softmax_row_in_place(&mut m, 0);
        assert_relative_eq!(m[(0, 0)], 1.0, epsilon = 1e-12);
        assert!(m[(0, 1)] >= 0.0 && m[(0, 1)] < 1e-12);
    }

    #[test]
    fn jacobian_at_symmetric_point() {
        let jac = softmax_jacobian(&DVector::from_vec(vec![0.0, 0.0])).unwrap();
        let expected = dmatrix![0.25, -0.25; -0.25, 0.25];
        assert_relative_eq!(jac, expected, epsilon = 1e-15);
    }

    #[test]
    fn jacobian_rejects_non_finite() {
        assert!(softmax_jacobian(&DVector::from_vec(vec![0.0, f64::NAN])).is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let z = DVector::from_vec(vec![0.3, -0.7, 0.4, 0.0]);
        let jac = softmax_jacobian(&z).unwrap();
        let h = 1e-5;
        let softmax = |v: &DVector<f64>| {
            let max = v.max();
            let e: DVector<f64> = v.map(|x| (x - max).exp());
            let s: f64 = e.sum();
            e / s
        };
        for b in 0..4 {
            let mut plus = z.clone();
            let mut minus = z.clone();
            plus[b] += h;
            minus[b] -= h;
            let diff = (softmax(&plus) - softmax(&minus)) / (2.0 * h);
            for a in 0..4 {
                assert_relative_eq!(jac[(a, b)], diff[a], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn zero_replace_floors_and_normalizes() {
        let w = CountMatrix::new(dmatrix![0u64, 2, 2]).unwrap();
        let x = zero_replace(&w, 0.5).unwrap();
        assert_relative_eq!(x.values()[(0, 0)], 0.11111, epsilon = 1e-5);
        assert_relative_eq!(x.values()[(0, 1)], 0.44444, epsilon = 1e-5);
        assert_relative_eq!(x.values()[(0, 2)], 0.44444, epsilon = 1e-5);
    }

    #[test]
    fn zero_replace_is_plain_normalization_without_zeros() {
        let w = CountMatrix::new(dmatrix![3u64, 1, 4]).unwrap();
        let x = zero_replace(&w, 0.5).unwrap();
        assert_relative_eq!(x.values()[(0, 0)], 3.0 / 8.0, epsilon = 1e-15);
        assert_relative_eq!(x.values()[(0, 1)], 1.0 / 8.0, epsilon = 1e-15);
        assert_relative_eq!(x.values()[(0, 2)], 4.0 / 8.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_replace_all_zero_row_is_uniform() {
        let w = CountMatrix::new(dmatrix![0u64, 0, 0, 0]).unwrap();
        let x = zero_replace(&w, 0.5).unwrap();
        for v in x.values().iter() {
            assert_relative_eq!(*v, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_replace_rejects_nonpositive_pseudocount() {
        let w = CountMatrix::new(dmatrix![1u64, 2]).unwrap();
        assert!(matches!(zero_replace(&w, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn count_matrix_rejects_single_column() {
        assert!(CountMatrix::new(DMatrix::from_element(3, 1, 1u64)).is_err());
    }

    #[test]
    fn count_matrix_from_float_rejects_fractions_and_negatives() {
        assert!(CountMatrix::from_float(&dmatrix![2.5, 1.0]).is_err());
        assert!(CountMatrix::from_float(&dmatrix![-1.0, 1.0]).is_err());
        let ok = CountMatrix::from_float(&dmatrix![2.0, 1.0]).unwrap();
        assert_eq!(ok.values()[(0, 0)], 2);
        assert_eq!(ok.row_totals(), &[3]);
        assert_eq!(ok.grand_total(), 3);
    }

    #[test]
    fn composition_rejects_zero_entry() {
        let m = dmatrix![0.0, 1.0];
        assert!(matches!(CompositionMatrix::new(m), Err(Error::Domain { .. })));
    }

    #[test]
    fn clr_matrix_rejects_uncentered_rows() {
        assert!(ClrMatrix::new(dmatrix![1.0, 1.0]).is_err());
        assert!(ClrMatrix::new(dmatrix![f64::NAN, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_clr_softmax(raw in proptest::collection::vec(-8.0f64..8.0, 12)) {
            let mut z = DMatrix::from_fn(3, 4, |i, j| raw[i * 4 + j]);
            center_rows(&mut z);
            let z = ClrMatrix::new(z).unwrap();
            let back = clr(&softmax_inv(&z));
            for (a, b) in z.values().iter().zip(back.values().iter()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }

        #[test]
        fn softmax_shift_invariance(raw in proptest::collection::vec(-6.0f64..6.0, 8), c in -5.0f64..5.0) {
            let m = DMatrix::from_fn(2, 4, |i, j| raw[i * 4 + j]);
            let shifted = DMatrix::from_fn(2, 4, |i, j| m[(i, j)] + c);
            let mut a = m.clone();
            let mut b = shifted;
            for i in 0..2 {
                softmax_row_in_place(&mut a, i);
                softmax_row_in_place(&mut b, i);
            }
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn jacobian_rows_sum_to_zero_and_psd(raw in proptest::collection::vec(-6.0f64..6.0, 5)) {
            let z = DVector::from_vec(raw);
            let jac = softmax_jacobian(&z).unwrap();
            prop_assert!((jac.transpose() - &jac).abs().max() < 1e-15);
            for i in 0..5 {
                prop_assert!(jac.row(i).sum().abs() < 1e-15);
            }
            let eig = jac.symmetric_eigenvalues();
            for v in eig.iter() {
                prop_assert!(*v >= -1e-12);
            }
        }
    }
}
