//! Accelerated proximal gradient solver for the nuclear-norm-penalized
//! multinomial likelihood.
//!
//! Each iteration takes a gradient step from the momentum point `Y`, applies
//! singular value thresholding (the prox of the nuclear norm), backtracks the
//! step constant `L` until the quadratic majorizer covers the step, then
//! updates the momentum with a friction-damped Nesterov weight
//! `(k-1)/(k+rho-1)`. Because the gradient has zero row sums and thresholding
//! preserves the all-ones null vector, every iterate stays a valid CLR
//! matrix.

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::compositional::{clr, zero_replace, ClrMatrix, CountMatrix};
use crate::error::{Error, Result};
use crate::likelihood::{gap_from_parts, grad_neg_loglik, neg_loglik, Objective};
use crate::rng::stream_rng;
use crate::svd::thin_svd;

/// Hyperparameters of the accelerated proximal gradient solver.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    /// Nuclear norm penalty weight (must be nonnegative).
    pub lambda: f64,
    /// Backtracking growth factor for `L`.
    pub gamma_l: f64,
    /// Initial step constant.
    pub l0: f64,
    /// Momentum friction; must be at least 4.5 for the damped weight to decay
    /// oscillations.
    pub rho: f64,
    /// Convergence threshold on the absolute line-search gap.
    pub eps_gap: f64,
    pub max_iters: usize,
    /// Standard deviation of the random initial perturbation.
    pub perturb_sigma: f64,
    /// Number of independently perturbed starts; the best objective wins.
    pub n_starts: usize,
    pub seed: u64,
}

impl SolverConfig {
    pub fn new(lambda: f64) -> Self {
        SolverConfig { lambda, ..SolverConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if !(self.gamma_l > 1.0) {
            return Err(Error::Config(format!("gamma_l must exceed 1, got {}", self.gamma_l)));
        }
        if !(self.l0 > 0.0) {
            return Err(Error::Config(format!("l0 must be positive, got {}", self.l0)));
        }
        if !(self.rho >= 4.5) {
            return Err(Error::Config(format!("rho must be at least 4.5, got {}", self.rho)));
        }
        if !(self.eps_gap > 0.0) {
            return Err(Error::Config(format!("eps_gap must be positive, got {}", self.eps_gap)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.perturb_sigma >= 0.0) {
            return Err(Error::Config(format!(
                "perturb_sigma must be nonnegative, got {}",
                self.perturb_sigma
            )));
        }
        if self.n_starts == 0 {
            return Err(Error::Config("n_starts must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: 0.0,
            gamma_l: 1.5,
            l0: 1.0,
            rho: 5.0,
            eps_gap: 1e-7,
            max_iters: 10_000,
            perturb_sigma: 1e-3,
            n_starts: 4,
            seed: 0,
        }
    }
}

/// One accepted iteration of the solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub objective: f64,
    pub loss: f64,
    pub nuclear_norm: f64,
    pub l: f64,
    pub gap: f64,
    /// Number of singular values above `1e-8 * sigma_max`.
    pub rank: usize,
    /// Largest absolute row sum of the accepted iterate; stays near zero
    /// because gradients have zero row sums and thresholding preserves the
    /// all-ones null vector.
    pub row_sum_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// `|gap| <= eps_gap` at an accepted step.
    GapConverged,
    /// Iteration budget exhausted.
    MaxIters,
    /// Estimate produced directly, with no iteration (baselines).
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveTrace {
    pub records: Vec<TraceRecord>,
    pub termination: Termination,
}

/// A fitted CLR matrix with its objective, iteration trace, and spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub z_hat: ClrMatrix,
    pub objective: Objective,
    pub trace: SolveTrace,
    /// Singular values of `z_hat`, descending.
    pub singular_values: Vec<f64>,
}

/// Row-sum tolerance for solver outputs (slightly looser than the 1e-10 of
/// direct transforms because iterates accumulate rounding).
pub(crate) const ESTIMATE_ROW_SUM_TOL: f64 = 1e-8;

/// Rank-reporting threshold relative to the largest singular value.
const RANK_REL_TOL: f64 = 1e-8;

/// Floor for the periodically decreased step constant.
const MIN_L: f64 = 1e-12;

/// Singular value soft-thresholding: the prox of `tau * ||.||_*`.
///
/// Returns `U diag(max(sigma_i - tau, 0)) V^T`; for `tau = 0` the input is
/// returned unchanged. Thresholding never mixes singular subspaces, so the
/// all-ones vector stays in the null space — a zero-row-sum input yields a
/// zero-row-sum output.
pub fn svt_prox(m: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    if !(tau >= 0.0) {
        return Err(Error::Config(format!("threshold must be nonnegative, got {tau}")));
    }
    if tau == 0.0 {
        return Ok(m.clone());
    }
    Ok(svt_with_values(m, tau)?.0)
}

/// Thresholded reconstruction together with the thresholded singular values
/// (which are exactly the singular values of the output, descending).
fn svt_with_values(m: &DMatrix<f64>, tau: f64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let svd = thin_svd(m)?;
    let thresholded: Vec<f64> = svd.sigma.iter().map(|&s| (s - tau).max(0.0)).collect();
    if tau == 0.0 {
        return Ok((m.clone(), thresholded));
    }
    let kept = thresholded.iter().filter(|&&s| s > 0.0).count();
    if kept == 0 {
        return Ok((DMatrix::zeros(m.nrows(), m.ncols()), thresholded));
    }
    let mut scaled = svd.u.columns(0, kept).clone_owned();
    for (c, &s) in thresholded[..kept].iter().enumerate() {
        scaled.column_mut(c).scale_mut(s);
    }
    let recon = scaled * svd.v_t.rows(0, kept);
    Ok((recon, thresholded))
}

/// Initial iterate: CLR of the zero-replaced counts plus a row-centered
/// Gaussian perturbation of scale `perturb_sigma`.
pub fn initialize(w: &CountMatrix, cfg: &SolverConfig, rng: &mut ChaCha8Rng) -> ClrMatrix {
    let base = clr(&zero_replace(w, 0.5).expect("0.5 is a valid pseudo-count"));
    if cfg.perturb_sigma == 0.0 {
        return base;
    }
    let (n, p) = base.shape();
    let normal = Normal::new(0.0, cfg.perturb_sigma).expect("validated sigma");
    let mut z = base.into_inner();
    for i in 0..n {
        let mut noise = vec![0.0; p];
        let mut mean = 0.0;
        for e in noise.iter_mut() {
            *e = normal.sample(rng);
            mean += *e;
        }
        mean /= p as f64;
        for j in 0..p {
            z[(i, j)] += noise[j] - mean;
        }
    }
    ClrMatrix::with_row_sum_tol(z, ClrMatrix::ROW_SUM_TOL)
        .expect("centered noise keeps rows within tolerance")
}

struct RunResult {
    z: DMatrix<f64>,
    loss: f64,
    singular_values: Vec<f64>,
    trace: SolveTrace,
}

fn solve_single(w: &CountMatrix, cfg: &SolverConfig, start: usize) -> Result<RunResult> {
    let mut rng = stream_rng(cfg.seed, start as u64);
    let z0 = initialize(w, cfg, &mut rng).into_inner();

    let mut records = Vec::new();
    let mut termination = Termination::MaxIters;
    let mut z_prev = z0.clone();
    let mut y = z0;
    let mut l = cfg.l0;

    let mut current = None;
    for k in 1..=cfg.max_iters {
        if k % 10 == 0 {
            l = (l / cfg.gamma_l).max(MIN_L);
        }
        let loss_y = neg_loglik(&y, w)?;
        let grad_y = grad_neg_loglik(&y, w)?;

        let (z_new, svals, loss_new, gap) = loop {
            let step = &y - &grad_y / l;
            let (z_new, svals) = svt_with_values(&step, cfg.lambda / l)?;
            let loss_new = neg_loglik(&z_new, w)?;
            let gap = gap_from_parts(&z_new, &y, loss_new, loss_y, &grad_y, l);
            if gap <= 0.0 {
                break (z_new, svals, loss_new, gap);
            }
            l *= cfg.gamma_l;
            if !l.is_finite() {
                return Err(Error::Numeric(format!(
                    "line search diverged at iteration {k}: L overflowed"
                )));
            }
        };

        let nuc: f64 = svals.iter().sum();
        let objective = loss_new + cfg.lambda * nuc;
        if !objective.is_finite() {
            return Err(Error::SolverNumeric {
                message: format!("objective became non-finite at iteration {k}"),
                trace: Box::new(SolveTrace { records, termination: Termination::MaxIters }),
            });
        }
        let rank = if svals[0] > 0.0 {
            svals.iter().filter(|&&s| s > RANK_REL_TOL * svals[0]).count()
        } else {
            0
        };
        let row_sum_max = (0..z_new.nrows())
            .map(|i| z_new.row(i).sum().abs())
            .fold(0.0f64, f64::max);
        records.push(TraceRecord {
            iter: k,
            objective,
            loss: loss_new,
            nuclear_norm: nuc,
            l,
            gap,
            rank,
            row_sum_max,
        });

        let beta = (k as f64 - 1.0) / (k as f64 + cfg.rho - 1.0);
        y = &z_new + (&z_new - &z_prev) * beta;
        z_prev = z_new.clone();
        current = Some((z_new, svals, loss_new));

        if gap.abs() <= cfg.eps_gap {
            termination = Termination::GapConverged;
            break;
        }
    }

    let (z, singular_values, loss) = current.expect("max_iters >= 1 guarantees an iteration");
    Ok(RunResult { z, loss, singular_values, trace: SolveTrace { records, termination } })
}

/// Runs the accelerated proximal gradient method from `cfg.n_starts`
/// independently perturbed initializations and keeps the lowest objective
/// (ties broken by start index).
pub fn solve(w: &CountMatrix, cfg: &SolverConfig) -> Result<Estimate> {
    cfg.validate()?;
    let runs: Vec<Result<RunResult>> = if cfg.n_starts == 1 {
        vec![solve_single(w, cfg, 0)]
    } else {
        (0..cfg.n_starts)
            .into_par_iter()
            .map(|s| solve_single(w, cfg, s))
            .collect()
    };

    let mut best: Option<RunResult> = None;
    for run in runs {
        let run = run?;
        let total = run.loss + cfg.lambda * run.singular_values.iter().sum::<f64>();
        let replace = match &best {
            None => true,
            Some(b) => total < b.loss + cfg.lambda * b.singular_values.iter().sum::<f64>(),
        };
        if replace {
            best = Some(run);
        }
    }
    let best = best.expect("n_starts >= 1");

    let nuc: f64 = best.singular_values.iter().sum();
    let objective = Objective::new(best.loss, cfg.lambda * nuc);
    let z_hat = ClrMatrix::with_row_sum_tol(best.z, ESTIMATE_ROW_SUM_TOL)?;
    Ok(Estimate {
        z_hat,
        objective,
        trace: best.trace,
        singular_values: best.singular_values,
    })
}
