//! Automatic selection of the penalty weight by balancing the two objective
//! terms.
//!
//! The balance criterion `R = a/b + b/a` is minimal when its two arguments
//! match in magnitude. Here `a` is the fit term expressed per sample (the
//! mean negative log-likelihood in nats-per-read times the mean read depth)
//! and `b` is the nuclear norm of the estimate; both quantities then grow
//! comparably with problem size, so the criterion has an interior minimum
//! along the `lambda` path. Starting from `lambda = neg_loglik(Z0)`, each
//! round solves at the current `lambda`; while no round has improved the
//! criterion yet the search descends geometrically (the start point is
//! usually a heavy overshoot that zeroes the estimate), and once an
//! incumbent exists it expands geometrically on improvement and bisects in
//! log space back toward the incumbent on worsening rounds.

use serde::Serialize;

use crate::compositional::{clr, zero_replace, CountMatrix};
use crate::error::{Error, Result};
use crate::likelihood::neg_loglik;
use crate::solver::{solve, Estimate, SolverConfig};
use crate::svd::nuclear_norm;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneConfig {
    /// Maximum number of solve rounds.
    pub max_rounds: usize,
    /// Relative stop threshold on `|R - r| / (R + r)`.
    pub eps_rel: f64,
    /// Geometric step factor for `lambda` between rounds.
    pub gamma_lambda: f64,
    pub solver: SolverConfig,
}

impl TuneConfig {
    pub fn new(solver: SolverConfig) -> Self {
        TuneConfig { max_rounds: 100, eps_rel: 1e-3, gamma_lambda: 1.5, solver }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_rounds == 0 {
            return Err(Error::Config("max_rounds must be at least 1".into()));
        }
        if !(self.eps_rel > 0.0) {
            return Err(Error::Config(format!("eps_rel must be positive, got {}", self.eps_rel)));
        }
        if !(self.gamma_lambda > 1.0) {
            return Err(Error::Config(format!(
                "gamma_lambda must exceed 1, got {}",
                self.gamma_lambda
            )));
        }
        self.solver.validate()
    }
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig::new(SolverConfig::default())
    }
}

/// One evaluated round of the tuning search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TuneRound {
    pub round: usize,
    pub lambda: f64,
    /// Balance criterion of the solved estimate (infinite when degenerate).
    pub r_value: f64,
    pub objective: f64,
    pub nuclear_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TuneTermination {
    /// The relative change of the criterion fell below `eps_rel`.
    EarlyStop,
    /// Round budget exhausted; the incumbent `lambda` was kept.
    MaxRounds,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneTrace {
    pub rounds: Vec<TuneRound>,
    pub lambda_auto: f64,
    pub termination: TuneTermination,
}

/// `a/b + b/a`: minimal (value 2) when the two magnitudes match.
pub fn balance_criterion(loss: f64, nuc: f64) -> Result<f64> {
    if !(loss > 0.0) || !(nuc > 0.0) {
        return Err(Error::Invariant(format!(
            "balance criterion requires strictly positive terms, got loss={loss}, nuclear norm={nuc}"
        )));
    }
    Ok(loss / nuc + nuc / loss)
}

/// Nuclear norm below which an estimate is treated as degenerate (the penalty
/// collapsed it); such rounds count as worsening instead of erroring so the
/// search can recover from a `lambda` overshoot.
const DEGENERATE_NUC: f64 = 1e-10;

/// Runs the tuning search and returns the estimate solved at the selected
/// `lambda` together with the evaluated rounds.
pub fn auto_tune(w: &CountMatrix, cfg: &TuneConfig) -> Result<(Estimate, TuneTrace)> {
    cfg.validate()?;

    let z0 = clr(&zero_replace(w, 0.5)?);
    let loss0 = neg_loglik(z0.values(), w)?;
    let nuc0 = nuclear_norm(z0.values())?;
    // Mean read depth: converts nats-per-read into a per-sample fit term so
    // the two balanced magnitudes are commensurate.
    let depth = w.grand_total() as f64 / w.nrows() as f64;
    let mut r_best = balance_criterion(loss0 * depth, nuc0)?;
    let mut lambda = loss0;
    let mut lambda_auto = lambda;

    let mut rounds: Vec<TuneRound> = Vec::new();
    // Estimate solved at the current `lambda_auto`; solving is deterministic,
    // so reusing it equals re-solving at the end.
    let mut incumbent: Option<Estimate> = None;

    let attach = |e: Error, rounds: &[TuneRound], lambda_auto: f64| Error::TuneAborted {
        source: Box::new(e),
        trace: Box::new(TuneTrace {
            rounds: rounds.to_vec(),
            lambda_auto,
            termination: TuneTermination::MaxRounds,
        }),
    };

    for round in 1..=cfg.max_rounds {
        let mut solver_cfg = cfg.solver.clone();
        solver_cfg.lambda = lambda;
        let est = solve(w, &solver_cfg).map_err(|e| attach(e, &rounds, lambda_auto))?;

        let nuc: f64 = est.singular_values.iter().sum();
        let loss = est.objective.loss;
        let r = if nuc < DEGENERATE_NUC || loss <= 0.0 {
            f64::INFINITY
        } else {
            balance_criterion(loss * depth, nuc)?
        };
        rounds.push(TuneRound {
            round,
            lambda,
            r_value: r,
            objective: est.objective.total,
            nuclear_norm: nuc,
        });

        if r.is_finite() && (r_best - r).abs() / (r_best + r) <= cfg.eps_rel {
            let trace =
                TuneTrace { rounds, lambda_auto: lambda, termination: TuneTermination::EarlyStop };
            return Ok((est, trace));
        }

        if r < r_best {
            r_best = r;
            lambda_auto = lambda;
            incumbent = Some(est);
            lambda *= cfg.gamma_lambda;
        } else if incumbent.is_some() {
            // Bisect in log space back toward the best lambda seen so far.
            lambda = (lambda * lambda_auto).sqrt();
        } else {
            // No round has improved on the initial criterion yet, so the
            // incumbent is still the (typically overshooting) start point;
            // bisecting toward it would stall, so descend instead.
            lambda /= cfg.gamma_lambda;
            lambda_auto = lambda;
        }
    }

    let est = match incumbent {
        Some(est) => est,
        None => {
            let mut solver_cfg = cfg.solver.clone();
            solver_cfg.lambda = lambda_auto;
            solve(w, &solver_cfg).map_err(|e| attach(e, &rounds, lambda_auto))?
        }
    };
    let trace = TuneTrace { rounds, lambda_auto, termination: TuneTermination::MaxRounds };
    Ok((est, trace))
}
