//! Estimation of centered log-ratio (CLR) matrices from multi-sample count
//! data by nuclear-norm-penalized multinomial maximum likelihood.
//!
//! Count matrices from high-throughput sequencing are compositional: only the
//! relative abundances are identifiable, and many entries are zero because
//! read depth is finite. This crate estimates the underlying CLR matrix
//! jointly across samples with a low-rank-inducing nuclear norm penalty,
//! solved by an accelerated proximal gradient method with singular value
//! thresholding. It also ships the classical zero-replacement and truncated
//! SVD baselines, seeded simulators for benchmarking, and evaluation metrics
//! (scaled Frobenius error, row-wise KL divergence, sin-theta subspace
//! distance).

pub mod autotune;
pub mod baselines;
pub mod compositional;
mod error;
pub mod likelihood;
pub mod metrics;
pub mod rng;
pub mod simulation;
pub mod solver;
mod svd;

pub use autotune::{auto_tune, balance_criterion, TuneConfig, TuneRound, TuneTermination, TuneTrace};
pub use baselines::{svt_estimate, zr_estimate, BaselineKind};
pub use compositional::{clr, softmax_inv, softmax_jacobian, zero_replace, ClrMatrix, CompositionMatrix, CountMatrix};
pub use error::{Error, Result};
pub use likelihood::{grad_neg_loglik, line_search_gap, neg_loglik, Objective};
pub use metrics::{frob_error, kl_rowwise, sin_theta_sq, top_k_svd, SpectralSummary};
pub use simulation::{gen_counts, gen_z_approx, gen_z_exact, Regime, SimInstance, SimScenario};
pub use solver::{initialize, solve, svt_prox, Estimate, SolveTrace, SolverConfig, Termination, TraceRecord};
