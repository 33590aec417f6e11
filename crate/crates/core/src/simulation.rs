//! Synthetic benchmark generators: exact and approximately low-rank CLR
//! truth matrices, plus a multinomial count sampler with uneven per-sample
//! read depths.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::compositional::{center_rows, softmax_inv, ClrMatrix, CompositionMatrix, CountMatrix};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::svd::thin_svd;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    ExactLowRank,
    ApproxLowRank,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::ExactLowRank => f.write_str("exact_low_rank"),
            Regime::ApproxLowRank => f.write_str("approx_low_rank"),
        }
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact_low_rank" => Ok(Regime::ExactLowRank),
            "approx_low_rank" => Ok(Regime::ApproxLowRank),
            other => Err(Error::Config(format!(
                "unknown regime {other:?}; expected exact_low_rank or approx_low_rank"
            ))),
        }
    }
}

/// Full description of one synthetic benchmark setting. Generation is a pure
/// function of the scenario plus a replicate index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    /// Samples (rows).
    pub n: usize,
    /// Taxa (columns).
    pub p: usize,
    /// Target rank of the truth matrix (ignored by the approximate regime,
    /// which always uses min(n, p) factors).
    pub r: usize,
    /// Off-diagonal value planted in the structured factor.
    pub v: f64,
    /// Probability that an off-diagonal factor entry equals `v`.
    pub q: f64,
    /// Read-depth multiplier: expected total count is `gamma * n * p`.
    pub gamma: u32,
    pub regime: Regime,
    /// Standard deviation of the dense noise added to the structured factor.
    pub noise_sd: f64,
    pub seed: u64,
}

impl SimScenario {
    /// Exact low-rank setting with the benchmark factor parameters
    /// `(v, q) = (-2, 0.5)` and noise standard deviation 0.1.
    pub fn exact_defaults(n: usize, p: usize, r: usize, gamma: u32, seed: u64) -> Self {
        SimScenario {
            n,
            p,
            r,
            v: -2.0,
            q: 0.5,
            gamma,
            regime: Regime::ExactLowRank,
            noise_sd: 0.1,
            seed,
        }
    }

    /// Approximately low-rank setting: full factor count with inverse-square
    /// singular values, `(v, q) = (-1, 0.5)`, noise variance 0.05.
    pub fn approx_defaults(n: usize, p: usize, gamma: u32, seed: u64) -> Self {
        SimScenario {
            n,
            p,
            r: n.min(p),
            v: -1.0,
            q: 0.5,
            gamma,
            regime: Regime::ApproxLowRank,
            noise_sd: 0.05f64.sqrt(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 || self.p < 2 {
            return Err(Error::Invariant(format!(
                "scenario needs n >= 1 and p >= 2, got n={} p={}",
                self.n, self.p
            )));
        }
        let max_r = self.n.min(self.p);
        if self.r < 1 || self.r > max_r {
            return Err(Error::Invariant(format!(
                "rank must lie in [1, {max_r}], got {}",
                self.r
            )));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::Invariant(format!("q must lie in [0, 1], got {}", self.q)));
        }
        if self.gamma < 1 {
            return Err(Error::Invariant("gamma must be at least 1".to_string()));
        }
        if !self.v.is_finite() {
            return Err(Error::Invariant(format!("v must be finite, got {}", self.v)));
        }
        if !self.noise_sd.is_finite() || self.noise_sd < 0.0 {
            return Err(Error::Invariant(format!(
                "noise_sd must be finite and nonnegative, got {}",
                self.noise_sd
            )));
        }
        Ok(())
    }
}

/// One generated replicate: the truth matrix, its composition, the sampled
/// counts, and the drawn read proportions.
#[derive(Debug, Clone, PartialEq)]
pub struct SimInstance {
    pub z_star: ClrMatrix,
    pub x_star: CompositionMatrix,
    pub counts: CountMatrix,
    /// Relative read depths `R_i`; sums to 1.
    pub read_props: Vec<f64>,
}

impl SimInstance {
    /// Generates replicate `replicate` of `scenario` on its own RNG stream,
    /// so replicates can be produced concurrently and in any order.
    pub fn generate(scenario: &SimScenario, replicate: u64) -> Result<Self> {
        scenario.validate()?;
        let mut rng = stream_rng(scenario.seed, replicate);
        let z_star = match scenario.regime {
            Regime::ExactLowRank => gen_z_exact(scenario, &mut rng)?,
            Regime::ApproxLowRank => gen_z_approx(scenario, &mut rng)?,
        };
        let x_star = softmax_inv(&z_star);
        let (counts, read_props) = gen_counts(&z_star, scenario.gamma, &mut rng)?;
        Ok(SimInstance { z_star, x_star, counts, read_props })
    }
}

/// Structured factor `0.2 * V1 + V2`: V1 has unit diagonal and off-diagonal
/// entries equal to `v` with probability `q` (1 otherwise); V2 is dense
/// Gaussian noise.
fn structured_factor(
    p: usize,
    r: usize,
    v: f64,
    q: f64,
    noise_sd: f64,
    rng: &mut ChaCha8Rng,
) -> DMatrix<f64> {
    let noise = Normal::new(0.0, noise_sd).expect("validated noise_sd");
    DMatrix::from_fn(p, r, |i, j| {
        let base = if i == j {
            1.0
        } else if rng.gen::<f64>() < q {
            v
        } else {
            1.0
        };
        0.2 * base + noise.sample(rng)
    })
}

/// Exactly rank-`r` truth: `Z* = U V^T` row-centered, with `U` standard
/// Gaussian of variance 0.5 and `V` the structured factor.
pub fn gen_z_exact(scenario: &SimScenario, rng: &mut ChaCha8Rng) -> Result<ClrMatrix> {
    if scenario.regime != Regime::ExactLowRank {
        return Err(Error::Config("gen_z_exact requires the exact_low_rank regime".to_string()));
    }
    scenario.validate()?;
    let u_dist = Normal::new(0.0, 0.5f64.sqrt()).expect("fixed std");
    let u = DMatrix::from_fn(scenario.n, scenario.r, |_, _| u_dist.sample(rng));
    let v = structured_factor(scenario.p, scenario.r, scenario.v, scenario.q, scenario.noise_sd, rng);
    let mut z = u * v.transpose();
    center_rows(&mut z);
    ClrMatrix::new(z)
}

/// Pre-centering approximate truth: orthonormal bases of random factors with
/// planted singular values `i^{-2}`.
pub(crate) fn approx_pre_centered(
    scenario: &SimScenario,
    rng: &mut ChaCha8Rng,
) -> Result<DMatrix<f64>> {
    let m = scenario.n.min(scenario.p);
    let u_dist = Normal::new(0.0, 0.5f64.sqrt()).expect("fixed std");
    let u_raw = DMatrix::from_fn(scenario.n, m, |_, _| u_dist.sample(rng));
    let v_raw =
        structured_factor(scenario.p, m, scenario.v, scenario.q, scenario.noise_sd, rng);
    let u_basis = thin_svd(&u_raw)?.u;
    let v_basis = thin_svd(&v_raw)?.u;
    let mut scaled = u_basis;
    for (i, mut col) in scaled.column_iter_mut().enumerate() {
        col *= 1.0 / ((i + 1) as f64).powi(2);
    }
    Ok(scaled * v_basis.transpose())
}

/// Approximately low-rank truth: singular values decay as `i^{-2}` before
/// row-centering, so the spectrum is summable but never exactly truncated.
pub fn gen_z_approx(scenario: &SimScenario, rng: &mut ChaCha8Rng) -> Result<ClrMatrix> {
    if scenario.regime != Regime::ApproxLowRank {
        return Err(Error::Config("gen_z_approx requires the approx_low_rank regime".to_string()));
    }
    scenario.validate()?;
    let mut z = approx_pre_centered(scenario, rng)?;
    center_rows(&mut z);
    ClrMatrix::new(z)
}

/// Samples per-row multinomial counts at uneven depths: read weights
/// `P_i ~ Uniform[1, 10]` are normalized to proportions `R_i`, row depths are
/// `N_i = max(1, round(gamma * n * p * R_i))`, and each row is drawn from
/// `Multinomial(N_i, softmax(z*_i))` by sequential conditional binomials.
pub fn gen_counts(
    z_star: &ClrMatrix,
    gamma: u32,
    rng: &mut ChaCha8Rng,
) -> Result<(CountMatrix, Vec<f64>)> {
    if gamma < 1 {
        return Err(Error::Config("gamma must be at least 1".to_string()));
    }
    let (n, p) = z_star.shape();
    let x = softmax_inv(z_star);
    let weight = Uniform::new_inclusive(1.0f64, 10.0);
    let raw: Vec<f64> = (0..n).map(|_| weight.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    let read_props: Vec<f64> = raw.iter().map(|w| w / total).collect();

    let scale = gamma as f64 * n as f64 * p as f64;
    let mut w = DMatrix::<u64>::zeros(n, p);
    for i in 0..n {
        let n_i = (scale * read_props[i]).round().max(1.0) as u64;
        let mut remaining = n_i;
        let mut rem_prob = 1.0f64;
        for j in 0..p - 1 {
            if remaining == 0 {
                break;
            }
            let pj = x.values()[(i, j)];
            let prob = if rem_prob <= pj { 1.0 } else { pj / rem_prob };
            let draw = Binomial::new(remaining, prob)
                .map_err(|e| Error::Numeric(format!("binomial setup failed: {e}")))?
                .sample(rng);
            w[(i, j)] = draw;
            remaining -= draw;
            rem_prob -= pj;
        }
        w[(i, p - 1)] = remaining;
    }
    Ok((CountMatrix::new(w)?, read_props))
}
