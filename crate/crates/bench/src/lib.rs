//! Shared fixtures for the criterion benchmarks.

use clrlr_core::{SimInstance, SimScenario};

/// Deterministic simulated instance of the exact low-rank scenario, so every
/// benchmark run measures the same inputs.
pub fn instance(n: usize, p: usize, r: usize, gamma: u32) -> SimInstance {
    let scenario = SimScenario::exact_defaults(n, p, r, gamma, 7);
    SimInstance::generate(&scenario, 0).expect("benchmark scenario is valid")
}
