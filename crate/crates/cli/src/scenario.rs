//! Flat `key = value` scenario files.
//!
//! Keys are exactly the simulation scenario fields (`n`, `p`, `r`, `v`, `q`,
//! `gamma`, `regime`, `noise_sd`, `seed`). `regime` is required; every other
//! key falls back to that regime's benchmark defaults. Blank lines and lines
//! starting with `#` are ignored; unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use clrlr_core::{Regime, SimScenario};

use crate::io::{err, CliResult};

pub fn load_scenario(path: &Path) -> CliResult<SimScenario> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse_scenario(&text).map_err(|e| format!("{}: {e}", path.display()).into())
}

pub fn parse_scenario(text: &str) -> CliResult<SimScenario> {
    let mut pairs: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`, got {line:?}", idx + 1))?;
        let key = key.trim();
        let value = value.trim();
        if pairs.insert(key, (idx + 1, value)).is_some() {
            return err(format!("line {}: key {key:?} given twice", idx + 1));
        }
    }

    const KNOWN: [&str; 9] = ["n", "p", "r", "v", "q", "gamma", "regime", "noise_sd", "seed"];
    for (key, (line, _)) in &pairs {
        if !KNOWN.contains(key) {
            return err(format!(
                "line {line}: unknown key {key:?} (known keys: {})",
                KNOWN.join(", ")
            ));
        }
    }

    let regime: Regime = match pairs.get("regime") {
        Some((line, value)) => Regime::from_str(value)
            .map_err(|e| format!("line {line}: {e}"))?,
        None => return err("missing required key \"regime\"".to_string()),
    };

    fn get<T: FromStr>(
        pairs: &BTreeMap<&str, (usize, &str)>,
        key: &str,
        default: T,
    ) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        match pairs.get(key) {
            Some((line, value)) => value
                .parse()
                .map_err(|e| format!("line {line}: invalid {key} value {value:?}: {e}").into()),
            None => Ok(default),
        }
    }

    let n = get(&pairs, "n", 100usize)?;
    let p = get(&pairs, "p", 50usize)?;
    let gamma = get(&pairs, "gamma", 1u32)?;
    let seed = get(&pairs, "seed", 0u64)?;
    let mut scenario = match regime {
        Regime::ExactLowRank => SimScenario::exact_defaults(n, p, 20.min(n).min(p), gamma, seed),
        Regime::ApproxLowRank => SimScenario::approx_defaults(n, p, gamma, seed),
    };
    scenario.r = get(&pairs, "r", scenario.r)?;
    scenario.v = get(&pairs, "v", scenario.v)?;
    scenario.q = get(&pairs, "q", scenario.q)?;
    scenario.noise_sd = get(&pairs, "noise_sd", scenario.noise_sd)?;
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_scenario() {
        let text = "# benchmark setting\nn = 30\np = 20\nr = 5\nv = -2\nq = 0.5\ngamma = 3\nregime = exact_low_rank\nnoise_sd = 0.1\nseed = 7\n";
        let s = parse_scenario(text).unwrap();
        assert_eq!((s.n, s.p, s.r, s.gamma, s.seed), (30, 20, 5, 3, 7));
        assert_eq!(s.regime, Regime::ExactLowRank);
        assert_eq!(s.v, -2.0);
    }

    #[test]
    fn applies_regime_defaults() {
        let s = parse_scenario("regime = exact_low_rank\n").unwrap();
        assert_eq!((s.n, s.p, s.r, s.gamma), (100, 50, 20, 1));
        assert_eq!(s.v, -2.0);
        assert_eq!(s.noise_sd, 0.1);

        let s = parse_scenario("regime = approx_low_rank\nn = 10\np = 8\n").unwrap();
        assert_eq!(s.r, 8);
        assert_eq!(s.v, -1.0);
        assert!((s.noise_sd - 0.05f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_unknown_key() {
        let msg = parse_scenario("regime = exact_low_rank\nrank = 3\n").unwrap_err().to_string();
        assert!(msg.contains("unknown key \"rank\""), "{msg}");
    }

    #[test]
    fn rejects_missing_regime() {
        assert!(parse_scenario("n = 10\np = 5\n").is_err());
    }

    #[test]
    fn rejects_repeated_key() {
        let msg = parse_scenario("regime = exact_low_rank\nn = 5\nn = 6\n")
            .unwrap_err()
            .to_string();
        assert!(msg.contains("given twice"), "{msg}");
    }

    #[test]
    fn rejects_invalid_values() {
        assert!(parse_scenario("regime = exact_low_rank\ngamma = zero\n").is_err());
        assert!(parse_scenario("regime = exact_low_rank\nq = 1.5\n").is_err());
        assert!(parse_scenario("regime = sideways\n").is_err());
    }
}
