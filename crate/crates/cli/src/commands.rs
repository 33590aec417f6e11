//! The four subcommands: estimate, simulate, bench, spectrum.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clrlr_core::rng::child_seed;
use clrlr_core::{
    auto_tune, frob_error, kl_rowwise, sin_theta_sq, softmax_inv, solve, svt_estimate, top_k_svd,
    zr_estimate, Estimate, SimInstance, SimScenario, SolverConfig, Termination, TuneConfig,
    TuneTermination, TuneTrace,
};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::io::{
    err, fmt_f64, prepare_out_dir, read_counts, write_counts_csv, write_csv, write_json,
    write_matrix_csv, CliResult, CountTable, TableFormat,
};
use crate::scenario::load_scenario;

/// Subspace-distance dimensions reported by `bench`; entries above
/// `min(n, p)` are left blank.
const SIN_THETA_KS: [usize; 4] = [1, 2, 3, 20];

/// Rank-reporting threshold relative to the largest singular value.
const RANK_REL_TOL: f64 = 1e-8;

#[derive(Debug, clap::Args)]
pub struct EstimateArgs {
    /// Count table: header row of taxa ids, first column sample ids.
    pub counts: PathBuf,
    /// Input delimiter; inferred from the file extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<TableFormat>,
    /// Fixed nuclear norm penalty weight.
    #[arg(long, required_unless_present = "auto", conflicts_with = "auto")]
    pub lambda: Option<f64>,
    /// Tune the penalty weight automatically.
    #[arg(long)]
    pub auto: bool,
    /// Directory for the result files.
    #[arg(long, default_value = "clrlr-out")]
    pub out_dir: PathBuf,
    /// Seed for the randomized solver restarts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Independently perturbed solver starts; the best objective wins.
    #[arg(long, default_value_t = 4)]
    pub n_starts: usize,
    /// Iteration budget per solve.
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    /// Stop a solve once the absolute line-search gap falls below this.
    #[arg(long, default_value_t = 1e-7)]
    pub eps_gap: f64,
    /// Momentum friction (at least 4.5).
    #[arg(long, default_value_t = 5.0)]
    pub rho: f64,
    /// Round budget for automatic tuning.
    #[arg(long, default_value_t = 100)]
    pub max_rounds: usize,
    /// Relative early-stop threshold for automatic tuning.
    #[arg(long, default_value_t = 1e-3)]
    pub eps_rel: f64,
    /// Geometric penalty step between tuning rounds.
    #[arg(long, default_value_t = 1.5)]
    pub gamma_lambda: f64,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Serialize)]
struct EstimateSummary {
    n: usize,
    p: usize,
    mode: &'static str,
    /// Penalty weight of the reported estimate.
    lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_auto: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tuning_rounds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tuning_termination: Option<TuneTermination>,
    loss: f64,
    penalty: f64,
    objective: f64,
    iterations: usize,
    termination: Termination,
    nuclear_norm: f64,
    rank: usize,
    seed: u64,
}

fn spectrum_stats(singular_values: &[f64]) -> (f64, usize) {
    let nuclear: f64 = singular_values.iter().sum();
    let max = singular_values.first().copied().unwrap_or(0.0);
    let rank = if max > 0.0 {
        singular_values.iter().filter(|&&s| s > RANK_REL_TOL * max).count()
    } else {
        0
    };
    (nuclear, rank)
}

pub fn cmd_estimate(args: &EstimateArgs) -> CliResult<()> {
    let format = args.format.unwrap_or_else(|| TableFormat::infer(&args.counts));
    let table = read_counts(&args.counts, format)?;

    let mut files = vec![
        "z_hat.csv",
        "composition.csv",
        "singular_values.csv",
        "trace.csv",
        "omega_boxplot.csv",
        "summary.json",
    ];
    if args.auto {
        files.push("tune_trace.csv");
    }
    prepare_out_dir(&args.out_dir, &files, args.force)?;

    let mut solver = SolverConfig::default();
    solver.seed = args.seed;
    solver.n_starts = args.n_starts;
    solver.max_iters = args.max_iters;
    solver.eps_gap = args.eps_gap;
    solver.rho = args.rho;

    let (estimate, tune_trace) = if args.auto {
        let mut tune = TuneConfig::new(solver);
        tune.max_rounds = args.max_rounds;
        tune.eps_rel = args.eps_rel;
        tune.gamma_lambda = args.gamma_lambda;
        let (est, trace) = auto_tune(&table.counts, &tune)?;
        (est, Some(trace))
    } else {
        solver.lambda = args.lambda.expect("lambda is required without --auto");
        (solve(&table.counts, &solver)?, None)
    };

    write_estimate_files(&args.out_dir, &table, &estimate)?;
    if let Some(trace) = &tune_trace {
        write_tune_trace(&args.out_dir.join("tune_trace.csv"), trace)?;
    }

    let (nuclear_norm, rank) = spectrum_stats(&estimate.singular_values);
    let summary = EstimateSummary {
        n: table.counts.nrows(),
        p: table.counts.ncols(),
        mode: if args.auto { "auto" } else { "fixed" },
        lambda: tune_trace
            .as_ref()
            .map(|t| t.lambda_auto)
            .or(args.lambda)
            .expect("one mode is active"),
        lambda_auto: tune_trace.as_ref().map(|t| t.lambda_auto),
        tuning_rounds: tune_trace.as_ref().map(|t| t.rounds.len()),
        tuning_termination: tune_trace.as_ref().map(|t| t.termination),
        loss: estimate.objective.loss,
        penalty: estimate.objective.penalty,
        objective: estimate.objective.total,
        iterations: estimate.trace.records.len(),
        termination: estimate.trace.termination,
        nuclear_norm,
        rank,
        seed: args.seed,
    };
    write_json(&args.out_dir.join("summary.json"), &summary)?;

    println!(
        "estimated {}x{} CLR matrix (lambda {}, rank {rank}) -> {}",
        summary.n,
        summary.p,
        fmt_f64(summary.lambda),
        args.out_dir.display()
    );
    Ok(())
}

fn write_estimate_files(out_dir: &Path, table: &CountTable, estimate: &Estimate) -> CliResult<()> {
    write_matrix_csv(
        &out_dir.join("z_hat.csv"),
        "sample_id",
        &table.sample_ids,
        &table.taxa_ids,
        estimate.z_hat.values(),
    )?;
    write_matrix_csv(
        &out_dir.join("composition.csv"),
        "sample_id",
        &table.sample_ids,
        &table.taxa_ids,
        softmax_inv(&estimate.z_hat).values(),
    )?;
    write_singular_values(&out_dir.join("singular_values.csv"), &estimate.singular_values)?;

    let trace_header: Vec<String> =
        ["iter", "objective", "loss", "nuclear_norm", "l", "gap", "rank", "row_sum_max"]
            .map(String::from)
            .to_vec();
    let trace_rows: Vec<Vec<String>> = estimate
        .trace
        .records
        .iter()
        .map(|r| {
            vec![
                r.iter.to_string(),
                fmt_f64(r.objective),
                fmt_f64(r.loss),
                fmt_f64(r.nuclear_norm),
                fmt_f64(r.l),
                fmt_f64(r.gap),
                r.rank.to_string(),
                fmt_f64(r.row_sum_max),
            ]
        })
        .collect();
    write_csv(&out_dir.join("trace.csv"), &trace_header, &trace_rows)?;

    let omega_header = vec!["value".to_string(), "membership".to_string()];
    let w = table.counts.values();
    let z = estimate.z_hat.values();
    let mut omega_rows = Vec::with_capacity(z.nrows() * z.ncols());
    for i in 0..z.nrows() {
        for j in 0..z.ncols() {
            let membership = if w[(i, j)] > 0 { "Omega" } else { "OmegaC" };
            omega_rows.push(vec![fmt_f64(z[(i, j)]), membership.to_string()]);
        }
    }
    write_csv(&out_dir.join("omega_boxplot.csv"), &omega_header, &omega_rows)?;
    Ok(())
}

fn write_singular_values(path: &Path, singular_values: &[f64]) -> CliResult<()> {
    let header = vec!["index".to_string(), "value".to_string()];
    let rows: Vec<Vec<String>> = singular_values
        .iter()
        .enumerate()
        .map(|(i, &s)| vec![(i + 1).to_string(), fmt_f64(s)])
        .collect();
    write_csv(path, &header, &rows)
}

fn write_tune_trace(path: &Path, trace: &TuneTrace) -> CliResult<()> {
    let header: Vec<String> = ["round", "lambda", "r_value", "objective", "nuclear_norm"]
        .map(String::from)
        .to_vec();
    let rows: Vec<Vec<String>> = trace
        .rounds
        .iter()
        .map(|r| {
            vec![
                r.round.to_string(),
                fmt_f64(r.lambda),
                fmt_f64(r.r_value),
                fmt_f64(r.objective),
                fmt_f64(r.nuclear_norm),
            ]
        })
        .collect();
    write_csv(path, &header, &rows)
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    /// Scenario file (`key = value` lines; see the README for the keys).
    pub scenario: PathBuf,
    /// Replicate stream to draw.
    #[arg(long, default_value_t = 0)]
    pub replicate: u64,
    #[arg(long, default_value = "clrlr-sim")]
    pub out_dir: PathBuf,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    scenario: &'a SimScenario,
    replicate: u64,
    grand_total: u64,
    row_totals: &'a [u64],
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let scenario = load_scenario(&args.scenario)?;
    let files = ["counts.csv", "z_star.csv", "x_star.csv", "read_props.csv", "summary.json"];
    prepare_out_dir(&args.out_dir, &files, args.force)?;

    let instance = SimInstance::generate(&scenario, args.replicate)?;
    let sample_ids: Vec<String> = (1..=scenario.n).map(|i| format!("S{i}")).collect();
    let taxa_ids: Vec<String> = (1..=scenario.p).map(|j| format!("T{j}")).collect();

    let table = CountTable {
        sample_ids: sample_ids.clone(),
        taxa_ids: taxa_ids.clone(),
        counts: instance.counts.clone(),
    };
    write_counts_csv(&args.out_dir.join("counts.csv"), &table)?;
    write_matrix_csv(
        &args.out_dir.join("z_star.csv"),
        "sample_id",
        &sample_ids,
        &taxa_ids,
        instance.z_star.values(),
    )?;
    write_matrix_csv(
        &args.out_dir.join("x_star.csv"),
        "sample_id",
        &sample_ids,
        &taxa_ids,
        instance.x_star.values(),
    )?;
    let props_header = vec!["sample_id".to_string(), "read_prop".to_string()];
    let props_rows: Vec<Vec<String>> = instance
        .read_props
        .iter()
        .zip(&sample_ids)
        .map(|(&r, id)| vec![id.clone(), fmt_f64(r)])
        .collect();
    write_csv(&args.out_dir.join("read_props.csv"), &props_header, &props_rows)?;

    let summary = SimulateSummary {
        scenario: &scenario,
        replicate: args.replicate,
        grand_total: instance.counts.grand_total(),
        row_totals: instance.counts.row_totals(),
    };
    write_json(&args.out_dir.join("summary.json"), &summary)?;

    println!(
        "simulated {}x{} counts (replicate {}, total reads {}) -> {}",
        scenario.n,
        scenario.p,
        args.replicate,
        instance.counts.grand_total(),
        args.out_dir.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EstimatorKind {
    /// Zero-replacement CLR transform.
    Zr,
    /// Rank-truncated zero-replacement estimate.
    Svt,
    /// Nuclear-norm-penalized likelihood with automatic tuning.
    Nuc,
}

impl EstimatorKind {
    fn name(self) -> &'static str {
        match self {
            EstimatorKind::Zr => "zr",
            EstimatorKind::Svt => "svt",
            EstimatorKind::Nuc => "nuc",
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, clap::Args)]
pub struct BenchArgs {
    /// Scenario file (`key = value` lines; see the README for the keys).
    pub scenario: PathBuf,
    /// Seeded replicates per estimator.
    #[arg(long, default_value_t = 10)]
    pub replicates: u64,
    #[arg(long, default_value = "clrlr-bench")]
    pub out_dir: PathBuf,
    /// Estimators to compare.
    #[arg(long, value_enum, value_delimiter = ',',
          default_values_t = [EstimatorKind::Zr, EstimatorKind::Svt, EstimatorKind::Nuc])]
    pub estimators: Vec<EstimatorKind>,
    /// Truncation rank for the svt estimator (default: the scenario rank).
    #[arg(long)]
    pub svt_rank: Option<usize>,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
}

struct CellMetrics {
    frob_error: f64,
    kl_rowwise: f64,
    sin_theta: [Option<f64>; SIN_THETA_KS.len()],
    nuclear_norm: f64,
    rank: usize,
    lambda: Option<f64>,
    rounds: Option<usize>,
    iterations: usize,
    wall_time_s: f64,
}

struct ReplicateOutcome {
    /// One entry per requested estimator, in request order.
    cells: Vec<CellMetrics>,
    /// Estimates of replicate 0, kept for the entrywise scatter file.
    scatter: Option<(DMatrix<f64>, Vec<DMatrix<f64>>)>,
}

pub fn cmd_bench(args: &BenchArgs) -> CliResult<()> {
    let scenario = load_scenario(&args.scenario)?;
    if args.replicates == 0 {
        return err("replicates must be at least 1".to_string());
    }
    let mut estimators = Vec::new();
    for kind in &args.estimators {
        if !estimators.contains(kind) {
            estimators.push(*kind);
        }
    }
    let svt_rank = args.svt_rank.unwrap_or(scenario.r);

    let files = ["report.csv", "records.csv", "scatter.csv"];
    prepare_out_dir(&args.out_dir, &files, args.force)?;

    let outcomes: Vec<CliResult<ReplicateOutcome>> = (0..args.replicates)
        .into_par_iter()
        .map(|rep| run_replicate(&scenario, rep, &estimators, svt_rank))
        .collect();

    let mut completed: Vec<ReplicateOutcome> = Vec::new();
    let mut failure: Option<crate::io::BoxError> = None;
    for outcome in outcomes {
        match outcome {
            Ok(o) => completed.push(o),
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }

    write_bench_files(&args.out_dir, &estimators, &completed)?;
    if let Some(e) = failure {
        return Err(format!(
            "bench aborted after {} complete replicates (partial results flushed): {e}",
            completed.len()
        )
        .into());
    }

    for (idx, kind) in estimators.iter().enumerate() {
        let mean: f64 = completed.iter().map(|o| o.cells[idx].frob_error).sum::<f64>()
            / completed.len() as f64;
        println!("{}: mean frob error {mean:.4} over {} replicates", kind.name(), completed.len());
    }
    println!("wrote {}", args.out_dir.display());
    Ok(())
}

fn run_replicate(
    scenario: &SimScenario,
    replicate: u64,
    estimators: &[EstimatorKind],
    svt_rank: usize,
) -> CliResult<ReplicateOutcome> {
    let instance = SimInstance::generate(scenario, replicate)
        .map_err(|e| format!("replicate {replicate}: {e}"))?;
    let z_star = instance.z_star.values();
    let max_k = z_star.nrows().min(z_star.ncols());

    let mut truth_frames = Vec::new();
    for &k in &SIN_THETA_KS {
        truth_frames.push(if k <= max_k {
            Some(top_k_svd(z_star, k).map_err(|e| format!("replicate {replicate}: {e}"))?)
        } else {
            None
        });
    }

    let mut cells = Vec::with_capacity(estimators.len());
    let mut scatter_estimates = Vec::new();
    for &kind in estimators {
        let started = Instant::now();
        let (estimate, lambda, rounds) = match kind {
            EstimatorKind::Zr => (zr_estimate(&instance.counts)?, None, None),
            EstimatorKind::Svt => (svt_estimate(&instance.counts, svt_rank)?, None, None),
            EstimatorKind::Nuc => {
                let mut solver = SolverConfig::default();
                solver.n_starts = 1;
                solver.seed = child_seed(scenario.seed, replicate);
                let (est, trace) = auto_tune(&instance.counts, &TuneConfig::new(solver))?;
                (est, Some(trace.lambda_auto), Some(trace.rounds.len()))
            }
        };
        let wall_time_s = started.elapsed().as_secs_f64();

        let z_hat = estimate.z_hat.values();
        let mut sin_theta = [None; SIN_THETA_KS.len()];
        for (slot, (&k, truth)) in sin_theta.iter_mut().zip(SIN_THETA_KS.iter().zip(&truth_frames))
        {
            if let Some(truth) = truth {
                let hat = top_k_svd(z_hat, k).map_err(|e| format!("replicate {replicate}: {e}"))?;
                *slot =
                    Some(sin_theta_sq(&hat.right_vectors, &truth.right_vectors).map_err(|e| {
                        format!("replicate {replicate}: {e}")
                    })?);
            }
        }
        let (nuclear_norm, rank) = spectrum_stats(&estimate.singular_values);
        cells.push(CellMetrics {
            frob_error: frob_error(z_hat, z_star)?,
            kl_rowwise: kl_rowwise(z_star, z_hat)?,
            sin_theta,
            nuclear_norm,
            rank,
            lambda,
            rounds,
            iterations: estimate.trace.records.len(),
            wall_time_s,
        });
        if replicate == 0 {
            scatter_estimates.push(z_hat.clone());
        }
    }

    let scatter = (replicate == 0).then(|| (z_star.clone(), scatter_estimates));
    Ok(ReplicateOutcome { cells, scatter })
}

fn opt_cell(value: Option<f64>) -> String {
    value.map(fmt_f64).unwrap_or_default()
}

/// Mean of the present values; empty when every record's cell is empty.
fn opt_mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.flatten().collect();
    if present.is_empty() {
        None
    } else {
        Some(present.iter().sum::<f64>() / present.len() as f64)
    }
}

fn write_bench_files(
    out_dir: &Path,
    estimators: &[EstimatorKind],
    completed: &[ReplicateOutcome],
) -> CliResult<()> {
    let mut records_header = vec!["estimator".to_string(), "replicate".to_string()];
    let metric_columns = ["frob_error", "kl_rowwise"];
    records_header.extend(metric_columns.iter().map(|s| s.to_string()));
    for k in SIN_THETA_KS {
        records_header.push(format!("sin_theta_k{k}"));
    }
    records_header.extend(
        ["nuclear_norm", "rank", "lambda", "rounds", "iterations", "wall_time_s"]
            .iter()
            .map(|s| s.to_string()),
    );

    let mut records_rows = Vec::new();
    for (idx, kind) in estimators.iter().enumerate() {
        for (rep, outcome) in completed.iter().enumerate() {
            let cell = &outcome.cells[idx];
            let mut row = vec![kind.name().to_string(), rep.to_string()];
            row.push(fmt_f64(cell.frob_error));
            row.push(fmt_f64(cell.kl_rowwise));
            for slot in cell.sin_theta {
                row.push(opt_cell(slot));
            }
            row.push(fmt_f64(cell.nuclear_norm));
            row.push(cell.rank.to_string());
            row.push(opt_cell(cell.lambda));
            row.push(cell.rounds.map(|r| r.to_string()).unwrap_or_default());
            row.push(cell.iterations.to_string());
            row.push(fmt_f64(cell.wall_time_s));
            records_rows.push(row);
        }
    }
    write_csv(&out_dir.join("records.csv"), &records_header, &records_rows)?;

    // Aggregates over the same in-memory values the records were printed
    // from; wall time is deliberately left out so the report is
    // byte-reproducible.
    let mut report_header = vec!["estimator".to_string(), "replicates".to_string()];
    report_header.extend(
        ["mean_frob_error", "mean_kl_rowwise"].iter().map(|s| s.to_string()),
    );
    for k in SIN_THETA_KS {
        report_header.push(format!("mean_sin_theta_k{k}"));
    }
    report_header.extend(
        ["mean_nuclear_norm", "mean_rank", "mean_lambda", "mean_rounds", "mean_iterations"]
            .iter()
            .map(|s| s.to_string()),
    );

    let mut report_rows = Vec::new();
    for (idx, kind) in estimators.iter().enumerate() {
        let cells: Vec<&CellMetrics> = completed.iter().map(|o| &o.cells[idx]).collect();
        let count = cells.len();
        let mean = |f: &dyn Fn(&CellMetrics) -> f64| -> String {
            if count == 0 {
                String::new()
            } else {
                fmt_f64(cells.iter().map(|c| f(c)).sum::<f64>() / count as f64)
            }
        };
        let mut row = vec![kind.name().to_string(), count.to_string()];
        row.push(mean(&|c| c.frob_error));
        row.push(mean(&|c| c.kl_rowwise));
        for (slot, _) in SIN_THETA_KS.iter().enumerate() {
            row.push(opt_cell(opt_mean(cells.iter().map(|c| c.sin_theta[slot]))));
        }
        row.push(mean(&|c| c.nuclear_norm));
        row.push(mean(&|c| c.rank as f64));
        row.push(opt_cell(opt_mean(cells.iter().map(|c| c.lambda))));
        row.push(opt_cell(opt_mean(cells.iter().map(|c| c.rounds.map(|r| r as f64)))));
        row.push(mean(&|c| c.iterations as f64));
        report_rows.push(row);
    }
    write_csv(&out_dir.join("report.csv"), &report_header, &report_rows)?;

    let mut scatter_header = vec!["row".to_string(), "col".to_string(), "z_star".to_string()];
    scatter_header.extend(estimators.iter().map(|k| k.name().to_string()));
    let mut scatter_rows = Vec::new();
    if let Some((z_star, estimates)) = completed.first().and_then(|o| o.scatter.as_ref()) {
        for i in 0..z_star.nrows() {
            for j in 0..z_star.ncols() {
                let mut row = vec![(i + 1).to_string(), (j + 1).to_string()];
                row.push(fmt_f64(z_star[(i, j)]));
                for estimate in estimates {
                    row.push(fmt_f64(estimate[(i, j)]));
                }
                scatter_rows.push(row);
            }
        }
    }
    write_csv(&out_dir.join("scatter.csv"), &scatter_header, &scatter_rows)?;
    Ok(())
}

#[derive(Debug, clap::Args)]
pub struct SpectrumArgs {
    /// Count table: header row of taxa ids, first column sample ids.
    pub counts: PathBuf,
    /// Input delimiter; inferred from the file extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<TableFormat>,
    #[arg(long, default_value = "clrlr-spectrum")]
    pub out_dir: PathBuf,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
}

pub fn cmd_spectrum(args: &SpectrumArgs) -> CliResult<()> {
    let format = args.format.unwrap_or_else(|| TableFormat::infer(&args.counts));
    let table = read_counts(&args.counts, format)?;
    prepare_out_dir(&args.out_dir, &["singular_values.csv"], args.force)?;

    let estimate = zr_estimate(&table.counts)?;
    write_singular_values(&args.out_dir.join("singular_values.csv"), &estimate.singular_values)?;

    let shown: Vec<String> =
        estimate.singular_values.iter().take(5).map(|&s| format!("{s:.4}")).collect();
    println!(
        "zero-replacement spectrum of {}x{} counts: [{}{}] -> {}",
        table.counts.nrows(),
        table.counts.ncols(),
        shown.join(", "),
        if estimate.singular_values.len() > 5 { ", ..." } else { "" },
        args.out_dir.display()
    );
    Ok(())
}
