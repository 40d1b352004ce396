//! Command-line pipeline: ingest, seed, run, diagnose, analyze.
//!
//! Exit codes: 0 success, 1 validation failure, 2 chain stall or failed
//! convergence. Operational errors are reported as one JSON object on
//! stderr.

use crate::chain::ChainError;
use crate::config::{load_run_config, RunConfig};
use crate::diagnostics::{gelman_rubin, DiagnosticsError};
use crate::election::{enacted_comparison, outcome_probability, seats_won};
use crate::graph::DualGraph;
use crate::io::{
    load_ensemble, load_plan, load_traces, load_unit_graph, save_ensemble, save_plan,
    save_traces, write_unit_graph, AnalysisReport, DiagnosticsReport, EnactedReport,
    FORMAT_VERSION,
};
use crate::plan::Districting;
use crate::rng::{stream_rng, SEED_PLAN_STREAM};
use crate::runner::generate_ensemble;
use crate::seed::seed_plan;
use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "mander",
    about = "Graph-partition MCMC sampler for districting ensembles",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a unit-graph file, deriving adjacency from geometry when
    /// none is declared, and optionally write the normalized form.
    Ingest(IngestArgs),
    /// Build an initial districting plan by balanced region growing.
    Seed(SeedArgs),
    /// Execute a run config: sample an ensemble and write it with traces.
    Run(RunArgs),
    /// Gelman-Rubin convergence report over a trace file.
    Diagnose(DiagnoseArgs),
    /// Score an ensemble: seats histogram, probabilities, enacted
    /// comparison.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Unit-graph JSON file.
    #[arg(long)]
    units: PathBuf,
    /// Treat asymmetric adjacency as fatal instead of repairing it.
    #[arg(long)]
    strict_adjacency: bool,
    /// Write the normalized unit graph here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SeedArgs {
    #[arg(long)]
    units: PathBuf,
    /// Number of districts.
    #[arg(long)]
    districts: u32,
    /// Population tolerance the seed plan must satisfy.
    #[arg(long, default_value_t = 0.1)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    strict_adjacency: bool,
    /// Output plan file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    units: PathBuf,
    /// Start from this plan instead of seeding one.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config chain count.
    #[arg(long)]
    chains: Option<u64>,
    /// Output directory (ensemble.jsonl, traces.json).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    strict_adjacency: bool,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Trace file from a run.
    #[arg(long)]
    traces: PathBuf,
    #[arg(long, default_value_t = 1.1)]
    threshold: f64,
    /// Burn-in fraction discarded from each chain.
    #[arg(long, default_value_t = 0.5)]
    discard: f64,
    /// Write the report here (otherwise stdout only).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Ensemble file (JSON lines).
    #[arg(long)]
    ensemble: PathBuf,
    #[arg(long)]
    units: PathBuf,
    /// Enacted plan to compare against.
    #[arg(long)]
    enacted: Option<PathBuf>,
    /// Output directory (histogram.csv, histogram.svg, report.json).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    strict_adjacency: bool,
}

/// Parse argv and dispatch; returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Ingest(args) => ingest(args),
        Command::Seed(args) => seed(args),
        Command::Run(args) => run(args),
        Command::Diagnose(args) => diagnose(args),
        Command::Analyze(args) => analyze(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            let (code, kind) = classify(&e);
            eprintln!(
                "{}",
                serde_json::json!({"error": kind, "message": format!("{e:#}"), "exit": code})
            );
            code
        }
    }
}

/// Map an error chain to (exit code, machine-readable kind).
fn classify(e: &anyhow::Error) -> (i32, &'static str) {
    for cause in e.chain() {
        if let Some(chain_err) = cause.downcast_ref::<ChainError>() {
            if matches!(chain_err, ChainError::StallDetected(_)) {
                return (2, "stall_detected");
            }
        }
        if let Some(diag) = cause.downcast_ref::<DiagnosticsError>() {
            if matches!(diag, DiagnosticsError::NotConverged { .. }) {
                return (2, "not_converged");
            }
        }
        if let Some(run_err) = cause.downcast_ref::<crate::runner::RunError>() {
            if matches!(
                run_err,
                crate::runner::RunError::Chain(ChainError::StallDetected(_))
            ) {
                return (2, "stall_detected");
            }
        }
    }
    (1, "validation_failure")
}

fn load_graph(path: &PathBuf, strict: bool) -> Result<DualGraph> {
    let (graph, report) = load_unit_graph(path, strict)
        .with_context(|| format!("loading unit graph {}", path.display()))?;
    if report.symmetrized > 0 {
        eprintln!(
            "warning: repaired {} asymmetric adjacency entr{}",
            report.symmetrized,
            if report.symmetrized == 1 { "y" } else { "ies" }
        );
    }
    if report.zero_vote_units > 0 {
        eprintln!("warning: {} unit(s) carry zero votes", report.zero_vote_units);
    }
    Ok(graph)
}

fn ingest(args: IngestArgs) -> Result<i32> {
    let (graph, report) = load_unit_graph(&args.units, args.strict_adjacency)
        .with_context(|| format!("loading unit graph {}", args.units.display()))?;
    println!(
        "{}",
        serde_json::json!({
            "units": graph.len(),
            "edges": graph.edge_count(),
            "total_pop": graph.total_pop(),
            "derived_adjacency": report.derived_adjacency,
            "symmetrized": report.symmetrized,
            "zero_vote_units": report.zero_vote_units,
        })
    );
    if let Some(out) = args.out {
        write_unit_graph(&out, &graph).context("writing normalized unit graph")?;
        println!("wrote {}", out.display());
    }
    Ok(0)
}

fn seed(args: SeedArgs) -> Result<i32> {
    let graph = load_graph(&args.units, args.strict_adjacency)?;
    let mut rng = stream_rng(args.seed, SEED_PLAN_STREAM);
    let plan = seed_plan(&graph, args.districts, args.tol, &mut rng)?;
    save_plan(&args.out, &graph, &plan, Some("seed"))?;
    println!(
        "seeded {} districts over {} units (tolerance {}) -> {}",
        args.districts,
        graph.len(),
        args.tol,
        args.out.display()
    );
    Ok(0)
}

fn run(args: RunArgs) -> Result<i32> {
    let mut config: RunConfig =
        load_run_config(&args.config).context("loading run config")?;
    if let Some(seed) = args.seed {
        config.seed = Some(seed);
    }
    if let Some(chains) = args.chains {
        config.n_chains = Some(chains);
    }
    let out_dir = args
        .out
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;

    let graph = load_graph(&args.units, args.strict_adjacency)?;
    let initial = match &args.init {
        Some(path) => load_plan(path, &graph)
            .with_context(|| format!("loading initial plan {}", path.display()))?,
        None => {
            let mut rng = stream_rng(config.effective_seed(), SEED_PLAN_STREAM);
            seed_plan(
                &graph,
                config.params.n_districts,
                config.starting_tolerance(),
                &mut rng,
            )?
        }
    };

    let artifacts = generate_ensemble(&graph, &initial, &config)?;
    let ensemble_path = out_dir.join("ensemble.jsonl");
    let traces_path = out_dir.join("traces.json");
    save_ensemble(&ensemble_path, &graph, &artifacts.ensemble)?;
    save_traces(&traces_path, &artifacts.traces)?;

    let accepted: u64 = artifacts.traces.chains.iter().map(|c| c.summary.accepted).sum();
    let proposals: u64 = artifacts
        .traces
        .chains
        .iter()
        .map(|c| c.summary.proposals)
        .sum();
    println!(
        "{} plans ({} chains, {} proposals, {} accepted) -> {}",
        artifacts.ensemble.plans.len(),
        artifacts.traces.chains.len(),
        proposals,
        accepted,
        ensemble_path.display()
    );
    Ok(0)
}

fn diagnose(args: DiagnoseArgs) -> Result<i32> {
    let traces = load_traces(&args.traces)
        .with_context(|| format!("loading traces {}", args.traces.display()))?;
    let series: Vec<Vec<f64>> = traces.chains.iter().map(|c| c.values.clone()).collect();
    let rhat = gelman_rubin(&series, args.discard)?;
    let report = DiagnosticsReport {
        format_version: FORMAT_VERSION,
        stat: traces.stat,
        n_chains: traces.chains.len(),
        chain_lengths: series.iter().map(Vec::len).collect(),
        discard_fraction: args.discard,
        threshold: args.threshold,
        rhat,
        converged: rhat < args.threshold,
        acceptance: traces.chains.iter().map(|c| c.summary).collect(),
    };
    let rendered = serde_json::to_string_pretty(&report)?;
    println!("{rendered}");
    if let Some(out) = args.out {
        std::fs::write(&out, format!("{rendered}\n"))
            .with_context(|| format!("writing {}", out.display()))?;
    }
    if report.converged {
        Ok(0)
    } else {
        Err(DiagnosticsError::NotConverged {
            profile: vec![(series.first().map_or(0, |s| s.len() as u64), rhat)],
        }
        .into())
    }
}

fn analyze(args: AnalyzeArgs) -> Result<i32> {
    let graph = load_graph(&args.units, args.strict_adjacency)?;
    let ensemble = load_ensemble(&args.ensemble, &graph)
        .with_context(|| format!("loading ensemble {}", args.ensemble.display()))?;
    let dist = ensemble.outcome_distribution()?;

    let enacted = match &args.enacted {
        Some(path) => {
            let plan: Districting = load_plan(path, &graph)
                .with_context(|| format!("loading enacted plan {}", path.display()))?;
            let seats = seats_won(&graph, &plan);
            Some((seats, enacted_comparison(&dist, seats)?))
        }
        None => None,
    };

    let mut probabilities = std::collections::BTreeMap::new();
    if dist.stddev > 0.0 {
        let mut keys: Vec<u32> = dist.counts.keys().copied().collect();
        if let Some((seats, _)) = enacted {
            keys.push(seats);
        }
        for k in keys {
            probabilities.insert(k, outcome_probability(&dist, k)?);
        }
    }

    let report = AnalysisReport {
        format_version: FORMAT_VERSION,
        n_plans: dist.n_plans,
        mean_seats: dist.mean,
        stddev_seats: dist.stddev,
        counts: dist.counts.clone(),
        probabilities,
        plans_with_ties: ensemble.plans.iter().filter(|p| p.ties > 0).count() as u64,
        enacted: enacted.map(EnactedReport::from),
    };

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let csv = crate::election::emit_histogram(&dist, enacted.map(|(s, _)| s));
    std::fs::write(args.out.join("histogram.csv"), csv).context("writing histogram.csv")?;
    let svg = crate::election::histogram_svg(&dist, enacted.map(|(s, _)| s));
    std::fs::write(args.out.join("histogram.svg"), svg).context("writing histogram.svg")?;
    let rendered = serde_json::to_string_pretty(&report)?;
    std::fs::write(args.out.join("report.json"), format!("{rendered}\n"))
        .context("writing report.json")?;
    println!("{rendered}");
    Ok(0)
}
