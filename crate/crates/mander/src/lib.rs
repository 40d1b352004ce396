//! Graph-partition MCMC sampling for districting ensembles.
//!
//! A state's geographic units form a dual graph; a districting plan is an
//! n-coloring of it. Two Metropolis-filtered proposal kernels walk the
//! space of valid (contiguous, nonempty) plans — a single-vertex boundary
//! walk and a multi-component flip algorithm — optionally driven through a
//! simulated-annealing schedule that relaxes and then re-tightens the
//! population tolerance and compactness weight. Sampled ensembles are
//! scored against election returns to put enacted-plan outcomes on a
//! probability scale.
//!
//! Every capability has a runnable example:
//!
//! ```bash
//! cargo run --release --example uniform_walk      # single-vertex chain basics
//! cargo run --release --example flip_chain        # multi-component flip kernel
//! cargo run --release --example annealed_sample   # hot/anneal/cold schedule
//! cargo run --release --example convergence       # Gelman-Rubin step search
//! cargo run --release --example election_analysis # seats histograms + probabilities
//! cargo run --release --example ingest_pipeline   # file formats end to end
//! cargo run --release --example throughput        # proposals/second floor
//! ```
//!
//! The `mander` binary wires the same library into a file-driven pipeline
//! (`ingest`, `seed`, `run`, `diagnose`, `analyze`).

pub mod anneal;
pub mod chain;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod election;
pub mod graph;
pub mod io;
pub mod plan;
pub mod rng;
pub mod runner;
pub mod score;
pub mod seed;

pub use anneal::{run_annealed_sample, AnnealSchedule, Phase, SchedulePoint};
pub use chain::{
    propose_and_filter, run_chain, ChainError, ChainKind, Kernel, RejectionReason, StatKind,
    StepRecord, Trace,
};
pub use chain::single_vertex::{single_vertex_chain_step, SingleVertexWalk};
pub use config::RunConfig;
pub use diagnostics::{acceptance_summary, gelman_rubin, min_steps_search, AcceptanceSummary};
pub use election::{
    enacted_comparison, emit_histogram, histogram_svg, outcome_distribution, outcome_probability,
    seats_won, Ensemble, OutcomeDistribution, PlanSample,
};
pub use graph::{DualGraph, UnitId};
pub use plan::{cut_edges, district_components, district_population, is_valid, Districting};
pub use score::{
    acceptance_probability, compactness, pop_equality, weight, within_pop_tolerance, ChainParams,
};
pub use seed::seed_plan;
