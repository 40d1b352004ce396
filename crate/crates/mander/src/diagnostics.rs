//! Convergence and health instrumentation: the Gelman-Rubin potential
//! scale reduction factor, acceptance summaries, and the minimum-steps
//! search protocol over parallel chains.

use crate::chain::{run_chain, ChainError, Kernel, RejectionReason, StatKind, StepRecord};
use crate::graph::DualGraph;
use crate::plan::Districting;
use crate::rng::stream_rng;
use crate::score::ChainParams;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("within-chain variance is zero (constant chains)")]
    ZeroWithinVariance,
    #[error("no grid point converged; R-hat profile: {profile:?}")]
    NotConverged { profile: Vec<(u64, f64)> },
    #[error(transparent)]
    Chain(#[from] ChainError),
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Classic (1992) potential scale reduction factor over `m` chains.
///
/// Each chain first discards `discard_fraction` of its length as burn-in,
/// then all retained series are trimmed at the tail to the shortest length
/// n. With B = n * variance of chain means and W = mean within-chain
/// variance, R-hat = sqrt(((n-1)/n * W + B/n) / W).
pub fn gelman_rubin(chains: &[Vec<f64>], discard_fraction: f64) -> Result<f64, DiagnosticsError> {
    if chains.len() < 2 {
        return Err(DiagnosticsError::InsufficientData(format!(
            "need >= 2 chains, got {}",
            chains.len()
        )));
    }
    if !(0.0..1.0).contains(&discard_fraction) {
        return Err(DiagnosticsError::InsufficientData(format!(
            "discard_fraction {discard_fraction} outside [0, 1)"
        )));
    }
    let retained: Vec<&[f64]> = chains
        .iter()
        .map(|c| &c[(c.len() as f64 * discard_fraction).floor() as usize..])
        .collect();
    let n = retained.iter().map(|c| c.len()).min().unwrap_or(0);
    if n < 2 {
        return Err(DiagnosticsError::InsufficientData(format!(
            "retained series length {n} < 2"
        )));
    }
    let trimmed: Vec<&[f64]> = retained.iter().map(|c| &c[..n]).collect();
    for c in &trimmed {
        if c.iter().any(|x| !x.is_finite()) {
            return Err(DiagnosticsError::InsufficientData(
                "non-finite value in chain".into(),
            ));
        }
    }

    let means: Vec<f64> = trimmed.iter().map(|c| mean(c)).collect();
    let within: Vec<f64> = trimmed.iter().map(|c| sample_variance(c)).collect();
    let w = mean(&within);
    if w == 0.0 {
        return Err(DiagnosticsError::ZeroWithinVariance);
    }
    let n = n as f64;
    let b = n * sample_variance(&means);
    let v_hat = (n - 1.0) / n * w + b / n;
    Ok((v_hat / w).sqrt())
}

/// Counts per rejection reason plus the acceptance rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceSummary {
    pub proposals: u64,
    pub accepted: u64,
    pub rate: f64,
    pub invalid_contiguity: u64,
    pub tolerance: u64,
    pub metropolis: u64,
}

pub fn acceptance_summary(records: &[StepRecord]) -> AcceptanceSummary {
    let mut summary = AcceptanceSummary {
        proposals: 0,
        accepted: 0,
        rate: 0.0,
        invalid_contiguity: 0,
        tolerance: 0,
        metropolis: 0,
    };
    for r in records {
        summary.proposals += 1;
        match r.rejected_reason {
            RejectionReason::None => summary.accepted += 1,
            RejectionReason::InvalidContiguity => summary.invalid_contiguity += 1,
            RejectionReason::Tolerance => summary.tolerance += 1,
            RejectionReason::Metropolis => summary.metropolis += 1,
        }
    }
    if summary.proposals > 0 {
        summary.rate = summary.accepted as f64 / summary.proposals as f64;
    }
    summary
}

/// Smallest step count in `step_grid` for which `n_chains` independent
/// chains reach R-hat below `threshold` on the recorded diagnostic scalar
/// (burn-in: first half discarded).
///
/// Chains run concurrently; chain `c` at grid index `g` always uses RNG
/// stream `(g << 32) | c`, so the search is reproducible regardless of
/// parallelism. Grid points where every chain is constant count as not
/// converged (R-hat = infinity in the profile).
pub fn min_steps_search(
    graph: &DualGraph,
    initial_plan: &Districting,
    params: &ChainParams,
    kernel: Kernel,
    n_chains: usize,
    threshold: f64,
    step_grid: &[u64],
    stat: StatKind,
) -> Result<u64, DiagnosticsError> {
    if n_chains < 2 {
        return Err(DiagnosticsError::InsufficientData(format!(
            "need >= 2 chains, got {n_chains}"
        )));
    }
    if step_grid.is_empty() || step_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DiagnosticsError::InsufficientData(
            "step_grid must be ascending and nonempty".into(),
        ));
    }

    let mut profile = Vec::new();
    for (grid_index, &steps) in step_grid.iter().enumerate() {
        let runs: Vec<Result<Vec<f64>, ChainError>> = (0..n_chains)
            .into_par_iter()
            .map(|chain| {
                let mut rng =
                    stream_rng(params.rng_seed, ((grid_index as u64) << 32) | chain as u64);
                let mut plan = initial_plan.clone();
                run_chain(graph, &mut plan, params, kernel, steps, stat, &mut rng)
                    .map(|trace| trace.values)
            })
            .collect();
        let series = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
        let rhat = match gelman_rubin(&series, 0.5) {
            Ok(r) => r,
            Err(DiagnosticsError::ZeroWithinVariance) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        if rhat < threshold {
            return Ok(steps);
        }
        profile.push((steps, rhat));
    }
    Err(DiagnosticsError::NotConverged { profile })
}
