//! Ensemble generation: deterministic parallel chains over a shared graph.
//!
//! Randomness is keyed by plan/chain index, never by thread identity, so a
//! run is byte-reproducible from (inputs, config, seed) at any worker
//! count.

use crate::anneal::run_annealed_sample;
use crate::chain::{run_chain, ChainError, ChainKind, Kernel, Trace};
use crate::config::{ConfigError, RunConfig};
use crate::diagnostics::acceptance_summary;
use crate::election::{Ensemble, EnsembleMeta, PlanSample};
use crate::graph::DualGraph;
use crate::io::{TraceChainRecord, TraceFile, FORMAT_VERSION};
use crate::plan::Districting;
use crate::rng::stream_rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("failed to build a worker pool: {0}")]
    Pool(String),
}

pub struct RunArtifacts {
    pub ensemble: Ensemble,
    pub traces: TraceFile,
}

/// Generate `config.n_plans` sampled plans starting from `initial`.
///
/// Anneal runs give every plan its own RNG stream (stream = plan index)
/// and run one full schedule each. Flip/single-vertex runs split the plans
/// across chains (stream = chain index); each chain samples a plan every
/// `steps_per_plan` accepted steps.
pub fn generate_ensemble(
    graph: &DualGraph,
    initial: &Districting,
    config: &RunConfig,
) -> Result<RunArtifacts, RunError> {
    config.validate()?;
    let seed = config.effective_seed();
    let mut params = config.params.clone();
    params.rng_seed = seed;

    let pool_size = config
        .n_chains
        .map(|c| c as usize)
        .unwrap_or_else(rayon::current_num_threads)
        .max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(pool_size.min(64))
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;

    let (plans, chains) = match config.kind {
        ChainKind::Anneal => {
            let schedule = config.effective_schedule();
            let results: Vec<Result<(PlanSample, TraceChainRecord), ChainError>> =
                pool.install(|| {
                    (0..config.n_plans)
                        .into_par_iter()
                        .map(|plan_index| {
                            let mut rng = stream_rng(seed, plan_index);
                            let mut plan = initial.clone();
                            let trace = run_annealed_sample(
                                graph,
                                &mut plan,
                                &params,
                                &schedule,
                                Kernel::Flip,
                                config.stat,
                                &mut rng,
                            )?;
                            Ok((
                                PlanSample::from_plan(graph, &plan),
                                trace_record(&trace),
                            ))
                        })
                        .collect()
                });
            let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
            results.into_iter().unzip()
        }
        ChainKind::Flip | ChainKind::SingleVertex => {
            let kernel = config.kind.kernel();
            let steps = config.steps_per_plan.expect("validated");
            let n_chains = (pool_size as u64).min(config.n_plans).max(1);
            let base = config.n_plans / n_chains;
            let remainder = config.n_plans % n_chains;
            let share = |c: u64| base + u64::from(c < remainder);

            let results: Vec<Result<(Vec<PlanSample>, TraceChainRecord), ChainError>> =
                pool.install(|| {
                    (0..n_chains)
                        .into_par_iter()
                        .map(|chain_index| {
                            let mut rng = stream_rng(seed, chain_index);
                            let mut plan = initial.clone();
                            let mut samples = Vec::new();
                            let mut values = Vec::new();
                            let mut records = Vec::new();
                            for _ in 0..share(chain_index) {
                                let trace = run_chain(
                                    graph,
                                    &mut plan,
                                    &params,
                                    kernel,
                                    steps,
                                    config.stat,
                                    &mut rng,
                                )?;
                                samples.push(PlanSample::from_plan(graph, &plan));
                                values.extend(trace.values);
                                records.extend(trace.records);
                            }
                            Ok((
                                samples,
                                TraceChainRecord {
                                    values,
                                    summary: acceptance_summary(&records),
                                },
                            ))
                        })
                        .collect()
                });
            let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
            let mut plans = Vec::with_capacity(config.n_plans as usize);
            let mut chains = Vec::with_capacity(results.len());
            for (samples, chain) in results {
                plans.extend(samples);
                chains.push(chain);
            }
            (plans, chains)
        }
    };

    let meta = EnsembleMeta {
        format_version: FORMAT_VERSION,
        kind: config.kind,
        seed,
        n_districts: params.n_districts,
        n_plans: plans.len() as u64,
        params,
        schedule: matches!(config.kind, ChainKind::Anneal)
            .then(|| config.effective_schedule()),
        steps_per_plan: config.steps_per_plan,
    };
    Ok(RunArtifacts {
        ensemble: Ensemble { meta, plans },
        traces: TraceFile {
            format_version: FORMAT_VERSION,
            stat: config.stat,
            kind: config.kind,
            seed,
            chains,
        },
    })
}

fn trace_record(trace: &Trace) -> TraceChainRecord {
    TraceChainRecord {
        values: trace.values.clone(),
        summary: acceptance_summary(&trace.records),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::is_valid;
    use crate::score::within_pop_tolerance;
    use crate::seed::seed_plan;

    fn flip_config(n_plans: u64, n_chains: Option<u64>) -> RunConfig {
        let mut params = crate::score::ChainParams::new(2);
        params.pop_tolerance = 0.3;
        RunConfig {
            format_version: FORMAT_VERSION,
            kind: ChainKind::Flip,
            params,
            schedule: None,
            n_plans,
            n_chains,
            steps_per_plan: Some(40),
            seed: Some(99),
            output_dir: None,
            stat: Default::default(),
        }
    }

    #[test]
    fn flip_run_produces_ordered_valid_plans() {
        let g = DualGraph::grid(4, 4);
        let initial = seed_plan(&g, 2, 0.3, &mut stream_rng(99, crate::rng::SEED_PLAN_STREAM))
            .unwrap();
        let artifacts = generate_ensemble(&g, &initial, &flip_config(7, Some(3))).unwrap();
        assert_eq!(artifacts.ensemble.plans.len(), 7);
        assert_eq!(artifacts.traces.chains.len(), 3);
        for sample in &artifacts.ensemble.plans {
            let plan = Districting::new(&g, sample.assignment.clone(), 2).unwrap();
            assert!(is_valid(&g, &plan));
            assert!(within_pop_tolerance(&g, &plan, 0.3));
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let g = DualGraph::grid(4, 4);
        let initial = seed_plan(&g, 2, 0.3, &mut stream_rng(99, crate::rng::SEED_PLAN_STREAM))
            .unwrap();
        // same chain count, different pool sizes come from rayon defaults;
        // chain count pins the stream layout so results must be identical
        let a = generate_ensemble(&g, &initial, &flip_config(6, Some(2))).unwrap();
        let b = generate_ensemble(&g, &initial, &flip_config(6, Some(2))).unwrap();
        let flat = |e: &Ensemble| -> Vec<Vec<u32>> {
            e.plans.iter().map(|p| p.assignment.clone()).collect()
        };
        assert_eq!(flat(&a.ensemble), flat(&b.ensemble));
    }

    #[test]
    fn anneal_run_parallel_matches_serial() {
        let g = DualGraph::grid(6, 6);
        let initial = seed_plan(&g, 2, 1.0, &mut stream_rng(5, crate::rng::SEED_PLAN_STREAM))
            .unwrap();
        // gentle cooling; target 0.2 keeps the band a few units wide
        let schedule = crate::anneal::AnnealSchedule {
            hot_steps: 30,
            steps_per_delta: 4,
            cold_steps: 10,
            pop_tol_target: 0.2,
            ..Default::default()
        };
        let make = |chains: Option<u64>| RunConfig {
            format_version: FORMAT_VERSION,
            kind: ChainKind::Anneal,
            params: crate::score::ChainParams::new(2),
            schedule: Some(schedule.clone()),
            n_plans: 6,
            n_chains: chains,
            steps_per_plan: None,
            seed: Some(31),
            output_dir: None,
            stat: Default::default(),
        };
        let serial = generate_ensemble(&g, &initial, &make(Some(1))).unwrap();
        let parallel = generate_ensemble(&g, &initial, &make(Some(4))).unwrap();
        for (a, b) in serial.ensemble.plans.iter().zip(&parallel.ensemble.plans) {
            assert_eq!(a.assignment, b.assignment);
        }
        // every annealed sample hit the target tolerance
        for sample in &parallel.ensemble.plans {
            let plan = Districting::new(&g, sample.assignment.clone(), 2).unwrap();
            assert!(within_pop_tolerance(&g, &plan, schedule.pop_tol_target));
        }
    }
}
