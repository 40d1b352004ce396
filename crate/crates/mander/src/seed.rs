//! Initial-plan construction: balanced region growing with annealed
//! single-vertex repair.

use crate::anneal::{Phase, SchedulePoint};
use crate::chain::single_vertex::SingleVertexWalk;
use crate::graph::{DualGraph, UnitId};
use crate::plan::{is_valid, Districting};
use crate::score::{within_pop_tolerance, ChainParams};
use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeedError {
    #[error("could not seed a valid plan within tolerance {tolerance} after {attempts} attempts: {detail}")]
    SeedFailure {
        attempts: u32,
        tolerance: f64,
        detail: String,
    },
}

const GROW_ATTEMPTS: u32 = 40;
const REPAIR_BLOCKS: u32 = 4000;
const STEPS_PER_BLOCK: u64 = 16;

/// Build a valid plan within relative tolerance `tol`: grow `n` regions
/// from random seed vertices, always attaching a random frontier vertex to
/// the least-populated growable region, then repair any residual imbalance
/// with annealed single-vertex moves.
pub fn seed_plan(
    graph: &DualGraph,
    n: u32,
    tol: f64,
    rng: &mut impl Rng,
) -> Result<Districting, SeedError> {
    let fail = |attempts: u32, detail: String| SeedError::SeedFailure {
        attempts,
        tolerance: tol,
        detail,
    };
    if n == 0 {
        return Err(fail(0, "n_districts must be >= 1".into()));
    }
    if n as usize > graph.len() {
        return Err(fail(
            0,
            format!("{} districts exceed {} units", n, graph.len()),
        ));
    }
    if n == 1 {
        return Ok(Districting::single_district(graph));
    }

    let mut best_detail = String::new();
    for attempt in 0..GROW_ATTEMPTS {
        let mut plan = grow_regions(graph, n, rng);
        debug_assert!(is_valid(graph, &plan));
        if within_pop_tolerance(graph, &plan, tol) {
            return Ok(plan);
        }
        if repair(graph, &mut plan, n, tol, rng) {
            return Ok(plan);
        }
        let ideal = graph.total_pop() as f64 / n as f64;
        let worst = plan
            .district_pops()
            .iter()
            .map(|&p| (p as f64 - ideal).abs() / ideal)
            .fold(0.0f64, f64::max);
        best_detail = format!("attempt {attempt} stuck at relative deviation {worst:.4}");
    }
    Err(fail(GROW_ATTEMPTS, best_detail))
}

/// Region growing: each region repeatedly claims a random unassigned
/// vertex from its frontier, with the least-populated growable region
/// moving first. Connectivity of every region is maintained by
/// construction; on a connected graph all vertices get assigned.
fn grow_regions(graph: &DualGraph, n: u32, rng: &mut impl Rng) -> Districting {
    let vertex_count = graph.len();
    let mut seeds: Vec<UnitId> = (0..vertex_count as UnitId).collect();
    seeds.shuffle(rng);
    seeds.truncate(n as usize);

    let mut assignment = vec![u32::MAX; vertex_count];
    let mut pops = vec![0u64; n as usize];
    let mut frontier: Vec<Vec<UnitId>> = vec![Vec::new(); n as usize];
    let mut assigned = 0usize;

    for (r, &v) in seeds.iter().enumerate() {
        assignment[v as usize] = r as u32;
        pops[r] += graph.pop(v);
        assigned += 1;
        for &u in graph.neighbors(v) {
            if assignment[u as usize] == u32::MAX {
                frontier[r].push(u);
            }
        }
    }

    while assigned < vertex_count {
        // least-populated region that can still grow
        let mut regions: Vec<usize> = (0..n as usize).collect();
        regions.sort_by_key(|&r| pops[r]);
        let mut grew = false;
        'regions: for r in regions {
            while let Some(i) = (!frontier[r].is_empty())
                .then(|| rng.gen_range(0..frontier[r].len()))
            {
                let v = frontier[r].swap_remove(i);
                if assignment[v as usize] != u32::MAX {
                    continue; // stale entry claimed by another region
                }
                assignment[v as usize] = r as u32;
                pops[r] += graph.pop(v);
                assigned += 1;
                for &u in graph.neighbors(v) {
                    if assignment[u as usize] == u32::MAX {
                        frontier[r].push(u);
                    }
                }
                grew = true;
                break 'regions;
            }
        }
        debug_assert!(grew, "connected graph always leaves a growable region");
        if !grew {
            break;
        }
    }

    Districting::new(graph, assignment, n).expect("region growing covers the graph")
}

/// Annealed single-vertex repair: walk under an instantaneous tolerance
/// held just above the plan's current deviation (never below `tol`), with
/// a mild population-equality bias, until the plan fits.
fn repair(
    graph: &DualGraph,
    plan: &mut Districting,
    n: u32,
    tol: f64,
    rng: &mut impl Rng,
) -> bool {
    let ideal = graph.total_pop() as f64 / n as f64;
    if ideal <= 0.0 {
        return within_pop_tolerance(graph, plan, tol);
    }
    let mean_pop = graph.total_pop() as f64 / graph.len() as f64;
    let mut params = ChainParams::new(n);
    params.beta_pop = 0.5 / mean_pop.max(f64::MIN_POSITIVE);

    let max_blocks = (20 * graph.len() as u32).clamp(200, REPAIR_BLOCKS);
    let mut walk = SingleVertexWalk::new(graph, plan.clone());
    for _ in 0..max_blocks {
        let deviation = walk
            .plan()
            .district_pops()
            .iter()
            .map(|&p| (p as f64 - ideal).abs() / ideal)
            .fold(0.0f64, f64::max);
        if deviation <= tol {
            *plan = walk.into_plan();
            return true;
        }
        let point = SchedulePoint {
            pop_tolerance: deviation.max(tol).min(1.0),
            beta_comp: 0.0,
            phase: Phase::AnnealPop,
        };
        for _ in 0..STEPS_PER_BLOCK {
            if walk.step(&params, &point, rng).is_err() {
                return false;
            }
        }
    }
    if within_pop_tolerance(graph, walk.plan(), tol) {
        *plan = walk.into_plan();
        return true;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn single_district_is_trivial() {
        let g = DualGraph::grid(3, 3);
        let plan = seed_plan(&g, 1, 0.0, &mut stream_rng(0, 0)).unwrap();
        assert_eq!(plan.n_districts(), 1);
    }

    #[test]
    fn grid_two_districts_within_tolerance() {
        let g = DualGraph::grid(4, 4);
        for seed in 0..10 {
            let plan = seed_plan(&g, 2, 0.1, &mut stream_rng(seed, 0)).unwrap();
            assert!(is_valid(&g, &plan));
            assert!(within_pop_tolerance(&g, &plan, 0.1));
            assert_eq!(plan.district_size(0) + plan.district_size(1), 16);
        }
    }

    #[test]
    fn uneven_pops_still_seed() {
        let pops: Vec<u64> = (0..36).map(|v| 1 + (v % 5) as u64).collect();
        let g = DualGraph::grid(6, 6).with_pops(pops);
        let plan = seed_plan(&g, 3, 0.1, &mut stream_rng(11, 0)).unwrap();
        assert!(is_valid(&g, &plan));
        assert!(within_pop_tolerance(&g, &plan, 0.1));
    }

    #[test]
    fn too_many_districts_fail() {
        let g = DualGraph::grid(2, 2);
        assert!(matches!(
            seed_plan(&g, 5, 0.5, &mut stream_rng(0, 0)),
            Err(SeedError::SeedFailure { attempts: 0, .. })
        ));
        assert!(matches!(
            seed_plan(&g, 0, 0.5, &mut stream_rng(0, 0)),
            Err(SeedError::SeedFailure { attempts: 0, .. })
        ));
    }

    #[test]
    fn impossible_tolerance_fails_with_attempts() {
        // pops [9,1,1,1]: ideal 3 per district, every contiguous 3-split
        // leaves the 9-unit off by at least 4

        let g = DualGraph::new(
            (0..4).map(|i| i.to_string()).collect(),
            vec![vec![1], vec![0, 2], vec![1, 3], vec![2]],
            vec![9, 1, 1, 1],
            vec![0; 4],
            vec![0; 4],
        )
        .unwrap();
        let err = seed_plan(&g, 3, 0.1, &mut stream_rng(0, 0)).unwrap_err();
        let SeedError::SeedFailure { attempts, .. } = err;
        assert_eq!(attempts, GROW_ATTEMPTS);
    }

    #[test]
    fn seeding_is_deterministic() {
        let g = DualGraph::grid(5, 5);
        let a = seed_plan(&g, 3, 0.2, &mut stream_rng(7, 0)).unwrap();
        let b = seed_plan(&g, 3, 0.2, &mut stream_rng(7, 0)).unwrap();
        assert_eq!(a.assignment(), b.assignment());
    }
}
