//! Proposal kernels and the Metropolis-filtered accept/reject loop.

pub mod flip;
pub mod single_vertex;

use crate::anneal::SchedulePoint;
use crate::election::seats_won;
use crate::graph::{DualGraph, UnitId};
use crate::plan::{is_valid, Districting};
use crate::score::{log_weight, pop_equality, within_pop_tolerance, ChainParams, ParamError};
use flip::{
    apply_flip_set, boundary_components, label_flip_edges, select_flip_set, undo_flips,
    BoundaryComponent, FlipChoice,
};
use rand::Rng;
use serde::{Deserialize, Serialize};
use single_vertex::SingleVertexWalk;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("chain stalled: {0}")]
    StallDetected(String),
    #[error("plan has no cut edges; the single-vertex walk cannot move")]
    NoBoundary,
    #[error("initial plan rejected: {0}")]
    InvalidInitialPlan(String),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Schedule(#[from] crate::anneal::ScheduleError),
}

/// Why a proposal was not accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionReason {
    None,
    InvalidContiguity,
    Tolerance,
    Metropolis,
}

/// Telemetry for one proposal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step_index: u64,
    pub proposed: bool,
    pub accepted: bool,
    pub rejected_reason: RejectionReason,
    /// Weight of the plan held after this step.
    pub weight_after: f64,
}

/// Which proposal kernel drives the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Flip,
    SingleVertex,
}

/// Chain flavor as named in run configs. `Anneal` schedules the flip
/// kernel through hot/anneal/cold phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    Flip,
    SingleVertex,
    Anneal,
}

impl ChainKind {
    pub fn kernel(self) -> Kernel {
        match self {
            ChainKind::Flip | ChainKind::Anneal => Kernel::Flip,
            ChainKind::SingleVertex => Kernel::SingleVertex,
        }
    }
}

impl std::fmt::Display for ChainKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChainKind::Flip => write!(f, "flip"),
            ChainKind::SingleVertex => write!(f, "single_vertex"),
            ChainKind::Anneal => write!(f, "anneal"),
        }
    }
}

/// Scalar summary recorded per step for convergence diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StatKind {
    #[default]
    CutEdges,
    PopEquality,
    DemSeats,
}

pub fn stat_value(graph: &DualGraph, plan: &Districting, stat: StatKind) -> f64 {
    match stat {
        StatKind::CutEdges => plan.cut_edge_count() as f64,
        StatKind::PopEquality => pop_equality(graph, plan),
        StatKind::DemSeats => seats_won(graph, plan) as f64,
    }
}

/// Everything recorded over one chain run: per-proposal telemetry plus the
/// per-step diagnostic scalar of the held plan.
#[derive(Debug, Clone)]
pub struct Trace {
    pub records: Vec<StepRecord>,
    pub stat: StatKind,
    pub values: Vec<f64>,
}

impl Trace {
    fn new(stat: StatKind) -> Self {
        Trace {
            records: Vec::new(),
            stat,
            values: Vec::new(),
        }
    }

    pub fn accepted(&self) -> u64 {
        self.records.iter().filter(|r| r.accepted).count() as u64
    }
}

/// One flip-kernel proposal: label flip edges, gather boundary components,
/// select a non-adjacent subset, flip it, then gate on contiguity, the hard
/// population tolerance, and the Metropolis filter. The plan is left at
/// sigma_{t+1} (unchanged on rejection).
///
/// An empty flip set proposes the unchanged plan; it passes the gates with
/// acceptance ratio 1 and counts as an accepted step.
pub fn propose_and_filter(
    graph: &DualGraph,
    plan: &mut Districting,
    params: &ChainParams,
    point: &SchedulePoint,
    step_index: u64,
    rng: &mut impl Rng,
) -> StepRecord {
    let labelling = label_flip_edges(graph, plan, params.lambda, rng);
    let components = boundary_components(graph, plan, &labelling);
    let choices = select_flip_set(graph, &components, rng);

    let log_w_old = log_weight(graph, plan, params.beta_pop, point.beta_comp);
    let undo = apply_flip_set(graph, plan, &components, &choices);

    let contiguous = touched_districts_connected(graph, plan, &components, &choices);
    if !contiguous {
        undo_flips(graph, plan, &undo);
        return StepRecord {
            step_index,
            proposed: true,
            accepted: false,
            rejected_reason: RejectionReason::InvalidContiguity,
            weight_after: log_w_old.exp(),
        };
    }

    if !within_pop_tolerance(graph, plan, point.pop_tolerance) {
        undo_flips(graph, plan, &undo);
        return StepRecord {
            step_index,
            proposed: true,
            accepted: false,
            rejected_reason: RejectionReason::Tolerance,
            weight_after: log_w_old.exp(),
        };
    }

    let log_w_new = log_weight(graph, plan, params.beta_pop, point.beta_comp);
    let accept_prob = (log_w_new - log_w_old).exp().min(1.0);
    if rng.gen::<f64>() < accept_prob {
        StepRecord {
            step_index,
            proposed: true,
            accepted: true,
            rejected_reason: RejectionReason::None,
            weight_after: log_w_new.exp(),
        }
    } else {
        undo_flips(graph, plan, &undo);
        StepRecord {
            step_index,
            proposed: true,
            accepted: false,
            rejected_reason: RejectionReason::Metropolis,
            weight_after: log_w_old.exp(),
        }
    }
}

/// Validity of only the districts touched by the flips (the rest kept
/// their vertex sets, so the chain invariant carries their validity).
/// One zeroed stamp buffer serves every BFS; start vertices come from the
/// flipped components, never from a whole-graph scan.
fn touched_districts_connected(
    graph: &DualGraph,
    plan: &Districting,
    components: &[BoundaryComponent],
    choices: &[FlipChoice],
) -> bool {
    let mut affected: Vec<u32> = choices
        .iter()
        .flat_map(|c| [components[c.component].district, c.target])
        .collect();
    affected.sort_unstable();
    affected.dedup();
    if affected.is_empty() {
        return true;
    }

    let mut stamp = vec![0u32; graph.len()];
    let mut queue: Vec<UnitId> = Vec::new();
    for (epoch, &d) in (1u32..).zip(affected.iter()) {
        let size = plan.district_size(d);
        if size == 0 {
            return false;
        }
        let mut start = None;
        'find: for choice in choices {
            let comp = &components[choice.component];
            if choice.target == d {
                start = Some(comp.vertices[0]);
                break;
            }
            if comp.district == d {
                // moved out of d; any remaining d-neighbor of the moved
                // component touches the remainder
                for &v in &comp.vertices {
                    for &u in graph.neighbors(v) {
                        if plan.district(u) == d {
                            start = Some(u);
                            break 'find;
                        }
                    }
                }
            }
        }
        let start = match start {
            Some(v) => v,
            // the moved component was the whole remainder's only contact:
            // d split off entirely
            None => return false,
        };

        queue.clear();
        queue.push(start);
        stamp[start as usize] = epoch;
        let mut seen = 1u32;
        let mut head = 0;
        while head < queue.len() {
            let v = queue[head];
            head += 1;
            for &u in graph.neighbors(v) {
                if plan.district(u) == d && stamp[u as usize] != epoch {
                    stamp[u as usize] = epoch;
                    seen += 1;
                    queue.push(u);
                }
            }
        }
        if seen != size {
            return false;
        }
    }
    true
}

fn check_initial(
    graph: &DualGraph,
    plan: &Districting,
    params: &ChainParams,
    tolerance: f64,
) -> Result<(), ChainError> {
    params.validate()?;
    if params.n_districts != plan.n_districts() {
        return Err(ParamError::DistrictMismatch(params.n_districts, plan.n_districts()).into());
    }
    if !is_valid(graph, plan) {
        return Err(ChainError::InvalidInitialPlan(
            "a district is empty or disconnected".into(),
        ));
    }
    if !within_pop_tolerance(graph, plan, tolerance) {
        return Err(ChainError::InvalidInitialPlan(format!(
            "outside population tolerance {tolerance}"
        )));
    }
    Ok(())
}

/// Run `kernel` until `n_accepted_target` proposals have been accepted,
/// recording every proposal. Chain parameters are held fixed at
/// `params` (tolerance and weights from the params themselves).
///
/// Errors with `StallDetected` if more than `params.stall_cap` consecutive
/// proposals are rejected.
pub fn run_chain(
    graph: &DualGraph,
    plan: &mut Districting,
    params: &ChainParams,
    kernel: Kernel,
    n_accepted_target: u64,
    stat: StatKind,
    rng: &mut impl Rng,
) -> Result<Trace, ChainError> {
    check_initial(graph, plan, params, params.pop_tolerance)?;
    let point = SchedulePoint::from_params(params);
    let mut trace = Trace::new(stat);
    let mut accepted = 0u64;
    let mut since_accept = 0u64;
    let mut step_index = 0u64;

    match kernel {
        Kernel::Flip => {
            while accepted < n_accepted_target {
                let record = propose_and_filter(graph, plan, params, &point, step_index, rng);
                step_index += 1;
                trace.values.push(stat_value(graph, plan, stat));
                if record.accepted {
                    accepted += 1;
                    since_accept = 0;
                } else {
                    since_accept += 1;
                    if since_accept > params.stall_cap {
                        return Err(stall(accepted, since_accept));
                    }
                }
                trace.records.push(record);
            }
        }
        Kernel::SingleVertex => {
            let mut walk = SingleVertexWalk::new(graph, plan.clone());
            while accepted < n_accepted_target {
                let record = walk.step(params, &point, rng)?;
                trace.values.push(stat_value(graph, walk.plan(), stat));
                if record.accepted {
                    accepted += 1;
                    since_accept = 0;
                } else {
                    since_accept += 1;
                    if since_accept > params.stall_cap {
                        return Err(stall(accepted, since_accept));
                    }
                }
                trace.records.push(record);
            }
            *plan = walk.into_plan();
        }
    }
    Ok(trace)
}

fn stall(accepted: u64, since: u64) -> ChainError {
    ChainError::StallDetected(format!(
        "{since} consecutive rejections after {accepted} accepted steps"
    ))
}
