//! Single-vertex boundary walk: recolor one boundary vertex across a cut
//! edge per step.
//!
//! The proposal is asymmetric (boundary size and per-vertex cut degrees
//! differ between a plan and its successor), so the acceptance step uses
//! the full Metropolis-Hastings ratio with the proposal-probability
//! correction. That makes the walk's stationary distribution exactly
//! proportional to the weight function, which the plain ratio only
//! approximates.

use crate::anneal::SchedulePoint;
use crate::chain::{ChainError, RejectionReason, StepRecord};
use crate::graph::{DualGraph, UnitId};
use crate::plan::Districting;
use crate::score::{log_weight, within_pop_tolerance, ChainParams};
use rand::Rng;

const NOT_IN_BOUNDARY: u32 = u32::MAX;

/// A single-vertex chain over one plan, with incrementally maintained
/// boundary bookkeeping. Stepping is O(deg(v) + |touched district|).
pub struct SingleVertexWalk<'a> {
    graph: &'a DualGraph,
    plan: Districting,
    /// Number of incident cut edges per vertex.
    cut_deg: Vec<u32>,
    /// Vertices with at least one incident cut edge, in swap-remove order.
    boundary: Vec<UnitId>,
    pos: Vec<u32>,
    // reusable BFS scratch
    stamp: Vec<u32>,
    epoch: u32,
    queue: Vec<UnitId>,
    step_index: u64,
}

impl<'a> SingleVertexWalk<'a> {
    pub fn new(graph: &'a DualGraph, plan: Districting) -> Self {
        let n = graph.len();
        let mut walk = SingleVertexWalk {
            graph,
            plan,
            cut_deg: vec![0; n],
            boundary: Vec::new(),
            pos: vec![NOT_IN_BOUNDARY; n],
            stamp: vec![0; n],
            epoch: 0,
            queue: Vec::new(),
            step_index: 0,
        };
        for v in 0..n as UnitId {
            let d = walk.plan.district(v);
            let cd = walk
                .graph
                .neighbors(v)
                .iter()
                .filter(|&&u| walk.plan.district(u) != d)
                .count() as u32;
            walk.cut_deg[v as usize] = cd;
            if cd > 0 {
                walk.boundary_insert(v);
            }
        }
        walk
    }

    #[inline]
    pub fn plan(&self) -> &Districting {
        &self.plan
    }

    pub fn into_plan(self) -> Districting {
        self.plan
    }

    #[inline]
    pub fn boundary_len(&self) -> usize {
        self.boundary.len()
    }

    fn boundary_insert(&mut self, v: UnitId) {
        self.pos[v as usize] = self.boundary.len() as u32;
        self.boundary.push(v);
    }

    fn boundary_remove(&mut self, v: UnitId) {
        let i = self.pos[v as usize] as usize;
        let last = self.boundary.pop().expect("vertex is in the boundary");
        if last != v {
            self.boundary[i] = last;
            self.pos[last as usize] = i as u32;
        }
        self.pos[v as usize] = NOT_IN_BOUNDARY;
    }

    /// Flip `v` and update cut degrees and the boundary set in O(deg(v)).
    fn flip_tracked(&mut self, v: UnitId, new_label: u32) {
        let old = self.plan.district(v);
        self.plan
            .flip(self.graph, v, new_label)
            .expect("label is an existing district");
        let mut cd_v = 0;
        for &u in self.graph.neighbors(v) {
            let lu = self.plan.district(u);
            let was_cut = lu != old;
            let now_cut = lu != new_label;
            if now_cut {
                cd_v += 1;
            }
            if was_cut != now_cut {
                let before = self.cut_deg[u as usize];
                if now_cut {
                    self.cut_deg[u as usize] = before + 1;
                    if before == 0 {
                        self.boundary_insert(u);
                    }
                } else {
                    self.cut_deg[u as usize] = before - 1;
                    if before == 1 {
                        self.boundary_remove(u);
                    }
                }
            }
        }
        let before = self.cut_deg[v as usize];
        self.cut_deg[v as usize] = cd_v;
        if before == 0 && cd_v > 0 {
            self.boundary_insert(v);
        } else if before > 0 && cd_v == 0 {
            self.boundary_remove(v);
        }
    }

    /// BFS check that district `d` is connected, starting from `start`.
    fn district_connected_from(&mut self, d: u32, start: UnitId) -> bool {
        if self.epoch == u32::MAX {
            self.stamp.fill(0);
            self.epoch = 0;
        }
        self.epoch += 1;
        let epoch = self.epoch;
        self.queue.clear();
        self.queue.push(start);
        self.stamp[start as usize] = epoch;
        let mut count = 1u32;
        let mut head = 0;
        while head < self.queue.len() {
            let v = self.queue[head];
            head += 1;
            for &u in self.graph.neighbors(v) {
                if self.plan.district(u) == d && self.stamp[u as usize] != epoch {
                    self.stamp[u as usize] = epoch;
                    count += 1;
                    self.queue.push(u);
                }
            }
        }
        count == self.plan.district_size(d)
    }

    /// One proposal: pick a boundary vertex and an incident cut edge
    /// uniformly, recolor across it, then validity-gate, tolerance-gate,
    /// and Metropolis-Hastings-filter.
    pub fn step(
        &mut self,
        params: &ChainParams,
        point: &SchedulePoint,
        rng: &mut impl Rng,
    ) -> Result<StepRecord, ChainError> {
        let b_old = self.boundary.len();
        if b_old == 0 {
            return Err(ChainError::NoBoundary);
        }
        let step_index = self.step_index;
        self.step_index += 1;

        let v = self.boundary[rng.gen_range(0..b_old)];
        let d = self.plan.district(v);
        let c_v = self.cut_deg[v as usize] as usize;
        let pick = rng.gen_range(0..c_v);

        // Resolve the picked cut edge to its target district; count the
        // parallel cut edges into that district and the edges back into d.
        let mut target = u32::MAX;
        let mut seen_cut = 0;
        for &u in self.graph.neighbors(v) {
            let lu = self.plan.district(u);
            if lu != d {
                if seen_cut == pick {
                    target = lu;
                    break;
                }
                seen_cut += 1;
            }
        }
        debug_assert_ne!(target, u32::MAX);
        let mut k_t = 0usize; // edges from v into target
        let mut k_d = 0usize; // edges from v back into d
        for &u in self.graph.neighbors(v) {
            let lu = self.plan.district(u);
            if lu == target {
                k_t += 1;
            } else if lu == d {
                k_d += 1;
            }
        }

        let log_w_old = log_weight(self.graph, &self.plan, params.beta_pop, point.beta_comp);
        self.flip_tracked(v, target);

        // District `target` stays connected (it gains a vertex adjacent to
        // it); only the donor district can empty or split.
        let valid = self.plan.district_size(d) > 0 && {
            let start = self
                .graph
                .neighbors(v)
                .iter()
                .copied()
                .find(|&u| self.plan.district(u) == d)
                .expect("nonempty donor district keeps a neighbor of v");
            self.district_connected_from(d, start)
        };
        if !valid {
            self.flip_tracked(v, d);
            return Ok(StepRecord {
                step_index,
                proposed: true,
                accepted: false,
                rejected_reason: RejectionReason::InvalidContiguity,
                weight_after: log_w_old.exp(),
            });
        }

        if !within_pop_tolerance(self.graph, &self.plan, point.pop_tolerance) {
            self.flip_tracked(v, d);
            return Ok(StepRecord {
                step_index,
                proposed: true,
                accepted: false,
                rejected_reason: RejectionReason::Tolerance,
                weight_after: log_w_old.exp(),
            });
        }

        let log_w_new = log_weight(self.graph, &self.plan, params.beta_pop, point.beta_comp);
        let b_new = self.boundary.len();
        let c_v_new = self.cut_deg[v as usize] as usize;
        debug_assert!(k_d >= 1 && c_v_new >= 1 && b_new >= 1);
        // q(sigma -> sigma') = (1/b_old) * k_t / c_v
        // q(sigma' -> sigma) = (1/b_new) * k_d / c_v_new
        let log_ratio = (log_w_new - log_w_old)
            + ((b_old * k_d * c_v) as f64).ln()
            - ((b_new * k_t * c_v_new) as f64).ln();
        let accept_prob = log_ratio.exp().min(1.0);
        if rng.gen::<f64>() < accept_prob {
            Ok(StepRecord {
                step_index,
                proposed: true,
                accepted: true,
                rejected_reason: RejectionReason::None,
                weight_after: log_w_new.exp(),
            })
        } else {
            self.flip_tracked(v, d);
            Ok(StepRecord {
                step_index,
                proposed: true,
                accepted: false,
                rejected_reason: RejectionReason::Metropolis,
                weight_after: log_w_old.exp(),
            })
        }
    }
}

/// One-shot form of the walk for callers that do not keep a
/// [`SingleVertexWalk`] alive. Setup is O(V + E); loops should construct
/// the walk once instead.
pub fn single_vertex_chain_step(
    graph: &DualGraph,
    plan: &mut Districting,
    params: &ChainParams,
    point: &SchedulePoint,
    rng: &mut impl Rng,
) -> Result<StepRecord, ChainError> {
    let mut walk = SingleVertexWalk::new(graph, plan.clone());
    let record = walk.step(params, point, rng)?;
    *plan = walk.into_plan();
    Ok(record)
}
