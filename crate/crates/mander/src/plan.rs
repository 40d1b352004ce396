//! Districting plans: vertex colorings with incrementally maintained caches.

use crate::graph::{DualGraph, UnitId};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("assignment covers {0} units, graph has {1}")]
    LengthMismatch(usize, usize),
    #[error("district label {label} out of range (n_districts = {n})")]
    UnknownDistrict { label: u32, n: u32 },
    #[error("district {0} has no units")]
    EmptyDistrict(u32),
    #[error("plan is invalid: district {0} is empty or disconnected")]
    InvalidPlan(u32),
}

/// An n-coloring of the dual graph; the chain's mutable state.
///
/// District populations, sizes, and the cut-edge count are maintained
/// incrementally on flips in O(deg) so chain steps never rescan the graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Districting {
    assignment: Vec<u32>,
    n_districts: u32,
    district_pops: Vec<u64>,
    district_sizes: Vec<u32>,
    cut_edge_count: usize,
}

impl Districting {
    /// Build a plan from a full assignment, computing all caches from
    /// scratch. Every label in `0..n_districts` must be used at least once.
    pub fn new(
        graph: &DualGraph,
        assignment: Vec<u32>,
        n_districts: u32,
    ) -> Result<Self, PlanError> {
        if assignment.len() != graph.len() {
            return Err(PlanError::LengthMismatch(assignment.len(), graph.len()));
        }
        let mut district_pops = vec![0u64; n_districts as usize];
        let mut district_sizes = vec![0u32; n_districts as usize];
        for (v, &d) in assignment.iter().enumerate() {
            if d >= n_districts {
                return Err(PlanError::UnknownDistrict {
                    label: d,
                    n: n_districts,
                });
            }
            district_pops[d as usize] += graph.pop(v as UnitId);
            district_sizes[d as usize] += 1;
        }
        if let Some(d) = district_sizes.iter().position(|&s| s == 0) {
            return Err(PlanError::EmptyDistrict(d as u32));
        }
        let cut_edge_count = graph
            .edges()
            .iter()
            .filter(|&&(u, v)| assignment[u as usize] != assignment[v as usize])
            .count();
        Ok(Districting {
            assignment,
            n_districts,
            district_pops,
            district_sizes,
            cut_edge_count,
        })
    }

    /// The whole graph as one district.
    pub fn single_district(graph: &DualGraph) -> Self {
        Districting::new(graph, vec![0; graph.len()], 1).expect("one district is always valid")
    }

    #[inline]
    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    #[inline]
    pub fn district(&self, v: UnitId) -> u32 {
        self.assignment[v as usize]
    }

    #[inline]
    pub fn n_districts(&self) -> u32 {
        self.n_districts
    }

    #[inline]
    pub fn district_pops(&self) -> &[u64] {
        &self.district_pops
    }

    #[inline]
    pub fn district_size(&self, d: u32) -> u32 {
        self.district_sizes[d as usize]
    }

    #[inline]
    pub fn cut_edge_count(&self) -> usize {
        self.cut_edge_count
    }

    /// Recolor `v` to `new_label`, updating caches in O(deg(v)).
    ///
    /// The result may be invalid (a district may be emptied or
    /// disconnected); validity is checked separately. Flipping a vertex to
    /// its current label is a no-op. A flip followed by the reverse flip
    /// restores the exact original state, caches included.
    pub fn flip(
        &mut self,
        graph: &DualGraph,
        v: UnitId,
        new_label: u32,
    ) -> Result<(), PlanError> {
        if new_label >= self.n_districts {
            return Err(PlanError::UnknownDistrict {
                label: new_label,
                n: self.n_districts,
            });
        }
        let old = self.assignment[v as usize];
        if old == new_label {
            return Ok(());
        }
        let pop = graph.pop(v);
        self.district_pops[old as usize] -= pop;
        self.district_pops[new_label as usize] += pop;
        self.district_sizes[old as usize] -= 1;
        self.district_sizes[new_label as usize] += 1;
        for &u in graph.neighbors(v) {
            let lu = self.assignment[u as usize];
            let was_cut = lu != old;
            let now_cut = lu != new_label;
            match (was_cut, now_cut) {
                (false, true) => self.cut_edge_count += 1,
                (true, false) => self.cut_edge_count -= 1,
                _ => {}
            }
        }
        self.assignment[v as usize] = new_label;
        Ok(())
    }
}

/// Edges whose endpoints carry different labels, in canonical order.
pub fn cut_edges(graph: &DualGraph, plan: &Districting) -> Vec<(UnitId, UnitId)> {
    graph
        .edges()
        .iter()
        .filter(|&&(u, v)| plan.district(u) != plan.district(v))
        .copied()
        .collect()
}

/// True iff every district is nonempty and its induced subgraph is
/// connected — equivalently, removing the cut edges leaves exactly
/// `n_districts` connected components.
pub fn is_valid(graph: &DualGraph, plan: &Districting) -> bool {
    let n = graph.len();
    let mut seen = vec![false; n];
    let mut stack = Vec::new();
    for d in 0..plan.n_districts() {
        let size = plan.district_size(d);
        if size == 0 {
            return false;
        }
        // BFS the induced subgraph from this district's first vertex.
        let start = match (0..n).find(|&v| plan.district(v as UnitId) == d) {
            Some(v) => v as UnitId,
            None => return false,
        };
        let mut count = 1u32;
        seen[start as usize] = true;
        stack.push(start);
        while let Some(v) = stack.pop() {
            for &u in graph.neighbors(v) {
                if plan.district(u) == d && !seen[u as usize] {
                    seen[u as usize] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        if count != size {
            return false;
        }
    }
    true
}

/// The districts as vertex sets `C^1..C^n`, each sorted ascending.
pub fn district_components(
    graph: &DualGraph,
    plan: &Districting,
) -> Result<Vec<Vec<UnitId>>, PlanError> {
    if !is_valid(graph, plan) {
        let bad = (0..plan.n_districts())
            .find(|&d| {
                plan.district_size(d) == 0 || !district_connected(graph, plan, d)
            })
            .unwrap_or(0);
        return Err(PlanError::InvalidPlan(bad));
    }
    let mut comps = vec![Vec::new(); plan.n_districts() as usize];
    for v in 0..graph.len() {
        comps[plan.district(v as UnitId) as usize].push(v as UnitId);
    }
    Ok(comps)
}

/// Population of one district, from the cached per-district sums.
pub fn district_population(
    graph: &DualGraph,
    plan: &Districting,
    district: u32,
) -> Result<u64, PlanError> {
    let _ = graph;
    if district >= plan.n_districts() {
        return Err(PlanError::UnknownDistrict {
            label: district,
            n: plan.n_districts(),
        });
    }
    Ok(plan.district_pops()[district as usize])
}

pub(crate) fn district_connected(graph: &DualGraph, plan: &Districting, d: u32) -> bool {
    let size = plan.district_size(d);
    if size == 0 {
        return false;
    }
    let start = match (0..graph.len()).find(|&v| plan.district(v as UnitId) == d) {
        Some(v) => v as UnitId,
        None => return false,
    };
    let mut seen = vec![false; graph.len()];
    let mut stack = vec![start];
    seen[start as usize] = true;
    let mut count = 1u32;
    while let Some(v) = stack.pop() {
        for &u in graph.neighbors(v) {
            if plan.district(u) == d && !seen[u as usize] {
                seen[u as usize] = true;
                count += 1;
                stack.push(u);
            }
        }
    }
    count == size
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path4() -> DualGraph {
        DualGraph::new(
            (0..4).map(|i| i.to_string()).collect(),
            vec![vec![1], vec![0, 2], vec![1, 3], vec![2]],
            vec![1; 4],
            vec![0; 4],
            vec![0; 4],
        )
        .unwrap()
    }

    #[test]
    fn cut_edges_path() {
        let g = path4();
        let plan = Districting::new(&g, vec![0, 0, 1, 1], 2).unwrap();
        assert_eq!(cut_edges(&g, &plan), vec![(1, 2)]);
        assert_eq!(plan.cut_edge_count(), 1);
    }

    #[test]
    fn cut_edges_monochromatic_empty() {
        let g = path4();
        let plan = Districting::single_district(&g);
        assert!(cut_edges(&g, &plan).is_empty());
        assert_eq!(plan.cut_edge_count(), 0);
    }

    #[test]
    fn cut_edges_grid_checkerboard() {
        let g = DualGraph::grid(2, 2);
        // vertices 0,1 top row; 2,3 bottom row; plan A,B,A,B
        let plan = Districting::new(&g, vec![0, 1, 0, 1], 2).unwrap();
        assert_eq!(cut_edges(&g, &plan), vec![(0, 1), (2, 3)]);
    }

    #[test]
    fn validity_path() {
        let g = path4();
        let ok = Districting::new(&g, vec![0, 0, 1, 1], 2).unwrap();
        assert!(is_valid(&g, &ok));
        let split = Districting::new(&g, vec![0, 1, 0, 1], 2).unwrap();
        assert!(!is_valid(&g, &split));
        assert!(is_valid(&g, &Districting::single_district(&g)));
    }

    #[test]
    fn components_path_and_grid() {
        let g = path4();
        let plan = Districting::new(&g, vec![0, 0, 1, 1], 2).unwrap();
        assert_eq!(
            district_components(&g, &plan).unwrap(),
            vec![vec![0, 1], vec![2, 3]]
        );

        let g = DualGraph::grid(2, 2);
        let rows = Districting::new(&g, vec![0, 0, 1, 1], 2).unwrap();
        assert_eq!(
            district_components(&g, &rows).unwrap(),
            vec![vec![0, 1], vec![2, 3]]
        );
        assert_eq!(
            district_components(&g, &Districting::single_district(&g)).unwrap(),
            vec![vec![0, 1, 2, 3]]
        );
    }

    #[test]
    fn components_reject_invalid() {
        let g = path4();
        let split = Districting::new(&g, vec![0, 1, 0, 1], 2).unwrap();
        assert!(matches!(
            district_components(&g, &split),
            Err(PlanError::InvalidPlan(_))
        ));
    }

    #[test]
    fn district_population_cases() {
        let g = path4().with_pops(vec![2, 1, 1, 2]);
        let plan = Districting::new(&g, vec![0, 0, 1, 1], 2).unwrap();
        assert_eq!(district_population(&g, &plan, 0).unwrap(), 3);
        assert_eq!(district_population(&g, &plan, 1).unwrap(), 3);
        assert!(matches!(
            district_population(&g, &plan, 2),
            Err(PlanError::UnknownDistrict { label: 2, n: 2 })
        ));

        let g0 = path4().with_pops(vec![0, 0, 0, 0]);
        let plan = Districting::new(&g0, vec![0, 0, 1, 1], 2).unwrap();
        assert_eq!(district_population(&g0, &plan, 0).unwrap(), 0);

        let g7 = path4().with_pops(vec![7, 1, 1, 1]);
        let plan = Districting::new(&g7, vec![0, 1, 1, 1], 2).unwrap();
        assert_eq!(district_population(&g7, &plan, 0).unwrap(), 7);
    }

    #[test]
    fn flip_updates_caches() {
        let g = path4();
        let mut plan = Districting::new(&g, vec![0, 0, 1, 1], 2).unwrap();
        plan.flip(&g, 1, 1).unwrap();
        assert_eq!(plan.assignment(), &[0, 1, 1, 1]);
        assert_eq!(plan.cut_edge_count(), 1);
        assert_eq!(plan.district_pops(), &[1, 3]);

        // flip to current label is a no-op
        let before = plan.clone();
        plan.flip(&g, 1, 1).unwrap();
        assert_eq!(plan, before);

        // 2x2 grid example: [A,A,B,B] flip v3 -> A gives 2 cut edges
        let g = DualGraph::grid(2, 2);
        let mut plan = Districting::new(&g, vec![0, 0, 1, 1], 2).unwrap();
        plan.flip(&g, 3, 0).unwrap();
        assert_eq!(plan.assignment(), &[0, 0, 1, 0]);
        assert_eq!(plan.cut_edge_count(), 2);

        assert!(matches!(
            plan.flip(&g, 0, 5),
            Err(PlanError::UnknownDistrict { label: 5, n: 2 })
        ));
    }

    #[test]
    fn empty_district_rejected_at_construction() {
        let g = path4();
        assert!(matches!(
            Districting::new(&g, vec![0, 0, 0, 0], 2),
            Err(PlanError::EmptyDistrict(1))
        ));
    }

    /// From-scratch recount used as the oracle for cache coherence.
    fn recount(graph: &DualGraph, assignment: &[u32], n: u32) -> (Vec<u64>, usize) {
        let mut pops = vec![0u64; n as usize];
        for (v, &d) in assignment.iter().enumerate() {
            pops[d as usize] += graph.pop(v as UnitId);
        }
        let cut = graph
            .edges()
            .iter()
            .filter(|&&(u, v)| assignment[u as usize] != assignment[v as usize])
            .count();
        (pops, cut)
    }

    /// Independent component count: union-find over uncut edges.
    fn component_count(graph: &DualGraph, assignment: &[u32]) -> usize {
        let n = graph.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(u, v) in graph.edges() {
            if assignment[u as usize] == assignment[v as usize] {
                let (a, b) = (find(&mut parent, u as usize), find(&mut parent, v as usize));
                if a != b {
                    parent[a] = b;
                }
            }
        }
        (0..n).map(|v| find(&mut parent, v)).collect::<std::collections::HashSet<_>>().len()
    }

    proptest! {
        #[test]
        fn caches_match_recount_after_flips(
            flips in proptest::collection::vec((0u32..16, 0u32..3), 1..60),
        ) {
            let g = DualGraph::grid(4, 4);
            let base: Vec<u32> = (0..16).map(|v| if v < 6 { 0 } else if v < 11 { 1 } else { 2 }).collect();
            let mut plan = Districting::new(&g, base, 3).unwrap();
            for (v, d) in flips {
                plan.flip(&g, v, d).unwrap();
                let (pops, cut) = recount(&g, plan.assignment(), 3);
                prop_assert_eq!(plan.district_pops(), &pops[..]);
                prop_assert_eq!(plan.cut_edge_count(), cut);
            }
        }

        #[test]
        fn flip_then_reverse_restores_state(v in 0u32..16, d in 0u32..3) {
            let g = DualGraph::grid(4, 4);
            let base: Vec<u32> = (0..16).map(|x| x % 3).collect();
            let mut plan = Districting::new(&g, base, 3).unwrap();
            let before = plan.clone();
            let old = plan.district(v);
            plan.flip(&g, v, d).unwrap();
            plan.flip(&g, v, old).unwrap();
            prop_assert_eq!(plan, before);
        }

        #[test]
        fn validity_matches_component_count(assignment in proptest::collection::vec(0u32..3, 9)) {
            let g = DualGraph::grid(3, 3);
            // only assignments using all 3 labels construct
            if let Ok(plan) = Districting::new(&g, assignment.clone(), 3) {
                let by_components = component_count(&g, &assignment) == 3;
                prop_assert_eq!(is_valid(&g, &plan), by_components);
            }
        }
    }
}
