//! The multi-component flip proposal: label monochromatic edges, gather
//! boundary components, select a non-adjacent subset, and flip it.

use crate::graph::{DualGraph, UnitId};
use crate::plan::Districting;
use rand::seq::SliceRandom;
use rand::Rng;
use smallvec::SmallVec;

const NO_COMPONENT: u32 = u32::MAX;

/// A labelling of monochromatic edges as flip edges. Cut edges are never
/// flagged.
#[derive(Debug, Clone)]
pub struct FlipLabelling {
    pub flagged: Vec<(UnitId, UnitId)>,
}

/// Flag each monochromatic edge independently with probability `lambda`.
///
/// Labelling walks the monochromatic edges with geometric skips (one RNG
/// draw per flagged edge instead of one per edge); the flag distribution
/// is the same as per-edge coins.
pub fn label_flip_edges(
    graph: &DualGraph,
    plan: &Districting,
    lambda: f64,
    rng: &mut impl Rng,
) -> FlipLabelling {
    let mut flagged = Vec::new();
    if lambda <= 0.0 {
        return FlipLabelling { flagged };
    }
    let log_keep = (1.0 - lambda).ln();
    let mut skip = geometric_skip(rng, log_keep);
    for &(u, v) in graph.edges() {
        if plan.district(u) != plan.district(v) {
            continue;
        }
        if skip == 0 {
            flagged.push((u, v));
            skip = geometric_skip(rng, log_keep);
        } else {
            skip -= 1;
        }
    }
    FlipLabelling { flagged }
}

/// Monochromatic edges to pass over before the next flag: Geometric(lambda)
/// on {0, 1, ...}.
fn geometric_skip(rng: &mut impl Rng, log_keep: f64) -> u64 {
    let u: f64 = rng.gen();
    if u <= 0.0 {
        return u64::MAX;
    }
    let skips = u.ln() / log_keep;
    if skips >= u64::MAX as f64 {
        u64::MAX
    } else {
        skips as u64
    }
}

/// A connected component of the flip labelling that touches at least one
/// cut edge. All its vertices share one district. Most components are
/// single vertices, so the vectors stay inline.
#[derive(Debug, Clone)]
pub struct BoundaryComponent {
    pub vertices: SmallVec<[UnitId; 4]>,
    pub district: u32,
    pub neighbor_districts: SmallVec<[u32; 4]>,
}

/// Connected components of `(V, flagged)` containing at least one vertex
/// incident to a cut edge. Unflagged vertices form singleton components and
/// appear when boundary-incident. Components are ordered by their smallest
/// vertex; vertex lists and neighbor sets are sorted.
pub fn boundary_components(
    graph: &DualGraph,
    plan: &Districting,
    labelling: &FlipLabelling,
) -> Vec<BoundaryComponent> {
    let n = graph.len();
    let mut parent: Vec<u32> = (0..n as u32).collect();

    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }

    for &(u, v) in &labelling.flagged {
        debug_assert_eq!(plan.district(u), plan.district(v));
        let (a, b) = (find(&mut parent, u), find(&mut parent, v));
        if a != b {
            parent[a as usize] = b;
        }
    }

    // A vertex is on the boundary iff it has an incident cut edge.
    let mut on_boundary = vec![false; n];
    let mut boundary_count = 0usize;
    for &(u, v) in graph.edges() {
        if plan.district(u) != plan.district(v) {
            if !on_boundary[u as usize] {
                on_boundary[u as usize] = true;
                boundary_count += 1;
            }
            if !on_boundary[v as usize] {
                on_boundary[v as usize] = true;
                boundary_count += 1;
            }
        }
    }

    let mut comp_of_root = vec![NO_COMPONENT; n];
    for v in 0..n as u32 {
        if on_boundary[v as usize] {
            comp_of_root[find(&mut parent, v) as usize] = 0;
        }
    }

    let mut comps: Vec<BoundaryComponent> = Vec::with_capacity(boundary_count);
    for v in 0..n as u32 {
        let root = find(&mut parent, v) as usize;
        if comp_of_root[root] == NO_COMPONENT {
            continue;
        }
        if comp_of_root[root] == 0 {
            comp_of_root[root] = comps.len() as u32 + 1;
            comps.push(BoundaryComponent {
                vertices: SmallVec::new(),
                district: plan.district(v),
                neighbor_districts: SmallVec::new(),
            });
        }
        comps[(comp_of_root[root] - 1) as usize].vertices.push(v);
    }

    for comp in &mut comps {
        let mut neighbors: SmallVec<[u32; 4]> = SmallVec::new();
        for &v in &comp.vertices {
            for &u in graph.neighbors(v) {
                let d = plan.district(u);
                if d != comp.district && !neighbors.contains(&d) {
                    neighbors.push(d);
                }
            }
        }
        neighbors.sort_unstable();
        comp.neighbor_districts = neighbors;
    }
    comps
}

/// One component chosen for flipping, with its target district.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlipChoice {
    pub component: usize,
    pub target: u32,
}

/// Select a random subset of components, no two of which are adjacent in
/// the graph, pairing each with a uniformly drawn neighboring district.
///
/// Components are visited in random order; each gets an independent
/// inclusion coin with probability 1/(k+1) for k candidate components
/// (one expected flip per proposal) and is skipped if adjacent to one
/// already chosen. A coin proportional to 1/k keeps the acceptance rate
/// workable under a tight population band, where flipping many components
/// at once is almost always rejected.
pub fn select_flip_set(
    graph: &DualGraph,
    components: &[BoundaryComponent],
    rng: &mut impl Rng,
) -> Vec<FlipChoice> {
    let mut comp_of = vec![NO_COMPONENT; graph.len()];
    for (i, comp) in components.iter().enumerate() {
        for &v in &comp.vertices {
            comp_of[v as usize] = i as u32;
        }
    }

    let mut order: Vec<usize> = (0..components.len()).collect();
    order.shuffle(rng);
    let include_prob = 1.0 / (components.len() + 1) as f64;

    let mut chosen = vec![false; components.len()];
    let mut choices = Vec::new();
    'next: for i in order {
        if !rng.gen_bool(include_prob) {
            continue;
        }
        for &v in &components[i].vertices {
            for &u in graph.neighbors(v) {
                let c = comp_of[u as usize];
                if c != NO_COMPONENT && chosen[c as usize] {
                    continue 'next;
                }
            }
        }
        let targets = &components[i].neighbor_districts;
        debug_assert!(!targets.is_empty());
        let target = targets[rng.gen_range(0..targets.len())];
        chosen[i] = true;
        choices.push(FlipChoice {
            component: i,
            target,
        });
    }
    choices
}

/// Relabel every vertex of each chosen component to its target district,
/// updating plan caches. Returns the undo log (vertex, previous label).
pub fn apply_flip_set(
    graph: &DualGraph,
    plan: &mut Districting,
    components: &[BoundaryComponent],
    choices: &[FlipChoice],
) -> Vec<(UnitId, u32)> {
    let mut undo = Vec::new();
    for choice in choices {
        for &v in &components[choice.component].vertices {
            undo.push((v, plan.district(v)));
            plan.flip(graph, v, choice.target)
                .expect("target is an existing district label");
        }
    }
    undo
}

/// Reverse a flip application exactly, caches included.
pub fn undo_flips(graph: &DualGraph, plan: &mut Districting, undo: &[(UnitId, u32)]) {
    for &(v, label) in undo.iter().rev() {
        plan.flip(graph, v, label)
            .expect("undo label is an existing district label");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

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

    fn half_path_plan(g: &DualGraph) -> Districting {
        Districting::new(g, vec![0, 0, 1, 1], 2).unwrap()
    }

    #[test]
    fn lambda_zero_flags_nothing() {
        let g = path4();
        let plan = half_path_plan(&g);
        let mut rng = stream_rng(1, 0);
        assert!(label_flip_edges(&g, &plan, 0.0, &mut rng).flagged.is_empty());
    }

    #[test]
    fn lambda_near_one_flags_all_monochromatic() {
        let g = path4();
        let plan = half_path_plan(&g);
        let mut rng = stream_rng(1, 0);
        let labelling = label_flip_edges(&g, &plan, 1.0 - 1e-12, &mut rng);
        assert_eq!(labelling.flagged, vec![(0, 1), (2, 3)]);
    }

    #[test]
    fn cut_edges_never_flagged() {
        let g = DualGraph::grid(4, 4);
        let assignment: Vec<u32> = (0..16).map(|v| if v % 4 < 2 { 0 } else { 1 }).collect();
        let plan = Districting::new(&g, assignment, 2).unwrap();
        for seed in 0..20 {
            let mut rng = stream_rng(seed, 0);
            let labelling = label_flip_edges(&g, &plan, 0.7, &mut rng);
            for (u, v) in labelling.flagged {
                assert_eq!(plan.district(u), plan.district(v));
            }
        }
    }

    #[test]
    fn empty_labelling_gives_singleton_boundary_components() {
        let g = path4();
        let plan = half_path_plan(&g);
        let comps = boundary_components(&g, &plan, &FlipLabelling { flagged: vec![] });
        // only v1 and v2 touch the single cut edge
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].vertices, vec![1]);
        assert_eq!(comps[0].district, 0);
        assert_eq!(comps[0].neighbor_districts, vec![1]);
        assert_eq!(comps[1].vertices, vec![2]);
        assert_eq!(comps[1].neighbor_districts, vec![0]);
    }

    #[test]
    fn flagged_edge_merges_component() {
        let g = path4();
        let plan = half_path_plan(&g);
        let labelling = FlipLabelling {
            flagged: vec![(0, 1)],
        };
        let comps = boundary_components(&g, &plan, &labelling);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].vertices, vec![0, 1]);
        assert_eq!(comps[1].vertices, vec![2]);
    }

    #[test]
    fn monochromatic_plan_has_no_boundary() {
        let g = path4();
        let plan = Districting::single_district(&g);
        let mut rng = stream_rng(3, 0);
        let labelling = label_flip_edges(&g, &plan, 0.5, &mut rng);
        assert!(boundary_components(&g, &plan, &labelling).is_empty());
    }

    #[test]
    fn selection_includes_and_excludes_over_seeds() {
        let g = path4();
        let plan = half_path_plan(&g);
        let comps = boundary_components(&g, &plan, &FlipLabelling { flagged: vec![] });
        let (mut saw_empty, mut saw_chosen) = (false, false);
        for seed in 0..50 {
            let mut rng = stream_rng(seed, 0);
            let choices = select_flip_set(&g, &comps, &mut rng);
            if choices.is_empty() {
                saw_empty = true;
            }
            for c in &choices {
                saw_chosen = true;
                assert!(comps[c.component].neighbor_districts.contains(&c.target));
            }
        }
        assert!(saw_empty && saw_chosen);
    }

    #[test]
    fn adjacent_components_never_both_chosen() {
        let g = path4();
        let plan = half_path_plan(&g);
        // {v1} and {v2} are adjacent via the cut edge (1,2)
        let comps = boundary_components(&g, &plan, &FlipLabelling { flagged: vec![] });
        for seed in 0..200 {
            let mut rng = stream_rng(seed, 0);
            let choices = select_flip_set(&g, &comps, &mut rng);
            assert!(choices.len() <= 1, "adjacent components both selected");
        }
    }

    #[test]
    fn multi_target_components_draw_both_targets() {
        // path colored A,B,C: middle vertices border two districts
        let g = path4();
        let plan = Districting::new(&g, vec![0, 0, 1, 2], 3).unwrap();
        let comps = boundary_components(&g, &plan, &FlipLabelling { flagged: vec![] });
        let two_sided = comps
            .iter()
            .position(|c| c.neighbor_districts.len() == 2)
            .expect("v2 borders districts 0 and 2");
        let mut seen = std::collections::HashSet::new();
        for seed in 0..200 {
            let mut rng = stream_rng(seed, 0);
            for c in select_flip_set(&g, &comps, &mut rng) {
                if c.component == two_sided {
                    seen.insert(c.target);
                }
            }
        }
        assert_eq!(seen.len(), 2, "both neighboring districts should be drawn");
    }

    #[test]
    fn apply_and_undo_round_trip() {
        let g = path4();
        let mut plan = half_path_plan(&g);
        let before = plan.clone();
        let comps = boundary_components(&g, &plan, &FlipLabelling { flagged: vec![] });
        // flip {v1} -> district 1
        let choice = FlipChoice {
            component: 0,
            target: 1,
        };
        let undo = apply_flip_set(&g, &mut plan, &comps, &[choice]);
        assert_eq!(plan.assignment(), &[0, 1, 1, 1]);
        undo_flips(&g, &mut plan, &undo);
        assert_eq!(plan, before);

        // empty flip set leaves the plan untouched
        let undo = apply_flip_set(&g, &mut plan, &comps, &[]);
        assert!(undo.is_empty());
        assert_eq!(plan, before);
    }
}
