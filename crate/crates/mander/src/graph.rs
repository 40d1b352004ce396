//! Dual graph over geographic units: adjacency, populations, and votes.

use thiserror::Error;

/// Dense vertex index assigned at ingest. Original string identifiers are
/// kept in a side table for round-tripping.
pub type UnitId = u32;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph has no vertices")]
    Empty,
    #[error("attribute length mismatch: {0} units but {1} {2} entries")]
    LengthMismatch(usize, usize, &'static str),
    #[error("self-loop at unit {0}")]
    SelfLoop(UnitId),
    #[error("duplicate edge {0}-{1}")]
    DuplicateEdge(UnitId, UnitId),
    #[error("neighbor index {0} out of range")]
    NeighborOutOfRange(UnitId),
    #[error("asymmetric adjacency: {0} lists {1} but not vice versa")]
    Asymmetric(UnitId, UnitId),
    #[error("graph is disconnected ({0} of {1} units reachable from unit 0)")]
    Disconnected(usize, usize),
}

/// Immutable adjacency structure over geographic units.
///
/// Stored in CSR form: neighbors of `v` are `adjncy[xadj[v]..xadj[v+1]]`,
/// sorted ascending. `edges` holds each undirected edge once as `(u, v)`
/// with `u < v`, in lexicographic order. The graph is validated at
/// construction to be simple, symmetric, and connected; after that it is
/// never mutated and may be shared freely across chains.
#[derive(Debug, Clone)]
pub struct DualGraph {
    names: Vec<String>,
    xadj: Vec<u32>,
    adjncy: Vec<UnitId>,
    edges: Vec<(UnitId, UnitId)>,
    pops: Vec<u64>,
    dem: Vec<u64>,
    rep: Vec<u64>,
    total_pop: u64,
}

impl DualGraph {
    /// Build and validate a dual graph from per-unit neighbor lists.
    pub fn new(
        names: Vec<String>,
        adjacency: Vec<Vec<UnitId>>,
        pops: Vec<u64>,
        dem: Vec<u64>,
        rep: Vec<u64>,
    ) -> Result<Self, GraphError> {
        let n = names.len();
        if n == 0 {
            return Err(GraphError::Empty);
        }
        if adjacency.len() != n {
            return Err(GraphError::LengthMismatch(n, adjacency.len(), "adjacency"));
        }
        if pops.len() != n {
            return Err(GraphError::LengthMismatch(n, pops.len(), "pop"));
        }
        if dem.len() != n {
            return Err(GraphError::LengthMismatch(n, dem.len(), "dem"));
        }
        if rep.len() != n {
            return Err(GraphError::LengthMismatch(n, rep.len(), "rep"));
        }

        let mut sorted = adjacency;
        for (v, list) in sorted.iter_mut().enumerate() {
            list.sort_unstable();
            for pair in list.windows(2) {
                if pair[0] == pair[1] {
                    return Err(GraphError::DuplicateEdge(v as UnitId, pair[0]));
                }
            }
            for &u in list.iter() {
                if u as usize >= n {
                    return Err(GraphError::NeighborOutOfRange(u));
                }
                if u as usize == v {
                    return Err(GraphError::SelfLoop(u));
                }
            }
        }
        // Symmetry: u in adj(v) <=> v in adj(u).
        for (v, list) in sorted.iter().enumerate() {
            for &u in list {
                if sorted[u as usize].binary_search(&(v as UnitId)).is_err() {
                    return Err(GraphError::Asymmetric(v as UnitId, u));
                }
            }
        }

        let mut xadj = Vec::with_capacity(n + 1);
        let mut adjncy = Vec::new();
        let mut edges = Vec::new();
        xadj.push(0u32);
        for (v, list) in sorted.iter().enumerate() {
            for &u in list {
                adjncy.push(u);
                if (v as UnitId) < u {
                    edges.push((v as UnitId, u));
                }
            }
            xadj.push(adjncy.len() as u32);
        }

        let total_pop = pops.iter().sum();
        let graph = DualGraph {
            names,
            xadj,
            adjncy,
            edges,
            pops,
            dem,
            rep,
            total_pop,
        };

        let reached = graph.reachable_from_zero();
        if reached != n {
            return Err(GraphError::Disconnected(reached, n));
        }
        Ok(graph)
    }

    /// Rook-adjacency grid of `rows x cols` units with population 1 and no
    /// votes. Handy for tests, examples, and throughput measurements.
    pub fn grid(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0);
        let id = |r: usize, c: usize| (r * cols + c) as UnitId;
        let n = rows * cols;
        let mut adjacency = vec![Vec::new(); n];
        let mut names = Vec::with_capacity(n);
        for r in 0..rows {
            for c in 0..cols {
                names.push(format!("{r}-{c}"));
                let v = id(r, c) as usize;
                if r > 0 {
                    adjacency[v].push(id(r - 1, c));
                }
                if r + 1 < rows {
                    adjacency[v].push(id(r + 1, c));
                }
                if c > 0 {
                    adjacency[v].push(id(r, c - 1));
                }
                if c + 1 < cols {
                    adjacency[v].push(id(r, c + 1));
                }
            }
        }
        DualGraph::new(names, adjacency, vec![1; n], vec![0; n], vec![0; n])
            .expect("grid graph is always valid")
    }

    /// Replace the per-unit vote counts. Lengths must match the unit count.
    pub fn with_votes(mut self, dem: Vec<u64>, rep: Vec<u64>) -> Self {
        assert_eq!(dem.len(), self.len());
        assert_eq!(rep.len(), self.len());
        self.dem = dem;
        self.rep = rep;
        self
    }

    /// Replace the per-unit populations. Length must match the unit count.
    pub fn with_pops(mut self, pops: Vec<u64>) -> Self {
        assert_eq!(pops.len(), self.len());
        self.total_pop = pops.iter().sum();
        self.pops = pops;
        self
    }

    fn reachable_from_zero(&self) -> usize {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0 as UnitId];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &u in self.neighbors(v) {
                if !seen[u as usize] {
                    seen[u as usize] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.names.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    #[inline]
    pub fn neighbors(&self, v: UnitId) -> &[UnitId] {
        &self.adjncy[self.xadj[v as usize] as usize..self.xadj[v as usize + 1] as usize]
    }

    #[inline]
    pub fn degree(&self, v: UnitId) -> usize {
        (self.xadj[v as usize + 1] - self.xadj[v as usize]) as usize
    }

    /// Canonical undirected edge list: `(u, v)` with `u < v`, sorted.
    #[inline]
    pub fn edges(&self) -> &[(UnitId, UnitId)] {
        &self.edges
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    #[inline]
    pub fn pop(&self, v: UnitId) -> u64 {
        self.pops[v as usize]
    }

    #[inline]
    pub fn total_pop(&self) -> u64 {
        self.total_pop
    }

    #[inline]
    pub fn votes(&self, v: UnitId) -> (u64, u64) {
        (self.dem[v as usize], self.rep[v as usize])
    }

    #[inline]
    pub fn name(&self, v: UnitId) -> &str {
        &self.names[v as usize]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}
