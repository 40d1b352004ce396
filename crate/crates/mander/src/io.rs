//! JSON file formats: unit graphs, plans, JSON-lines ensembles, trace
//! files, and reports. All schemas carry a `format_version` field.

use crate::chain::{ChainKind, StatKind};
use crate::diagnostics::AcceptanceSummary;
use crate::election::{EnactedComparison, Ensemble, EnsembleMeta, PlanSample};
use crate::graph::{DualGraph, GraphError, UnitId};
use crate::plan::{is_valid, Districting, PlanError};
use crate::score::within_pop_tolerance;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

fn default_version() -> u32 {
    FORMAT_VERSION
}

/// Coordinate quantum for shared-segment detection: 1e-7 degrees, below
/// survey precision but above float noise.
const COORD_QUANTUM: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported format_version {0} (expected {FORMAT_VERSION})")]
    FormatVersion(u32),
    #[error("duplicate unit id {0:?}")]
    DuplicateUnitId(String),
    #[error("unit {unit:?} references unknown id {reference:?}")]
    DanglingReference { unit: String, reference: String },
    #[error("asymmetric adjacency: {0:?} lists {1:?} but not vice versa")]
    AsymmetricAdjacency(String, String),
    #[error("graph is disconnected")]
    DisconnectedGraph,
    #[error("degenerate geometry for unit {unit:?}: {reason}")]
    DegenerateGeometry { unit: String, reason: String },
    #[error("plan does not cover unit {0:?}")]
    PlanCoverage(String),
    #[error("ensemble record {line}: stored {field} contradicts recomputation")]
    CoherenceError { line: usize, field: &'static str },
    #[error("ensemble file has no header line")]
    MissingHeader,
    #[error(transparent)]
    Graph(GraphError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

fn io_err(path: &Path, source: std::io::Error) -> IngestError {
    IngestError::Io {
        path: path.display().to_string(),
        source,
    }
}

// ---------------------------------------------------------------------------
// Unit graph files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnitRecord {
    pub id: String,
    pub pop: u64,
    #[serde(default)]
    pub dem: u64,
    #[serde(default)]
    pub rep: u64,
    #[serde(default)]
    pub adj: Vec<String>,
}

/// Polygon rings (lon/lat pairs) for one unit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometryRecord {
    pub id: String,
    pub rings: Vec<Vec<[f64; 2]>>,
}

/// The on-disk unit-graph document. Adjacency may be declared per unit or,
/// when every `adj` list is empty and geometry is present, derived from the
/// polygon rings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnitGraphFile {
    #[serde(default = "default_version")]
    pub format_version: u32,
    pub units: Vec<UnitRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub geometry: Vec<GeometryRecord>,
}

/// What ingest repaired or noticed.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IngestReport {
    /// Directed adjacency entries added to restore symmetry.
    pub symmetrized: u64,
    /// Self-references dropped from adj lists.
    pub dropped_self_references: u64,
    /// Duplicate adjacency entries dropped.
    pub deduplicated: u64,
    /// Units with zero votes in both columns (legal; warned).
    pub zero_vote_units: u64,
    /// Whether adjacency came from polygon geometry.
    pub derived_adjacency: bool,
}

/// Build a validated [`DualGraph`] from a parsed unit-graph document.
///
/// Asymmetric adjacency is repaired by symmetrization (counted in the
/// report) unless `strict` is set, in which case it is fatal.
pub fn parse_unit_graph(
    file: &UnitGraphFile,
    strict: bool,
) -> Result<(DualGraph, IngestReport), IngestError> {
    if file.format_version != FORMAT_VERSION {
        return Err(IngestError::FormatVersion(file.format_version));
    }
    let n = file.units.len();
    let mut index: HashMap<&str, UnitId> = HashMap::with_capacity(n);
    for (i, unit) in file.units.iter().enumerate() {
        if index.insert(&unit.id, i as UnitId).is_some() {
            return Err(IngestError::DuplicateUnitId(unit.id.clone()));
        }
    }

    let mut report = IngestReport::default();
    let declared: usize = file.units.iter().map(|u| u.adj.len()).sum();
    let mut adjacency: Vec<Vec<UnitId>>;

    if declared == 0 && !file.geometry.is_empty() {
        let mut rings: Vec<Vec<Vec<[f64; 2]>>> = vec![Vec::new(); n];
        for geo in &file.geometry {
            let i = *index
                .get(geo.id.as_str())
                .ok_or_else(|| IngestError::DanglingReference {
                    unit: "geometry".into(),
                    reference: geo.id.clone(),
                })?;
            rings[i as usize] = geo.rings.clone();
        }
        adjacency = derive_adjacency(&rings, &file.units)?;
        report.derived_adjacency = true;
    } else {
        adjacency = vec![Vec::new(); n];
        for (i, unit) in file.units.iter().enumerate() {
            for name in &unit.adj {
                let j = *index
                    .get(name.as_str())
                    .ok_or_else(|| IngestError::DanglingReference {
                        unit: unit.id.clone(),
                        reference: name.clone(),
                    })?;
                if j as usize == i {
                    report.dropped_self_references += 1;
                    continue;
                }
                adjacency[i].push(j);
            }
        }
        for list in adjacency.iter_mut() {
            let before = list.len();
            list.sort_unstable();
            list.dedup();
            report.deduplicated += (before - list.len()) as u64;
        }
        // symmetry: repair or reject
        for i in 0..n {
            for k in 0..adjacency[i].len() {
                let j = adjacency[i][k] as usize;
                if adjacency[j].binary_search(&(i as UnitId)).is_err() {
                    if strict {
                        return Err(IngestError::AsymmetricAdjacency(
                            file.units[i].id.clone(),
                            file.units[j].id.clone(),
                        ));
                    }
                    let pos = adjacency[j]
                        .binary_search(&(i as UnitId))
                        .unwrap_err();
                    adjacency[j].insert(pos, i as UnitId);
                    report.symmetrized += 1;
                }
            }
        }
    }

    report.zero_vote_units = file
        .units
        .iter()
        .filter(|u| u.dem == 0 && u.rep == 0)
        .count() as u64;

    let graph = DualGraph::new(
        file.units.iter().map(|u| u.id.clone()).collect(),
        adjacency,
        file.units.iter().map(|u| u.pop).collect(),
        file.units.iter().map(|u| u.dem).collect(),
        file.units.iter().map(|u| u.rep).collect(),
    )
    .map_err(|e| match e {
        GraphError::Disconnected(..) => IngestError::DisconnectedGraph,
        other => IngestError::Graph(other),
    })?;
    Ok((graph, report))
}

pub fn load_unit_graph(
    path: &Path,
    strict: bool,
) -> Result<(DualGraph, IngestReport), IngestError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let parsed: UnitGraphFile = serde_json::from_reader(BufReader::new(file))?;
    parse_unit_graph(&parsed, strict)
}

/// Write the normalized form of a graph (sorted adjacency by unit name).
pub fn write_unit_graph(path: &Path, graph: &DualGraph) -> Result<(), IngestError> {
    let units: Vec<UnitRecord> = (0..graph.len() as UnitId)
        .map(|v| UnitRecord {
            id: graph.name(v).to_string(),
            pop: graph.pop(v),
            dem: graph.votes(v).0,
            rep: graph.votes(v).1,
            adj: graph
                .neighbors(v)
                .iter()
                .map(|&u| graph.name(u).to_string())
                .collect(),
        })
        .collect();
    let doc = UnitGraphFile {
        format_version: FORMAT_VERSION,
        units,
        geometry: Vec::new(),
    };
    let out = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(out);
    serde_json::to_writer_pretty(&mut w, &doc)?;
    w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Rook adjacency from polygon rings
// ---------------------------------------------------------------------------

type QuantPoint = (i64, i64);

fn quantize(p: [f64; 2]) -> QuantPoint {
    (
        (p[0] / COORD_QUANTUM).round() as i64,
        (p[1] / COORD_QUANTUM).round() as i64,
    )
}

/// Rook adjacency: two units are adjacent iff they share at least one
/// quantized boundary segment (a full edge, not merely a corner point).
/// Rings may be given open or closed; closure is implied.
pub fn derive_adjacency(
    rings_per_unit: &[Vec<Vec<[f64; 2]>>],
    units: &[UnitRecord],
) -> Result<Vec<Vec<UnitId>>, IngestError> {
    let n = rings_per_unit.len();
    let mut segments: HashMap<(QuantPoint, QuantPoint), Vec<UnitId>> = HashMap::new();
    for (i, rings) in rings_per_unit.iter().enumerate() {
        let name = || units.get(i).map(|u| u.id.clone()).unwrap_or_default();
        if rings.is_empty() {
            return Err(IngestError::DegenerateGeometry {
                unit: name(),
                reason: "no rings".into(),
            });
        }
        for ring in rings {
            if ring.len() < 3 {
                return Err(IngestError::DegenerateGeometry {
                    unit: name(),
                    reason: format!("ring with {} points", ring.len()),
                });
            }
            if ring
                .iter()
                .any(|p| !p[0].is_finite() || !p[1].is_finite())
            {
                return Err(IngestError::DegenerateGeometry {
                    unit: name(),
                    reason: "non-finite coordinate".into(),
                });
            }
            let closed = ring.first() == ring.last();
            let points: &[[f64; 2]] = if closed { &ring[..ring.len() - 1] } else { ring };
            for w in 0..points.len() {
                let a = quantize(points[w]);
                let b = quantize(points[(w + 1) % points.len()]);
                if a == b {
                    continue; // zero-length after quantization
                }
                let key = if a < b { (a, b) } else { (b, a) };
                let owners = segments.entry(key).or_default();
                if !owners.contains(&(i as UnitId)) {
                    owners.push(i as UnitId);
                }
            }
        }
    }

    let mut adjacency: Vec<Vec<UnitId>> = vec![Vec::new(); n];
    for owners in segments.values() {
        for a in 0..owners.len() {
            for b in a + 1..owners.len() {
                adjacency[owners[a] as usize].push(owners[b]);
                adjacency[owners[b] as usize].push(owners[a]);
            }
        }
    }
    for list in adjacency.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }
    Ok(adjacency)
}

// ---------------------------------------------------------------------------
// Plan files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanFile {
    #[serde(default = "default_version")]
    pub format_version: u32,
    pub n_districts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// unit id -> district label
    pub assignment: BTreeMap<String, u32>,
}

impl PlanFile {
    pub fn from_plan(graph: &DualGraph, plan: &Districting, label: Option<&str>) -> Self {
        PlanFile {
            format_version: FORMAT_VERSION,
            n_districts: plan.n_districts(),
            label: label.map(str::to_string),
            assignment: assignment_map(graph, plan.assignment()),
        }
    }

    pub fn into_districting(self, graph: &DualGraph) -> Result<Districting, IngestError> {
        if self.format_version != FORMAT_VERSION {
            return Err(IngestError::FormatVersion(self.format_version));
        }
        let assignment = resolve_assignment(graph, &self.assignment)?;
        Ok(Districting::new(graph, assignment, self.n_districts)?)
    }
}

fn assignment_map(graph: &DualGraph, assignment: &[u32]) -> BTreeMap<String, u32> {
    assignment
        .iter()
        .enumerate()
        .map(|(v, &d)| (graph.name(v as UnitId).to_string(), d))
        .collect()
}

fn resolve_assignment(
    graph: &DualGraph,
    map: &BTreeMap<String, u32>,
) -> Result<Vec<u32>, IngestError> {
    let mut index: HashMap<&str, UnitId> = HashMap::with_capacity(graph.len());
    for v in 0..graph.len() as UnitId {
        index.insert(graph.name(v), v);
    }
    for name in map.keys() {
        if !index.contains_key(name.as_str()) {
            return Err(IngestError::DanglingReference {
                unit: "plan".into(),
                reference: name.clone(),
            });
        }
    }
    let mut assignment = vec![u32::MAX; graph.len()];
    for (name, &d) in map {
        assignment[index[name.as_str()] as usize] = d;
    }
    if let Some(v) = assignment.iter().position(|&d| d == u32::MAX) {
        return Err(IngestError::PlanCoverage(graph.name(v as UnitId).into()));
    }
    Ok(assignment)
}

pub fn save_plan(
    path: &Path,
    graph: &DualGraph,
    plan: &Districting,
    label: Option<&str>,
) -> Result<(), IngestError> {
    let out = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(out);
    serde_json::to_writer_pretty(&mut w, &PlanFile::from_plan(graph, plan, label))?;
    w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    Ok(())
}

pub fn load_plan(path: &Path, graph: &DualGraph) -> Result<Districting, IngestError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let plan_file: PlanFile = serde_json::from_reader(BufReader::new(file))?;
    plan_file.into_districting(graph)
}

// ---------------------------------------------------------------------------
// Ensembles (JSON lines: one header record, then one record per plan)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EnsemblePlanLine {
    plan: BTreeMap<String, u32>,
    pop_eq: f64,
    comp: f64,
    seats: u32,
    ties: u32,
}

/// Fraction of loaded plans re-scored from scratch to catch tally drift.
pub const COHERENCE_SAMPLE: f64 = 0.05;

pub fn save_ensemble(path: &Path, graph: &DualGraph, ensemble: &Ensemble) -> Result<(), IngestError> {
    let out = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(out);
    serde_json::to_writer(&mut w, &ensemble.meta)?;
    w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    for sample in &ensemble.plans {
        let line = EnsemblePlanLine {
            plan: assignment_map(graph, &sample.assignment),
            pop_eq: sample.pop_eq,
            comp: sample.comp,
            seats: sample.seats,
            ties: sample.ties,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

/// Load an ensemble, re-deriving a coherence sample (~5% of plans, always
/// including the first and last): stored scores and tallies must match
/// recomputation exactly, and sampled plans must be valid and within the
/// run's final tolerance.
pub fn load_ensemble(path: &Path, graph: &DualGraph) -> Result<Ensemble, IngestError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or(IngestError::MissingHeader)?
        .map_err(|e| io_err(path, e))?;
    let meta: EnsembleMeta = serde_json::from_str(&header)?;
    if meta.format_version != FORMAT_VERSION {
        return Err(IngestError::FormatVersion(meta.format_version));
    }

    let mut plans = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EnsemblePlanLine = serde_json::from_str(&line)?;
        let assignment = resolve_assignment(graph, &record.plan)?;
        plans.push((
            i + 2, // 1-based file line number
            PlanSample {
                assignment,
                pop_eq: record.pop_eq,
                comp: record.comp,
                seats: record.seats,
                ties: record.ties,
            },
        ));
    }

    let ensemble = Ensemble {
        meta,
        plans: plans.iter().map(|(_, s)| s.clone()).collect(),
    };

    let stride = (1.0 / COHERENCE_SAMPLE) as usize;
    let last = plans.len().saturating_sub(1);
    for (i, (line_no, sample)) in plans.iter().enumerate() {
        if i % stride != 0 && i != last {
            continue;
        }
        let plan = Districting::new(graph, sample.assignment.clone(), ensemble.meta.n_districts)?;
        let fresh = PlanSample::from_plan(graph, &plan);
        if fresh.pop_eq != sample.pop_eq {
            return Err(IngestError::CoherenceError {
                line: *line_no,
                field: "pop_eq",
            });
        }
        if fresh.comp != sample.comp {
            return Err(IngestError::CoherenceError {
                line: *line_no,
                field: "comp",
            });
        }
        if fresh.seats != sample.seats || fresh.ties != sample.ties {
            return Err(IngestError::CoherenceError {
                line: *line_no,
                field: "seats",
            });
        }
        if !is_valid(graph, &plan) {
            return Err(IngestError::CoherenceError {
                line: *line_no,
                field: "validity",
            });
        }
        if !within_pop_tolerance(graph, &plan, ensemble.final_tolerance()) {
            return Err(IngestError::CoherenceError {
                line: *line_no,
                field: "tolerance",
            });
        }
    }
    Ok(ensemble)
}

// ---------------------------------------------------------------------------
// Trace files and reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceChainRecord {
    pub values: Vec<f64>,
    pub summary: AcceptanceSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceFile {
    #[serde(default = "default_version")]
    pub format_version: u32,
    pub stat: StatKind,
    pub kind: ChainKind,
    pub seed: u64,
    pub chains: Vec<TraceChainRecord>,
}

pub fn save_traces(path: &Path, traces: &TraceFile) -> Result<(), IngestError> {
    let out = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(out);
    serde_json::to_writer(&mut w, traces)?;
    w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    Ok(())
}

pub fn load_traces(path: &Path) -> Result<TraceFile, IngestError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let traces: TraceFile = serde_json::from_reader(BufReader::new(file))?;
    if traces.format_version != FORMAT_VERSION {
        return Err(IngestError::FormatVersion(traces.format_version));
    }
    Ok(traces)
}

/// Gelman-Rubin report emitted by `diagnose`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub format_version: u32,
    pub stat: StatKind,
    pub n_chains: usize,
    pub chain_lengths: Vec<usize>,
    pub discard_fraction: f64,
    pub threshold: f64,
    pub rhat: f64,
    pub converged: bool,
    pub acceptance: Vec<AcceptanceSummary>,
}

/// Ensemble statistics report emitted by `analyze`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub format_version: u32,
    pub n_plans: u64,
    pub mean_seats: f64,
    pub stddev_seats: f64,
    pub counts: BTreeMap<u32, u64>,
    /// Normal-bin probability for each outcome in the observed range
    /// (plus the enacted outcome, when given).
    pub probabilities: BTreeMap<u32, f64>,
    pub plans_with_ties: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enacted: Option<EnactedReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnactedReport {
    pub seats: u32,
    pub z_score: f64,
    pub sigma_distance: f64,
    pub probability: f64,
}

impl From<(u32, EnactedComparison)> for EnactedReport {
    fn from((seats, cmp): (u32, EnactedComparison)) -> Self {
        EnactedReport {
            seats,
            z_score: cmp.z_score,
            sigma_distance: cmp.sigma_distance,
            probability: cmp.probability,
        }
    }
}
