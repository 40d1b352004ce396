//! Election scoring over ensembles: seat counts, seats-won distributions,
//! the fitted normal density, and enacted-plan comparisons.

use crate::anneal::AnnealSchedule;
use crate::chain::ChainKind;
use crate::graph::{DualGraph, UnitId};
use crate::plan::Districting;
use crate::score::ChainParams;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need at least 2 plans, got {0}")]
    InsufficientPlans(usize),
    #[error("all plans share one outcome; the fitted normal is degenerate")]
    DegenerateSpread,
}

/// Per-district (dem, rep) vote totals.
pub fn district_votes(graph: &DualGraph, plan: &Districting) -> Vec<(u64, u64)> {
    let mut totals = vec![(0u64, 0u64); plan.n_districts() as usize];
    for v in 0..graph.len() {
        let d = plan.district(v as UnitId) as usize;
        let (dem, rep) = graph.votes(v as UnitId);
        totals[d].0 += dem;
        totals[d].1 += rep;
    }
    totals
}

/// Number of districts carried by the Democratic vote (strict majority;
/// exact ties do not count and are surfaced via [`tied_districts`]).
pub fn seats_won(graph: &DualGraph, plan: &Districting) -> u32 {
    district_votes(graph, plan)
        .iter()
        .filter(|(dem, rep)| dem > rep)
        .count() as u32
}

/// Districts whose two-party vote is exactly tied.
pub fn tied_districts(graph: &DualGraph, plan: &Districting) -> u32 {
    district_votes(graph, plan)
        .iter()
        .filter(|(dem, rep)| dem == rep)
        .count() as u32
}

/// One sampled plan with its cached scores and seat tally.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanSample {
    pub assignment: Vec<u32>,
    pub pop_eq: f64,
    pub comp: f64,
    pub seats: u32,
    pub ties: u32,
}

impl PlanSample {
    pub fn from_plan(graph: &DualGraph, plan: &Districting) -> Self {
        let comp = if graph.edge_count() == 0 {
            0.0
        } else {
            plan.cut_edge_count() as f64 / graph.edge_count() as f64
        };
        PlanSample {
            assignment: plan.assignment().to_vec(),
            pop_eq: crate::score::pop_equality(graph, plan),
            comp,
            seats: seats_won(graph, plan),
            ties: tied_districts(graph, plan),
        }
    }
}

/// Provenance recorded alongside an ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleMeta {
    pub format_version: u32,
    pub kind: ChainKind,
    pub seed: u64,
    pub n_districts: u32,
    pub n_plans: u64,
    pub params: ChainParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<AnnealSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps_per_plan: Option<u64>,
}

/// An ordered collection of sampled plans plus provenance.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub meta: EnsembleMeta,
    pub plans: Vec<PlanSample>,
}

impl Ensemble {
    pub fn seats(&self) -> Vec<u32> {
        self.plans.iter().map(|p| p.seats).collect()
    }

    pub fn outcome_distribution(&self) -> Result<OutcomeDistribution, AnalysisError> {
        outcome_distribution(&self.seats())
    }

    /// The hard tolerance the ensemble's plans were sampled under.
    pub fn final_tolerance(&self) -> f64 {
        match (&self.meta.kind, &self.meta.schedule) {
            (ChainKind::Anneal, Some(s)) => s.pop_tol_target,
            (ChainKind::Anneal, None) => AnnealSchedule::default().pop_tol_target,
            _ => self.meta.params.pop_tolerance,
        }
    }
}

/// Histogram of seats-won outcomes with sample moments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    pub counts: BTreeMap<u32, u64>,
    pub mean: f64,
    pub stddev: f64,
    pub n_plans: u64,
}

/// Histogram plus sample mean and standard deviation (n-1 denominator).
pub fn outcome_distribution(seats: &[u32]) -> Result<OutcomeDistribution, AnalysisError> {
    if seats.len() < 2 {
        return Err(AnalysisError::InsufficientPlans(seats.len()));
    }
    let mut counts = BTreeMap::new();
    for &s in seats {
        *counts.entry(s).or_insert(0u64) += 1;
    }
    let n = seats.len() as f64;
    let mean = seats.iter().map(|&s| s as f64).sum::<f64>() / n;
    let ss = seats
        .iter()
        .map(|&s| (s as f64 - mean) * (s as f64 - mean))
        .sum::<f64>();
    let stddev = (ss / (n - 1.0)).sqrt();
    Ok(OutcomeDistribution {
        counts,
        mean,
        stddev,
        n_plans: seats.len() as u64,
    })
}

/// Probability the fitted normal assigns to the integer outcome `k`, with
/// continuity correction: Phi((k+0.5-mu)/s) - Phi((k-0.5-mu)/s).
/// `stddev` must be positive.
pub fn normal_bin_probability(mean: f64, stddev: f64, k: u32) -> f64 {
    assert!(stddev > 0.0, "degenerate stddev");
    let normal = Normal::new(mean, stddev).expect("positive stddev");
    normal.cdf(k as f64 + 0.5) - normal.cdf(k as f64 - 0.5)
}

/// Probability of outcome `k` under the normal fitted to the distribution.
pub fn outcome_probability(dist: &OutcomeDistribution, k: u32) -> Result<f64, AnalysisError> {
    if dist.stddev <= 0.0 {
        return Err(AnalysisError::DegenerateSpread);
    }
    Ok(normal_bin_probability(dist.mean, dist.stddev, k))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnactedComparison {
    pub z_score: f64,
    pub probability: f64,
    pub sigma_distance: f64,
}

/// Where the enacted outcome falls in the ensemble's fitted normal.
pub fn enacted_comparison(
    dist: &OutcomeDistribution,
    enacted_seats: u32,
) -> Result<EnactedComparison, AnalysisError> {
    if dist.stddev <= 0.0 {
        return Err(AnalysisError::DegenerateSpread);
    }
    let z = (enacted_seats as f64 - dist.mean) / dist.stddev;
    Ok(EnactedComparison {
        z_score: z,
        probability: normal_bin_probability(dist.mean, dist.stddev, enacted_seats),
        sigma_distance: z.abs(),
    })
}

/// CSV rows `seats,count,fitted_density,probability,enacted`. A row is
/// emitted for every observed outcome plus the enacted outcome (count 0 if
/// unseen), marked 1 in the `enacted` column. Density and probability
/// fields are empty when the fit is degenerate. An empty distribution
/// yields the header only.
pub fn emit_histogram(dist: &OutcomeDistribution, enacted: Option<u32>) -> String {
    let mut out = String::from("seats,count,fitted_density,probability,enacted\n");
    if dist.counts.is_empty() {
        return out;
    }
    let mut keys: Vec<u32> = dist.counts.keys().copied().collect();
    if let Some(e) = enacted {
        if !dist.counts.contains_key(&e) {
            keys.push(e);
            keys.sort_unstable();
        }
    }
    let normal = (dist.stddev > 0.0).then(|| Normal::new(dist.mean, dist.stddev).unwrap());
    for k in keys {
        let count = dist.counts.get(&k).copied().unwrap_or(0);
        let (density, prob) = match &normal {
            Some(n) => (
                format!("{}", n.pdf(k as f64)),
                format!("{}", n.cdf(k as f64 + 0.5) - n.cdf(k as f64 - 0.5)),
            ),
            None => (String::new(), String::new()),
        };
        let mark = if enacted == Some(k) { 1 } else { 0 };
        writeln!(out, "{k},{count},{density},{prob},{mark}").expect("string write");
    }
    out
}

/// Minimal SVG bar chart of the seats histogram with the fitted density
/// curve and a vertical line at the enacted outcome.
pub fn histogram_svg(dist: &OutcomeDistribution, enacted: Option<u32>) -> String {
    const W: f64 = 640.0;
    const H: f64 = 360.0;
    const MARGIN: f64 = 40.0;

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();

    if !dist.counts.is_empty() {
        let lo = *dist.counts.keys().next().unwrap() as i64 - 1;
        let hi = (*dist.counts.keys().last().unwrap() as i64 + 1)
            .max(enacted.map_or(i64::MIN, |e| e as i64 + 1));
        let lo = lo.min(enacted.map_or(i64::MAX, |e| e as i64 - 1));
        let span = (hi - lo).max(1) as f64;
        let max_count = *dist.counts.values().max().unwrap() as f64;
        let x = |seat: f64| MARGIN + (seat - lo as f64) / span * (W - 2.0 * MARGIN);
        let y = |count: f64| H - MARGIN - count / max_count * (H - 2.0 * MARGIN);
        let bar_w = (W - 2.0 * MARGIN) / span * 0.8;

        for (&k, &count) in &dist.counts {
            let cx = x(k as f64);
            let top = y(count as f64);
            writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="steelblue"/>"#,
                cx - bar_w / 2.0,
                top,
                bar_w,
                H - MARGIN - top
            )
            .unwrap();
            writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
                cx,
                H - MARGIN + 16.0,
                k
            )
            .unwrap();
        }

        if dist.stddev > 0.0 {
            let normal = Normal::new(dist.mean, dist.stddev).unwrap();
            // scale the density so its peak matches the tallest bar
            let peak = normal.pdf(dist.mean);
            let mut points = String::new();
            let steps = 120;
            for i in 0..=steps {
                let s = lo as f64 + span * i as f64 / steps as f64;
                let d = normal.pdf(s) / peak * max_count;
                write!(points, "{:.2},{:.2} ", x(s), y(d)).unwrap();
            }
            writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="black" stroke-width="1.5"/>"#,
                points.trim_end()
            )
            .unwrap();
        }

        if let Some(e) = enacted {
            let cx = x(e as f64);
            writeln!(
                svg,
                r#"<line x1="{cx:.2}" y1="{MARGIN}" x2="{cx:.2}" y2="{:.2}" stroke="red" stroke-width="2"/>"#,
                H - MARGIN
            )
            .unwrap();
            writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-size="12" fill="red">enacted: {e}</text>"#,
                cx + 4.0,
                MARGIN + 12.0
            )
            .unwrap();
        }
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn path4_votes(dem: Vec<u64>, rep: Vec<u64>) -> DualGraph {
        DualGraph::new(
            (0..4).map(|i| i.to_string()).collect(),
            vec![vec![1], vec![0, 2], vec![1, 3], vec![2]],
            vec![1; 4],
            dem,
            rep,
        )
        .unwrap()
    }

    #[test]
    fn seats_cases() {
        let g = path4_votes(vec![5, 5, 0, 0], vec![0, 0, 5, 5]);
        let plan = Districting::new(&g, vec![0, 0, 1, 1], 2).unwrap();
        assert_eq!(seats_won(&g, &plan), 1);
        assert_eq!(tied_districts(&g, &plan), 0);

        // all units fully Democratic: every district won
        let g = path4_votes(vec![3; 4], vec![0; 4]);
        let plan = Districting::new(&g, vec![0, 0, 1, 1], 2).unwrap();
        assert_eq!(seats_won(&g, &plan), 2);

        // exact tie counts zero and is flagged
        let g = path4_votes(vec![2, 2, 9, 0], vec![4, 0, 0, 1]);
        let plan = Districting::new(&g, vec![0, 0, 1, 1], 2).unwrap();
        assert_eq!(seats_won(&g, &plan), 1);
        assert_eq!(tied_districts(&g, &plan), 1);
    }

    #[test]
    fn distribution_moments() {
        let dist = outcome_distribution(&[5, 5, 6, 6]).unwrap();
        assert_eq!(dist.counts, BTreeMap::from([(5, 2), (6, 2)]));
        assert_eq!(dist.mean, 5.5);
        assert_abs_diff_eq!(dist.stddev, 0.5773502691896257, epsilon = 1e-15);
        assert_eq!(dist.n_plans, 4);

        assert!(matches!(
            outcome_distribution(&[5]),
            Err(AnalysisError::InsufficientPlans(1))
        ));
    }

    #[test]
    fn degenerate_spread_refused_downstream() {
        let dist = outcome_distribution(&[4, 4, 4]).unwrap();
        assert_eq!(dist.stddev, 0.0);
        assert!(matches!(
            outcome_probability(&dist, 4),
            Err(AnalysisError::DegenerateSpread)
        ));
        assert!(matches!(
            enacted_comparison(&dist, 4),
            Err(AnalysisError::DegenerateSpread)
        ));
    }

    #[test]
    fn normal_bin_reference_values() {
        // seats [5,5,5,7]: mean 5.5, sample stddev exactly 1
        let dist = outcome_distribution(&[5, 5, 5, 7]).unwrap();
        assert_eq!(dist.mean, 5.5);
        assert_eq!(dist.stddev, 1.0);
        // reference: Phi(-2) - Phi(-3)
        assert_abs_diff_eq!(
            outcome_probability(&dist, 3).unwrap(),
            0.0214002339165491,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            outcome_probability(&dist, 5).unwrap(),
            0.3413447460685429,
            epsilon = 1e-9
        );
    }

    #[test]
    fn modal_bin_is_maximal_at_integer_mean() {
        let dist = outcome_distribution(&[4, 5, 5, 6]).unwrap();
        assert_eq!(dist.mean, 5.0);
        let p5 = outcome_probability(&dist, 5).unwrap();
        for k in 0..12 {
            assert!(outcome_probability(&dist, k).unwrap() <= p5 + 1e-15);
        }
    }

    #[test]
    fn enacted_comparison_cases() {
        // ensemble concentrated on 16-18 seats; enacted 13 sits far below
        let seats = [16, 16, 16, 17, 17, 17, 17, 18, 18, 18];
        let dist = outcome_distribution(&seats).unwrap();
        assert_eq!(dist.mean, 17.0);
        let cmp = enacted_comparison(&dist, 13).unwrap();
        assert!(cmp.z_score < 0.0);
        assert_abs_diff_eq!(cmp.sigma_distance, -cmp.z_score);
        assert!(cmp.probability < 0.01);

        let at_mean = enacted_comparison(&dist, 17).unwrap();
        assert_eq!(at_mean.z_score, 0.0);
        assert_eq!(at_mean.sigma_distance, 0.0);
    }

    #[test]
    fn histogram_csv_shape() {
        let dist = outcome_distribution(&[5, 5, 6, 6]).unwrap();
        let csv = emit_histogram(&dist, None);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3); // header + 2 data rows
        assert_eq!(lines[0], "seats,count,fitted_density,probability,enacted");
        assert!(lines[1].starts_with("5,2,"));
        assert!(lines[2].starts_with("6,2,"));

        // enacted outcome missing from the ensemble gets a marker row
        let csv = emit_histogram(&dist, Some(3));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("3,0,"));
        assert!(lines[1].ends_with(",1"));

        // empty distribution: header only
        let empty = OutcomeDistribution {
            counts: BTreeMap::new(),
            mean: 0.0,
            stddev: 0.0,
            n_plans: 0,
        };
        assert_eq!(
            emit_histogram(&empty, None),
            "seats,count,fitted_density,probability,enacted\n"
        );
    }

    #[test]
    fn histogram_bin_probabilities_sum_below_one() {
        let dist = outcome_distribution(&[5, 5, 6, 6]).unwrap();
        let csv = emit_histogram(&dist, None);
        let total: f64 = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(3).unwrap().parse::<f64>().unwrap())
            .sum();
        assert!(total > 0.0 && total <= 1.0);
    }

    #[test]
    fn svg_contains_marks() {
        let dist = outcome_distribution(&[4, 5, 5, 6, 6, 6]).unwrap();
        let svg = histogram_svg(&dist, Some(2));
        assert!(svg.contains("<rect"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains("enacted: 2"));
    }

    proptest! {
        /// Relabelling districts never changes the seat count.
        #[test]
        fn seats_invariant_under_relabelling(perm_seed in 0u64..32) {
            use rand::seq::SliceRandom;
            let g = DualGraph::grid(3, 3).with_votes(
                (0..9).map(|v| (v % 4) as u64 * 3).collect(),
                (0..9).map(|v| ((v + 1) % 3) as u64 * 4).collect(),
            );
            let plan = Districting::new(
                &g,
                vec![0, 0, 1, 0, 2, 1, 2, 2, 1],
                3,
            ).unwrap();
            let base = seats_won(&g, &plan);

            let mut labels = vec![0u32, 1, 2];
            let mut rng = crate::rng::stream_rng(perm_seed, 0);
            labels.shuffle(&mut rng);
            let relabelled: Vec<u32> =
                plan.assignment().iter().map(|&d| labels[d as usize]).collect();
            let plan2 = Districting::new(&g, relabelled, 3).unwrap();
            prop_assert_eq!(seats_won(&g, &plan2), base);
        }

        /// Scaling every unit's votes by the same constant preserves seats.
        #[test]
        fn seats_invariant_under_vote_scaling(c in 1u64..50) {
            let dem: Vec<u64> = (0..9).map(|v| (v * 7) % 11).collect();
            let rep: Vec<u64> = (0..9).map(|v| (v * 5 + 3) % 9).collect();
            let g = DualGraph::grid(3, 3).with_votes(dem.clone(), rep.clone());
            let scaled = DualGraph::grid(3, 3).with_votes(
                dem.iter().map(|x| x * c).collect(),
                rep.iter().map(|x| x * c).collect(),
            );
            let plan = Districting::new(&g, vec![0, 0, 1, 0, 2, 1, 2, 2, 1], 3).unwrap();
            prop_assert_eq!(seats_won(&g, &plan), seats_won(&scaled, &plan));
        }
    }
}
