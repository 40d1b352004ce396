//! Score functions and the Metropolis filter: population equality,
//! cut-edge compactness, the exponential weight, and the hard
//! population-tolerance predicate.

use crate::graph::DualGraph;
use crate::plan::Districting;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("graph has no edges; compactness is undefined")]
    DegenerateGraph,
    #[error("old weight is zero; acceptance ratio is undefined")]
    DegenerateWeight,
}

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("pop_tolerance {0} outside [0, 1]")]
    PopTolerance(f64),
    #[error("lambda {0} outside [0, 1)")]
    Lambda(f64),
    #[error("beta_pop {0} must be nonnegative and finite")]
    BetaPop(f64),
    #[error("beta_comp {0} must be nonnegative and finite")]
    BetaComp(f64),
    #[error("n_districts must be >= 1")]
    NoDistricts,
    #[error("params declare {0} districts but the plan has {1}")]
    DistrictMismatch(u32, u32),
}

/// Chain parameters: soft weights, the hard population tolerance, the
/// flip-edge labelling probability, and the RNG seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainParams {
    /// Soft weight on population equality. The hard tolerance usually does
    /// this job, so it defaults to 0.
    #[serde(default)]
    pub beta_pop: f64,
    /// Soft weight on cut-edge compactness.
    #[serde(default)]
    pub beta_comp: f64,
    /// Max allowed relative deviation of any district from ideal population.
    #[serde(default = "default_pop_tolerance")]
    pub pop_tolerance: f64,
    /// Probability of labelling a monochromatic edge as a flip edge.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    pub n_districts: u32,
    #[serde(default)]
    pub rng_seed: u64,
    /// Proposals allowed per accepted step before the chain is declared
    /// stalled.
    #[serde(default = "default_stall_cap")]
    pub stall_cap: u64,
}

fn default_pop_tolerance() -> f64 {
    0.1
}

fn default_lambda() -> f64 {
    0.05
}

fn default_stall_cap() -> u64 {
    1_000_000
}

impl ChainParams {
    /// Unconstrained params for `n_districts`: betas 0, tolerance 1.0,
    /// lambda 0.05.
    pub fn new(n_districts: u32) -> Self {
        ChainParams {
            beta_pop: 0.0,
            beta_comp: 0.0,
            pop_tolerance: 1.0,
            lambda: default_lambda(),
            n_districts,
            rng_seed: 0,
            stall_cap: default_stall_cap(),
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(0.0..=1.0).contains(&self.pop_tolerance) {
            return Err(ParamError::PopTolerance(self.pop_tolerance));
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(ParamError::Lambda(self.lambda));
        }
        if !self.beta_pop.is_finite() || self.beta_pop < 0.0 {
            return Err(ParamError::BetaPop(self.beta_pop));
        }
        if !self.beta_comp.is_finite() || self.beta_comp < 0.0 {
            return Err(ParamError::BetaComp(self.beta_comp));
        }
        if self.n_districts == 0 {
            return Err(ParamError::NoDistricts);
        }
        Ok(())
    }
}

/// Sum over districts of |pop(C_i) - pop(V)/n|, in persons.
pub fn pop_equality(graph: &DualGraph, plan: &Districting) -> f64 {
    let ideal = graph.total_pop() as f64 / plan.n_districts() as f64;
    plan.district_pops()
        .iter()
        .map(|&p| (p as f64 - ideal).abs())
        .sum()
}

/// Fraction of dual-graph edges that are cut: |S| / |E|.
pub fn compactness(graph: &DualGraph, plan: &Districting) -> Result<f64, MetricError> {
    if graph.edge_count() == 0 {
        return Err(MetricError::DegenerateGraph);
    }
    Ok(plan.cut_edge_count() as f64 / graph.edge_count() as f64)
}

/// Exponent of the weight function: -(b1 * pop_eq + b2 * comp).
///
/// Chains compare weights in log space so extreme scores cannot underflow
/// the acceptance ratio. An edgeless (single-vertex) graph scores
/// compactness 0.
pub fn log_weight(graph: &DualGraph, plan: &Districting, beta_pop: f64, beta_comp: f64) -> f64 {
    let comp = if graph.edge_count() == 0 {
        0.0
    } else {
        plan.cut_edge_count() as f64 / graph.edge_count() as f64
    };
    -(beta_pop * pop_equality(graph, plan) + beta_comp * comp)
}

/// The weight w = exp(-(b1 * pop_eq + b2 * comp)), always in (0, 1].
pub fn weight(graph: &DualGraph, plan: &Districting, params: &ChainParams) -> f64 {
    log_weight(graph, plan, params.beta_pop, params.beta_comp).exp()
}

/// Metropolis acceptance probability min(w_new / w_old, 1).
pub fn acceptance_probability(w_new: f64, w_old: f64) -> Result<f64, MetricError> {
    if w_old <= 0.0 {
        return Err(MetricError::DegenerateWeight);
    }
    Ok((w_new / w_old).min(1.0))
}

/// True iff every district's population deviates from ideal by at most
/// `tol * ideal`.
pub fn within_pop_tolerance(graph: &DualGraph, plan: &Districting, tol: f64) -> bool {
    let ideal = graph.total_pop() as f64 / plan.n_districts() as f64;
    let bound = tol * ideal;
    plan.district_pops()
        .iter()
        .all(|&p| (p as f64 - ideal).abs() <= bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DualGraph;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn path4_pops(pops: Vec<u64>) -> DualGraph {
        DualGraph::new(
            (0..4).map(|i| i.to_string()).collect(),
            vec![vec![1], vec![0, 2], vec![1, 3], vec![2]],
            pops,
            vec![0; 4],
            vec![0; 4],
        )
        .unwrap()
    }

    #[test]
    fn pop_equality_cases() {
        let g = path4_pops(vec![2, 1, 1, 2]);
        let plan = Districting::new(&g, vec![0, 0, 1, 1], 2).unwrap();
        assert_eq!(pop_equality(&g, &plan), 0.0);

        let g = path4_pops(vec![3, 1, 1, 1]);
        let plan = Districting::new(&g, vec![0, 0, 1, 1], 2).unwrap();
        assert_eq!(pop_equality(&g, &plan), 2.0);

        let single = Districting::single_district(&g);
        assert_eq!(pop_equality(&g, &single), 0.0);
    }

    #[test]
    fn compactness_cases() {
        let g = path4_pops(vec![1; 4]);
        let plan = Districting::new(&g, vec![0, 0, 1, 1], 2).unwrap();
        assert_abs_diff_eq!(compactness(&g, &plan).unwrap(), 1.0 / 3.0);
        assert_eq!(
            compactness(&g, &Districting::single_district(&g)).unwrap(),
            0.0
        );

        let g = DualGraph::grid(2, 2);
        let plan = Districting::new(&g, vec![0, 1, 0, 1], 2).unwrap();
        assert_eq!(compactness(&g, &plan).unwrap(), 0.5);

        let one = DualGraph::new(
            vec!["x".into()],
            vec![vec![]],
            vec![1],
            vec![0],
            vec![0],
        )
        .unwrap();
        assert!(matches!(
            compactness(&one, &Districting::single_district(&one)),
            Err(MetricError::DegenerateGraph)
        ));
    }

    #[test]
    fn weight_cases() {
        let g = path4_pops(vec![3, 1, 1, 1]);
        let plan = Districting::new(&g, vec![0, 0, 1, 1], 2).unwrap();

        let mut params = ChainParams::new(2);
        assert_eq!(weight(&g, &plan, &params), 1.0);

        params.beta_pop = 1.0;
        // pop_eq = 2
        assert_abs_diff_eq!(weight(&g, &plan, &params), (-2.0f64).exp(), epsilon = 1e-12);

        let g = DualGraph::grid(2, 2);
        let plan = Districting::new(&g, vec![0, 1, 0, 1], 2).unwrap();
        let mut params = ChainParams::new(2);
        params.beta_comp = 0.4;
        // comp = 0.5
        assert_abs_diff_eq!(weight(&g, &plan, &params), (-0.2f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn acceptance_probability_cases() {
        assert_eq!(acceptance_probability(0.7, 0.7).unwrap(), 1.0);
        assert_eq!(acceptance_probability(0.5, 1.0).unwrap(), 0.5);
        assert_eq!(acceptance_probability(0.9, 0.3).unwrap(), 1.0);
        assert!(matches!(
            acceptance_probability(0.5, 0.0),
            Err(MetricError::DegenerateWeight)
        ));
    }

    #[test]
    fn tolerance_cases() {
        let g = path4_pops(vec![2, 1, 1, 2]);
        let plan = Districting::new(&g, vec![0, 0, 1, 1], 2).unwrap();
        assert!(within_pop_tolerance(&g, &plan, 0.0));

        let g = path4_pops(vec![3, 1, 1, 1]);
        let plan = Districting::new(&g, vec![0, 0, 1, 1], 2).unwrap();
        assert!(!within_pop_tolerance(&g, &plan, 0.1));
        assert!(within_pop_tolerance(&g, &plan, 0.5));
    }

    #[test]
    fn param_validation() {
        let mut p = ChainParams::new(4);
        assert!(p.validate().is_ok());
        p.lambda = 1.0;
        assert!(matches!(p.validate(), Err(ParamError::Lambda(_))));
        p.lambda = 0.05;
        p.pop_tolerance = 1.5;
        assert!(matches!(p.validate(), Err(ParamError::PopTolerance(_))));
        p.pop_tolerance = 0.1;
        p.beta_comp = -0.1;
        assert!(matches!(p.validate(), Err(ParamError::BetaComp(_))));
    }

    proptest! {
        /// Detailed-balance identity: w * min(w'/w, 1) = w' * min(w/w', 1).
        #[test]
        fn detailed_balance_identity(lw in -30.0f64..0.0, lw2 in -30.0f64..0.0) {
            let (w, w2) = (lw.exp(), lw2.exp());
            let lhs = w * acceptance_probability(w2, w).unwrap();
            let rhs = w2 * acceptance_probability(w, w2).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-15 * lhs.abs().max(rhs.abs()));
            prop_assert!((lhs - w.min(w2)).abs() <= 1e-15 * w.min(w2));
        }

        /// Scaling both weights leaves the acceptance probability unchanged.
        #[test]
        fn acceptance_scale_invariant(
            w in 1e-6f64..1.0,
            w2 in 1e-6f64..1.0,
            c in 1e-3f64..1e3,
        ) {
            let a = acceptance_probability(w2, w).unwrap();
            let b = acceptance_probability(c * w2, c * w).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }

        /// Weight is monotone decreasing in each score (via its exponent).
        #[test]
        fn weight_monotone(b1 in 0.0f64..5.0, b2 in 0.0f64..5.0) {
            let g = path4_pops(vec![3, 1, 1, 1]);
            let balanced = Districting::new(&g, vec![0, 1, 1, 1], 2).unwrap(); // pop_eq 0
            let skewed = Districting::new(&g, vec![0, 0, 1, 1], 2).unwrap(); // pop_eq 2
            prop_assert!(
                log_weight(&g, &skewed, b1, b2) <= log_weight(&g, &balanced, b1, b2) + 1e-12
            );
        }
    }
}
