//! Simulated-annealing schedule: hot steps, separate population-tolerance
//! and compactness-weight annealing phases, then cold steps at the targets.

use crate::chain::{propose_and_filter, ChainError, Kernel, StatKind, Trace};
use crate::chain::single_vertex::SingleVertexWalk;
use crate::graph::DualGraph;
use crate::plan::{is_valid, Districting};
use crate::score::{within_pop_tolerance, ChainParams};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("step {step} out of range (schedule has {total} steps)")]
    StepOutOfRange { step: u64, total: u64 },
    #[error("pop_tol_start {0} must be >= pop_tol_target {1}")]
    PopOrder(f64, f64),
    #[error("comp_weight_start {0} must be <= comp_weight_target {1}")]
    CompOrder(f64, f64),
    #[error("deltas must be positive (pop {0}, comp {1})")]
    NonPositiveDelta(f64, f64),
    #[error("steps_per_delta must be >= 1")]
    ZeroStepsPerDelta,
    #[error("population tolerances must lie in [0, 1] (start {0}, target {1})")]
    ToleranceRange(f64, f64),
}

/// Chain phase at a given schedule step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Hot,
    AnnealPop,
    AnnealComp,
    Cold,
}

/// The instantaneous constraint parameters a chain step runs under.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulePoint {
    pub pop_tolerance: f64,
    pub beta_comp: f64,
    pub phase: Phase,
}

impl SchedulePoint {
    /// Fixed-parameter point for plain (non-annealed) runs.
    pub fn from_params(params: &ChainParams) -> Self {
        SchedulePoint {
            pop_tolerance: params.pop_tolerance,
            beta_comp: params.beta_comp,
            phase: Phase::Cold,
        }
    }
}

/// Cooling schedule: phase lengths and per-phase parameter deltas.
///
/// Population tolerance anneals fully before the compactness weight starts;
/// each quantity moves one delta after every `steps_per_delta` proposals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub hot_steps: u64,
    pub steps_per_delta: u64,
    pub cold_steps: u64,
    pub pop_tol_start: f64,
    pub pop_tol_target: f64,
    pub pop_tol_delta: f64,
    pub comp_weight_start: f64,
    pub comp_weight_target: f64,
    pub comp_weight_delta: f64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule {
            hot_steps: 500,
            steps_per_delta: 10,
            cold_steps: 100,
            pop_tol_start: 1.0,
            pop_tol_target: 0.1,
            pop_tol_delta: 0.005,
            comp_weight_start: 0.0,
            comp_weight_target: 0.4,
            comp_weight_delta: 0.01,
        }
    }
}

/// Number of whole deltas needed to cover `span`, robust to the span being
/// a float-rounded exact multiple of `delta`.
fn delta_count(span: f64, delta: f64) -> u64 {
    if span <= 0.0 {
        return 0;
    }
    let exact = span / delta;
    if (exact - exact.round()).abs() < 1e-9 {
        exact.round() as u64
    } else {
        exact.ceil() as u64
    }
}

impl AnnealSchedule {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        if self.pop_tol_start < self.pop_tol_target {
            return Err(ScheduleError::PopOrder(
                self.pop_tol_start,
                self.pop_tol_target,
            ));
        }
        if self.comp_weight_start > self.comp_weight_target {
            return Err(ScheduleError::CompOrder(
                self.comp_weight_start,
                self.comp_weight_target,
            ));
        }
        if self.pop_tol_delta <= 0.0 || self.comp_weight_delta <= 0.0 {
            return Err(ScheduleError::NonPositiveDelta(
                self.pop_tol_delta,
                self.comp_weight_delta,
            ));
        }
        if self.steps_per_delta == 0 {
            return Err(ScheduleError::ZeroStepsPerDelta);
        }
        for t in [self.pop_tol_start, self.pop_tol_target] {
            if !(0.0..=1.0).contains(&t) {
                return Err(ScheduleError::ToleranceRange(
                    self.pop_tol_start,
                    self.pop_tol_target,
                ));
            }
        }
        Ok(())
    }

    pub fn pop_anneal_steps(&self) -> u64 {
        delta_count(self.pop_tol_start - self.pop_tol_target, self.pop_tol_delta)
            * self.steps_per_delta
    }

    pub fn comp_anneal_steps(&self) -> u64 {
        delta_count(
            self.comp_weight_target - self.comp_weight_start,
            self.comp_weight_delta,
        ) * self.steps_per_delta
    }

    pub fn total_steps(&self) -> u64 {
        self.hot_steps + self.pop_anneal_steps() + self.comp_anneal_steps() + self.cold_steps
    }

    /// The piecewise-constant staircase of constraint parameters.
    ///
    /// Each anneal phase runs `steps_per_delta` proposals before applying
    /// its next delta; values clamp at the targets and the final step is
    /// exactly (pop_tol_target, comp_weight_target).
    pub fn params_at(&self, step: u64) -> Result<SchedulePoint, ScheduleError> {
        let total = self.total_steps();
        if step >= total {
            return Err(ScheduleError::StepOutOfRange { step, total });
        }
        let pop_steps = self.pop_anneal_steps();
        let comp_steps = self.comp_anneal_steps();
        if step < self.hot_steps {
            return Ok(SchedulePoint {
                pop_tolerance: self.pop_tol_start,
                beta_comp: self.comp_weight_start,
                phase: Phase::Hot,
            });
        }
        let step = step - self.hot_steps;
        if step < pop_steps {
            let applied = step / self.steps_per_delta;
            let tol =
                (self.pop_tol_start - applied as f64 * self.pop_tol_delta).max(self.pop_tol_target);
            return Ok(SchedulePoint {
                pop_tolerance: tol,
                beta_comp: self.comp_weight_start,
                phase: Phase::AnnealPop,
            });
        }
        let step = step - pop_steps;
        if step < comp_steps {
            let applied = step / self.steps_per_delta;
            let weight = (self.comp_weight_start + applied as f64 * self.comp_weight_delta)
                .min(self.comp_weight_target);
            return Ok(SchedulePoint {
                pop_tolerance: self.pop_tol_target,
                beta_comp: weight,
                phase: Phase::AnnealComp,
            });
        }
        Ok(SchedulePoint {
            pop_tolerance: self.pop_tol_target,
            beta_comp: self.comp_weight_target,
            phase: Phase::Cold,
        })
    }
}

/// Run one annealed sample: `total_steps` proposals with the instantaneous
/// schedule parameters, returning the trace; the plan ends as the sample.
///
/// The hard-tolerance gate always uses the current step's tolerance. If the
/// final plan still violates the target tolerance, the chain cooled too
/// fast (a stagnant chain) and the run errors with `StallDetected`.
pub fn run_annealed_sample(
    graph: &DualGraph,
    plan: &mut Districting,
    params: &ChainParams,
    schedule: &AnnealSchedule,
    kernel: Kernel,
    stat: StatKind,
    rng: &mut impl Rng,
) -> Result<Trace, ChainError> {
    params.validate()?;
    schedule.validate()?;
    if params.n_districts != plan.n_districts() {
        return Err(crate::score::ParamError::DistrictMismatch(
            params.n_districts,
            plan.n_districts(),
        )
        .into());
    }
    if !is_valid(graph, plan) {
        return Err(ChainError::InvalidInitialPlan(
            "a district is empty or disconnected".into(),
        ));
    }
    if !within_pop_tolerance(graph, plan, schedule.pop_tol_start) {
        return Err(ChainError::InvalidInitialPlan(format!(
            "outside starting population tolerance {}",
            schedule.pop_tol_start
        )));
    }

    let total = schedule.total_steps();
    let mut trace = Trace {
        records: Vec::with_capacity(total as usize),
        stat,
        values: Vec::with_capacity(total as usize),
    };
    let mut since_accept = 0u64;
    let mut accepted = 0u64;

    match kernel {
        Kernel::Flip => {
            for step in 0..total {
                let point = schedule.params_at(step).expect("step < total");
                let record = propose_and_filter(graph, plan, params, &point, step, rng);
                trace.values.push(crate::chain::stat_value(graph, plan, stat));
                track_stall(record.accepted, &mut accepted, &mut since_accept, params)?;
                trace.records.push(record);
            }
        }
        Kernel::SingleVertex => {
            let mut walk = SingleVertexWalk::new(graph, plan.clone());
            for step in 0..total {
                let point = schedule.params_at(step).expect("step < total");
                let record = walk.step(params, &point, rng)?;
                trace
                    .values
                    .push(crate::chain::stat_value(graph, walk.plan(), stat));
                track_stall(record.accepted, &mut accepted, &mut since_accept, params)?;
                trace.records.push(record);
            }
            *plan = walk.into_plan();
        }
    }

    if !within_pop_tolerance(graph, plan, schedule.pop_tol_target) {
        return Err(ChainError::StallDetected(format!(
            "annealed sample ended outside the target tolerance {}; the \
             schedule cooled faster than the chain could follow",
            schedule.pop_tol_target
        )));
    }
    Ok(trace)
}

fn track_stall(
    was_accepted: bool,
    accepted: &mut u64,
    since_accept: &mut u64,
    params: &ChainParams,
) -> Result<(), ChainError> {
    if was_accepted {
        *accepted += 1;
        *since_accept = 0;
    } else {
        *since_accept += 1;
        if *since_accept > params.stall_cap {
            return Err(ChainError::StallDetected(format!(
                "{} consecutive rejections after {} accepted steps",
                since_accept, accepted
            )));
        }
    }
    Ok(())
}
