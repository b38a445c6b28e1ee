//! Deterministic treatment plans.
//!
//! A plan prescribes action times segment by segment: after each
//! longitudinal event (and from time 0) a sub-plan lays out the following
//! actions, and it is dropped as soon as the next longitudinal event occurs.
//! Every consumer (plan application, the filter walk, the simulators and the
//! evaluators) reads planned times through [`PlanCursor`], so all of them
//! see bitwise-identical action times.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GctError, Result};
use crate::filter::PathState;
use crate::scenario::ScenarioModel;
use crate::trajectory::{merge, Mark, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Plan {
    /// No actions, ever.
    Never,
    /// Actions at fixed times regardless of longitudinal events.
    Fixed { times: Vec<f64> },
    /// From each longitudinal time `s` (and from 0), actions at
    /// `s + delay + k * period` until the next longitudinal event.
    PeriodicAfterL { delay: f64, period: f64 },
}

impl Plan {
    pub fn validate(&self) -> Result<()> {
        match self {
            Plan::Never => Ok(()),
            Plan::Fixed { times } => {
                let mut prev = 0.0;
                for &t in times {
                    if !(t.is_finite() && t > prev) {
                        return Err(GctError::validation(format!(
                            "fixed plan times must be finite, positive and strictly increasing (got {t} after {prev})"
                        )));
                    }
                    prev = t;
                }
                Ok(())
            }
            Plan::PeriodicAfterL { delay, period } => {
                if !(delay.is_finite() && *delay > 0.0 && period.is_finite() && *period > 0.0) {
                    return Err(GctError::validation(format!(
                        "periodic plan needs finite delay > 0 and period > 0 (got {delay}, {period})"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let plan: Plan = serde_json::from_str(s).map_err(|e| GctError::validation(format!("plan json: {e}")))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| GctError::validation(format!("cannot read plan {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }

    pub fn cursor(&self) -> PlanCursor<'_> {
        PlanCursor {
            plan: self,
            anchor: 0.0,
            k: 0,
        }
    }

    /// Short label for reports.
    pub fn label(&self) -> String {
        match self {
            Plan::Never => "never".into(),
            Plan::Fixed { times } => {
                let ts: Vec<String> = times.iter().map(|t| t.to_string()).collect();
                format!("fixed[{}]", ts.join(";"))
            }
            Plan::PeriodicAfterL { delay, period } => format!("periodic_after_l[{delay};{period}]"),
        }
    }
}

/// Position inside a plan's current sub-plan.
#[derive(Debug, Clone, Copy)]
pub struct PlanCursor<'p> {
    plan: &'p Plan,
    anchor: f64,
    k: usize,
}

impl<'p> PlanCursor<'p> {
    /// The next prescribed action time, if any (unbounded by the horizon).
    #[inline]
    pub fn next(&self) -> Option<f64> {
        match self.plan {
            Plan::Never => None,
            Plan::Fixed { times } => times.get(self.k).copied(),
            Plan::PeriodicAfterL { delay, period } => Some(self.anchor + delay + self.k as f64 * period),
        }
    }

    /// Marks the current next action as taken.
    #[inline]
    pub fn advance(&mut self) {
        if !matches!(self.plan, Plan::Never) {
            self.k += 1;
        }
    }

    /// Switches to the sub-plan that starts at longitudinal time `t`.
    #[inline]
    pub fn on_longitudinal(&mut self, t: f64) {
        if let Plan::PeriodicAfterL { .. } = self.plan {
            self.anchor = t;
            self.k = 0;
        }
    }

    /// Start of the current sub-plan (0 before any longitudinal event).
    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    /// Identifies the continuation of the plan after a fixed time: two
    /// cursors that have consumed all actions up to the same time and share
    /// this key prescribe identical future actions.
    pub(crate) fn continuation_key(&self) -> u64 {
        match self.plan {
            Plan::PeriodicAfterL { .. } => self.anchor.to_bits(),
            _ => 0,
        }
    }
}

fn check_l_times(l_times: &[f64], upper: f64) -> Result<()> {
    let mut prev = 0.0;
    for &t in l_times {
        if !(t > prev && t <= upper) {
            return Err(GctError::domain(format!(
                "longitudinal times must be strictly increasing in (0, {upper}], got {t} after {prev}"
            )));
        }
        prev = t;
    }
    Ok(())
}

/// Planned actions in `(0, upto]` for the given longitudinal times (all of
/// which must be `<= upto`), plus the cursor positioned after them.
fn planned_actions_upto<'p>(plan: &'p Plan, l_times: &[f64], upto: f64) -> Result<(Vec<f64>, PlanCursor<'p>)> {
    let mut cursor = plan.cursor();
    let mut actions = Vec::new();
    for &l in l_times {
        while let Some(a) = cursor.next() {
            if a < l {
                actions.push(a);
                cursor.advance();
            } else if a == l {
                return Err(GctError::Tie { time: l });
            } else {
                break;
            }
        }
        cursor.on_longitudinal(l);
    }
    while let Some(a) = cursor.next() {
        if a > upto {
            break;
        }
        actions.push(a);
        cursor.advance();
    }
    Ok((actions, cursor))
}

/// Smallest planned action time strictly after `t`, given the longitudinal
/// history and the actions already taken. `a_done` must be exactly what the
/// plan prescribes on `(0, t]`.
pub fn next_planned_action(plan: &Plan, l_history: &[f64], a_done: &[f64], t: f64) -> Result<Option<f64>> {
    plan.validate()?;
    if !(t >= 0.0) {
        return Err(GctError::domain(format!("time {t} is negative")));
    }
    check_l_times(l_history, t)?;
    let (expected, cursor) = planned_actions_upto(plan, l_history, t)?;
    if expected.len() != a_done.len() || expected.iter().zip(a_done).any(|(x, y)| x.to_bits() != y.to_bits()) {
        return Err(GctError::PlanState(format!(
            "actions taken {a_done:?} differ from the plan's actions {expected:?} on (0, {t}]"
        )));
    }
    Ok(cursor.next())
}

/// The plan-consistent trajectory `mu^g` for the given longitudinal times.
pub fn apply_plan(plan: &Plan, l_times: &[f64], horizon: f64) -> Result<Trajectory> {
    plan.validate()?;
    check_l_times(l_times, horizon)?;
    let (actions, _) = planned_actions_upto(plan, l_times, horizon)?;
    merge(l_times, &actions, horizon)
}

/// Whether the trajectory's actions are exactly those the plan prescribes
/// for its longitudinal times.
pub fn is_consistent(traj: &Trajectory, plan: &Plan) -> bool {
    let l = traj.times_of(Mark::Longitudinal);
    match apply_plan(plan, &l, traj.horizon()) {
        Ok(planned) => planned.events() == traj.events(),
        Err(_) => false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluabilityReport {
    pub ok: bool,
    /// First planned action at which the observational action intensity is zero.
    pub first_violation: Option<f64>,
    /// First longitudinal time the model itself gives zero intensity, if any;
    /// the walk stops there.
    pub l_outside_support: Option<f64>,
}

/// Walks `mu^g` and checks that every planned action falls where the
/// observational marginal action intensity is strictly positive.
pub fn evaluability_check(model: &ScenarioModel, plan: &Plan, l_times: &[f64]) -> Result<EvaluabilityReport> {
    let mu_g = apply_plan(plan, l_times, model.tau())?;
    let mut state = PathState::start(model, plan);
    for ev in mu_g.events() {
        state.tilt_to(model, ev.time);
        match ev.mark {
            Mark::Action => {
                if state.marginal_rate(model, Mark::Action) <= 0.0 {
                    return Ok(EvaluabilityReport {
                        ok: false,
                        first_violation: Some(ev.time),
                        l_outside_support: None,
                    });
                }
                state.apply_action(model)?;
            }
            Mark::Longitudinal => {
                if state.marginal_rate(model, Mark::Longitudinal) <= 0.0 {
                    return Ok(EvaluabilityReport {
                        ok: true,
                        first_violation: None,
                        l_outside_support: Some(ev.time),
                    });
                }
                state.observe_l(model)?;
            }
        }
    }
    Ok(EvaluabilityReport {
        ok: true,
        first_violation: None,
        l_outside_support: None,
    })
}
