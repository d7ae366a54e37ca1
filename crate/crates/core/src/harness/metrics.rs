use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::{LogRow, Setpoint};

/// Proximity radius around the setpoint, m.
pub const PROXIMITY: f64 = 2e-3;
/// Time allotted to each step, s.
pub const STEP_BUDGET: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub onset: f64,
    pub x_d: Vector2<f64>,
    pub reached: bool,
    /// First entry into the proximity ball, relative to the onset.
    pub response_time: Option<f64>,
    /// Distance to the setpoint at the last sample of the step.
    pub final_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub steps: Vec<StepResult>,
    pub success_rate: f64,
    /// Mean over the reached steps; `None` when none was reached.
    pub mean_response_time: Option<f64>,
    pub proximity: f64,
    pub budget: f64,
}

/// Scores a log against a setpoint schedule. Step `i` is evaluated over
/// `[onset_i, min(onset_i + budget, onset_{i+1}))`.
pub fn compute_step_metrics(
    log: &[LogRow],
    schedule: &[Setpoint],
    proximity: f64,
    budget: f64,
) -> Result<StepMetrics> {
    if !(proximity > 0.0 && budget > 0.0) {
        return Err(Error::InvalidParameter(
            "proximity and budget must be positive".into(),
        ));
    }
    if schedule.is_empty() {
        return Err(Error::ScheduleMismatch("empty schedule".into()));
    }
    if schedule.windows(2).any(|w| w[1].t <= w[0].t) {
        return Err(Error::ScheduleMismatch("onsets must increase".into()));
    }
    let (Some(first), Some(last)) = (log.first(), log.last()) else {
        return Err(Error::ScheduleMismatch("empty log".into()));
    };
    let period = if log.len() > 1 {
        log[1].t - log[0].t
    } else {
        0.0
    };
    let tol = period + 1e-9;
    if first.t > schedule[0].t + tol {
        return Err(Error::ScheduleMismatch(format!(
            "log starts at {} s, after the first onset {} s",
            first.t, schedule[0].t
        )));
    }
    let mut steps = Vec::with_capacity(schedule.len());
    for (i, sp) in schedule.iter().enumerate() {
        let mut end = sp.t + budget;
        if let Some(next) = schedule.get(i + 1) {
            end = end.min(next.t);
        }
        if last.t + tol < end {
            return Err(Error::ScheduleMismatch(format!(
                "log ends at {} s before step {i} ends at {end} s",
                last.t
            )));
        }
        let rows: Vec<&LogRow> = log
            .iter()
            .filter(|r| r.t >= sp.t - 1e-9 && r.t < end - 1e-9)
            .collect();
        let Some(tail) = rows.last() else {
            return Err(Error::ScheduleMismatch(format!("no log rows in step {i}")));
        };
        let dist = |r: &LogRow| (Vector2::from(r.x) - sp.x).norm();
        let hit = rows.iter().find(|r| dist(r) <= proximity);
        steps.push(StepResult {
            onset: sp.t,
            x_d: sp.x,
            reached: hit.is_some(),
            response_time: hit.map(|r| r.t - sp.t),
            final_error: dist(tail),
        });
    }
    let reached: Vec<f64> = steps.iter().filter_map(|s| s.response_time).collect();
    Ok(StepMetrics {
        success_rate: reached.len() as f64 / steps.len() as f64,
        mean_response_time: if reached.is_empty() {
            None
        } else {
            Some(reached.iter().sum::<f64>() / reached.len() as f64)
        },
        steps,
        proximity,
        budget,
    })
}

/// Recovers the setpoint schedule from the `xd_ref` columns of a log.
pub fn setpoints_from_log(log: &[LogRow]) -> Vec<Setpoint> {
    let mut out: Vec<Setpoint> = Vec::new();
    for r in log {
        if r.xd_ref[0].is_nan() || r.xd_ref[1].is_nan() {
            continue;
        }
        let x = Vector2::from(r.xd_ref);
        if out.last().is_none_or(|s| s.x != x) {
            out.push(Setpoint { t: r.t, x });
        }
    }
    out
}
