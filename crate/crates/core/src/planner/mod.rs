//! Attractor state machine, operational workspace and setpoint sampling.

mod geometry;
mod workspace;

pub use geometry::{
    distance_to_boundary, is_simple, nearest_boundary_point, point_in_polygon, signed_area,
    BOUNDARY_TOL,
};
pub use workspace::{
    compute_workspace, sample_setpoints, steady_state, Workspace, WorkspaceSample,
    WORKSPACE_SCHEMA_VERSION,
};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default attractor increment per command, m.
pub const DEFAULT_STEP: f64 = 2e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    #[default]
    X,
    Y,
}

impl Axis {
    pub fn unit(self) -> Vector2<f64> {
        match self {
            Axis::X => Vector2::new(1.0, 0.0),
            Axis::Y => Vector2::new(0.0, 1.0),
        }
    }

    pub fn toggled(self) -> Self {
        match self {
            Axis::X => Axis::Y,
            Axis::Y => Axis::X,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

/// One decision of the command channel.
///
/// `axis` is the axis that was active when the decision was taken. A switch
/// event carries no translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandEvent {
    pub t: f64,
    pub axis: Axis,
    pub sign: i8,
    pub axis_switch: bool,
}

impl CommandEvent {
    pub fn step(t: f64, axis: Axis, sign: i8) -> Result<Self> {
        if sign != 1 && sign != -1 {
            return Err(Error::InvalidParameter(format!(
                "sign must be +1 or -1, got {sign}"
            )));
        }
        Ok(Self {
            t,
            axis,
            sign,
            axis_switch: false,
        })
    }

    pub fn switch(t: f64, axis: Axis) -> Self {
        Self {
            t,
            axis,
            sign: 1,
            axis_switch: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttractorState {
    pub x_at: Vector2<f64>,
    pub axis: Axis,
    /// Increment per command, m.
    pub delta_x: f64,
}

impl AttractorState {
    pub fn new(x_at: Vector2<f64>, axis: Axis, delta_x: f64) -> Result<Self> {
        if !(delta_x > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "delta_x must be positive, got {delta_x}"
            )));
        }
        Ok(Self {
            x_at,
            axis,
            delta_x,
        })
    }
}

/// `x_at(k) = x_at(k-1) + delta_x * s * e_a`, clamped to the workspace when
/// one is given. A switch event toggles the active axis and leaves `x_at`
/// unchanged. The translation uses the state's active axis.
pub fn step_attractor(
    state: &AttractorState,
    cmd: &CommandEvent,
    workspace: Option<&Workspace>,
) -> AttractorState {
    if cmd.axis_switch {
        return AttractorState {
            axis: state.axis.toggled(),
            ..*state
        };
    }
    let moved = state.x_at + state.axis.unit() * (state.delta_x * f64::from(cmd.sign.signum()));
    let x_at = match workspace {
        Some(ws) => ws.clamp(&moved),
        None => moved,
    };
    AttractorState { x_at, ..*state }
}

/// Returns `x` when inside the polygon, otherwise the nearest boundary point.
pub fn clamp_to_workspace(x: &Vector2<f64>, ws: &Workspace) -> Vector2<f64> {
    ws.clamp(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_step_along_x() {
        let s = AttractorState::new(Vector2::new(0.0, 0.10), Axis::X, DEFAULT_STEP).unwrap();
        let cmd = CommandEvent::step(0.0, Axis::X, 1).unwrap();
        let next = step_attractor(&s, &cmd, None);
        assert_abs_diff_eq!(next.x_at, Vector2::new(0.0002, 0.10), epsilon = 1e-15);
    }

    #[test]
    fn switch_toggles_axis_only() {
        let s = AttractorState::new(Vector2::new(0.01, 0.11), Axis::X, DEFAULT_STEP).unwrap();
        let next = step_attractor(&s, &CommandEvent::switch(0.0, Axis::X), None);
        assert_eq!(next.axis, Axis::Y);
        assert_eq!(next.x_at, s.x_at);
    }

    #[test]
    fn steps_cancel() {
        let s0 = AttractorState::new(Vector2::new(0.003, 0.105), Axis::X, DEFAULT_STEP).unwrap();
        let mut s = s0;
        for sign in [1i8; 10].into_iter().chain([-1i8; 10]) {
            s = step_attractor(&s, &CommandEvent::step(0.0, Axis::X, sign).unwrap(), None);
        }
        assert_abs_diff_eq!(s.x_at, s0.x_at, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(CommandEvent::step(0.0, Axis::X, 0).is_err());
        assert!(AttractorState::new(Vector2::zeros(), Axis::X, 0.0).is_err());
    }
}
