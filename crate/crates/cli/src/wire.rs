//! JSON text frames exchanged with teleoperation clients. See `WIRE.md`.

use hsa_core::model::{backbone_polyline, RobotParams};
use hsa_core::planner::Axis;
use hsa_core::simulator::{InboxCommand, LoopSnapshot};
use serde::{Deserialize, Serialize};

pub const WIRE_VERSION: u32 = 1;
/// Backbone samples per frame, base to tip.
pub const POLYLINE_POINTS: usize = 20;

/// Scene state pushed to every client at the frame rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderFrame {
    pub version: u32,
    pub seq: u64,
    /// Simulation time, s.
    pub t: f64,
    /// Wall clock at broadcast, ms since the Unix epoch.
    pub wall_ms: u64,
    pub robot: Vec<[f64; 2]>,
    pub x: [f64; 2],
    pub x_at: [f64; 2],
    pub x_d: Option<[f64; 2]>,
    pub axis: Axis,
    pub workspace: Vec<[f64; 2]>,
}

impl RenderFrame {
    pub fn new(
        snap: &LoopSnapshot,
        plant: &RobotParams,
        workspace: &[[f64; 2]],
        seq: u64,
        wall_ms: u64,
    ) -> Self {
        Self {
            version: WIRE_VERSION,
            seq,
            t: snap.t,
            wall_ms,
            robot: backbone_polyline(&snap.state.q, plant, POLYLINE_POINTS)
                .into_iter()
                .map(Into::into)
                .collect(),
            x: snap.x.into(),
            x_at: snap.x_at.into(),
            x_d: snap.x_d.map(Into::into),
            axis: snap.axis,
            workspace: workspace.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Frame(RenderFrame),
    Error { version: u32, message: String },
}

impl ServerMessage {
    pub fn error(message: impl Into<String>) -> Self {
        ServerMessage::Error {
            version: WIRE_VERSION,
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}

/// `{"sign": 1}`, `{"sign": -1}` or `{"axis_switch": true}`, optionally with
/// `"version"` and a free-form `"source"`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientCommand {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis_switch: Option<bool>,
}

impl ClientCommand {
    pub fn sign(s: i64) -> Self {
        Self {
            sign: Some(s),
            ..Self::default()
        }
    }

    pub fn axis_switch() -> Self {
        Self {
            axis_switch: Some(true),
            ..Self::default()
        }
    }
}

/// Parses and validates one client text frame.
pub fn parse_command(text: &str) -> Result<InboxCommand, String> {
    let cmd: ClientCommand =
        serde_json::from_str(text).map_err(|e| format!("malformed command: {e}"))?;
    if let Some(v) = cmd.version {
        if v != WIRE_VERSION {
            return Err(format!("unsupported version {v}, expected {WIRE_VERSION}"));
        }
    }
    match (cmd.sign, cmd.axis_switch) {
        (Some(s @ (1 | -1)), None) => Ok(InboxCommand::Sign(s as i8)),
        (Some(s), None) => Err(format!("sign must be +1 or -1, got {s}")),
        (None, Some(true)) => Ok(InboxCommand::Switch),
        (None, Some(false)) => Err("axis_switch must be true".into()),
        (Some(_), Some(_)) => Err("send either sign or axis_switch, not both".into()),
        (None, None) => Err("command needs sign or axis_switch".into()),
    }
}
