//! Scenario files: initial conditions, setpoints, contact, rates, noise and
//! the command source.

use std::path::PathBuf;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::measurement::NoiseConfig;
use super::physics::ContactSurface;
use crate::controller::{GainsConfig, LmSettings};
use crate::error::{Error, Result};
use crate::model::RobotParams;
use crate::planner::{Axis, DEFAULT_STEP};
use crate::signal::SynthConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    /// RK4 step, s.
    pub physics_dt: f64,
    /// Controller and log rate, Hz.
    pub control_rate: f64,
    /// Command rate, Hz.
    pub command_rate: f64,
    /// Transport delay applied to `phi_d`, s.
    pub latency: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            physics_dt: 1e-3,
            control_rate: 50.0,
            command_rate: 18.0,
            latency: 0.13,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.physics_dt > 0.0 && self.physics_dt <= 1e-3) {
            return Err(Error::InvalidParameter(format!(
                "physics_dt must be in (0, 1e-3], got {}",
                self.physics_dt
            )));
        }
        if !(self.control_rate > 0.0 && self.command_rate > 0.0) {
            return Err(Error::InvalidParameter("rates must be positive".into()));
        }
        if self.physics_dt > 1.0 / self.control_rate {
            return Err(Error::InvalidParameter(
                "physics_dt must not exceed the control period".into(),
            ));
        }
        if !(self.latency >= 0.0) {
            return Err(Error::InvalidParameter(
                "latency must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Reference position `x` active from time `t` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Setpoint {
    pub t: f64,
    pub x: Vector2<f64>,
}

/// A scripted command; `repeat` issues it on that many consecutive ticks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedCommand {
    pub t: f64,
    #[serde(default)]
    pub sign: i8,
    #[serde(default)]
    pub axis_switch: bool,
    #[serde(default = "one")]
    pub repeat: usize,
}

fn one() -> usize {
    1
}

/// Simulated user steering the attractor towards the setpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UserConfig {
    /// The user switches axis once the active-axis error is below this while
    /// the other axis is still off by more, m.
    pub switch_tolerance: f64,
    /// Active-axis error treated as zero, m. Defaults to half the step.
    pub deadband: Option<f64>,
}

impl Default for UserConfig {
    fn default() -> Self {
        Self {
            switch_tolerance: 1e-3,
            deadband: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CommandSourceConfig {
    /// Attractor pinned to the setpoint; no commands.
    #[default]
    Privileged,
    Scripted {
        events: Vec<ScriptedCommand>,
    },
    /// Error-free classifier outputs.
    Ideal {
        #[serde(default)]
        user: UserConfig,
    },
    /// Classifier outputs drawn with fixed accuracies.
    Noisy {
        #[serde(default)]
        user: UserConfig,
        #[serde(default = "default_mi_accuracy")]
        mi_accuracy: f64,
        #[serde(default = "default_jaw_tpr")]
        jaw_tpr: f64,
        #[serde(default = "default_jaw_fpr")]
        jaw_fpr: f64,
    },
    /// The user's intent drives the synthetic EEG generator, decoded online.
    Eeg {
        classifiers: PathBuf,
        #[serde(default)]
        user: UserConfig,
        #[serde(default)]
        synth: SynthConfig,
    },
    /// A recorded EEG file decoded online.
    Replay {
        path: PathBuf,
        classifiers: PathBuf,
    },
    /// Commands pushed by an external client.
    Inbox,
}

fn default_mi_accuracy() -> f64 {
    0.75
}
fn default_jaw_tpr() -> f64 {
    0.85
}
fn default_jaw_fpr() -> f64 {
    0.15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub duration_s: f64,
    pub seed: u64,
    pub setpoints: Vec<Setpoint>,
    pub contact: Option<ContactSurface>,
    /// Constant external force on the tip, N.
    pub tip_force: Vector2<f64>,
    pub schedule: ScheduleConfig,
    pub noise: NoiseConfig,
    pub gains: GainsConfig,
    pub lm: LmSettings,
    pub delta_x: f64,
    pub initial_axis: Axis,
    /// Keep the attractor inside the operational workspace.
    pub clamp_attractor: bool,
    pub workspace_grid: usize,
    pub command: CommandSourceConfig,
    /// Model used by the controller (and the plant unless `plant` is set).
    pub robot: RobotParams,
    pub plant: Option<RobotParams>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            duration_s: 10.0,
            seed: 0,
            setpoints: Vec::new(),
            contact: None,
            tip_force: Vector2::zeros(),
            schedule: ScheduleConfig::default(),
            noise: NoiseConfig::default(),
            gains: GainsConfig::default(),
            lm: LmSettings::default(),
            delta_x: DEFAULT_STEP,
            initial_axis: Axis::X,
            clamp_attractor: true,
            workspace_grid: 51,
            command: CommandSourceConfig::default(),
            robot: RobotParams::default(),
            plant: None,
        }
    }
}

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let sc: Self = toml::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn plant_params(&self) -> &RobotParams {
        self.plant.as_ref().unwrap_or(&self.robot)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::InvalidParameter(
                "duration_s must be positive".into(),
            ));
        }
        if !(self.delta_x > 0.0) {
            return Err(Error::InvalidParameter("delta_x must be positive".into()));
        }
        if self.workspace_grid < 2 {
            return Err(Error::InvalidParameter(
                "workspace_grid must be >= 2".into(),
            ));
        }
        self.schedule.validate()?;
        self.noise.validate()?;
        self.robot.validate()?;
        if let Some(p) = &self.plant {
            p.validate()?;
        }
        if let Some(c) = &self.contact {
            c.validate()?;
        }
        self.gains.to_gains()?;
        if self.setpoints.windows(2).any(|w| w[1].t < w[0].t) {
            return Err(Error::InvalidParameter(
                "setpoints must be sorted by time".into(),
            ));
        }
        match &self.command {
            CommandSourceConfig::Noisy {
                mi_accuracy,
                jaw_tpr,
                jaw_fpr,
                ..
            } => {
                if ![mi_accuracy, jaw_tpr, jaw_fpr]
                    .iter()
                    .all(|p| (0.0..=1.0).contains(*p))
                {
                    return Err(Error::InvalidParameter(
                        "probabilities must lie in [0, 1]".into(),
                    ));
                }
            }
            CommandSourceConfig::Scripted { events } => {
                if events
                    .iter()
                    .any(|e| !e.axis_switch && e.sign != 1 && e.sign != -1)
                {
                    return Err(Error::InvalidParameter(
                        "scripted commands need sign = +1/-1 or axis_switch = true".into(),
                    ));
                }
            }
            CommandSourceConfig::Eeg { synth, .. } => synth.validate()?,
            _ => {}
        }
        Ok(())
    }
}
