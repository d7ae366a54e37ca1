//! Plant integration, measurement model and the multi-rate closed loop.

mod closed_loop;
mod measurement;
mod physics;
mod scenario;
mod sources;

pub use closed_loop::{
    read_log_csv, write_log_csv, ClosedLoop, LogRow, LogWriter, LoopSnapshot, SimulationOutput,
    LOG_COLUMNS,
};
pub use measurement::{savitzky_golay_derivative, Measurement, MeasurementModel, NoiseConfig};
pub use physics::{
    acceleration_with_torque, plant_acceleration, rk4_step, step_physics, step_with_torque,
    ContactSurface, Environment, SimState, BLOW_UP_SPEED,
};
pub use scenario::{
    CommandSourceConfig, Scenario, ScheduleConfig, ScriptedCommand, Setpoint, UserConfig,
};
pub use sources::{
    build_source, CommandContext, CommandInbox, CommandSource, EegUser, IdealUser, InboxCommand,
    InboxSource, Intent, NoisyUser, ReplaySource, ScriptedSource, UserPolicy,
};

use crate::error::Result;

/// Runs a scenario to completion with the given source.
pub fn run_closed_loop(
    scenario: &Scenario,
    workspace: Option<crate::planner::Workspace>,
    source: Option<Box<dyn CommandSource>>,
) -> Result<SimulationOutput> {
    ClosedLoop::new(scenario, workspace, source)?.run()
}
