//! Event-ordered multi-rate loop: commands, control, delayed actuation,
//! measurement and physics on one virtual clock.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::{Read, Write};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::measurement::MeasurementModel;
use super::physics::{step_physics, Environment, SimState};
use super::scenario::{CommandSourceConfig, Scenario, Setpoint};
use super::sources::{CommandContext, CommandSource};
use crate::controller::{ControlOutput, Controller};
use crate::error::{Error, Result};
use crate::model::{tip_position, ActuationAngles, RobotParams};
use crate::planner::{
    compute_workspace, steady_state, step_attractor, AttractorState, Axis, CommandEvent, Workspace,
};

/// One row of the trajectory log, written at the control rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: f64,
    pub q: [f64; 3],
    pub qd: [f64; 3],
    pub x: [f64; 2],
    /// Active setpoint; NaN before the first one.
    pub xd_ref: [f64; 2],
    pub x_at: [f64; 2],
    pub phi_d: [f64; 2],
    pub phi_applied: [f64; 2],
    pub tau: [f64; 3],
    pub residual_norm: f64,
    pub contact_f: [f64; 2],
}

pub const LOG_COLUMNS: [&str; 23] = [
    "t",
    "q_be",
    "q_sh",
    "q_ax",
    "qd_be",
    "qd_sh",
    "qd_ax",
    "x",
    "y",
    "xd_ref_x",
    "xd_ref_y",
    "x_at_x",
    "x_at_y",
    "phi_d_1",
    "phi_d_2",
    "phi_applied_1",
    "phi_applied_2",
    "tau_be",
    "tau_sh",
    "tau_ax",
    "residual_norm",
    "contact_fx",
    "contact_fy",
];

impl LogRow {
    fn values(&self) -> [f64; 23] {
        let mut v = [0.0; 23];
        let parts: [&[f64]; 11] = [
            &[self.t],
            &self.q,
            &self.qd,
            &self.x,
            &self.xd_ref,
            &self.x_at,
            &self.phi_d,
            &self.phi_applied,
            &self.tau,
            &[self.residual_norm],
            &self.contact_f,
        ];
        let mut i = 0;
        for p in parts {
            for x in p {
                v[i] = *x;
                i += 1;
            }
        }
        v
    }

    fn from_values(v: &[f64; 23]) -> Self {
        Self {
            t: v[0],
            q: [v[1], v[2], v[3]],
            qd: [v[4], v[5], v[6]],
            x: [v[7], v[8]],
            xd_ref: [v[9], v[10]],
            x_at: [v[11], v[12]],
            phi_d: [v[13], v[14]],
            phi_applied: [v[15], v[16]],
            tau: [v[17], v[18], v[19]],
            residual_norm: v[20],
            contact_f: [v[21], v[22]],
        }
    }
}

/// Writes the log with shortest round-trip float formatting.
pub fn write_log_csv<W: Write>(w: W, rows: &[LogRow]) -> Result<()> {
    let mut wr = LogWriter::new(w)?;
    wr.write(rows)?;
    wr.flush()
}

/// Incremental form of [`write_log_csv`] for open-ended sessions.
pub struct LogWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> LogWriter<W> {
    /// Writes the header.
    pub fn new(w: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(LOG_COLUMNS)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, rows: &[LogRow]) -> Result<()> {
        for r in rows {
            self.inner
                .write_record(r.values().iter().map(|v| v.to_string()))?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

pub fn read_log_csv<R: Read>(r: R) -> Result<Vec<LogRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != LOG_COLUMNS {
        return Err(Error::Parse(format!("unexpected log header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let mut v = [0.0; 23];
        for (j, field) in rec.iter().enumerate().take(23) {
            v[j] = field
                .parse()
                .map_err(|_| Error::Parse(format!("log row {}: bad number {field:?}", i + 1)))?;
        }
        if rec.len() != 23 {
            return Err(Error::Parse(format!(
                "log row {} has {} fields",
                i + 1,
                rec.len()
            )));
        }
        out.push(LogRow::from_values(&v));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutput {
    pub log: Vec<LogRow>,
    pub commands: Vec<CommandEvent>,
    /// Times at which the normal contact force rose to the trigger level.
    pub spray_events: Vec<f64>,
    pub control_calls: usize,
    pub command_ticks: usize,
    pub non_converged: usize,
}

/// Render state for observers of a running loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopSnapshot {
    pub t: f64,
    pub state: SimState,
    pub x: Vector2<f64>,
    pub x_at: Vector2<f64>,
    pub x_d: Option<Vector2<f64>>,
    pub axis: Axis,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EventKind {
    Setpoint(usize),
    Measure,
    Eeg,
    Command,
    Control,
    Apply(ActuationAngles),
}

impl EventKind {
    fn priority(&self) -> u8 {
        match self {
            EventKind::Setpoint(_) => 0,
            EventKind::Measure => 1,
            EventKind::Eeg => 2,
            EventKind::Command => 3,
            EventKind::Control => 4,
            EventKind::Apply(_) => 5,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    tick: u64,
    seq: u64,
    kind: EventKind,
}

impl Event {
    fn key(&self) -> (u64, u8, u64) {
        (self.tick, self.kind.priority(), self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// Periodic event stream: occurrence `k` fires on the first physics tick at
/// or after `k / rate`.
#[derive(Debug, Clone, Copy)]
struct Periodic {
    rate: f64,
    k: u64,
}

impl Periodic {
    fn tick_of(&self, k: u64, dt: f64) -> u64 {
        ((k as f64 / self.rate) / dt - 1e-9).ceil().max(0.0) as u64
    }
}

/// The closed loop. Create with [`ClosedLoop::new`], then either
/// [`ClosedLoop::run`] to completion or advance it piecewise.
pub struct ClosedLoop {
    scenario: Scenario,
    plant: RobotParams,
    env: Environment,
    workspace: Option<Workspace>,
    state: SimState,
    controller: Controller,
    attractor: AttractorState,
    setpoint: Option<Vector2<f64>>,
    source: Option<Box<dyn CommandSource>>,
    measurement: Option<MeasurementModel>,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    tick: u64,
    end_tick: u64,
    measure_clock: Periodic,
    eeg_clock: Option<Periodic>,
    command_clock: Periodic,
    control_clock: Periodic,
    last_control: Option<ControlOutput>,
    above_trigger: bool,
    out: SimulationOutput,
}

impl ClosedLoop {
    /// Starts from the plant's zero-actuation steady state with the attractor
    /// on the tip. When `scenario.clamp_attractor` is set and no workspace is
    /// given, it is computed from the controller's model.
    pub fn new(
        scenario: &Scenario,
        workspace: Option<Workspace>,
        source: Option<Box<dyn CommandSource>>,
    ) -> Result<Self> {
        scenario.validate()?;
        let privileged = matches!(scenario.command, CommandSourceConfig::Privileged);
        if !privileged && source.is_none() {
            return Err(Error::InvalidParameter(
                "scenario needs a command source".into(),
            ));
        }
        let plant = scenario.plant_params().clone();
        let workspace = match workspace {
            Some(ws) => Some(ws),
            None if scenario.clamp_attractor && !privileged => {
                Some(compute_workspace(&scenario.robot, scenario.workspace_grid)?)
            }
            None => None,
        };
        let q = steady_state(&ActuationAngles::zero(), &plant, &plant.q0)?;
        let state = SimState::at_rest(q, ActuationAngles::zero());
        let x0 = tip_position(&q, &plant);
        let attractor = AttractorState::new(x0, scenario.initial_axis, scenario.delta_x)?;
        let measurement = if scenario.noise.enabled {
            Some(MeasurementModel::new(
                scenario.noise,
                scenario.seed ^ 0x6d65_6173,
            )?)
        } else {
            None
        };
        let dt = scenario.schedule.physics_dt;
        let end_tick = (scenario.duration_s / dt).round() as u64;
        let eeg_clock = source
            .as_ref()
            .and_then(|s| s.eeg_rate())
            .map(|rate| Periodic { rate, k: 0 });
        let mut lp = Self {
            controller: Controller::new(scenario.gains.to_gains()?, scenario.lm),
            env: Environment {
                contact: scenario.contact,
                tip_force: scenario.tip_force,
            },
            scenario: scenario.clone(),
            plant,
            workspace,
            state,
            attractor,
            setpoint: None,
            source,
            measurement,
            queue: BinaryHeap::new(),
            seq: 0,
            tick: 0,
            end_tick,
            measure_clock: Periodic {
                rate: scenario.noise.rate,
                k: 0,
            },
            eeg_clock,
            command_clock: Periodic {
                rate: scenario.schedule.command_rate,
                k: 0,
            },
            control_clock: Periodic {
                rate: scenario.schedule.control_rate,
                k: 0,
            },
            last_control: None,
            above_trigger: false,
            out: SimulationOutput {
                log: Vec::new(),
                commands: Vec::new(),
                spray_events: Vec::new(),
                control_calls: 0,
                command_ticks: 0,
                non_converged: 0,
            },
        };
        for (i, sp) in scenario.setpoints.iter().enumerate() {
            let tick = (sp.t / dt - 1e-9).ceil().max(0.0) as u64;
            lp.push(tick, EventKind::Setpoint(i));
        }
        if lp.measurement.is_some() {
            lp.push(0, EventKind::Measure);
        }
        if lp.eeg_clock.is_some() {
            lp.push(0, EventKind::Eeg);
        }
        if !privileged {
            lp.push(0, EventKind::Command);
        }
        lp.push(0, EventKind::Control);
        Ok(lp)
    }

    /// Replaces the command source of a running loop.
    pub fn set_source(&mut self, source: Box<dyn CommandSource>) {
        if self.eeg_clock.is_none() {
            if let Some(rate) = source.eeg_rate() {
                self.eeg_clock = Some(Periodic { rate, k: 0 });
                self.push(self.tick, EventKind::Eeg);
            }
        }
        self.source = Some(source);
    }

    fn push(&mut self, tick: u64, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Reverse(Event {
            tick,
            seq: self.seq,
            kind,
        }));
    }

    pub fn dt(&self) -> f64 {
        self.scenario.schedule.physics_dt
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.dt()
    }

    pub fn is_finished(&self) -> bool {
        self.tick >= self.end_tick
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn workspace(&self) -> Option<&Workspace> {
        self.workspace.as_ref()
    }

    pub fn attractor(&self) -> &AttractorState {
        &self.attractor
    }

    pub fn output(&self) -> &SimulationOutput {
        &self.out
    }

    pub fn plant(&self) -> &RobotParams {
        &self.plant
    }

    /// Sets the reference from outside the schedule (live sessions).
    pub fn set_setpoint(&mut self, x_d: Option<Vector2<f64>>) {
        self.setpoint = x_d;
        if let (Some(x), CommandSourceConfig::Privileged) = (x_d, &self.scenario.command) {
            self.attractor.x_at = x;
        }
    }

    pub fn snapshot(&self) -> LoopSnapshot {
        LoopSnapshot {
            t: self.time(),
            state: self.state,
            x: tip_position(&self.state.q, &self.plant),
            x_at: self.attractor.x_at,
            x_d: self.setpoint,
            axis: self.attractor.axis,
        }
    }

    /// Hands over the log rows recorded since the last call.
    pub fn take_log(&mut self) -> Vec<LogRow> {
        std::mem::take(&mut self.out.log)
    }

    /// Hands over the command events recorded since the last call.
    pub fn take_commands(&mut self) -> Vec<CommandEvent> {
        std::mem::take(&mut self.out.commands)
    }

    /// Runs to the scenario duration and returns everything recorded.
    pub fn run(mut self) -> Result<SimulationOutput> {
        while !self.is_finished() {
            self.step_tick()?;
        }
        Ok(self.out)
    }

    /// Advances until the virtual clock reaches `t` (or the end).
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        let target = ((t / self.dt()) - 1e-9).ceil().max(0.0) as u64;
        while self.tick < target.min(self.end_tick) {
            self.step_tick()?;
        }
        Ok(())
    }

    /// Handles this tick's events, then integrates one physics step.
    pub fn step_tick(&mut self) -> Result<()> {
        while let Some(Reverse(ev)) = self.queue.peek().copied() {
            if ev.tick > self.tick {
                break;
            }
            self.queue.pop();
            self.handle(ev.kind)?;
        }
        let phi = self.state.phi_applied;
        self.state = step_physics(&self.state, &phi, &self.env, &self.plant, self.dt())?;
        self.tick += 1;
        // Keep the clock exact instead of accumulating dt.
        self.state.t = self.time();
        if let Some(c) = &self.env.contact {
            let f = self.state.contact_force.norm();
            let above = f >= c.f_trigger;
            if above && !self.above_trigger {
                self.out.spray_events.push(self.state.t);
            }
            self.above_trigger = above;
        }
        Ok(())
    }

    fn context(&self) -> CommandContext {
        let x = match self.measurement.as_ref().and_then(|m| m.last()) {
            Some(m) => m.pose.x,
            None => tip_position(&self.state.q, &self.plant),
        };
        CommandContext {
            t: self.time(),
            axis: self.attractor.axis,
            x_at: self.attractor.x_at,
            x,
            x_d: self.setpoint,
            delta_x: self.attractor.delta_x,
        }
    }

    fn schedule_next(&mut self, clock: Periodic, kind: EventKind) -> Periodic {
        let next = Periodic {
            rate: clock.rate,
            k: clock.k + 1,
        };
        let tick = next.tick_of(next.k, self.dt());
        self.push(tick, kind);
        next
    }

    fn handle(&mut self, kind: EventKind) -> Result<()> {
        let t = self.time();
        match kind {
            EventKind::Setpoint(i) => {
                let Setpoint { x, .. } = self.scenario.setpoints[i];
                self.set_setpoint(Some(x));
            }
            EventKind::Measure => {
                let m = self
                    .measurement
                    .as_mut()
                    .expect("measure events imply a model");
                m.sample(t, &self.state.q, &self.plant)?;
                self.measure_clock = self.schedule_next(self.measure_clock, EventKind::Measure);
            }
            EventKind::Eeg => {
                let ctx = self.context();
                if let Some(src) = self.source.as_mut() {
                    src.on_eeg_sample(&ctx)?;
                }
                let clock = self.eeg_clock.expect("eeg events imply a clock");
                self.eeg_clock = Some(self.schedule_next(clock, EventKind::Eeg));
            }
            EventKind::Command => {
                let ctx = self.context();
                self.out.command_ticks += 1;
                if let Some(src) = self.source.as_mut() {
                    if let Some(cmd) = src.on_command_tick(&ctx)? {
                        let clamp = if self.scenario.clamp_attractor {
                            self.workspace.as_ref()
                        } else {
                            None
                        };
                        self.attractor = step_attractor(&self.attractor, &cmd, clamp);
                        self.out.commands.push(cmd);
                    }
                }
                self.command_clock = self.schedule_next(self.command_clock, EventKind::Command);
            }
            EventKind::Control => {
                let (q, qd) = match self.measurement.as_ref().and_then(|m| m.last()) {
                    Some(m) => m.configuration(&self.scenario.robot)?,
                    None => (self.state.q, self.state.qd),
                };
                let out = self
                    .controller
                    .step(&q, &qd, &self.attractor.x_at, &self.scenario.robot)
                    .map_err(|e| Error::Controller {
                        t,
                        source: Box::new(e),
                    })?;
                self.out.control_calls += 1;
                if !out.converged {
                    self.out.non_converged += 1;
                }
                self.last_control = Some(out);
                let delay = (self.scenario.schedule.latency / self.dt() - 1e-9)
                    .ceil()
                    .max(0.0) as u64;
                self.push(self.tick + delay, EventKind::Apply(out.phi_d));
                self.record(&out);
                self.control_clock = self.schedule_next(self.control_clock, EventKind::Control);
            }
            EventKind::Apply(phi) => {
                self.state.phi_applied = phi.clamped(self.plant.phi_max);
            }
        }
        Ok(())
    }

    fn record(&mut self, out: &ControlOutput) {
        let s = &self.state;
        let x = tip_position(&s.q, &self.plant);
        let xd = self.setpoint.unwrap_or(Vector2::new(f64::NAN, f64::NAN));
        self.out.log.push(LogRow {
            t: self.time(),
            q: s.q.to_vector().into(),
            qd: s.qd.to_vector().into(),
            x: x.into(),
            xd_ref: xd.into(),
            x_at: self.attractor.x_at.into(),
            phi_d: out.phi_d.phi.into(),
            phi_applied: s.phi_applied.phi.into(),
            tau: out.tau.into(),
            residual_norm: out.residual_norm,
            contact_f: s.contact_force.into(),
        });
    }
}
