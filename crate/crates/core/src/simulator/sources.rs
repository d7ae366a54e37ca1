//! Command sources feeding the attractor at the command rate.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::{Arc, Mutex};

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scenario::{CommandSourceConfig, Scenario, ScriptedCommand, UserConfig};
use crate::error::{Error, Result};
use crate::planner::{Axis, CommandEvent};
use crate::signal::{
    map_to_command, read_replay_csv, ClassifierBundle, EegClass, EegFrame, JawSwitch,
    OnlineDecoder, RateConverter, ReplayRow, SynthConfig, SynthEeg, FS,
};

/// What a source may look at when deciding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandContext {
    pub t: f64,
    pub axis: Axis,
    pub x_at: Vector2<f64>,
    /// Measured tip position.
    pub x: Vector2<f64>,
    pub x_d: Option<Vector2<f64>>,
    pub delta_x: f64,
}

pub trait CommandSource: Send {
    /// Rate of [`CommandSource::on_eeg_sample`] calls, if any.
    fn eeg_rate(&self) -> Option<f64> {
        None
    }

    fn on_eeg_sample(&mut self, _ctx: &CommandContext) -> Result<()> {
        Ok(())
    }

    fn on_command_tick(&mut self, ctx: &CommandContext) -> Result<Option<CommandEvent>>;
}

/// What the simulated user is trying to do on this tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Intent {
    Positive,
    Negative,
    Switch,
}

/// Steering policy shared by the simulated users: move the attractor along
/// the active axis towards the setpoint; switch axis once the active axis is
/// done and the other is not, or when the workspace edge blocks the active
/// axis; alternate signs when there is nothing to do (the protocol has no
/// rest command).
#[derive(Debug, Clone)]
pub struct UserPolicy {
    cfg: UserConfig,
    dither: bool,
    /// Attractor and intent of the previous tick.
    last: Option<(Vector2<f64>, Intent)>,
}

impl UserPolicy {
    pub fn new(cfg: UserConfig) -> Self {
        Self {
            cfg,
            dither: false,
            last: None,
        }
    }

    pub fn intent(&mut self, ctx: &CommandContext) -> Intent {
        let intent = self.decide(ctx);
        self.last = Some((ctx.x_at, intent));
        intent
    }

    fn decide(&mut self, ctx: &CommandContext) -> Intent {
        let Some(x_d) = ctx.x_d else {
            return self.alternate();
        };
        let e = x_d - ctx.x_at;
        let a = ctx.axis.index();
        let (ea, eo) = (e[a], e[1 - a]);
        let tol = self.cfg.switch_tolerance;
        let deadband = self.cfg.deadband.unwrap_or(0.5 * ctx.delta_x);
        let blocked = match self.last {
            Some((x, i)) => i != Intent::Switch && x == ctx.x_at,
            None => false,
        };
        if eo.abs() > tol && (ea.abs() < tol || (blocked && ea.abs() > deadband)) {
            Intent::Switch
        } else if ea > deadband {
            Intent::Positive
        } else if ea < -deadband {
            Intent::Negative
        } else {
            self.alternate()
        }
    }

    /// Motor-imagery intent while clenching or idle.
    pub fn alternate(&mut self) -> Intent {
        self.dither = !self.dither;
        if self.dither {
            Intent::Positive
        } else {
            Intent::Negative
        }
    }
}

/// Fixed command list.
#[derive(Debug, Clone)]
pub struct ScriptedSource {
    pending: VecDeque<ScriptedCommand>,
}

impl ScriptedSource {
    pub fn new(events: &[ScriptedCommand]) -> Self {
        let mut v = events.to_vec();
        v.sort_by(|a, b| a.t.total_cmp(&b.t));
        Self { pending: v.into() }
    }
}

impl CommandSource for ScriptedSource {
    fn on_command_tick(&mut self, ctx: &CommandContext) -> Result<Option<CommandEvent>> {
        let Some(front) = self.pending.front_mut() else {
            return Ok(None);
        };
        if front.t > ctx.t + 1e-9 {
            return Ok(None);
        }
        let ev = if front.axis_switch {
            CommandEvent::switch(ctx.t, ctx.axis)
        } else {
            CommandEvent::step(ctx.t, ctx.axis, front.sign)?
        };
        front.repeat = front.repeat.saturating_sub(1);
        if front.repeat == 0 {
            self.pending.pop_front();
        }
        Ok(Some(ev))
    }
}

/// Classifiers that never err: every intent is decoded correctly and a
/// clench is recognised on the first tick.
#[derive(Debug, Clone)]
pub struct IdealUser {
    policy: UserPolicy,
}

impl IdealUser {
    pub fn new(cfg: UserConfig) -> Self {
        Self {
            policy: UserPolicy::new(cfg),
        }
    }
}

impl CommandSource for IdealUser {
    fn on_command_tick(&mut self, ctx: &CommandContext) -> Result<Option<CommandEvent>> {
        Ok(Some(match self.policy.intent(ctx) {
            Intent::Switch => CommandEvent::switch(ctx.t, ctx.axis),
            Intent::Positive => map_to_command(ctx.t, true, false, ctx.axis),
            Intent::Negative => map_to_command(ctx.t, false, false, ctx.axis),
        }))
    }
}

/// Classifier outputs drawn per command tick: motor imagery decoded
/// correctly with probability `mi_accuracy`; the jaw classifier fires with
/// probability `jaw_tpr` while clenching and `jaw_fpr` otherwise, and its
/// outputs pass through the 2.8 s / 80% switch rule.
#[derive(Debug, Clone)]
pub struct NoisyUser {
    policy: UserPolicy,
    rng: ChaCha8Rng,
    jaw: JawSwitch,
    mi_accuracy: f64,
    jaw_tpr: f64,
    jaw_fpr: f64,
}

impl NoisyUser {
    pub fn new(cfg: UserConfig, mi_accuracy: f64, jaw_tpr: f64, jaw_fpr: f64, seed: u64) -> Self {
        Self {
            policy: UserPolicy::new(cfg),
            rng: ChaCha8Rng::seed_from_u64(seed),
            jaw: JawSwitch::default(),
            mi_accuracy,
            jaw_tpr,
            jaw_fpr,
        }
    }
}

impl CommandSource for NoisyUser {
    fn on_command_tick(&mut self, ctx: &CommandContext) -> Result<Option<CommandEvent>> {
        let intent = self.policy.intent(ctx);
        let p_jaw = if intent == Intent::Switch {
            self.jaw_tpr
        } else {
            self.jaw_fpr
        };
        let jaw_out = self.rng.gen::<f64>() < p_jaw;
        let mi_intent = match intent {
            Intent::Positive => true,
            Intent::Negative => false,
            Intent::Switch => self.policy.alternate() == Intent::Positive,
        };
        let correct = self.rng.gen::<f64>() < self.mi_accuracy;
        let switch = self.jaw.push(ctx.t, jaw_out);
        Ok(Some(map_to_command(
            ctx.t,
            mi_intent == correct,
            switch,
            ctx.axis,
        )))
    }
}

/// Online decoding shared by the EEG-driven sources: epoch decisions are
/// majority-voted down to the command rate, the jaw output feeds the switch
/// rule and the motor-imagery output sets the sign.
#[derive(Debug, Clone)]
struct DecodedCommands {
    decoder: OnlineDecoder,
    jaw_rate: RateConverter,
    mi_rate: RateConverter,
    jaw: JawSwitch,
    started: bool,
}

impl DecodedCommands {
    fn new(bundle: &ClassifierBundle) -> Self {
        Self {
            decoder: OnlineDecoder::new(bundle),
            jaw_rate: RateConverter::new(false),
            mi_rate: RateConverter::new(false),
            jaw: JawSwitch::default(),
            started: false,
        }
    }

    fn push(&mut self, frame: &EegFrame) {
        if let Some(d) = self.decoder.push(frame) {
            self.jaw_rate.push(d.jaw);
            self.mi_rate.push(d.mi);
            self.started = true;
        }
    }

    fn tick(&mut self, ctx: &CommandContext) -> Option<CommandEvent> {
        if !self.started {
            return None;
        }
        let jaw = self.jaw_rate.tick();
        let mi = self.mi_rate.tick();
        let switch = self.jaw.push(ctx.t, jaw);
        Some(map_to_command(ctx.t, mi, switch, ctx.axis))
    }
}

/// Simulated user whose intent selects the class of the synthetic EEG
/// generator; commands come from decoding that EEG.
#[derive(Debug, Clone)]
pub struct EegUser {
    policy: UserPolicy,
    synth: SynthEeg,
    decoded: DecodedCommands,
    class: EegClass,
}

impl EegUser {
    pub fn new(cfg: UserConfig, synth: SynthConfig, bundle: &ClassifierBundle) -> Result<Self> {
        Ok(Self {
            policy: UserPolicy::new(cfg),
            synth: SynthEeg::new(synth)?,
            decoded: DecodedCommands::new(bundle),
            class: EegClass::Rest,
        })
    }

    pub fn class(&self) -> EegClass {
        self.class
    }
}

impl CommandSource for EegUser {
    fn eeg_rate(&self) -> Option<f64> {
        Some(FS)
    }

    fn on_eeg_sample(&mut self, ctx: &CommandContext) -> Result<()> {
        let mut frame = self.synth.next_frame(self.class);
        frame.t = ctx.t;
        self.decoded.push(&frame);
        Ok(())
    }

    fn on_command_tick(&mut self, ctx: &CommandContext) -> Result<Option<CommandEvent>> {
        let class = match self.policy.intent(ctx) {
            Intent::Positive => EegClass::Mi,
            Intent::Negative => EegClass::Rest,
            Intent::Switch => EegClass::Jaw,
        };
        if class != self.class {
            self.synth.start_trial();
            self.class = class;
        }
        Ok(self.decoded.tick(ctx))
    }
}

/// Recorded EEG played back at 125 Hz through the online decoder.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    rows: Vec<ReplayRow>,
    next: usize,
    decoded: DecodedCommands,
}

impl ReplaySource {
    pub fn new(rows: Vec<ReplayRow>, bundle: &ClassifierBundle) -> Self {
        Self {
            rows,
            next: 0,
            decoded: DecodedCommands::new(bundle),
        }
    }
}

impl CommandSource for ReplaySource {
    fn eeg_rate(&self) -> Option<f64> {
        Some(FS)
    }

    fn on_eeg_sample(&mut self, ctx: &CommandContext) -> Result<()> {
        if let Some(r) = self.rows.get(self.next) {
            self.next += 1;
            self.decoded.push(&EegFrame {
                t: ctx.t,
                channels: r.channels,
            });
        }
        Ok(())
    }

    fn on_command_tick(&mut self, ctx: &CommandContext) -> Result<Option<CommandEvent>> {
        if self.next >= self.rows.len() {
            return Ok(None);
        }
        Ok(self.decoded.tick(ctx))
    }
}

/// Command as sent by an external client: a sign along the active axis or
/// an axis switch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InboxCommand {
    Sign(i8),
    Switch,
}

/// Shared queue filled by the service; one command is consumed per tick.
#[derive(Debug, Clone, Default)]
pub struct CommandInbox {
    queue: Arc<Mutex<VecDeque<InboxCommand>>>,
}

impl CommandInbox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, cmd: InboxCommand) -> Result<()> {
        if let InboxCommand::Sign(s) = cmd {
            if s != 1 && s != -1 {
                return Err(Error::InvalidParameter(format!(
                    "sign must be +1 or -1, got {s}"
                )));
            }
        }
        self.queue
            .lock()
            .expect("inbox lock poisoned")
            .push_back(cmd);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.queue.lock().expect("inbox lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn pop(&self) -> Option<InboxCommand> {
        self.queue.lock().expect("inbox lock poisoned").pop_front()
    }
}

#[derive(Debug, Clone)]
pub struct InboxSource {
    inbox: CommandInbox,
}

impl InboxSource {
    pub fn new(inbox: CommandInbox) -> Self {
        Self { inbox }
    }
}

impl CommandSource for InboxSource {
    fn on_command_tick(&mut self, ctx: &CommandContext) -> Result<Option<CommandEvent>> {
        Ok(match self.inbox.pop() {
            None => None,
            Some(InboxCommand::Switch) => Some(CommandEvent::switch(ctx.t, ctx.axis)),
            Some(InboxCommand::Sign(s)) => Some(CommandEvent::step(ctx.t, ctx.axis, s)?),
        })
    }
}

fn read_bundle(path: &Path) -> Result<ClassifierBundle> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    ClassifierBundle::from_json(&text)
}

/// Builds the source named in a scenario. Relative paths resolve against
/// `base_dir`. Returns `None` for privileged runs; inbox runs get a fresh
/// inbox (use [`InboxSource::new`] to share one).
pub fn build_source(
    scenario: &Scenario,
    base_dir: &Path,
) -> Result<Option<Box<dyn CommandSource>>> {
    let seed = scenario.seed ^ 0x5eed_c0de;
    Ok(match &scenario.command {
        CommandSourceConfig::Privileged => None,
        CommandSourceConfig::Scripted { events } => Some(Box::new(ScriptedSource::new(events))),
        CommandSourceConfig::Ideal { user } => Some(Box::new(IdealUser::new(*user))),
        CommandSourceConfig::Noisy {
            user,
            mi_accuracy,
            jaw_tpr,
            jaw_fpr,
        } => Some(Box::new(NoisyUser::new(
            *user,
            *mi_accuracy,
            *jaw_tpr,
            *jaw_fpr,
            seed,
        ))),
        CommandSourceConfig::Eeg {
            classifiers,
            user,
            synth,
        } => {
            let bundle = read_bundle(&base_dir.join(classifiers))?;
            let synth = SynthConfig {
                seed: synth.seed ^ seed,
                ..synth.clone()
            };
            Some(Box::new(EegUser::new(*user, synth, &bundle)?))
        }
        CommandSourceConfig::Replay { path, classifiers } => {
            let bundle = read_bundle(&base_dir.join(classifiers))?;
            let p = base_dir.join(path);
            let file =
                std::fs::File::open(&p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            Some(Box::new(ReplaySource::new(read_replay_csv(file)?, &bundle)))
        }
        CommandSourceConfig::Inbox => Some(Box::new(InboxSource::new(CommandInbox::new()))),
    })
}
