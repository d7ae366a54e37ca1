use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{compute_step_metrics, StepMetrics, PROXIMITY, STEP_BUDGET};
use crate::controller::AnisotropicConfig;
use crate::error::{Error, Result};
use crate::model::tip_position;
use crate::planner::{compute_workspace, steady_state, Axis, Workspace};
use crate::simulator::{
    build_source, run_closed_loop, CommandSourceConfig, ContactSurface, Scenario, ScriptedCommand,
    Setpoint, SimulationOutput, UserConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    SetpointMi,
    SetpointPrivileged,
    Adl,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::SetpointMi => "setpoint_mi",
            Experiment::SetpointPrivileged => "setpoint_privileged",
            Experiment::Adl => "adl",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "setpoint_mi" => Ok(Experiment::SetpointMi),
            "setpoint_privileged" | "setpoint_priv" => Ok(Experiment::SetpointPrivileged),
            "adl" => Ok(Experiment::Adl),
            _ => Err(Error::InvalidParameter(format!("unknown experiment {s:?}"))),
        }
    }
}

/// Setpoint-regulation protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub steps: usize,
    /// Duration of each step, s.
    pub step_duration: f64,
    /// Proximity radius for success, m.
    pub proximity: f64,
    /// Minimum distance of a generated setpoint from the workspace edge, m.
    pub setpoint_margin: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            steps: 9,
            step_duration: STEP_BUDGET,
            proximity: PROXIMITY,
            setpoint_margin: 2e-3,
        }
    }
}

/// Wiping task: a wall across the direction of elongation, pressed with a
/// stiff normal and soft tangential impedance, then swept along.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdlConfig {
    pub duration: f64,
    /// Wall distance beyond the resting tip, m.
    pub wall_offset: f64,
    /// Commanded attractor depth behind the wall, m.
    pub depth: f64,
    pub k_env: f64,
    pub f_trigger: f64,
    pub k_perp: f64,
    pub k_par: f64,
    /// Tangential travel while in contact, m.
    pub sweep: f64,
    /// Pause between pressing and sweeping, s.
    pub press_time: f64,
}

impl Default for AdlConfig {
    fn default() -> Self {
        Self {
            duration: 40.0,
            wall_offset: 8e-3,
            depth: 4e-3,
            k_env: 2000.0,
            f_trigger: 1.0,
            k_perp: 500.0,
            k_par: 50.0,
            sweep: 8e-3,
            press_time: 10.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub protocol: ProtocolConfig,
    pub adl: AdlConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        cfg.scenario.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> Result<String> {
        let text = self.to_toml_string()?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }
}

/// Draws `n` setpoints uniformly over the workspace by rejection from its
/// bounding box, keeping only points at least `margin` inside the boundary.
pub fn generate_setpoints(
    ws: &Workspace,
    n: usize,
    margin: f64,
    seed: u64,
) -> Result<Vec<Vector2<f64>>> {
    let (lo, hi) = ws.bounding_box();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut tries = 0usize;
    while out.len() < n {
        tries += 1;
        if tries > 100_000 * n.max(1) {
            return Err(Error::InvalidParameter(format!(
                "no point lies {margin} m inside the workspace"
            )));
        }
        let x = Vector2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
        if ws.contains(&x) && ws.distance_to_boundary(&x) > margin {
            out.push(x);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdlMetrics {
    pub spray_events: Vec<f64>,
    pub max_normal_force: f64,
    pub first_contact: Option<f64>,
    /// True when the tip stayed on the wall from the first contact to the end.
    pub contact_kept: bool,
    /// Largest tangential distance from the first contact point while in
    /// contact, m.
    pub tangential_travel: f64,
}

/// Everything a run produces; see [`super::write_report`] for the files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: Experiment,
    pub seed: u64,
    pub config_hash: String,
    pub config: ExperimentConfig,
    /// Scenario as actually run (setpoints, source and contact filled in).
    pub scenario: Scenario,
    pub metrics: Option<StepMetrics>,
    pub adl: Option<AdlMetrics>,
    pub output: SimulationOutput,
}

/// Runs one experiment. `base_dir` resolves relative paths in the command
/// source (classifier bundles, replay files).
pub fn run_experiment(
    kind: Experiment,
    cfg: &ExperimentConfig,
    base_dir: &Path,
    workspace: Option<Workspace>,
) -> Result<ExperimentReport> {
    let mut sc = cfg.scenario.clone();
    let ws = match workspace {
        Some(ws) => ws,
        None => compute_workspace(&sc.robot, sc.workspace_grid)?,
    };
    match kind {
        Experiment::SetpointMi | Experiment::SetpointPrivileged => {
            let p = &cfg.protocol;
            let points = generate_setpoints(&ws, p.steps, p.setpoint_margin, sc.seed)?;
            sc.setpoints = points
                .iter()
                .enumerate()
                .map(|(i, &x)| Setpoint {
                    t: i as f64 * p.step_duration,
                    x,
                })
                .collect();
            sc.duration_s = p.steps as f64 * p.step_duration;
            if kind == Experiment::SetpointPrivileged {
                sc.command = CommandSourceConfig::Privileged;
            } else if sc.command == CommandSourceConfig::Privileged {
                sc.command = CommandSourceConfig::Noisy {
                    user: UserConfig::default(),
                    mi_accuracy: 0.75,
                    jaw_tpr: 0.85,
                    jaw_fpr: 0.15,
                };
            }
        }
        Experiment::Adl => configure_adl(&mut sc, &cfg.adl)?,
    }
    sc.validate()?;
    let source = build_source(&sc, base_dir)?;
    let output = run_closed_loop(&sc, Some(ws), source)?;
    let (metrics, adl) = match kind {
        Experiment::Adl => (None, Some(adl_metrics(&sc, &output)?)),
        _ => (
            Some(compute_step_metrics(
                &output.log,
                &sc.setpoints,
                cfg.protocol.proximity,
                cfg.protocol.step_duration,
            )?),
            None,
        ),
    };
    Ok(ExperimentReport {
        experiment: kind,
        seed: sc.seed,
        config_hash: cfg.hash()?,
        config: cfg.clone(),
        scenario: sc,
        metrics,
        adl,
        output,
    })
}

/// Wall across `+y`, anisotropic gains aligned with it and, unless the
/// scenario names a source, a scripted approach-press-sweep sequence.
fn configure_adl(sc: &mut Scenario, a: &AdlConfig) -> Result<()> {
    let plant = sc.plant_params().clone();
    let q = steady_state(&crate::model::ActuationAngles::zero(), &plant, &plant.q0)?;
    let x0 = tip_position(&q, &plant);
    let theta = std::f64::consts::FRAC_PI_2;
    sc.duration_s = a.duration;
    sc.contact = Some(ContactSurface {
        point: x0 + Vector2::new(0.0, a.wall_offset),
        theta_perp: theta,
        k_env: a.k_env,
        f_trigger: a.f_trigger,
    });
    sc.gains.anisotropic = Some(AnisotropicConfig {
        k_perp: a.k_perp,
        k_par: a.k_par,
        theta_perp: theta,
    });
    sc.setpoints.clear();
    if sc.command == CommandSourceConfig::Privileged {
        sc.initial_axis = Axis::Y;
        let n = |d: f64| (d.abs() / sc.delta_x).round() as usize;
        let sign = |d: f64| if d < 0.0 { -1 } else { 1 };
        let rate = sc.schedule.command_rate;
        let mut t = 0.5;
        let mut events = Vec::new();
        let mut push = |t: &mut f64, sign: i8, axis_switch: bool, repeat: usize, pause: f64| {
            events.push(ScriptedCommand {
                t: *t,
                sign,
                axis_switch,
                repeat,
            });
            *t += repeat as f64 / rate + pause;
        };
        push(&mut t, 1, false, n(a.wall_offset + a.depth), a.press_time);
        push(&mut t, 0, true, 1, 0.5);
        push(&mut t, sign(a.sweep), false, n(a.sweep), 0.0);
        if t >= a.duration {
            return Err(Error::InvalidParameter(format!(
                "ADL script needs {t:.1} s but the run lasts {} s",
                a.duration
            )));
        }
        sc.command = CommandSourceConfig::Scripted { events };
    }
    Ok(())
}

fn adl_metrics(sc: &Scenario, out: &SimulationOutput) -> Result<AdlMetrics> {
    let wall = sc
        .contact
        .ok_or_else(|| Error::InvalidParameter("ADL scenario has no contact surface".into()))?;
    let n = wall.normal();
    let tangent = Vector2::new(-n.y, n.x);
    let force = |r: &crate::simulator::LogRow| -Vector2::from(r.contact_f).dot(&n);
    let first = out.log.iter().position(|r| force(r) > 0.0);
    let (contact_kept, tangential_travel) = match first {
        None => (false, 0.0),
        Some(i) => {
            let x_c = Vector2::from(out.log[i].x);
            let rows = &out.log[i..];
            let kept = rows.iter().all(|r| force(r) > 0.0);
            let travel = rows
                .iter()
                .filter(|r| force(r) > 0.0)
                .map(|r| (Vector2::from(r.x) - x_c).dot(&tangent).abs())
                .fold(0.0, f64::max);
            (kept, travel)
        }
    };
    Ok(AdlMetrics {
        spray_events: out.spray_events.clone(),
        max_normal_force: out.log.iter().map(force).fold(0.0, f64::max),
        first_contact: first.map(|i| out.log[i].t),
        contact_kept,
        tangential_travel,
    })
}

/// Runs `kind` once per seed (in parallel) and returns the reports in seed
/// order.
pub fn run_seeds(
    kind: Experiment,
    cfg: &ExperimentConfig,
    seeds: &[u64],
    base_dir: &Path,
) -> Result<Vec<ExperimentReport>> {
    use rayon::prelude::*;
    let ws = compute_workspace(&cfg.scenario.robot, cfg.scenario.workspace_grid)?;
    seeds
        .par_iter()
        .map(|&seed| {
            let mut c = cfg.clone();
            c.scenario.seed = seed;
            run_experiment(kind, &c, base_dir, Some(ws.clone()))
        })
        .collect()
}
