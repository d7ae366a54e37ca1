//! Experiment protocols, step-response metrics and report files.

mod experiment;
mod metrics;

pub use experiment::{
    generate_setpoints, run_experiment, run_seeds, AdlConfig, AdlMetrics, Experiment,
    ExperimentConfig, ExperimentReport, ProtocolConfig,
};
pub use metrics::{
    compute_step_metrics, setpoints_from_log, StepMetrics, StepResult, PROXIMITY, STEP_BUDGET,
};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::simulator::{write_log_csv, LogRow};

/// One coordinate over time: measured tip, attractor and reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSeries {
    pub actual: Vec<f64>,
    pub attractor: Vec<f64>,
    /// `null` before the first setpoint.
    pub reference: Vec<Option<f64>>,
}

/// Plot-ready columns: (a) x, (b) y, (c) configuration, (d) applied motor
/// angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub t: Vec<f64>,
    pub x: AxisSeries,
    pub y: AxisSeries,
    /// `[kappa_be, sigma_sh, sigma_ax]` per sample.
    pub q: Vec<[f64; 3]>,
    pub phi: Vec<[f64; 2]>,
}

impl PlotSeries {
    pub fn from_log(log: &[LogRow]) -> Self {
        let axis = |i: usize| AxisSeries {
            actual: log.iter().map(|r| r.x[i]).collect(),
            attractor: log.iter().map(|r| r.x_at[i]).collect(),
            reference: log
                .iter()
                .map(|r| (!r.xd_ref[i].is_nan()).then_some(r.xd_ref[i]))
                .collect(),
        };
        Self {
            t: log.iter().map(|r| r.t).collect(),
            x: axis(0),
            y: axis(1),
            q: log.iter().map(|r| r.q).collect(),
            phi: log.iter().map(|r| r.phi_applied).collect(),
        }
    }
}

/// Summary written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub experiment: Experiment,
    pub seed: u64,
    pub config_hash: String,
    pub duration_s: f64,
    pub control_calls: usize,
    pub command_ticks: usize,
    pub commands: usize,
    pub non_converged: usize,
    pub max_residual: f64,
    pub metrics: Option<StepMetrics>,
    pub adl: Option<AdlMetrics>,
}

impl ReportSummary {
    pub fn new(r: &ExperimentReport) -> Self {
        Self {
            experiment: r.experiment,
            seed: r.seed,
            config_hash: r.config_hash.clone(),
            duration_s: r.scenario.duration_s,
            control_calls: r.output.control_calls,
            command_ticks: r.output.command_ticks,
            commands: r.output.commands.len(),
            non_converged: r.output.non_converged,
            max_residual: r
                .output
                .log
                .iter()
                .map(|l| l.residual_norm)
                .fold(0.0, f64::max),
            metrics: r.metrics.clone(),
            adl: r.adl.clone(),
        }
    }
}

/// Writes `log.csv`, `metrics.json`, `series.json`, `report.json` and the
/// effective `config.toml` / `scenario.toml` into `dir`.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let file = fs::File::create(dir.join("log.csv"))?;
    write_log_csv(std::io::BufWriter::new(file), &report.output.log)?;
    let summary = ReportSummary::new(report);
    let metrics = match (&summary.metrics, &summary.adl) {
        (Some(m), _) => serde_json::to_string_pretty(m)?,
        (None, Some(a)) => serde_json::to_string_pretty(a)?,
        (None, None) => "null".to_string(),
    };
    fs::write(dir.join("metrics.json"), metrics)?;
    fs::write(
        dir.join("series.json"),
        serde_json::to_string(&PlotSeries::from_log(&report.output.log))?,
    )?;
    fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    fs::write(dir.join("config.toml"), report.config.to_toml_string()?)?;
    fs::write(dir.join("scenario.toml"), report.scenario.to_toml_string()?)?;
    Ok(())
}
