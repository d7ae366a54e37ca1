use std::fs;
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hsa_core::harness::{
    compute_step_metrics, run_experiment, run_seeds, setpoints_from_log, write_report, Experiment,
    ExperimentConfig, ExperimentReport,
};
use hsa_core::planner::compute_workspace;
use hsa_core::signal::{
    read_replay_csv, train_classifiers, write_replay_csv, ClassSchedule, EegClass, SynthEeg,
};
use hsa_core::simulator::read_log_csv;
use serde::Serialize;

use crate::config::{read_toml, ServeConfig, TrainConfig};
use crate::serve::Service;

/// Flags shared by every verb.
#[derive(Debug, Clone, Default)]
pub struct Common {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Common {
    fn base_dir(&self) -> PathBuf {
        self.config
            .as_deref()
            .and_then(Path::parent)
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    }

    fn out_dir(&self, default: &str) -> Result<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from(default));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    fn experiment_config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            None => ExperimentConfig::default(),
            Some(p) => {
                let text =
                    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                ExperimentConfig::from_toml_str(&text)
                    .with_context(|| format!("parsing {}", p.display()))?
            }
        };
        if let Some(seed) = self.seed {
            cfg.scenario.seed = seed;
        }
        Ok(cfg)
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    print_text(&serde_json::to_string_pretty(value)?)
}

/// A closed stdout (`| head`) is not an error.
fn print_text(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

pub fn workspace(c: &Common) -> Result<()> {
    let cfg = c.experiment_config()?;
    let ws = compute_workspace(&cfg.scenario.robot, cfg.scenario.workspace_grid)?;
    let out = c.out_dir("workspace")?;
    fs::write(out.join("workspace.json"), ws.to_json()?)?;
    let mut csv = String::from("x,y\n");
    for p in &ws.boundary {
        csv.push_str(&format!("{},{}\n", p[0], p[1]));
    }
    fs::write(out.join("boundary.csv"), csv)?;
    let (lo, hi) = ws.bounding_box();
    print_json(&serde_json::json!({
        "grid_n": ws.grid_n,
        "samples": ws.samples.len(),
        "failed": ws.failed.len(),
        "boundary_points": ws.boundary.len(),
        "bounding_box": [[lo[0], lo[1]], [hi[0], hi[1]]],
        "out": out,
    }))
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    mi_cv_accuracy: f64,
    jaw_cv_accuracy: f64,
    passes_gates: bool,
    epochs_source: String,
    out: PathBuf,
}

pub fn train(c: &Common) -> Result<()> {
    let mut cfg: TrainConfig = read_toml(c.config.as_deref())?;
    if let Some(seed) = c.seed {
        cfg.synth.seed = seed;
    }
    let out = c.out_dir("classifiers")?;
    let (rows, source) = match &cfg.replay {
        Some(path) => {
            let p = c.base_dir().join(path);
            let file = fs::File::open(&p).with_context(|| format!("opening {}", p.display()))?;
            (read_replay_csv(file)?, p.display().to_string())
        }
        None => {
            let schedule = ClassSchedule::balanced(
                &[EegClass::Rest, EegClass::Mi, EegClass::Jaw],
                cfg.cues_per_class,
                cfg.baseline_s,
                cfg.active_s,
                cfg.synth.seed,
            );
            let rows = SynthEeg::new(cfg.synth.clone())?.render(&schedule);
            let file = fs::File::create(out.join("training.csv"))?;
            write_replay_csv(std::io::BufWriter::new(file), &rows)?;
            (rows, "synthetic".to_string())
        }
    };
    let bundle = train_classifiers(&rows, &cfg.settings)?;
    fs::write(out.join("classifiers.json"), bundle.to_json()?)?;
    print_json(&TrainSummary {
        mi_cv_accuracy: bundle.mi_cv_accuracy,
        jaw_cv_accuracy: bundle.jaw_cv_accuracy,
        passes_gates: bundle.passes_gates(),
        epochs_source: source,
        out,
    })?;
    anyhow::ensure!(
        bundle.passes_gates(),
        "classifier accuracy below the training gates"
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct RunSummary {
    experiment: Experiment,
    seed: u64,
    config_hash: String,
    success_rate: Option<f64>,
    mean_response_time: Option<f64>,
    spray_events: Option<usize>,
    out: PathBuf,
}

impl RunSummary {
    fn new(r: &ExperimentReport, out: PathBuf) -> Self {
        Self {
            experiment: r.experiment,
            seed: r.seed,
            config_hash: r.config_hash.clone(),
            success_rate: r.metrics.as_ref().map(|m| m.success_rate),
            mean_response_time: r.metrics.as_ref().and_then(|m| m.mean_response_time),
            spray_events: r.adl.as_ref().map(|a| a.spray_events.len()),
            out,
        }
    }
}

pub fn run(c: &Common, kind: Experiment, repeat: usize) -> Result<()> {
    let cfg = c.experiment_config()?;
    let out = c.out_dir(&format!("runs/{kind}"))?;
    if repeat <= 1 {
        let report = run_experiment(kind, &cfg, &c.base_dir(), None)?;
        write_report(&report, &out)?;
        return print_json(&RunSummary::new(&report, out));
    }
    let first = cfg.scenario.seed;
    let seeds: Vec<u64> = (first..first + repeat as u64).collect();
    let reports = run_seeds(kind, &cfg, &seeds, &c.base_dir())?;
    let mut runs = Vec::new();
    for r in &reports {
        let dir = out.join(format!("seed-{}", r.seed));
        write_report(r, &dir)?;
        runs.push(RunSummary::new(r, dir));
    }
    let rates: Vec<f64> = runs.iter().filter_map(|r| r.success_rate).collect();
    let summary = serde_json::json!({
        "experiment": kind,
        "seeds": seeds,
        "mean_success_rate": (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64),
        "runs": runs,
    });
    fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    print_json(&summary)
}

pub fn metrics(c: &Common, log: &Path, proximity: Option<f64>, budget: Option<f64>) -> Result<()> {
    let cfg = c.experiment_config()?;
    let file = fs::File::open(log).with_context(|| format!("opening {}", log.display()))?;
    let rows = read_log_csv(std::io::BufReader::new(file))?;
    let schedule = setpoints_from_log(&rows);
    let m = compute_step_metrics(
        &rows,
        &schedule,
        proximity.unwrap_or(cfg.protocol.proximity),
        budget.unwrap_or(cfg.protocol.step_duration),
    )?;
    let text = serde_json::to_string_pretty(&m)?;
    if let Some(dir) = &c.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("metrics.json"), &text)?;
    }
    print_text(&text)
}

pub fn serve(c: &Common, addr: Option<String>) -> Result<()> {
    let mut cfg: ServeConfig = read_toml(c.config.as_deref())?;
    if let Some(seed) = c.seed {
        cfg.scenario.seed = seed;
    }
    if let Some(a) = addr {
        cfg.service.addr = a;
    }
    cfg.scenario.duration_s = cfg.service.duration_s;
    let ws = compute_workspace(&cfg.scenario.robot, cfg.scenario.workspace_grid)?;
    let sink: Option<Box<dyn Write + Send>> = match &c.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("config.toml"), toml::to_string(&cfg)?)?;
            let f = fs::File::create(dir.join("log.csv"))?;
            Some(Box::new(std::io::BufWriter::new(f)))
        }
        None => None,
    };
    let listener = TcpListener::bind(&cfg.service.addr)
        .with_context(|| format!("binding {}", cfg.service.addr))?;
    let service = Service::start(&cfg.scenario, ws, listener, cfg.service.options(), sink)?;
    println!("listening on ws://{}", service.local_addr());
    std::io::stdout().flush()?;
    service.wait()
}
