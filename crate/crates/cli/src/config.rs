//! Configuration files for the verbs that do not take an experiment config.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hsa_core::signal::{SynthConfig, TrainSettings};
use hsa_core::simulator::Scenario;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::serve::ServeOptions;

pub fn read_toml<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

/// `train-classifiers`: either a recorded session (`replay`) or a synthetic
/// one with `cues_per_class` cues of each class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub replay: Option<PathBuf>,
    pub cues_per_class: usize,
    /// Rest before each cue, s.
    pub baseline_s: f64,
    /// Cue duration, s.
    pub active_s: f64,
    pub synth: SynthConfig,
    pub settings: TrainSettings,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            replay: None,
            cues_per_class: 50,
            baseline_s: 2.0,
            active_s: 4.0,
            synth: SynthConfig::default(),
            settings: TrainSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub addr: String,
    pub frame_rate: f64,
    pub speed: f64,
    pub client_buffer: usize,
    /// Session length, s.
    pub duration_s: f64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        let o = ServeOptions::default();
        Self {
            addr: "127.0.0.1:8765".into(),
            frame_rate: o.frame_rate,
            speed: o.speed,
            client_buffer: o.client_buffer,
            duration_s: 86_400.0,
        }
    }
}

impl ServiceConfig {
    pub fn options(&self) -> ServeOptions {
        ServeOptions {
            frame_rate: self.frame_rate,
            speed: self.speed,
            client_buffer: self.client_buffer,
        }
    }
}

/// `serve`: the simulated robot plus service settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub scenario: Scenario,
    pub service: ServiceConfig,
}
