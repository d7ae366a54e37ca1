//! Seeded synthetic three-channel EEG: pink background, a 10 Hz mu rhythm on
//! the contralateral channel, band-limited jaw EMG and optional blinks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use super::filters::{butterworth_bandpass, SosFilter};
use super::replay::ReplayRow;
use super::{EegFrame, CHANNELS, FS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EegClass {
    Rest,
    Mi,
    Jaw,
}

impl EegClass {
    pub fn as_str(self) -> &'static str {
        match self {
            EegClass::Rest => "rest",
            EegClass::Mi => "mi",
            EegClass::Jaw => "jaw",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rest" => Some(EegClass::Rest),
            "mi" => Some(EegClass::Mi),
            "jaw" => Some(EegClass::Jaw),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    /// RMS of the pink background per channel, uV.
    pub background_rms: f64,
    /// Mu rhythm amplitude at rest, uV.
    pub mu_amplitude: f64,
    pub mu_freq: f64,
    /// Channel carrying the mu rhythm (contralateral to the imagined hand).
    pub mu_channel: usize,
    /// Mu amplitude ratio during motor imagery.
    pub mu_gain: f64,
    /// Log-sd of the per-trial mu amplitude factor (mean square kept at 1).
    pub mu_jitter: f64,
    /// EMG RMS as a multiple of `background_rms`.
    pub emg_factor: f64,
    pub emg_band: (f64, f64),
    /// Blinks per second.
    pub blink_rate: f64,
    pub blink_amplitude: f64,
    /// Mains interference amplitude at 50 Hz, uV.
    pub line_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            background_rms: 5.0,
            mu_amplitude: 20.0,
            mu_freq: 10.0,
            mu_channel: 0,
            mu_gain: 0.6,
            mu_jitter: 0.2,
            emg_factor: 5.0,
            emg_band: (20.0, 60.0),
            blink_rate: 0.0,
            blink_amplitude: 150.0,
            line_noise: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(self.background_rms > 0.0) {
            return bad("background_rms must be positive");
        }
        if !(self.mu_amplitude >= 0.0) || !(self.mu_gain >= 0.0) || !(self.mu_jitter >= 0.0) {
            return bad("mu parameters must be non-negative");
        }
        if !(self.mu_freq > 0.0 && self.mu_freq < FS / 2.0) || self.mu_channel >= CHANNELS {
            return bad("mu rhythm frequency or channel out of range");
        }
        let (lo, hi) = self.emg_band;
        if !(0.0 < lo && lo < hi && hi < FS / 2.0) || !(self.emg_factor >= 0.0) {
            return bad("EMG band must satisfy 0 < lo < hi < fs/2");
        }
        if !(self.blink_rate >= 0.0) || !(self.line_noise >= 0.0) {
            return bad("blink rate and line noise must be non-negative");
        }
        Ok(())
    }
}

/// Lorentzian corner frequencies of the pink-noise bank, Hz.
const PINK_CORNERS: [f64; 7] = [0.25, 0.75, 2.0, 5.0, 12.0, 30.0, 60.0];
/// Blink spatial pattern over the three channels.
const BLINK_PATTERN: [f64; CHANNELS] = [1.0, 1.3, 0.8];
/// Blink half-width, s.
const BLINK_WIDTH: f64 = 0.12;

/// Streaming generator; one call to [`SynthEeg::next_frame`] per sample.
#[derive(Debug, Clone)]
pub struct SynthEeg {
    cfg: SynthConfig,
    rng: ChaCha8Rng,
    n: u64,
    pink_pole: [f64; PINK_CORNERS.len()],
    pink: [[f64; PINK_CORNERS.len()]; CHANNELS],
    mu_phase: f64,
    trial_gain: f64,
    emg: SosFilter,
    emg_scale: f64,
    blinks: Vec<f64>,
    next_blink: f64,
}

impl SynthEeg {
    pub fn new(cfg: SynthConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut pink_pole = [0.0; PINK_CORNERS.len()];
        for (p, fc) in pink_pole.iter_mut().zip(PINK_CORNERS) {
            *p = (-2.0 * std::f64::consts::PI * fc / FS).exp();
        }
        // Start every section in its stationary distribution.
        let mut pink = [[0.0; PINK_CORNERS.len()]; CHANNELS];
        for ch in &mut pink {
            for v in ch.iter_mut() {
                *v = rng.sample::<f64, _>(StandardNormal);
            }
        }
        let sections = butterworth_bandpass(2, cfg.emg_band.0, cfg.emg_band.1, FS)?;
        let emg_gain = noise_gain(&sections);
        let emg = SosFilter::new(sections, CHANNELS);
        let emg_scale = cfg.emg_factor * cfg.background_rms / emg_gain.sqrt();
        let mu_phase = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
        let next_blink = draw_interval(&mut rng, cfg.blink_rate);
        let mut s = Self {
            cfg,
            rng,
            n: 0,
            pink_pole,
            pink,
            mu_phase,
            trial_gain: 1.0,
            emg,
            emg_scale,
            blinks: Vec::new(),
            next_blink,
        };
        s.start_trial();
        Ok(s)
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    pub fn time(&self) -> f64 {
        self.n as f64 / FS
    }

    /// Draws a new per-trial mu amplitude factor.
    pub fn start_trial(&mut self) {
        let s = self.cfg.mu_jitter;
        let z: f64 = self.rng.sample(StandardNormal);
        self.trial_gain = (s * z - s * s).exp();
    }

    pub fn next_frame(&mut self, class: EegClass) -> EegFrame {
        let t = self.time();
        let k = PINK_CORNERS.len() as f64;
        let mut x = [0.0; CHANNELS];
        for (c, xc) in x.iter_mut().enumerate() {
            let mut sum = 0.0;
            for (i, &a) in self.pink_pole.iter().enumerate() {
                let w: f64 = self.rng.sample(StandardNormal);
                let v = a * self.pink[c][i] + (1.0 - a * a).sqrt() * w;
                self.pink[c][i] = v;
                sum += v;
            }
            *xc = self.cfg.background_rms * sum / k.sqrt();
        }

        let mu_amp = self.cfg.mu_amplitude
            * self.trial_gain
            * if class == EegClass::Mi {
                self.cfg.mu_gain
            } else {
                1.0
            };
        x[self.cfg.mu_channel] += mu_amp * self.mu_phase.sin();
        self.mu_phase = (self.mu_phase + 2.0 * std::f64::consts::PI * self.cfg.mu_freq / FS)
            % (2.0 * std::f64::consts::PI);

        // The EMG filter runs continuously so bursts have no start transient.
        let mut e = [0.0; CHANNELS];
        for v in &mut e {
            *v = self.rng.sample(StandardNormal);
        }
        self.emg.process_frame(&mut e);
        if class == EegClass::Jaw {
            for c in 0..CHANNELS {
                x[c] += self.emg_scale * e[c];
            }
        }

        if self.cfg.blink_rate > 0.0 {
            while self.next_blink <= t {
                self.blinks.push(self.next_blink + 2.0 * BLINK_WIDTH);
                self.next_blink +=
                    draw_interval(&mut self.rng, self.cfg.blink_rate).max(4.0 * BLINK_WIDTH);
            }
            self.blinks.retain(|&c| c > t - 4.0 * BLINK_WIDTH);
            let b: f64 = self
                .blinks
                .iter()
                .map(|&c| (-0.5 * ((t - c) / (0.5 * BLINK_WIDTH)).powi(2)).exp())
                .sum();
            for c in 0..CHANNELS {
                x[c] += self.cfg.blink_amplitude * BLINK_PATTERN[c] * b;
            }
        }

        if self.cfg.line_noise > 0.0 {
            let ph = 2.0 * std::f64::consts::PI * 50.0 * t;
            for v in &mut x {
                *v += self.cfg.line_noise * ph.sin();
            }
        }
        self.n += 1;
        EegFrame { t, channels: x }
    }

    /// One trial of `duration` seconds of a single class.
    pub fn generate(&mut self, class: EegClass, duration: f64) -> Vec<EegFrame> {
        self.start_trial();
        let n = (duration * FS).round() as usize;
        (0..n).map(|_| self.next_frame(class)).collect()
    }

    /// Renders a cue schedule into labelled rows, one trial factor per trial.
    pub fn render(&mut self, schedule: &ClassSchedule) -> Vec<ReplayRow> {
        let mut out = Vec::new();
        for trial in &schedule.trials {
            self.start_trial();
            for (class, dur) in [
                (EegClass::Rest, trial.baseline),
                (trial.class, trial.active),
            ] {
                let n = (dur * FS).round() as usize;
                for _ in 0..n {
                    let f = self.next_frame(class);
                    out.push(ReplayRow {
                        t: f.t,
                        channels: f.channels,
                        label: Some(class),
                    });
                }
            }
        }
        out
    }
}

/// `synth_eeg(class, duration, seed)` with default generator settings.
pub fn synth_eeg(class: EegClass, duration: f64, seed: u64) -> Vec<EegFrame> {
    let mut g = SynthEeg::new(SynthConfig {
        seed,
        ..SynthConfig::default()
    })
    .expect("default generator settings are valid");
    g.generate(class, duration)
}

fn draw_interval(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    if rate > 0.0 {
        Exp::new(rate)
            .map(|d| d.sample(rng))
            .unwrap_or(f64::INFINITY)
    } else {
        f64::INFINITY
    }
}

/// Output variance of a cascade driven by unit white noise.
fn noise_gain(sections: &[super::Biquad]) -> f64 {
    let mut f = SosFilter::new(sections.to_vec(), 1);
    let mut acc = 0.0;
    for n in 0..4096 {
        let y = f.process_sample(0, if n == 0 { 1.0 } else { 0.0 });
        acc += y * y;
    }
    acc
}

/// A cued trial: `baseline` seconds of rest followed by `active` seconds of
/// `class`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub class: EegClass,
    pub baseline: f64,
    pub active: f64,
}

impl Trial {
    pub fn duration(&self) -> f64 {
        self.baseline + self.active
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassSchedule {
    pub trials: Vec<Trial>,
}

impl ClassSchedule {
    /// `per_class` trials of each class in seeded random order.
    pub fn balanced(
        classes: &[EegClass],
        per_class: usize,
        baseline: f64,
        active: f64,
        seed: u64,
    ) -> Self {
        let mut trials: Vec<Trial> = classes
            .iter()
            .flat_map(|&class| {
                std::iter::repeat_n(
                    Trial {
                        class,
                        baseline,
                        active,
                    },
                    per_class,
                )
            })
            .collect();
        trials.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Self { trials }
    }

    pub fn duration(&self) -> f64 {
        self.trials.iter().map(Trial::duration).sum()
    }

    /// Start time of every trial's cue (end of its baseline).
    pub fn cue_times(&self) -> Vec<f64> {
        let mut t = 0.0;
        self.trials
            .iter()
            .map(|tr| {
                let cue = t + tr.baseline;
                t += tr.duration();
                cue
            })
            .collect()
    }
}
