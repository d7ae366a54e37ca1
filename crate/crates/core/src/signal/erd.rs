//! Event-related (de)synchronization: `(P(t, f) - P_base(f)) / P_base(f)`.

use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{CHANNELS, FS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    /// Hann window length, samples.
    pub window: usize,
    /// Frame hop, samples.
    pub hop: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window: 125,
            hop: 13,
        }
    }
}

/// Trial-averaged time-frequency power and its relative change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErdMap {
    /// Frame centres relative to the cue, s.
    pub times: Vec<f64>,
    pub freqs: Vec<f64>,
    /// `[channel][frame][bin]`.
    pub power: Vec<Vec<Vec<f64>>>,
    /// `[channel][bin]`.
    pub baseline: Vec<Vec<f64>>,
    /// `[channel][frame][bin]`.
    pub erd: Vec<Vec<Vec<f64>>>,
}

/// Computes the ERD/ERS map of cue-locked trials.
///
/// Every trial holds the same number of samples with the cue at sample
/// `cue_index`; frames lying entirely inside `baseline` (seconds relative to
/// the cue) form the reference spectrum.
pub fn erd_ers(
    trials: &[Vec<[f64; CHANNELS]>],
    cue_index: usize,
    baseline: (f64, f64),
    cfg: &StftConfig,
) -> Result<ErdMap> {
    let len = trials.first().map(Vec::len).unwrap_or(0);
    if trials.is_empty()
        || trials.iter().any(|t| t.len() != len)
        || len < cfg.window
        || cfg.hop == 0
    {
        return Err(Error::InsufficientData(
            "trials must be non-empty, equal length and longer than one window".into(),
        ));
    }
    let n_frames = (len - cfg.window) / cfg.hop + 1;
    let n_bins = cfg.window / 2 + 1;
    let hann: Vec<f64> = (0..cfg.window)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / cfg.window as f64).cos())
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(cfg.window);
    let mut power = vec![vec![vec![0.0; n_bins]; n_frames]; CHANNELS];
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.window];
    for trial in trials {
        for (c, pc) in power.iter_mut().enumerate() {
            for (f, pf) in pc.iter_mut().enumerate() {
                let start = f * cfg.hop;
                for (n, b) in buf.iter_mut().enumerate() {
                    *b = Complex64::new(trial[start + n][c] * hann[n], 0.0);
                }
                fft.process(&mut buf);
                for (k, p) in pf.iter_mut().enumerate() {
                    *p += buf[k].norm_sqr();
                }
            }
        }
    }
    let scale = 1.0 / trials.len() as f64;
    power
        .iter_mut()
        .flatten()
        .flatten()
        .for_each(|p| *p *= scale);

    let frame_start = |f: usize| (f * cfg.hop) as f64 / FS - cue_index as f64 / FS;
    let times: Vec<f64> = (0..n_frames)
        .map(|f| frame_start(f) + cfg.window as f64 / (2.0 * FS))
        .collect();
    let base_frames: Vec<usize> = (0..n_frames)
        .filter(|&f| {
            let s = frame_start(f);
            s >= baseline.0 - 1e-9 && s + cfg.window as f64 / FS <= baseline.1 + 1e-9
        })
        .collect();
    if base_frames.is_empty() {
        return Err(Error::InsufficientData(
            "no frame fits inside the baseline window".into(),
        ));
    }
    let mut base = vec![vec![0.0; n_bins]; CHANNELS];
    for c in 0..CHANNELS {
        for k in 0..n_bins {
            base[c][k] =
                base_frames.iter().map(|&f| power[c][f][k]).sum::<f64>() / base_frames.len() as f64;
        }
    }
    let mut erd = vec![vec![vec![0.0; n_bins]; n_frames]; CHANNELS];
    for c in 0..CHANNELS {
        for k in 0..n_bins {
            if !(base[c][k] > 0.0) {
                return Err(Error::ZeroBaseline { channel: c, bin: k });
            }
            for f in 0..n_frames {
                erd[c][f][k] = (power[c][f][k] - base[c][k]) / base[c][k];
            }
        }
    }
    Ok(ErdMap {
        times,
        freqs: (0..n_bins)
            .map(|k| k as f64 * FS / cfg.window as f64)
            .collect(),
        power,
        baseline: base,
        erd,
    })
}

/// Relative change of the summed power in `[f_lo, f_hi]` over frames centred
/// in `[t_lo, t_hi]`.
pub fn band_erd(map: &ErdMap, channel: usize, band: (f64, f64), span: (f64, f64)) -> Result<f64> {
    let bins: Vec<usize> = (0..map.freqs.len())
        .filter(|&k| map.freqs[k] >= band.0 - 1e-9 && map.freqs[k] <= band.1 + 1e-9)
        .collect();
    let frames: Vec<usize> = (0..map.times.len())
        .filter(|&f| map.times[f] >= span.0 && map.times[f] <= span.1)
        .collect();
    if bins.is_empty() || frames.is_empty() {
        return Err(Error::InsufficientData("empty band or time span".into()));
    }
    let base: f64 = bins.iter().map(|&k| map.baseline[channel][k]).sum();
    if !(base > 0.0) {
        return Err(Error::ZeroBaseline {
            channel,
            bin: bins[0],
        });
    }
    let p: f64 = frames
        .iter()
        .map(|&f| bins.iter().map(|&k| map.power[channel][f][k]).sum::<f64>())
        .sum::<f64>()
        / frames.len() as f64;
    Ok((p - base) / base)
}
