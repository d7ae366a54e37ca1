use serde::{Deserialize, Serialize};

use super::{CHANNELS, EPOCH_HOP, EPOCH_LEN, FEATURE_DIM, FS};

/// Power floor applied before the logarithm.
pub const POWER_FLOOR: f64 = 1e-12;

/// Log band power of one epoch, band-major: `[band * CHANNELS + channel]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochFeatures {
    pub start_t: f64,
    pub log_power: [f64; FEATURE_DIM],
}

/// `ln(max(mean(x^2), 1e-12))`.
pub fn log_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return POWER_FLOOR.ln();
    }
    let p = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    p.max(POWER_FLOOR).ln()
}

/// First sample of epoch `k`; epochs start every 0.065 s (8.125 samples).
pub fn epoch_start(k: usize) -> usize {
    (k as f64 * EPOCH_HOP * FS + 1e-9).floor() as usize
}

pub(crate) fn features_from_window<'a, I>(window: I) -> [f64; FEATURE_DIM]
where
    I: Iterator<Item = &'a [[f64; CHANNELS]; 2]> + Clone,
{
    let mut out = [0.0; FEATURE_DIM];
    let mut n = 0usize;
    for s in window.clone() {
        n += 1;
        for b in 0..2 {
            for c in 0..CHANNELS {
                out[b * CHANNELS + c] += s[b][c] * s[b][c];
            }
        }
    }
    for v in &mut out {
        *v = if n == 0 {
            POWER_FLOOR
        } else {
            (*v / n as f64).max(POWER_FLOOR)
        };
        *v = v.ln();
    }
    out
}

/// Slides 2 s epochs over band streams `[band][sample][channel]` that start at
/// time `t0`.
pub fn epoch_features(bands: &[Vec<[f64; CHANNELS]>; 2], t0: f64) -> Vec<EpochFeatures> {
    let len = bands[0].len().min(bands[1].len());
    let mut out = Vec::new();
    let mut k = 0;
    loop {
        let start = epoch_start(k);
        if start + EPOCH_LEN > len {
            break;
        }
        let mut log_power = [0.0; FEATURE_DIM];
        for (b, band) in bands.iter().enumerate() {
            for c in 0..CHANNELS {
                let x: Vec<f64> = band[start..start + EPOCH_LEN]
                    .iter()
                    .map(|s| s[c])
                    .collect();
                log_power[b * CHANNELS + c] = self::log_power(&x);
            }
        }
        out.push(EpochFeatures {
            start_t: t0 + start as f64 / FS,
            log_power,
        });
        k += 1;
    }
    out
}
