//! EEG command pipeline: preprocessing, ICA, filter bank, log-power
//! features, LDA classifiers, decision logic and ERD/ERS analysis.

mod decision;
mod erd;
mod features;
mod filters;
mod ica;
mod lda;
mod online;
mod replay;
mod synth;

pub use decision::{map_to_command, JawSwitch, RateConverter};
pub use erd::{band_erd, erd_ers, ErdMap, StftConfig};
pub use features::{epoch_features, epoch_start, log_power, EpochFeatures, POWER_FLOOR};
pub use filters::{
    butterworth_bandpass, butterworth_bandpass_gain_sq, cascade_response, notch, Biquad, SosFilter,
};
pub use ica::{fit_ica, kurtosis, IcaModel, IcaSettings};
pub use lda::{cross_validate, train_lda, LdaModel, LDA_SCHEMA_VERSION};
pub use online::{
    fit_rest_ica, labelled_epochs, train_classifiers, ClassifierBundle, ClassifierDecision,
    LabelledEpoch, OnlineDecoder, Preprocessor, TrainSettings, BUNDLE_SCHEMA_VERSION,
    JAW_ACCURACY_GATE, MI_ACCURACY_GATE,
};
pub use replay::{read_replay_csv, write_replay_csv, ReplayRow, REPLAY_HEADER};
pub use synth::{synth_eeg, ClassSchedule, EegClass, SynthConfig, SynthEeg, Trial};

use serde::{Deserialize, Serialize};

/// Sampling rate of the amplifier, Hz.
pub const FS: f64 = 125.0;
/// Bipolar channels FC3-CP3, FCZ-CPZ, FC4-CP4.
pub const CHANNELS: usize = 3;
pub const CHANNEL_NAMES: [&str; CHANNELS] = ["fc3cp3", "fczcpz", "fc4cp4"];
/// Filter-bank bands, Hz.
pub const BANDS: [(f64, f64); 2] = [(8.0, 15.0), (15.0, 42.0)];
/// Prototype order of each band-pass.
pub const BANDPASS_ORDER: usize = 6;
pub const NOTCH_HZ: f64 = 50.0;
pub const NOTCH_Q: f64 = 30.0;
/// Epoch length in samples (2 s).
pub const EPOCH_LEN: usize = 250;
/// Epoch hop, s.
pub const EPOCH_HOP: f64 = 0.065;
pub const FEATURE_DIM: usize = CHANNELS * BANDS.len();

/// One sample of the three bipolar channels, in microvolts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EegFrame {
    pub t: f64,
    pub channels: [f64; CHANNELS],
}

/// Filter bank applied to a multichannel stream: one band-pass per band.
#[derive(Debug, Clone)]
pub struct FilterBank {
    bands: Vec<SosFilter>,
}

impl FilterBank {
    pub fn standard() -> Self {
        let bands = BANDS
            .iter()
            .map(|&(lo, hi)| {
                let sos = butterworth_bandpass(BANDPASS_ORDER, lo, hi, FS)
                    .expect("fixed band edges are valid");
                SosFilter::new(sos, CHANNELS)
            })
            .collect();
        Self { bands }
    }

    pub fn band(&self, i: usize) -> &SosFilter {
        &self.bands[i]
    }

    /// Returns `[band][channel]` outputs for one frame.
    pub fn process(&mut self, x: &[f64; CHANNELS]) -> [[f64; CHANNELS]; 2] {
        let mut out = [[0.0; CHANNELS]; 2];
        for (b, f) in self.bands.iter_mut().enumerate() {
            let mut v = *x;
            f.process_frame(&mut v);
            out[b] = v;
        }
        out
    }

    pub fn reset(&mut self) {
        self.bands.iter_mut().for_each(SosFilter::reset);
    }
}

/// Band streams of a whole recording: `[band][sample][channel]`.
pub fn filter_bank(x: &[[f64; CHANNELS]]) -> [Vec<[f64; CHANNELS]>; 2] {
    let mut bank = FilterBank::standard();
    let mut out = [Vec::with_capacity(x.len()), Vec::with_capacity(x.len())];
    for s in x {
        let y = bank.process(s);
        out[0].push(y[0]);
        out[1].push(y[1]);
    }
    out
}

/// Causal 50 Hz notch over a whole recording.
pub fn notch_filter(x: &[[f64; CHANNELS]]) -> Vec<[f64; CHANNELS]> {
    let sec = notch(NOTCH_HZ, NOTCH_Q, FS).expect("fixed notch is valid");
    let mut f = SosFilter::new(vec![sec], CHANNELS);
    x.iter()
        .map(|s| {
            let mut v = *s;
            f.process_frame(&mut v);
            v
        })
        .collect()
}
