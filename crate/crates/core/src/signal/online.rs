//! Streaming decoder and classifier training on labelled recordings.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::features::features_from_window;
use super::filters::{notch, SosFilter};
use super::{
    cross_validate, epoch_start, fit_ica, train_lda, EegClass, EegFrame, EpochFeatures, FilterBank,
    IcaModel, IcaSettings, LdaModel, ReplayRow, CHANNELS, EPOCH_LEN, FEATURE_DIM, FS, NOTCH_HZ,
    NOTCH_Q,
};
use crate::error::{Error, Result};

/// Notch followed by ICA artifact removal.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    notch: SosFilter,
    clean: nalgebra::Matrix3<f64>,
    mean: nalgebra::Vector3<f64>,
}

impl Preprocessor {
    pub fn new(ica: &IcaModel) -> Self {
        let sec = notch(NOTCH_HZ, NOTCH_Q, FS).expect("fixed notch is valid");
        Self {
            notch: SosFilter::new(vec![sec], CHANNELS),
            clean: ica.cleaning_matrix(),
            mean: ica.mean,
        }
    }

    pub fn process(&mut self, x: &[f64; CHANNELS]) -> [f64; CHANNELS] {
        let mut v = *x;
        self.notch.process_frame(&mut v);
        let y = self.mean + self.clean * (nalgebra::Vector3::from(v) - self.mean);
        [y[0], y[1], y[2]]
    }

    pub fn reset(&mut self) {
        self.notch.reset();
    }
}

/// Outputs of the two classifiers for one epoch, stamped with the time of
/// the epoch's last sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierDecision {
    pub t: f64,
    pub jaw: bool,
    pub jaw_score: f64,
    pub mi: bool,
    pub mi_score: f64,
}

/// Notch, ICA, Butterworth bank and 2 s epochs every 0.065 s, scored by the
/// jaw and motor-imagery classifiers.
#[derive(Debug, Clone)]
pub struct OnlineDecoder {
    pre: Preprocessor,
    bank: FilterBank,
    ring: VecDeque<[[f64; CHANNELS]; 2]>,
    n: usize,
    next_epoch: usize,
    jaw: LdaModel,
    mi: LdaModel,
}

impl OnlineDecoder {
    pub fn new(bundle: &ClassifierBundle) -> Self {
        Self {
            pre: Preprocessor::new(&bundle.ica),
            bank: FilterBank::standard(),
            ring: VecDeque::with_capacity(EPOCH_LEN),
            n: 0,
            next_epoch: 0,
            jaw: bundle.jaw.clone(),
            mi: bundle.mi.clone(),
        }
    }

    /// Consumes one frame; returns a decision whenever an epoch completes.
    pub fn push(&mut self, frame: &EegFrame) -> Option<ClassifierDecision> {
        let x = self.pre.process(&frame.channels);
        let y = self.bank.process(&x);
        if self.ring.len() == EPOCH_LEN {
            self.ring.pop_front();
        }
        self.ring.push_back(y);
        self.n += 1;
        if epoch_start(self.next_epoch) + EPOCH_LEN != self.n {
            return None;
        }
        self.next_epoch += 1;
        let f = features_from_window(self.ring.iter());
        let (jaw, jaw_score) = self.jaw.predict(&f);
        let (mi, mi_score) = self.mi.predict(&f);
        Some(ClassifierDecision {
            t: frame.t,
            jaw,
            jaw_score,
            mi,
            mi_score,
        })
    }
}

pub const BUNDLE_SCHEMA_VERSION: u32 = 1;

/// Everything the online decoder needs, plus training diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierBundle {
    pub version: u32,
    pub ica: IcaModel,
    /// Jaw clench vs rest; checked first.
    pub jaw: LdaModel,
    /// Motor imagery vs rest.
    pub mi: LdaModel,
    pub jaw_cv_accuracy: f64,
    pub mi_cv_accuracy: f64,
}

/// Cross-validated accuracy a bundle must reach before it is used online.
pub const MI_ACCURACY_GATE: f64 = 0.75;
pub const JAW_ACCURACY_GATE: f64 = 0.85;

impl ClassifierBundle {
    pub fn passes_gates(&self) -> bool {
        self.mi_cv_accuracy >= MI_ACCURACY_GATE && self.jaw_cv_accuracy >= JAW_ACCURACY_GATE
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let b: Self = serde_json::from_str(s)?;
        if b.version != BUNDLE_SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported classifier bundle version {}",
                b.version
            )));
        }
        Ok(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub gamma: f64,
    pub folds: usize,
    pub ica: IcaSettings,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            folds: 5,
            ica: IcaSettings::default(),
        }
    }
}

/// An epoch lying entirely inside one labelled run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelledEpoch {
    pub features: EpochFeatures,
    pub class: EegClass,
    /// Index of the contiguous label run the epoch came from.
    pub group: usize,
}

/// Fits ICA on the notch-filtered rest samples of a recording.
pub fn fit_rest_ica(rows: &[ReplayRow], settings: &IcaSettings) -> Result<IcaModel> {
    let sec = notch(NOTCH_HZ, NOTCH_Q, FS)?;
    let mut f = SosFilter::new(vec![sec], CHANNELS);
    let mut rest = Vec::new();
    for r in rows {
        let mut v = r.channels;
        f.process_frame(&mut v);
        if r.label == Some(EegClass::Rest) {
            rest.push(v);
        }
    }
    fit_ica(&rest, settings)
}

/// Runs the preprocessing chain over a recording and keeps epochs whose
/// samples all share one label.
pub fn labelled_epochs(rows: &[ReplayRow], ica: &IcaModel) -> Vec<LabelledEpoch> {
    let mut pre = Preprocessor::new(ica);
    let mut bank = FilterBank::standard();
    let bands: Vec<[[f64; CHANNELS]; 2]> = rows
        .iter()
        .map(|r| bank.process(&pre.process(&r.channels)))
        .collect();
    let mut run = Vec::with_capacity(rows.len());
    let mut g = 0usize;
    for (i, r) in rows.iter().enumerate() {
        if i > 0 && r.label != rows[i - 1].label {
            g += 1;
        }
        run.push(g);
    }
    let t0 = rows.first().map_or(0.0, |r| r.t);
    let mut out = Vec::new();
    let mut k = 0;
    loop {
        let s = epoch_start(k);
        k += 1;
        if s + EPOCH_LEN > rows.len() {
            break;
        }
        let e = s + EPOCH_LEN - 1;
        let Some(class) = rows[s].label else { continue };
        if run[s] != run[e] {
            continue;
        }
        out.push(LabelledEpoch {
            features: EpochFeatures {
                start_t: t0 + s as f64 / FS,
                log_power: features_from_window(bands[s..=e].iter()),
            },
            class,
            group: run[s],
        });
    }
    out
}

/// Trains both classifiers with grouped cross-validation. Jaw clench is
/// trained against rest, as is motor imagery.
pub fn train_classifiers(rows: &[ReplayRow], settings: &TrainSettings) -> Result<ClassifierBundle> {
    let ica = fit_rest_ica(rows, &settings.ica)?;
    let epochs = labelled_epochs(rows, &ica);
    let pick = |positive: EegClass| {
        let mut f: Vec<[f64; FEATURE_DIM]> = Vec::new();
        let mut l = Vec::new();
        let mut g = Vec::new();
        for e in &epochs {
            if e.class == positive || e.class == EegClass::Rest {
                f.push(e.features.log_power);
                l.push(e.class == positive);
                g.push(e.group);
            }
        }
        (f, l, g)
    };
    let (jf, jl, jg) = pick(EegClass::Jaw);
    let (mf, ml, mg) = pick(EegClass::Mi);
    let jaw_cv_accuracy = cross_validate(&jf, &jl, &jg, settings.folds, settings.gamma)?;
    let mi_cv_accuracy = cross_validate(&mf, &ml, &mg, settings.folds, settings.gamma)?;
    Ok(ClassifierBundle {
        version: BUNDLE_SCHEMA_VERSION,
        jaw: train_lda(&jf, &jl, settings.gamma, ["rest", "jaw"])?,
        mi: train_lda(&mf, &ml, settings.gamma, ["rest", "mi"])?,
        ica,
        jaw_cv_accuracy,
        mi_cv_accuracy,
    })
}
