//! Two-class shrinkage LDA.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{BANDS, CHANNEL_NAMES};
use crate::error::{Error, Result};

pub const LDA_SCHEMA_VERSION: u32 = 1;

/// Decision `w^T f + b > 0` selects `class_labels[1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub version: u32,
    pub weights: Vec<f64>,
    pub bias: f64,
    /// `[negative, positive]`.
    pub class_labels: [String; 2],
    pub shrinkage: f64,
    /// Feature layout, band-major.
    pub bands: Vec<[f64; 2]>,
    pub channels: Vec<String>,
}

impl LdaModel {
    pub fn score(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }

    /// Returns `(positive, score)`.
    pub fn predict(&self, f: &[f64]) -> (bool, f64) {
        let s = self.score(f);
        (s > 0.0, s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.version != LDA_SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported LDA model version {}",
                m.version
            )));
        }
        if !m.weights.iter().all(|w| w.is_finite()) || !m.bias.is_finite() {
            return Err(Error::Parse("LDA model has non-finite weights".into()));
        }
        Ok(m)
    }
}

/// Pooled-covariance LDA with shrinkage
/// `S = (1 - gamma) S + gamma tr(S)/d I` and a log prior-ratio bias term.
pub fn train_lda<F: AsRef<[f64]>>(
    features: &[F],
    labels: &[bool],
    gamma: f64,
    class_labels: [&str; 2],
) -> Result<LdaModel> {
    if features.len() != labels.len() {
        return Err(Error::InvalidParameter(
            "features and labels differ in length".into(),
        ));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!(
            "shrinkage must be in [0, 1], got {gamma}"
        )));
    }
    let d = features.first().map(|f| f.as_ref().len()).unwrap_or(0);
    let n1 = labels.iter().filter(|&&l| l).count();
    let n0 = labels.len() - n1;
    if n0 < 2 || n1 < 2 || d == 0 {
        return Err(Error::InsufficientData(format!(
            "LDA needs at least 2 samples per class (got {n0} and {n1})"
        )));
    }
    let mut mu = [DVector::zeros(d), DVector::zeros(d)];
    for (f, &l) in features.iter().zip(labels) {
        mu[usize::from(l)] += DVector::from_column_slice(f.as_ref());
    }
    mu[0] /= n0 as f64;
    mu[1] /= n1 as f64;
    let mut cov = DMatrix::zeros(d, d);
    for (f, &l) in features.iter().zip(labels) {
        let r = DVector::from_column_slice(f.as_ref()) - &mu[usize::from(l)];
        cov += &r * r.transpose();
    }
    cov /= (labels.len() - 2) as f64;
    let avg_var = cov.trace() / d as f64;
    let shrunk = &cov * (1.0 - gamma) + DMatrix::identity(d, d) * (gamma * avg_var);
    let eig = shrunk.clone().symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(hi > 0.0) || lo <= 1e-12 * hi {
        return Err(Error::SingularCovariance);
    }
    let chol = shrunk.cholesky().ok_or(Error::SingularCovariance)?;
    let w = chol.solve(&(&mu[1] - &mu[0]));
    let bias = -0.5 * w.dot(&(&mu[0] + &mu[1])) + (n1 as f64 / n0 as f64).ln();
    Ok(LdaModel {
        version: LDA_SCHEMA_VERSION,
        weights: w.iter().copied().collect(),
        bias,
        class_labels: [class_labels[0].to_string(), class_labels[1].to_string()],
        shrinkage: gamma,
        bands: BANDS.iter().map(|&(lo, hi)| [lo, hi]).collect(),
        channels: CHANNEL_NAMES.iter().map(|s| s.to_string()).collect(),
    })
}

/// Grouped k-fold accuracy: samples sharing a group (e.g. one cue) are
/// always held out together; fold = group mod k.
pub fn cross_validate<F: AsRef<[f64]>>(
    features: &[F],
    labels: &[bool],
    groups: &[usize],
    folds: usize,
    gamma: f64,
) -> Result<f64> {
    if folds < 2 || groups.len() != labels.len() {
        return Err(Error::InvalidParameter(
            "cross-validation needs >= 2 folds and one group per sample".into(),
        ));
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    for k in 0..folds {
        let (mut tf, mut tl) = (Vec::new(), Vec::new());
        let mut held = Vec::new();
        for (i, (f, &l)) in features.iter().zip(labels).enumerate() {
            if groups[i] % folds == k {
                held.push(i);
            } else {
                tf.push(f.as_ref());
                tl.push(l);
            }
        }
        if held.is_empty() {
            continue;
        }
        let model = train_lda(&tf, &tl, gamma, ["0", "1"])?;
        for i in held {
            total += 1;
            if model.predict(features[i].as_ref()).0 == labels[i] {
                correct += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::InsufficientData("no held-out samples".into()));
    }
    Ok(correct as f64 / total as f64)
}
