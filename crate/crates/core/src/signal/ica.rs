//! FastICA (tanh contrast, symmetric decorrelation) with kurtosis-based
//! artifact rejection.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CHANNELS, FS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcaSettings {
    pub max_iter: usize,
    pub tol: f64,
    /// Components whose Pearson kurtosis exceeds this are removed.
    pub kurtosis_threshold: f64,
    /// Minimum fitting window, s.
    pub min_duration: f64,
    pub seed: u64,
}

impl Default for IcaSettings {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-6,
            kurtosis_threshold: 8.0,
            min_duration: 10.0,
            seed: 0,
        }
    }
}

/// `s = W (x - mean)`; cleaned data is `mean + A diag(keep) W (x - mean)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaModel {
    pub unmixing: Matrix3<f64>,
    pub mixing: Matrix3<f64>,
    pub mean: Vector3<f64>,
    pub kurtosis: [f64; CHANNELS],
    pub artifact: [bool; CHANNELS],
    /// False when the fit fell back to the identity.
    pub converged: bool,
    pub iterations: usize,
}

impl IcaModel {
    pub fn identity() -> Self {
        Self {
            unmixing: Matrix3::identity(),
            mixing: Matrix3::identity(),
            mean: Vector3::zeros(),
            kurtosis: [3.0; CHANNELS],
            artifact: [false; CHANNELS],
            converged: false,
            iterations: 0,
        }
    }

    pub fn sources(&self, x: &[f64; CHANNELS]) -> Vector3<f64> {
        self.unmixing * (Vector3::from(*x) - self.mean)
    }

    /// Linear map applied by [`IcaModel::clean`].
    pub fn cleaning_matrix(&self) -> Matrix3<f64> {
        let keep = Vector3::from_fn(|i, _| if self.artifact[i] { 0.0 } else { 1.0 });
        self.mixing * Matrix3::from_diagonal(&keep) * self.unmixing
    }

    pub fn clean(&self, x: &[f64; CHANNELS]) -> [f64; CHANNELS] {
        let y = self.mean + self.cleaning_matrix() * (Vector3::from(*x) - self.mean);
        [y[0], y[1], y[2]]
    }
}

/// Pearson kurtosis `E[(x - m)^4] / var^2` (3 for a Gaussian).
pub fn kurtosis(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in x {
        let d = (v - m) * (v - m);
        m2 += d;
        m4 += d * d;
    }
    m2 /= n;
    m4 /= n;
    if m2 <= 0.0 {
        return 0.0;
    }
    m4 / (m2 * m2)
}

fn inv_sqrt_sym(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let eig = m.symmetric_eigen();
    if eig.eigenvalues.min() <= 0.0 {
        return None;
    }
    let d = eig.eigenvalues.map(|v| 1.0 / v.sqrt());
    Some(eig.eigenvectors * Matrix3::from_diagonal(&d) * eig.eigenvectors.transpose())
}

/// Fits the unmixing matrix on a window of at least `min_duration` seconds.
///
/// Non-convergence or degenerate data yields [`IcaModel::identity`] with
/// `converged = false` rather than an error.
pub fn fit_ica(x: &[[f64; CHANNELS]], settings: &IcaSettings) -> Result<IcaModel> {
    let needed = (settings.min_duration * FS).ceil() as usize;
    if x.len() < needed {
        return Err(Error::InsufficientData(format!(
            "ICA needs {needed} samples, got {}",
            x.len()
        )));
    }
    let t = x.len();
    let mean = x
        .iter()
        .fold(Vector3::zeros(), |acc, s| acc + Vector3::from(*s))
        / t as f64;
    let mut centered = DMatrix::zeros(CHANNELS, t);
    for (j, s) in x.iter().enumerate() {
        for i in 0..CHANNELS {
            centered[(i, j)] = s[i] - mean[i];
        }
    }
    let cov: Matrix3<f64> = (&centered * centered.transpose() / t as f64)
        .fixed_view::<3, 3>(0, 0)
        .into();
    let eig = cov.symmetric_eigen();
    if eig.eigenvalues.min() <= 1e-12 * eig.eigenvalues.max().max(0.0) {
        log::warn!("ICA: rank-deficient covariance, falling back to identity");
        return Ok(IcaModel::identity());
    }
    let whitening = Matrix3::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()))
        * eig.eigenvectors.transpose();
    let z = DMatrix::from_iterator(3, 3, whitening.iter().copied()) * &centered;

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let w0 = Matrix3::from_fn(|_, _| StandardNormal.sample(&mut rng));
    let mut w = match inv_sqrt_sym(&(w0 * w0.transpose())) {
        Some(s) => s * w0,
        None => Matrix3::identity(),
    };
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..settings.max_iter {
        iterations = it + 1;
        let wd = DMatrix::from_iterator(3, 3, w.iter().copied());
        let y = &wd * &z;
        let g = y.map(f64::tanh);
        let gp_mean =
            Vector3::from_fn(|i, _| g.row(i).iter().map(|v| 1.0 - v * v).sum::<f64>() / t as f64);
        let gz = &g * z.transpose() / t as f64;
        let gz: Matrix3<f64> = gz.fixed_view::<3, 3>(0, 0).into();
        let w_new = gz - Matrix3::from_diagonal(&gp_mean) * w;
        let Some(s) = inv_sqrt_sym(&(w_new * w_new.transpose())) else {
            break;
        };
        let w_new = s * w_new;
        let lim = (w_new * w.transpose())
            .diagonal()
            .iter()
            .map(|d| (d.abs() - 1.0).abs())
            .fold(0.0, f64::max);
        w = w_new;
        if lim < settings.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "ICA did not converge in {} iterations; using identity",
            settings.max_iter
        );
        return Ok(IcaModel::identity());
    }
    let unmixing = w * whitening;
    let Some(mixing) = unmixing.try_inverse() else {
        return Ok(IcaModel::identity());
    };
    let sv = unmixing.singular_values();
    if sv.max() / sv.min() >= 1e8 {
        log::warn!("ICA unmixing matrix ill-conditioned; using identity");
        return Ok(IcaModel::identity());
    }
    let mut kurt = [0.0; CHANNELS];
    let mut artifact = [false; CHANNELS];
    for i in 0..CHANNELS {
        let s: Vec<f64> = x
            .iter()
            .map(|v| unmixing.row(i).dot(&(Vector3::from(*v) - mean).transpose()))
            .collect();
        kurt[i] = kurtosis(&s);
        artifact[i] = kurt[i] > settings.kurtosis_threshold;
    }
    Ok(IcaModel {
        unmixing,
        mixing,
        mean,
        kurtosis: kurt,
        artifact,
        converged: true,
        iterations,
    })
}
