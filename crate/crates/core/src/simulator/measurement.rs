//! Motion-capture stand-in: noisy pose samples and Savitzky-Golay velocity.

use std::collections::VecDeque;

use nalgebra::{DMatrix, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    forward_kinematics, pose_jacobian, Configuration, ConfigurationRate, RobotParams, TaskPose,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// When false the controller reads the true state.
    pub enabled: bool,
    /// Position noise, m.
    pub sigma: f64,
    /// Orientation noise, rad.
    pub sigma_theta: f64,
    /// Sampling rate, Hz.
    pub rate: f64,
    pub window: usize,
    pub order: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            sigma: 1e-4,
            sigma_theta: 1e-3,
            rate: 200.0,
            window: 15,
            order: 3,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !(self.sigma_theta >= 0.0) || !(self.rate > 0.0) {
            return Err(Error::InvalidParameter(
                "noise sigma must be >= 0 and rate > 0".into(),
            ));
        }
        if self.order < 1 || self.window <= self.order {
            return Err(Error::InvalidParameter(
                "Savitzky-Golay window must exceed the order".into(),
            ));
        }
        Ok(())
    }
}

/// Causal Savitzky-Golay first-derivative kernel: least-squares polynomial of
/// `order` over the last `window` samples, differentiated at the newest one.
/// `kernel[i]` multiplies the sample `window - 1 - i` steps in the past.
pub fn savitzky_golay_derivative(window: usize, order: usize, dt: f64) -> Result<Vec<f64>> {
    if order < 1 || window <= order || !(dt > 0.0) {
        return Err(Error::InvalidParameter(
            "Savitzky-Golay needs window > order >= 1 and dt > 0".into(),
        ));
    }
    // Sample i sits at u = i - (window - 1), so the newest is at u = 0.
    let a = DMatrix::from_fn(window, order + 1, |i, j| {
        (i as f64 - (window - 1) as f64).powi(j as i32)
    });
    let ata = a.transpose() * &a;
    let inv = ata
        .try_inverse()
        .ok_or_else(|| Error::NotInvertible("Savitzky-Golay normal equations".into()))?;
    let pinv = inv * a.transpose();
    Ok(pinv.row(1).iter().map(|c| c / dt).collect())
}

/// A pose sample and the velocity estimate available at that time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub t: f64,
    pub pose: TaskPose,
    /// `(x_dot, y_dot, theta_dot)`.
    pub velocity: Vector3<f64>,
}

impl Measurement {
    /// Configuration and rate reconstructed from the measured pose.
    pub fn configuration(
        &self,
        params: &RobotParams,
    ) -> Result<(Configuration, ConfigurationRate)> {
        let q = crate::model::inverse_kinematics(&self.pose, params)?;
        let jp = pose_jacobian(&q, params);
        let qd = jp
            .lu()
            .solve(&self.velocity)
            .ok_or_else(|| Error::NotInvertible("pose Jacobian is singular".into()))?;
        Ok((q, ConfigurationRate::from_vector(&qd)))
    }
}

#[derive(Debug, Clone)]
pub struct MeasurementModel {
    cfg: NoiseConfig,
    rng: ChaCha8Rng,
    kernel: Vec<f64>,
    history: VecDeque<Vector3<f64>>,
    last: Option<Measurement>,
}

impl MeasurementModel {
    pub fn new(cfg: NoiseConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            kernel: savitzky_golay_derivative(cfg.window, cfg.order, 1.0 / cfg.rate)?,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            history: VecDeque::with_capacity(cfg.window),
            last: None,
        })
    }

    pub fn config(&self) -> &NoiseConfig {
        &self.cfg
    }

    pub fn last(&self) -> Option<&Measurement> {
        self.last.as_ref()
    }

    /// Records one pose sample. Until the window is full the velocity
    /// estimate is zero.
    pub fn sample(
        &mut self,
        t: f64,
        q: &Configuration,
        params: &RobotParams,
    ) -> Result<Measurement> {
        let truth = forward_kinematics(q, params.length, params)?;
        let mut p = Vector3::new(truth.x[0], truth.x[1], truth.theta);
        if self.cfg.sigma > 0.0 {
            let n = Normal::new(0.0, self.cfg.sigma).expect("sigma validated");
            p[0] += n.sample(&mut self.rng);
            p[1] += n.sample(&mut self.rng);
        }
        if self.cfg.sigma_theta > 0.0 {
            let n = Normal::new(0.0, self.cfg.sigma_theta).expect("sigma validated");
            p[2] += n.sample(&mut self.rng);
        }
        // Unwrap the angle against the previous sample so the filter sees a
        // continuous signal.
        if let Some(prev) = self.history.back() {
            p[2] = prev[2] + crate::model::wrap_angle(p[2] - prev[2]);
        }
        if self.history.len() == self.cfg.window {
            self.history.pop_front();
        }
        self.history.push_back(p);
        let velocity = if self.history.len() == self.cfg.window {
            self.history
                .iter()
                .zip(&self.kernel)
                .fold(Vector3::zeros(), |acc, (v, k)| acc + v * *k)
        } else {
            Vector3::zeros()
        };
        let m = Measurement {
            t,
            pose: TaskPose::new(Vector2::new(p[0], p[1]), p[2]),
            velocity,
        };
        self.last = Some(m);
        Ok(m)
    }
}
