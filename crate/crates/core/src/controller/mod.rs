//! Cartesian impedance control and the torque-to-twist mapping.

mod impedance;
mod lm;

pub use impedance::{anisotropic_stiffness, impedance_torque, lyapunov_value, ImpedanceGains};
pub use lm::{solve_actuation, solve_actuation_with, ControlOutput, LmSettings};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{
    dynamics_matrices, ActuationAngles, Configuration, ConfigurationRate, RobotParams,
};

/// One control-loop instance: gains, solver settings and the warm-start cell.
///
/// Not meant to be shared between loops; each loop owns its controller.
#[derive(Debug, Clone)]
pub struct Controller {
    pub gains: ImpedanceGains,
    pub settings: LmSettings,
    warm_start: ActuationAngles,
}

impl Controller {
    pub fn new(gains: ImpedanceGains, settings: LmSettings) -> Self {
        Self {
            gains,
            settings,
            warm_start: ActuationAngles::zero(),
        }
    }

    pub fn warm_start(&self) -> ActuationAngles {
        self.warm_start
    }

    pub fn reset(&mut self, phi: ActuationAngles) {
        self.warm_start = phi;
    }

    /// Evaluates the impedance law at `(q, qd)` and maps the torque to motor
    /// angles, warm-starting from the previous solution.
    pub fn step(
        &mut self,
        q: &Configuration,
        qd: &ConfigurationRate,
        x_at: &Vector2<f64>,
        params: &RobotParams,
    ) -> Result<ControlOutput> {
        let dynq = dynamics_matrices(q, qd, params)?;
        let tau = impedance_torque(q, qd, x_at, &dynq, &self.gains, params)?;
        let out = solve_actuation_with(&tau, q, &self.warm_start, params, &self.settings)?;
        self.warm_start = out.phi_d;
        Ok(out)
    }
}

/// Gains as they appear in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainsConfig {
    /// Cartesian stiffness, N/m.
    pub kp: f64,
    /// Cartesian damping, N s/m.
    pub kd: f64,
    /// Replaces `kp` with a stiffness aligned to a contact normal.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anisotropic: Option<AnisotropicConfig>,
    /// Cancel the robot's damping in the torque law. Off by default: the
    /// motors only see it after the actuation delay, where it destabilizes
    /// the loop.
    pub compensate_damping: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnisotropicConfig {
    /// Stiffness along the normal, N/m.
    pub k_perp: f64,
    /// Stiffness along the surface, N/m.
    pub k_par: f64,
    /// Polar angle of the normal, rad.
    pub theta_perp: f64,
}

impl Default for GainsConfig {
    fn default() -> Self {
        Self {
            kp: 300.0,
            kd: 1.5,
            anisotropic: None,
            compensate_damping: false,
        }
    }
}

impl GainsConfig {
    pub fn to_gains(&self) -> Result<ImpedanceGains> {
        let gains = match self.anisotropic {
            None => ImpedanceGains::isotropic(self.kp, self.kd)?,
            Some(a) => ImpedanceGains::new(
                anisotropic_stiffness(a.k_perp, a.k_par, a.theta_perp)?,
                nalgebra::Matrix2::identity() * self.kd,
            )?,
        };
        Ok(gains.with_damping_compensation(self.compensate_damping))
    }
}
