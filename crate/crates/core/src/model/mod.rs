//! Planar constant-strain model of a handed-shearing-auxetic robot.
//!
//! The backbone starts at the origin pointing along +y, with x lateral. The
//! orientation angle is measured counterclockwise from the +y tangent, so
//! positive bending curvature moves the tip towards -x.

mod actuation;
mod dynamics;
mod kinematics;
mod params;
mod quadrature;
mod strain;

pub(crate) use actuation::actuation_force_unchecked;
pub use actuation::{
    actuation_force, actuation_jacobian, actuation_stiffness, rod_directions, rod_potential,
    rod_strains,
};
pub use dynamics::{
    coriolis_from_partials, dynamics_matrices, gravity_jacobian, mass_terms, mechanical_energy,
    DynamicsQuantities, MassTerms,
};
pub use kinematics::{
    backbone_polyline, forward_kinematics, inverse_kinematics, jacobian, jacobian_dot,
    pose_jacobian, position_jacobian_at, tip_position,
};
pub use params::RobotParams;
pub use quadrature::gauss_legendre;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

/// Strain coordinates of the single constant-strain segment.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Configuration {
    /// Bending strain, rad/m.
    pub kappa_be: f64,
    /// Shear strain.
    pub sigma_sh: f64,
    /// Axial strain; the segment length is `L * (1 + sigma_ax)`.
    pub sigma_ax: f64,
}

impl Configuration {
    pub const fn new(kappa_be: f64, sigma_sh: f64, sigma_ax: f64) -> Self {
        Self {
            kappa_be,
            sigma_sh,
            sigma_ax,
        }
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.kappa_be, self.sigma_sh, self.sigma_ax)
    }

    pub fn is_valid(&self) -> bool {
        self.kappa_be.is_finite()
            && self.sigma_sh.is_finite()
            && self.sigma_ax.is_finite()
            && self.sigma_ax > -1.0
    }
}

/// Time derivative of a [`Configuration`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfigurationRate {
    pub d_kappa_be: f64,
    pub d_sigma_sh: f64,
    pub d_sigma_ax: f64,
}

impl ConfigurationRate {
    pub const fn new(d_kappa_be: f64, d_sigma_sh: f64, d_sigma_ax: f64) -> Self {
        Self {
            d_kappa_be,
            d_sigma_sh,
            d_sigma_ax,
        }
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.d_kappa_be, self.d_sigma_sh, self.d_sigma_ax)
    }
}

/// Planar pose: position in metres and orientation in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskPose {
    pub x: Vector2<f64>,
    pub theta: f64,
}

impl TaskPose {
    pub fn new(x: Vector2<f64>, theta: f64) -> Self {
        Self {
            x,
            theta: wrap_angle(theta),
        }
    }
}

/// Motor twist magnitudes, one per rod.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActuationAngles {
    pub phi: Vector2<f64>,
}

impl ActuationAngles {
    pub fn new(phi1: f64, phi2: f64) -> Self {
        Self {
            phi: Vector2::new(phi1, phi2),
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn within_bounds(&self, phi_max: f64) -> bool {
        self.phi.iter().all(|p| (0.0..=phi_max).contains(p))
    }

    pub fn clamped(&self, phi_max: f64) -> Self {
        Self {
            phi: self.phi.map(|p| p.clamp(0.0, phi_max)),
        }
    }

    /// Signed servo positions, applying each rod's handedness.
    pub fn motor_positions(&self, params: &RobotParams) -> Vector2<f64> {
        Vector2::new(
            self.phi[0] * params.handedness[0],
            self.phi[1] * params.handedness[1],
        )
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::PI;
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(0.0), 0.0);
        assert!((wrap_angle(PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn configuration_validity() {
        assert!(Configuration::new(1.0, 0.1, -0.5).is_valid());
        assert!(!Configuration::new(1.0, 0.1, -1.0).is_valid());
        assert!(!Configuration::new(f64::NAN, 0.0, 0.0).is_valid());
    }

    #[test]
    fn clamping_actuation() {
        let a = ActuationAngles::new(-0.2, 4.0).clamped(3.49);
        assert_eq!(a.phi, Vector2::new(0.0, 3.49));
        assert!(a.within_bounds(3.49));
    }
}
