use nalgebra::{Matrix2, Matrix3, Rotation2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    tip_position, Configuration, ConfigurationRate, DynamicsQuantities, RobotParams,
};

/// Cartesian stiffness and damping of the rendered impedance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpedanceGains {
    /// Stiffness, N/m. Symmetric positive definite.
    pub k_x: Matrix2<f64>,
    /// Damping, N s/m. Symmetric positive semi-definite.
    pub d_x: Matrix2<f64>,
    /// Adds the `J^T J_B+^T D qd` term that cancels the robot's own damping.
    #[serde(default = "enabled")]
    pub compensate_damping: bool,
}

fn enabled() -> bool {
    true
}

impl ImpedanceGains {
    pub fn new(k_x: Matrix2<f64>, d_x: Matrix2<f64>) -> Result<Self> {
        let g = Self {
            k_x,
            d_x,
            compensate_damping: true,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn isotropic(kp: f64, kd: f64) -> Result<Self> {
        Self::new(Matrix2::identity() * kp, Matrix2::identity() * kd)
    }

    pub fn with_damping_compensation(mut self, on: bool) -> Self {
        self.compensate_damping = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("K_x", &self.k_x), ("D_x", &self.d_x)] {
            if !m.iter().all(|v| v.is_finite()) || (m[(0, 1)] - m[(1, 0)]).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and symmetric"
                )));
            }
        }
        if self.k_x.symmetric_eigenvalues().min() <= 0.0 {
            return Err(Error::InvalidParameter(
                "K_x must be positive definite".into(),
            ));
        }
        if self.d_x.symmetric_eigenvalues().min() < -1e-12 {
            return Err(Error::InvalidParameter(
                "D_x must be positive semi-definite".into(),
            ));
        }
        Ok(())
    }
}

/// `K_x = R(theta_perp) diag(k_perp, k_par) R(theta_perp)^T`.
///
/// The first eigenvector points along the polar angle `theta_perp`.
pub fn anisotropic_stiffness(k_perp: f64, k_par: f64, theta_perp: f64) -> Result<Matrix2<f64>> {
    if !(k_perp > 0.0 && k_par > 0.0) || !theta_perp.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "stiffness must be positive (k_perp = {k_perp}, k_par = {k_par})"
        )));
    }
    let r = Rotation2::new(theta_perp).into_inner();
    let k = r * Matrix2::new(k_perp, 0.0, 0.0, k_par) * r.transpose();
    Ok(0.5 * (k + k.transpose()))
}

/// Desired configuration-space torque of the Cartesian impedance law.
///
/// ```text
/// tau = J^T (K_x (x_at - x) - D_x xd) + G + K (q - q0)
///     + J^T J_B+^T D qd + J^T mu (I - J_B+ J) qd
/// ```
/// with `x` the tip position and `xd = J qd`. `dynq` must be evaluated at
/// `(q, qd)`. The `D` term is dropped when `gains.compensate_damping` is off.
pub fn impedance_torque(
    q: &Configuration,
    qd: &ConfigurationRate,
    x_at: &Vector2<f64>,
    dynq: &DynamicsQuantities,
    gains: &ImpedanceGains,
    params: &RobotParams,
) -> Result<Vector3<f64>> {
    if !q.is_valid() {
        return Err(Error::InvalidParameter(format!(
            "invalid configuration {q:?}"
        )));
    }
    let x = tip_position(q, params);
    let v = qd.to_vector();
    let j = &dynq.jacobian;
    let jt = j.transpose();
    let xd = j * v;
    let dq = q.to_vector() - params.q0.to_vector();
    let task = gains.k_x * (x_at - x) - gains.d_x * xd;
    let null_proj = Matrix3::identity() - dynq.jb_pinv * j;
    let mut tau =
        jt * task + dynq.gravity + params.stiffness * dq + jt * (dynq.mu * (null_proj * v));
    if gains.compensate_damping {
        tau += jt * (dynq.jb_pinv.transpose() * (params.damping * v));
    }
    Ok(tau)
}

/// `V = 1/2 xd^T Lambda xd + 1/2 (x - x_at)^T K_x (x - x_at)`.
pub fn lyapunov_value(
    q: &Configuration,
    qd: &ConfigurationRate,
    x_at: &Vector2<f64>,
    dynq: &DynamicsQuantities,
    gains: &ImpedanceGains,
    params: &RobotParams,
) -> Result<f64> {
    let x = tip_position(q, params);
    let xd = dynq.jacobian * qd.to_vector();
    let e = x - x_at;
    Ok(0.5 * xd.dot(&(dynq.lambda * xd)) + 0.5 * e.dot(&(gains.k_x * e)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{dynamics_matrices, forward_kinematics};
    use approx::assert_abs_diff_eq;

    #[test]
    fn at_rest_only_gravity_remains() {
        let p = RobotParams::default();
        let q = p.q0;
        let qd = ConfigurationRate::default();
        let d = dynamics_matrices(&q, &qd, &p).unwrap();
        let x = forward_kinematics(&q, p.length, &p).unwrap().x;
        let g = ImpedanceGains::isotropic(300.0, 1.5).unwrap();
        let tau = impedance_torque(&q, &qd, &x, &d, &g, &p).unwrap();
        assert_abs_diff_eq!(tau, d.gravity, epsilon = 1e-14);
    }

    #[test]
    fn static_torque_has_no_velocity_terms() {
        let p = RobotParams::default();
        let q = Configuration::new(-4.0, 0.02, 0.1);
        let qd = ConfigurationRate::default();
        let d = dynamics_matrices(&q, &qd, &p).unwrap();
        let g = ImpedanceGains::isotropic(300.0, 1.5).unwrap();
        let x_at = Vector2::new(0.01, 0.105);
        let x = forward_kinematics(&q, p.length, &p).unwrap().x;
        let tau = impedance_torque(&q, &qd, &x_at, &d, &g, &p).unwrap();
        let expected = d.jacobian.transpose() * (g.k_x * (x_at - x))
            + d.gravity
            + p.stiffness * (q.to_vector() - p.q0.to_vector());
        assert_abs_diff_eq!(tau, expected, epsilon = 1e-12);
    }

    #[test]
    fn anisotropic_axes() {
        let k = anisotropic_stiffness(500.0, 50.0, 0.0).unwrap();
        assert_abs_diff_eq!(k, Matrix2::new(500.0, 0.0, 0.0, 50.0), epsilon = 1e-12);
        let k = anisotropic_stiffness(80.0, 80.0, 0.7).unwrap();
        assert_abs_diff_eq!(k, Matrix2::identity() * 80.0, epsilon = 1e-12);
        assert!(anisotropic_stiffness(0.0, 50.0, 0.0).is_err());
        assert!(anisotropic_stiffness(500.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn gains_validation() {
        assert!(ImpedanceGains::isotropic(300.0, 1.5).is_ok());
        assert!(ImpedanceGains::isotropic(300.0, 0.0).is_ok());
        assert!(ImpedanceGains::isotropic(0.0, 1.5).is_err());
        assert!(ImpedanceGains::new(Matrix2::new(1.0, 0.5, 0.4, 1.0), Matrix2::zeros()).is_err());
    }
}
