//! Lagrangian dynamics `M(q) qdd + C(q, qd) qd + G(q) + K (q - q0) + D qd = alpha(q, phi)`
//! and their projection into operational space.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Matrix3x2, Vector3};

use super::kinematics::{jacobian_and_partials_at, position_at};
use super::quadrature::gauss_legendre;
use super::{
    jacobian, jacobian_dot, rod_potential, ActuationAngles, Configuration, ConfigurationRate,
    RobotParams,
};
use crate::error::{Error, Result};

/// Mass matrix, its configuration partials and the gravity force.
#[derive(Debug, Clone, Copy)]
pub struct MassTerms {
    pub mass: Matrix3<f64>,
    /// `dM/dq_k` for k = 0..3.
    pub dmass: [Matrix3<f64>; 3],
    pub gravity: Vector3<f64>,
}

/// Everything the Cartesian impedance controller needs at one state.
#[derive(Debug, Clone, Copy)]
pub struct DynamicsQuantities {
    pub mass: Matrix3<f64>,
    pub coriolis: Matrix3<f64>,
    pub gravity: Vector3<f64>,
    pub jacobian: Matrix2x3<f64>,
    pub jacobian_dot: Matrix2x3<f64>,
    /// Task-space inertia `(J M^-1 J^T)^-1`.
    pub lambda: Matrix2<f64>,
    /// Task-space Coriolis term `Lambda (J M^-1 C - Jdot)`.
    pub mu: Matrix2x3<f64>,
    /// Dynamically consistent pseudo-inverse `M^-1 J^T Lambda`.
    pub jb_pinv: Matrix3x2<f64>,
}

/// Integrates the kinetic and gravitational terms over the backbone with
/// Gauss-Legendre quadrature.
pub fn mass_terms(q: &Configuration, params: &RobotParams) -> MassTerms {
    let rho = params.lin_density;
    let half = 0.5 * params.length;
    let mut mass = Matrix3::zeros();
    let mut dmass = [Matrix3::zeros(); 3];
    let mut gravity = Vector3::zeros();
    for &(node, weight) in gauss_legendre(params.quadrature_points) {
        let s = half * (node + 1.0);
        let w = half * weight;
        let (jp, partials) = jacobian_and_partials_at(q, s);
        let jt = jp.transpose();
        mass += jt * jp * (w * rho);
        mass[(0, 0)] += w * params.rot_inertia_density * s * s;
        for (dm, djp) in dmass.iter_mut().zip(partials.iter()) {
            let cross = djp.transpose() * jp;
            *dm += (cross + cross.transpose()) * (w * rho);
        }
        gravity -= jt * params.gravity * (w * rho);
    }
    MassTerms {
        mass,
        dmass,
        gravity,
    }
}

/// `dG/dq`, used by the steady-state solver.
pub fn gravity_jacobian(q: &Configuration, params: &RobotParams) -> Matrix3<f64> {
    let rho = params.lin_density;
    let half = 0.5 * params.length;
    let mut out = Matrix3::zeros();
    for &(node, weight) in gauss_legendre(params.quadrature_points) {
        let s = half * (node + 1.0);
        let w = half * weight;
        let (_, partials) = jacobian_and_partials_at(q, s);
        for (k, djp) in partials.iter().enumerate() {
            let col = -(djp.transpose() * params.gravity) * (w * rho);
            out.set_column(k, &(out.column(k) + col));
        }
    }
    out
}

/// Coriolis matrix from the Christoffel symbols of the first kind.
pub fn coriolis_from_partials(dmass: &[Matrix3<f64>; 3], qd: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| {
        (0..3)
            .map(|k| 0.5 * (dmass[k][(i, j)] + dmass[j][(i, k)] - dmass[i][(j, k)]) * qd[k])
            .sum()
    })
}

pub fn dynamics_matrices(
    q: &Configuration,
    qd: &ConfigurationRate,
    params: &RobotParams,
) -> Result<DynamicsQuantities> {
    let terms = mass_terms(q, params);
    let coriolis = coriolis_from_partials(&terms.dmass, &qd.to_vector());
    let j = jacobian(q, params);
    let jd = jacobian_dot(q, qd, params);
    let chol = terms.mass.cholesky().ok_or_else(|| {
        Error::InvalidParameter("mass matrix is not positive definite".to_string())
    })?;
    let m_inv_jt = chol.solve(&j.transpose());
    let task_compliance = j * m_inv_jt;
    let lambda = invert_task_compliance(&task_compliance)?;
    let jb_pinv = m_inv_jt * lambda;
    let mu = lambda * (j * chol.solve(&coriolis) - jd);
    Ok(DynamicsQuantities {
        mass: terms.mass,
        coriolis,
        gravity: terms.gravity,
        jacobian: j,
        jacobian_dot: jd,
        lambda,
        mu,
        jb_pinv,
    })
}

fn invert_task_compliance(c: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let sym = 0.5 * (c + c.transpose());
    let eig = sym.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 0.0 && lo > 1e-12 * hi) {
        return Err(Error::SingularTaskInertia);
    }
    let inv = sym.try_inverse().ok_or(Error::SingularTaskInertia)?;
    Ok(0.5 * (inv + inv.transpose()))
}

/// Kinetic + passive elastic + rod elastic + gravitational energy.
///
/// Conserved by the undamped plant at constant `phi`.
pub fn mechanical_energy(
    q: &Configuration,
    qd: &ConfigurationRate,
    phi: &ActuationAngles,
    params: &RobotParams,
) -> f64 {
    let terms = mass_terms(q, params);
    let v = qd.to_vector();
    let dq = q.to_vector() - params.q0.to_vector();
    let kinetic = 0.5 * v.dot(&(terms.mass * v));
    let elastic = 0.5 * dq.dot(&(params.stiffness * dq));
    kinetic + elastic + rod_potential(q, phi, params) + gravity_potential(q, params)
}

fn gravity_potential(q: &Configuration, params: &RobotParams) -> f64 {
    let half = 0.5 * params.length;
    gauss_legendre(params.quadrature_points)
        .iter()
        .map(|&(node, weight)| {
            let s = half * (node + 1.0);
            -half * weight * params.lin_density * params.gravity.dot(&position_at(q, s))
        })
        .sum()
}
