//! Two-rod actuation model.
//!
//! Each rod `i` sits at lateral offset `-/+ d` and has axial strain
//! `eps_i(q) = a_i^T (q - q0)` with `a_1 = (-d, 0, 1)`, `a_2 = (d, 0, 1)`.
//! Twisting a rod by `phi_i` raises its axial stiffness to
//! `S_ax0 + C_S phi_i` and its rest elongation to `C_eps phi_i`, so
//!
//! ```text
//! alpha(q, phi) = sum_i (S_ax0 + C_S phi_i) (C_eps phi_i - eps_i(q)) a_i
//! ```
//!
//! which is quadratic in `phi`, affine in `q`, and never acts on shear.

use nalgebra::{Matrix3, Matrix3x2, Vector2, Vector3};

use super::{ActuationAngles, Configuration, RobotParams};
use crate::error::{Error, Result};

pub fn rod_directions(params: &RobotParams) -> [Vector3<f64>; 2] {
    let d = params.rod_offset;
    [Vector3::new(-d, 0.0, 1.0), Vector3::new(d, 0.0, 1.0)]
}

pub fn rod_strains(q: &Configuration, params: &RobotParams) -> Vector2<f64> {
    let dq = q.to_vector() - params.q0.to_vector();
    let [a1, a2] = rod_directions(params);
    Vector2::new(a1.dot(&dq), a2.dot(&dq))
}

fn check_bounds(phi: &ActuationAngles, params: &RobotParams) -> Result<()> {
    let tol = 1e-12 * params.phi_max;
    for &p in phi.phi.iter() {
        if !(p >= -tol && p <= params.phi_max + tol) {
            return Err(Error::ActuationOutOfBounds {
                value: p,
                phi_max: params.phi_max,
            });
        }
    }
    Ok(())
}

/// Generalized actuation force `alpha(q, phi)`.
pub fn actuation_force(
    q: &Configuration,
    phi: &ActuationAngles,
    params: &RobotParams,
) -> Result<Vector3<f64>> {
    check_bounds(phi, params)?;
    Ok(actuation_force_unchecked(q, phi, params))
}

pub(crate) fn actuation_force_unchecked(
    q: &Configuration,
    phi: &ActuationAngles,
    params: &RobotParams,
) -> Vector3<f64> {
    let eps = rod_strains(q, params);
    let dirs = rod_directions(params);
    (0..2).fold(Vector3::zeros(), |acc, i| {
        let p = phi.phi[i];
        acc + dirs[i] * (params.rod_stiffness(p) * (params.c_eps * p - eps[i]))
    })
}

/// Exact partials `d alpha / d phi` (3x2). Column `i` is parallel to `a_i`.
pub fn actuation_jacobian(
    q: &Configuration,
    phi: &ActuationAngles,
    params: &RobotParams,
) -> Matrix3x2<f64> {
    let eps = rod_strains(q, params);
    let dirs = rod_directions(params);
    let mut m = Matrix3x2::zeros();
    for i in 0..2 {
        let p = phi.phi[i];
        let g = params.c_s * (params.c_eps * p - eps[i]) + params.rod_stiffness(p) * params.c_eps;
        m.set_column(i, &(dirs[i] * g));
    }
    m
}

/// Stiffness the rods add in configuration space: `-d alpha / d q`.
pub fn actuation_stiffness(phi: &ActuationAngles, params: &RobotParams) -> Matrix3<f64> {
    let dirs = rod_directions(params);
    (0..2).fold(Matrix3::zeros(), |acc, i| {
        acc + dirs[i] * dirs[i].transpose() * params.rod_stiffness(phi.phi[i])
    })
}

/// Elastic energy stored in the twisted rods; `alpha = -dV/dq` at fixed `phi`.
pub fn rod_potential(q: &Configuration, phi: &ActuationAngles, params: &RobotParams) -> f64 {
    let eps = rod_strains(q, params);
    (0..2)
        .map(|i| {
            let p = phi.phi[i];
            let stretch = params.c_eps * p - eps[i];
            0.5 * params.rod_stiffness(p) * stretch * stretch
        })
        .sum()
}
