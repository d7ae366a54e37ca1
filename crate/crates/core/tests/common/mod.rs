//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use hsa_core::model::{Configuration, RobotParams};
use nalgebra::{Matrix2x3, Matrix3, Vector2};
use rand::Rng;

/// Tip position by explicit RK4 integration of the strain ODE
/// `p' = sigma_sh (cos th, sin th) + (1 + sigma_ax) (-sin th, cos th)`, `th = kappa u`.
pub fn position_by_ode(q: &Configuration, s: f64, steps: usize) -> Vector2<f64> {
    let f = |u: f64| {
        let th = q.kappa_be * u;
        Vector2::new(
            q.sigma_sh * th.cos() - (1.0 + q.sigma_ax) * th.sin(),
            q.sigma_sh * th.sin() + (1.0 + q.sigma_ax) * th.cos(),
        )
    };
    let h = s / steps as f64;
    let mut p = Vector2::zeros();
    for k in 0..steps {
        let u = k as f64 * h;
        // The right-hand side does not depend on p, so RK4 reduces to Simpson.
        let (k1, k2, k4) = (f(u), f(u + 0.5 * h), f(u + h));
        p += (k1 + k2 * 4.0 + k4) * (h / 6.0);
    }
    p
}

/// Direct trigonometric closed form, valid away from zero curvature.
pub fn position_trig(q: &Configuration, s: f64) -> Vector2<f64> {
    let k = q.kappa_be;
    if k.abs() < 1e-3 {
        return position_by_ode(q, s, 64);
    }
    let th = k * s;
    let int_cos = th.sin() / k;
    let int_sin = (1.0 - th.cos()) / k;
    let (a, b) = (q.sigma_sh, 1.0 + q.sigma_ax);
    Vector2::new(a * int_cos - b * int_sin, a * int_sin + b * int_cos)
}

/// Central-difference Jacobian of `position_trig` at arc length `s`.
pub fn fd_position_jacobian(q: &Configuration, s: f64, h: f64) -> Matrix2x3<f64> {
    let mut j = Matrix2x3::zeros();
    for k in 0..3 {
        let mut qp = q.to_vector();
        let mut qm = q.to_vector();
        qp[k] += h;
        qm[k] -= h;
        let d = (position_trig(&Configuration::from_vector(&qp), s)
            - position_trig(&Configuration::from_vector(&qm), s))
            / (2.0 * h);
        j.set_column(k, &d);
    }
    j
}

/// Mass matrix by composite trapezoid over `n` intervals with finite-difference Jacobians.
pub fn mass_by_trapezoid(q: &Configuration, p: &RobotParams, n: usize) -> Matrix3<f64> {
    let h = p.length / n as f64;
    let mut m = Matrix3::zeros();
    for i in 0..=n {
        let s = i as f64 * h;
        let w = if i == 0 || i == n { 0.5 * h } else { h };
        let jp = fd_position_jacobian(q, s, 1e-6);
        let mut dens = jp.transpose() * jp * p.lin_density;
        dens[(0, 0)] += p.rot_inertia_density * s * s;
        m += dens * w;
    }
    m
}

/// Uniform sample from the configuration box used throughout the tests.
pub fn random_configuration<R: Rng>(rng: &mut R) -> Configuration {
    Configuration::new(
        rng.gen_range(-20.0..=20.0),
        rng.gen_range(-0.3..=0.3),
        rng.gen_range(-0.199..0.5),
    )
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

/// Two-rod actuation force written out directly, defined for any `phi`.
pub fn alpha_direct(q: &Configuration, phi: [f64; 2], p: &RobotParams) -> nalgebra::Vector3<f64> {
    let dq = q.to_vector() - p.q0.to_vector();
    let mut out = nalgebra::Vector3::zeros();
    for (i, side) in [-1.0, 1.0].into_iter().enumerate() {
        let a = nalgebra::Vector3::new(side * p.rod_offset, 0.0, 1.0);
        let strain = a.dot(&dq);
        out += a * ((p.s_ax0 + p.c_s * phi[i]) * (p.c_eps * phi[i] - strain));
    }
    out
}

/// Best residual over a uniform grid with spacing `step` on `[0, phi_max]^2`.
pub fn brute_force_residual(
    tau: &nalgebra::Vector3<f64>,
    q: &Configuration,
    p: &RobotParams,
    step: f64,
) -> (f64, [f64; 2]) {
    let n = (p.phi_max / step).floor() as usize;
    let mut axis: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
    if *axis.last().unwrap() < p.phi_max {
        axis.push(p.phi_max);
    }
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for &a in &axis {
        for &b in &axis {
            let r = (tau - alpha_direct(q, [a, b], p)).norm();
            if r < best.0 {
                best = (r, [a, b]);
            }
        }
    }
    best
}
