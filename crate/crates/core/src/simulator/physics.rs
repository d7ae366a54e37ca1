//! Plant integration with classical RK4.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    actuation_force_unchecked, coriolis_from_partials, jacobian, mass_terms, tip_position,
    ActuationAngles, Configuration, ConfigurationRate, RobotParams,
};

/// Velocity norm beyond which the integration is declared failed.
pub const BLOW_UP_SPEED: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub t: f64,
    pub q: Configuration,
    pub qd: ConfigurationRate,
    pub phi_applied: ActuationAngles,
    /// Contact force acting on the tip at the end of the last step, N.
    pub contact_force: Vector2<f64>,
}

impl SimState {
    pub fn at_rest(q: Configuration, phi: ActuationAngles) -> Self {
        Self {
            t: 0.0,
            q,
            qd: ConfigurationRate::default(),
            phi_applied: phi,
            contact_force: Vector2::zeros(),
        }
    }
}

/// Flat penalty wall. The normal `(cos theta_perp, sin theta_perp)` points
/// into the wall; the tip is in contact once `n^T (x - p_c) > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactSurface {
    pub point: Vector2<f64>,
    pub theta_perp: f64,
    /// Penalty stiffness, N/m.
    pub k_env: f64,
    /// Normal force that triggers the spray event, N.
    #[serde(default = "default_trigger")]
    pub f_trigger: f64,
}

fn default_trigger() -> f64 {
    2.0
}

impl ContactSurface {
    pub fn normal(&self) -> Vector2<f64> {
        Vector2::new(self.theta_perp.cos(), self.theta_perp.sin())
    }

    pub fn penetration(&self, x: &Vector2<f64>) -> f64 {
        self.normal().dot(&(x - self.point))
    }

    /// Force exerted by the wall on the tip.
    pub fn force(&self, x: &Vector2<f64>) -> Vector2<f64> {
        -self.normal() * (self.k_env * self.penetration(x).max(0.0))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_env > 0.0) || !self.theta_perp.is_finite() || !(self.f_trigger >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "invalid contact surface {self:?}"
            )));
        }
        Ok(())
    }
}

/// External loads on the tip.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Environment {
    pub contact: Option<ContactSurface>,
    /// Constant force applied at the tip, N.
    pub tip_force: Vector2<f64>,
}

impl Environment {
    pub fn free() -> Self {
        Self::default()
    }

    fn tip_load(&self, x: &Vector2<f64>) -> (Vector2<f64>, Vector2<f64>) {
        let contact = self
            .contact
            .map(|c| c.force(x))
            .unwrap_or_else(Vector2::zeros);
        (contact + self.tip_force, contact)
    }

    fn is_unloaded(&self) -> bool {
        self.contact.is_none() && self.tip_force == Vector2::zeros()
    }
}

/// `qdd` for a given generalized input force, plus the contact force at the tip.
pub fn acceleration_with_torque(
    q: &Configuration,
    qd: &ConfigurationRate,
    input: &Vector3<f64>,
    env: &Environment,
    params: &RobotParams,
) -> Result<(Vector3<f64>, Vector2<f64>)> {
    if !q.is_valid() {
        return Err(Error::InvalidParameter(format!(
            "configuration left the valid set: {q:?}"
        )));
    }
    let terms = mass_terms(q, params);
    let v = qd.to_vector();
    let coriolis = coriolis_from_partials(&terms.dmass, &v);
    let dq = q.to_vector() - params.q0.to_vector();
    let mut rhs = input - coriolis * v - terms.gravity - params.stiffness * dq - params.damping * v;
    let mut contact = Vector2::zeros();
    if !env.is_unloaded() {
        let x = tip_position(q, params);
        let (load, c) = env.tip_load(&x);
        rhs += jacobian(q, params).transpose() * load;
        contact = c;
    }
    let qdd = terms
        .mass
        .cholesky()
        .ok_or_else(|| Error::InvalidParameter("mass matrix lost definiteness".into()))?
        .solve(&rhs);
    Ok((qdd, contact))
}

/// Plant acceleration under motor angles `phi`.
pub fn plant_acceleration(
    q: &Configuration,
    qd: &ConfigurationRate,
    phi: &ActuationAngles,
    env: &Environment,
    params: &RobotParams,
) -> Result<(Vector3<f64>, Vector2<f64>)> {
    let alpha = actuation_force_unchecked(q, phi, params);
    acceleration_with_torque(q, qd, &alpha, env, params)
}

/// One RK4 step of a second-order system `qdd = f(q, qd)`.
pub fn rk4_step<F>(
    q: &Vector3<f64>,
    v: &Vector3<f64>,
    dt: f64,
    mut accel: F,
) -> Result<(Vector3<f64>, Vector3<f64>)>
where
    F: FnMut(&Vector3<f64>, &Vector3<f64>) -> Result<Vector3<f64>>,
{
    let a1 = accel(q, v)?;
    let (q2, v2) = (q + v * (0.5 * dt), v + a1 * (0.5 * dt));
    let a2 = accel(&q2, &v2)?;
    let (q3, v3) = (q + v2 * (0.5 * dt), v + a2 * (0.5 * dt));
    let a3 = accel(&q3, &v3)?;
    let (q4, v4) = (q + v3 * dt, v + a3 * dt);
    let a4 = accel(&q4, &v4)?;
    let qn = q + (v + v2 * 2.0 + v3 * 2.0 + v4) * (dt / 6.0);
    let vn = v + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0);
    Ok((qn, vn))
}

/// Advances the plant by `dt` with the motors held at `phi`.
pub fn step_physics(
    state: &SimState,
    phi: &ActuationAngles,
    env: &Environment,
    params: &RobotParams,
    dt: f64,
) -> Result<SimState> {
    if !phi.within_bounds(params.phi_max) {
        return Err(Error::ActuationOutOfBounds {
            value: phi.phi.min(),
            phi_max: params.phi_max,
        });
    }
    step_generic(state, *phi, env, params, dt, |q, _| {
        Ok(actuation_force_unchecked(q, phi, params))
    })
}

/// Advances the plant by `dt` with a generalized input force evaluated at
/// every RK4 stage (ideal torque source).
pub fn step_with_torque<F>(
    state: &SimState,
    env: &Environment,
    params: &RobotParams,
    dt: f64,
    torque: F,
) -> Result<SimState>
where
    F: FnMut(&Configuration, &ConfigurationRate) -> Result<Vector3<f64>>,
{
    step_generic(state, state.phi_applied, env, params, dt, torque)
}

fn step_generic<F>(
    state: &SimState,
    phi: ActuationAngles,
    env: &Environment,
    params: &RobotParams,
    dt: f64,
    mut input: F,
) -> Result<SimState>
where
    F: FnMut(&Configuration, &ConfigurationRate) -> Result<Vector3<f64>>,
{
    let t = state.t;
    let wrap = |e: Error| Error::Integration {
        t,
        reason: e.to_string(),
    };
    let (qn, vn) = rk4_step(&state.q.to_vector(), &state.qd.to_vector(), dt, |q, v| {
        let q = Configuration::from_vector(q);
        let qd = ConfigurationRate::from_vector(v);
        let tau = input(&q, &qd)?;
        Ok(acceleration_with_torque(&q, &qd, &tau, env, params)?.0)
    })
    .map_err(wrap)?;
    if !(vn.norm() <= BLOW_UP_SPEED) || !qn.iter().all(|v| v.is_finite()) {
        return Err(Error::Integration {
            t,
            reason: format!("state blow-up, |qd| = {}", vn.norm()),
        });
    }
    let q = Configuration::from_vector(&qn);
    if !q.is_valid() {
        return Err(Error::Integration {
            t,
            reason: format!("configuration left the valid set: {q:?}"),
        });
    }
    let contact_force = match env.contact {
        Some(c) => c.force(&tip_position(&q, params)),
        None => Vector2::zeros(),
    };
    Ok(SimState {
        t: t + dt,
        q,
        qd: ConfigurationRate::from_vector(&vn),
        phi_applied: phi,
        contact_force,
    })
}
