//! Levenberg-Marquardt solve of `phi_d = argmin 1/2 |tau - alpha(q, phi)|^2`
//! over the motor box `[0, phi_max]^2`.

use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    actuation_force_unchecked, actuation_jacobian, rod_strains, ActuationAngles, Configuration,
    RobotParams,
};

/// Solver settings; the defaults are the ones used by the control loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmSettings {
    pub initial_damping: f64,
    pub max_iterations: usize,
    /// Stop once `|r|` drops below this.
    pub residual_tol: f64,
    /// Stop once a step is shorter than this.
    pub step_tol: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            initial_damping: 1e-3,
            max_iterations: 100,
            residual_tol: 1e-6,
            step_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlOutput {
    /// Desired configuration-space torque.
    pub tau: Vector3<f64>,
    /// Motor angles, always inside `[0, phi_max]^2`.
    pub phi_d: ActuationAngles,
    /// `|tau - alpha(q, phi_d)|`.
    pub residual_norm: f64,
    /// False when the unconstrained solve hit the iteration cap.
    pub converged: bool,
    pub iterations: usize,
}

pub fn solve_actuation(
    tau: &Vector3<f64>,
    q: &Configuration,
    phi_init: &ActuationAngles,
    params: &RobotParams,
) -> Result<ControlOutput> {
    solve_actuation_with(tau, q, phi_init, params, &LmSettings::default())
}

/// Unconstrained LM from `phi_init`, then clamping to the box.
///
/// Each rod force is a quadratic in its own twist, so every rod has a mirror
/// twist `2 phi_v - phi` about the vertex `phi_v` giving the same force. When
/// the warm-started solve stops outside the box, short of convergence, or on a
/// vertex (where its column of the Jacobian vanishes), the solve is repeated
/// from a fixed set of starts, out-of-box components are replaced by their
/// mirror where that lands inside, and the faces of the box are searched with
/// one motor pinned. The lowest projected residual wins.
pub fn solve_actuation_with(
    tau: &Vector3<f64>,
    q: &Configuration,
    phi_init: &ActuationAngles,
    params: &RobotParams,
    settings: &LmSettings,
) -> Result<ControlOutput> {
    if !phi_init.within_bounds(params.phi_max) {
        let bad = phi_init
            .phi
            .iter()
            .copied()
            .find(|p| !(0.0..=params.phi_max).contains(p))
            .unwrap_or(f64::NAN);
        return Err(Error::ActuationOutOfBounds {
            value: bad,
            phi_max: params.phi_max,
        });
    }
    let problem = Problem { tau, q, params };
    let phi_max = params.phi_max;
    let first = problem.run(phi_init.phi, [true, true], settings);
    let converged = first.converged;
    let mut iterations = first.iterations;
    let mut best = Candidate::new(&problem, first.phi);
    if converged && problem.in_box(&first.phi) && !problem.on_vertex(&first.phi) {
        return Ok(best.into_output(tau, converged, iterations));
    }

    let mut unclamped = vec![first.phi];
    for a in START_FRACTIONS {
        for b in START_FRACTIONS {
            let it = problem.run(Vector2::new(a, b) * phi_max, [true, true], settings);
            iterations += it.iterations;
            unclamped.push(it.phi);
        }
    }
    for phi in &unclamped {
        best.offer(&problem, problem.mirrored_into_box(phi));
    }
    for axis in 0..2 {
        for bound in [0.0, phi_max] {
            let mut mask = [true, true];
            mask[axis] = false;
            for frac in START_FRACTIONS {
                let mut start = Vector2::repeat(frac * phi_max);
                start[axis] = bound;
                let it = problem.run(start, mask, settings);
                iterations += it.iterations;
                best.offer(&problem, problem.mirrored_into_box(&it.phi));
            }
        }
    }
    Ok(best.into_output(tau, converged, iterations))
}

const START_FRACTIONS: [f64; 3] = [0.0, 0.5, 1.0];

struct Candidate {
    phi: Vector2<f64>,
    cost: f64,
}

impl Candidate {
    fn new(problem: &Problem, phi: Vector2<f64>) -> Self {
        let phi = phi.map(|p| p.clamp(0.0, problem.params.phi_max));
        Self {
            cost: problem.residual(&phi).norm(),
            phi,
        }
    }

    fn offer(&mut self, problem: &Problem, phi: Vector2<f64>) {
        let c = Self::new(problem, phi);
        if c.cost < self.cost {
            *self = c;
        }
    }

    fn into_output(self, tau: &Vector3<f64>, converged: bool, iterations: usize) -> ControlOutput {
        ControlOutput {
            tau: *tau,
            phi_d: ActuationAngles { phi: self.phi },
            residual_norm: self.cost,
            converged,
            iterations,
        }
    }
}

struct Problem<'a> {
    tau: &'a Vector3<f64>,
    q: &'a Configuration,
    params: &'a RobotParams,
}

struct Iterate {
    phi: Vector2<f64>,
    converged: bool,
    iterations: usize,
}

impl Problem<'_> {
    fn residual(&self, phi: &Vector2<f64>) -> Vector3<f64> {
        self.tau - actuation_force_unchecked(self.q, &ActuationAngles { phi: *phi }, self.params)
    }

    fn in_box(&self, phi: &Vector2<f64>) -> bool {
        phi.iter().all(|p| (0.0..=self.params.phi_max).contains(p))
    }

    /// Twist at which rod `i`'s force is extremal.
    fn vertex(&self, i: usize) -> Option<f64> {
        let p = self.params;
        if p.c_s == 0.0 || p.c_eps == 0.0 {
            return None;
        }
        let eps = rod_strains(self.q, p)[i];
        Some(0.5 * (eps / p.c_eps - p.s_ax0 / p.c_s))
    }

    fn on_vertex(&self, phi: &Vector2<f64>) -> bool {
        (0..2).any(|i| {
            self.vertex(i)
                .is_some_and(|v| (phi[i] - v).abs() <= 1e-6 * self.params.phi_max)
        })
    }

    fn mirrored_into_box(&self, phi: &Vector2<f64>) -> Vector2<f64> {
        let mut out = *phi;
        for i in 0..2 {
            if !(0.0..=self.params.phi_max).contains(&out[i]) {
                if let Some(v) = self.vertex(i) {
                    let m = 2.0 * v - out[i];
                    if (0.0..=self.params.phi_max).contains(&m) {
                        out[i] = m;
                    }
                }
            }
        }
        out
    }

    fn run(&self, start: Vector2<f64>, free: [bool; 2], s: &LmSettings) -> Iterate {
        let mut phi = start;
        let mut r = self.residual(&phi);
        let mut cost = r.norm_squared();
        let mut lambda = s.initial_damping;
        let mut iterations = 0;
        let mut converged = false;
        while iterations < s.max_iterations {
            if cost.sqrt() < s.residual_tol {
                converged = true;
                break;
            }
            let mut a = actuation_jacobian(self.q, &ActuationAngles { phi }, self.params);
            for (i, &f) in free.iter().enumerate() {
                if !f {
                    a.column_mut(i).fill(0.0);
                }
            }
            let h = a.transpose() * a;
            let g = a.transpose() * r;
            let scale = h.diagonal().map(|v| v.max(1e-12));
            let mut accepted = false;
            while iterations < s.max_iterations {
                iterations += 1;
                let lhs = h + Matrix2::from_diagonal(&(scale * lambda));
                let step = lhs.lu().solve(&g).unwrap_or_else(Vector2::zeros);
                let trial = phi + step;
                let r_trial = self.residual(&trial);
                let c_trial = r_trial.norm_squared();
                let small = step.norm() < s.step_tol;
                if c_trial < cost {
                    phi = trial;
                    r = r_trial;
                    cost = c_trial;
                    lambda = (lambda / 10.0).max(1e-15);
                    accepted = true;
                }
                if small {
                    converged = true;
                    return Iterate {
                        phi,
                        converged,
                        iterations,
                    };
                }
                if accepted {
                    break;
                }
                lambda = (lambda * 10.0).min(1e15);
            }
            if !accepted {
                break;
            }
        }
        if cost.sqrt() < s.residual_tol {
            converged = true;
        }
        Iterate {
            phi,
            converged,
            iterations,
        }
    }
}
