//! Operational workspace: steady-state tip positions over the motor box.

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::geometry::{
    distance_to_boundary, is_simple, nearest_boundary_point, point_in_polygon, signed_area,
};
use crate::error::{Error, Result};
use crate::model::{
    actuation_force, actuation_stiffness, gravity_jacobian, mass_terms, tip_position,
    ActuationAngles, Configuration, RobotParams,
};

pub const WORKSPACE_SCHEMA_VERSION: u32 = 1;

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 40;

/// Damped Newton solve of `K (q - q0) + G(q) = alpha(q, phi)`.
///
/// The step is halved while it fails to reduce the residual norm.
pub fn steady_state(
    phi: &ActuationAngles,
    params: &RobotParams,
    q_init: &Configuration,
) -> Result<Configuration> {
    let residual =
        |q: &Configuration| -> Result<Vector3<f64>> {
            let dq = q.to_vector() - params.q0.to_vector();
            Ok(params.stiffness * dq + mass_terms(q, params).gravity
                - actuation_force(q, phi, params)?)
        };
    let rod_k = actuation_stiffness(phi, params);
    let mut q = *q_init;
    let mut r = residual(&q)?;
    for _ in 0..NEWTON_MAX_ITER {
        if r.norm() <= NEWTON_TOL {
            return Ok(q);
        }
        let jac = params.stiffness + gravity_jacobian(&q, params) + rod_k;
        let step = jac
            .lu()
            .solve(&-r)
            .ok_or_else(|| Error::NotInvertible("steady-state Jacobian is singular".into()))?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial = Configuration::from_vector(&(q.to_vector() + step * t));
            if trial.is_valid() {
                let r_trial = residual(&trial)?;
                if r_trial.norm() < r.norm() {
                    q = trial;
                    r = r_trial;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if r.norm() <= NEWTON_TOL {
        Ok(q)
    } else {
        Err(Error::NotInvertible(format!(
            "steady state not found for phi = {:?} (residual {:e})",
            phi.phi,
            r.norm()
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceSample {
    pub phi: [f64; 2],
    pub q: Configuration,
    /// Steady-state tip position, m.
    pub x: Vector2<f64>,
    /// `(phi_1 + phi_2) / 2`, rad.
    pub mean_phi: f64,
}

/// Boundary polygon (counter-clockwise) plus the sampled steady-state grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub version: u32,
    pub grid_n: usize,
    pub phi_max: f64,
    pub boundary: Vec<Vector2<f64>>,
    /// Row-major over `(i, j)` with `phi = (i, j) * phi_max / (grid_n - 1)`;
    /// failed grid points are absent.
    pub samples: Vec<WorkspaceSample>,
    /// Grid points where the steady-state solve failed.
    pub failed: Vec<[f64; 2]>,
}

impl Workspace {
    pub fn contains(&self, x: &Vector2<f64>) -> bool {
        point_in_polygon(x, &self.boundary)
    }

    pub fn clamp(&self, x: &Vector2<f64>) -> Vector2<f64> {
        if self.contains(x) {
            *x
        } else {
            nearest_boundary_point(x, &self.boundary)
        }
    }

    pub fn distance_to_boundary(&self, x: &Vector2<f64>) -> f64 {
        distance_to_boundary(x, &self.boundary)
    }

    pub fn is_simple(&self) -> bool {
        is_simple(&self.boundary)
    }

    pub fn bounding_box(&self) -> (Vector2<f64>, Vector2<f64>) {
        let mut lo = Vector2::repeat(f64::INFINITY);
        let mut hi = Vector2::repeat(f64::NEG_INFINITY);
        for p in &self.boundary {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    /// Sample at motor angles `phi`, if that grid point exists.
    pub fn sample_at(&self, phi: [f64; 2]) -> Option<&WorkspaceSample> {
        self.samples.iter().find(|s| s.phi == phi)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ws: Self = serde_json::from_str(s)?;
        if ws.version != WORKSPACE_SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported workspace version {}",
                ws.version
            )));
        }
        Ok(ws)
    }
}

fn grid_phi(i: usize, n: usize, phi_max: f64) -> f64 {
    if i + 1 == n {
        phi_max
    } else {
        phi_max * i as f64 / (n - 1) as f64
    }
}

/// Solves the steady state on a `grid_n x grid_n` grid over `[0, phi_max]^2`
/// and traces the image of the grid edge as the boundary polygon.
pub fn compute_workspace(params: &RobotParams, grid_n: usize) -> Result<Workspace> {
    if grid_n < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid_n must be >= 2, got {grid_n}"
        )));
    }
    params.validate()?;
    let n = grid_n;
    let solved: Vec<Option<WorkspaceSample>> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let phi = [
                grid_phi(k / n, n, params.phi_max),
                grid_phi(k % n, n, params.phi_max),
            ];
            let angles = ActuationAngles::new(phi[0], phi[1]);
            steady_state(&angles, params, &params.q0)
                .ok()
                .map(|q| WorkspaceSample {
                    phi,
                    q,
                    x: tip_position(&q, params),
                    mean_phi: 0.5 * (phi[0] + phi[1]),
                })
        })
        .collect();

    let mut edge = Vec::with_capacity(4 * n);
    edge.extend((0..n).map(|i| (i, 0)));
    edge.extend((1..n).map(|j| (n - 1, j)));
    edge.extend((0..n - 1).rev().map(|i| (i, n - 1)));
    edge.extend((1..n - 1).rev().map(|j| (0, j)));
    let mut boundary: Vec<Vector2<f64>> = Vec::with_capacity(edge.len());
    for (i, j) in edge {
        if let Some(s) = &solved[i * n + j] {
            if boundary.last() != Some(&s.x) {
                boundary.push(s.x);
            }
        }
    }
    while boundary.len() > 1 && boundary.first() == boundary.last() {
        boundary.pop();
    }
    if boundary.len() < 3 {
        return Err(Error::InsufficientData(
            "workspace boundary has fewer than 3 points".into(),
        ));
    }
    if signed_area(&boundary) < 0.0 {
        boundary.reverse();
    }

    let mut samples = Vec::new();
    let mut failed = Vec::new();
    for (k, s) in solved.into_iter().enumerate() {
        match s {
            Some(s) => samples.push(s),
            None => failed.push([
                grid_phi(k / n, n, params.phi_max),
                grid_phi(k % n, n, params.phi_max),
            ]),
        }
    }
    if !failed.is_empty() {
        log::warn!("steady-state solve failed at {} grid points", failed.len());
    }
    Ok(Workspace {
        version: WORKSPACE_SCHEMA_VERSION,
        grid_n,
        phi_max: params.phi_max,
        boundary,
        samples,
        failed,
    })
}

/// Uniform rejection sampling over the bounding box, keeping points at least
/// `margin` inside the boundary.
pub fn sample_setpoints<R: Rng>(
    ws: &Workspace,
    count: usize,
    margin: f64,
    rng: &mut R,
) -> Result<Vec<Vector2<f64>>> {
    let (lo, hi) = ws.bounding_box();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > 1_000_000 {
            return Err(Error::InsufficientData(format!(
                "no room for setpoints {margin} m inside the workspace"
            )));
        }
        let x = Vector2::new(rng.gen_range(lo[0]..=hi[0]), rng.gen_range(lo[1]..=hi[1]));
        if ws.contains(&x) && ws.distance_to_boundary(&x) > margin {
            out.push(x);
        }
    }
    Ok(out)
}
