use nalgebra::{Matrix2x3, Matrix3, Vector2};

use super::strain::ArcIntegrals;
use super::{Configuration, ConfigurationRate, RobotParams, TaskPose};
use crate::error::{Error, Result};

/// Pose of the backbone at arc length `s`.
pub fn forward_kinematics(q: &Configuration, s: f64, params: &RobotParams) -> Result<TaskPose> {
    let tol = 1e-12 * params.length;
    if !(s >= -tol && s <= params.length + tol) {
        return Err(Error::ArcLengthOutOfRange {
            s,
            length: params.length,
        });
    }
    if !q.is_valid() {
        return Err(Error::InvalidParameter(format!(
            "invalid configuration {q:?}"
        )));
    }
    let s = s.clamp(0.0, params.length);
    Ok(TaskPose::new(position_at(q, s), q.kappa_be * s))
}

/// Closed-form inverse of the tip pose map.
pub fn inverse_kinematics(chi: &TaskPose, params: &RobotParams) -> Result<Configuration> {
    let l = params.length;
    let kappa = chi.theta / l;
    let (si, ci) = ArcIntegrals::values_only(kappa, l);
    let det = si * si + ci * ci;
    if det < 1e-12 * l * l {
        return Err(Error::NotInvertible(format!(
            "singular position map at theta = {}",
            chi.theta
        )));
    }
    let (x, y) = (chi.x[0], chi.x[1]);
    let shear = (si * x + ci * y) / det;
    let stretch = (-ci * x + si * y) / det;
    if stretch <= 0.0 {
        return Err(Error::NotInvertible(format!(
            "pose implies non-positive segment length (1 + sigma_ax = {stretch})"
        )));
    }
    Ok(Configuration::new(kappa, shear, stretch - 1.0))
}

/// Tip Jacobian `dx/dq` (2x3).
pub fn jacobian(q: &Configuration, params: &RobotParams) -> Matrix2x3<f64> {
    position_jacobian_at(q, params.length)
}

/// Time derivative of the tip Jacobian along `qd`.
pub fn jacobian_dot(
    q: &Configuration,
    qd: &ConfigurationRate,
    params: &RobotParams,
) -> Matrix2x3<f64> {
    let partials = position_jacobian_partials_at(q, params.length);
    let v = qd.to_vector();
    partials[0] * v[0] + partials[1] * v[1] + partials[2] * v[2]
}

/// Jacobian of the full tip pose `(x, y, theta)`.
pub fn pose_jacobian(q: &Configuration, params: &RobotParams) -> Matrix3<f64> {
    let j = jacobian(q, params);
    let mut m = Matrix3::zeros();
    m.fixed_view_mut::<2, 3>(0, 0).copy_from(&j);
    m[(2, 0)] = params.length;
    m
}

/// Tip position; infallible counterpart of `forward_kinematics` at `s = L`
/// for configurations already known to be valid.
pub fn tip_position(q: &Configuration, params: &RobotParams) -> Vector2<f64> {
    position_at(q, params.length)
}

/// Backbone points at `n` equally spaced arc lengths, base to tip.
pub fn backbone_polyline(q: &Configuration, params: &RobotParams, n: usize) -> Vec<Vector2<f64>> {
    let n = n.max(2);
    (0..n)
        .map(|i| position_at(q, params.length * i as f64 / (n - 1) as f64))
        .collect()
}

pub(crate) fn position_at(q: &Configuration, s: f64) -> Vector2<f64> {
    let (si, ci) = ArcIntegrals::values_only(q.kappa_be, s);
    let a = q.sigma_sh;
    let b = 1.0 + q.sigma_ax;
    Vector2::new(a * si - b * ci, a * ci + b * si)
}

/// Position Jacobian at arc length `s`.
pub fn position_jacobian_at(q: &Configuration, s: f64) -> Matrix2x3<f64> {
    let k = ArcIntegrals::new(q.kappa_be, s);
    jacobian_from(q, &k)
}

fn jacobian_from(q: &Configuration, k: &ArcIntegrals) -> Matrix2x3<f64> {
    let a = q.sigma_sh;
    let b = 1.0 + q.sigma_ax;
    Matrix2x3::new(
        a * k.ds - b * k.dc,
        k.s,
        -k.c,
        a * k.dc + b * k.ds,
        k.c,
        k.s,
    )
}

/// `dJ_p/dq_k` at arc length `s` for k = 0..3.
pub(crate) fn position_jacobian_partials_at(q: &Configuration, s: f64) -> [Matrix2x3<f64>; 3] {
    let k = ArcIntegrals::new(q.kappa_be, s);
    partials_from(q, &k)
}

fn partials_from(q: &Configuration, k: &ArcIntegrals) -> [Matrix2x3<f64>; 3] {
    let a = q.sigma_sh;
    let b = 1.0 + q.sigma_ax;
    let d_kappa = Matrix2x3::new(
        a * k.dds - b * k.ddc,
        k.ds,
        -k.dc,
        a * k.ddc + b * k.dds,
        k.dc,
        k.ds,
    );
    let d_shear = Matrix2x3::new(k.ds, 0.0, 0.0, k.dc, 0.0, 0.0);
    let d_axial = Matrix2x3::new(-k.dc, 0.0, 0.0, k.ds, 0.0, 0.0);
    [d_kappa, d_shear, d_axial]
}

/// Jacobian and its partials from one evaluation of the arc integrals.
pub(crate) fn jacobian_and_partials_at(
    q: &Configuration,
    s: f64,
) -> (Matrix2x3<f64>, [Matrix2x3<f64>; 3]) {
    let k = ArcIntegrals::new(q.kappa_be, s);
    (jacobian_from(q, &k), partials_from(q, &k))
}

#[cfg(test)]
mod tests {
    use super::super::strain::POSITION_TAYLOR_THRESHOLD;
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector3;

    fn params() -> RobotParams {
        RobotParams::default()
    }

    #[test]
    fn undeformed_segment_is_straight() {
        let p = params();
        let pose = forward_kinematics(&Configuration::default(), p.length, &p).unwrap();
        assert_abs_diff_eq!(pose.x, Vector2::new(0.0, 0.1), epsilon = 1e-15);
        assert_eq!(pose.theta, 0.0);
    }

    #[test]
    fn pure_elongation() {
        let p = params();
        let pose = forward_kinematics(&Configuration::new(0.0, 0.0, 0.2), p.length, &p).unwrap();
        assert_abs_diff_eq!(pose.x, Vector2::new(0.0, 0.12), epsilon = 1e-15);
        assert_eq!(pose.theta, 0.0);
    }

    #[test]
    fn rejects_arc_length_outside_segment() {
        let p = params();
        let q = Configuration::default();
        assert!(matches!(
            forward_kinematics(&q, 0.11, &p),
            Err(Error::ArcLengthOutOfRange { .. })
        ));
        assert!(forward_kinematics(&q, -0.01, &p).is_err());
    }

    #[test]
    fn inverse_of_rest_and_elongated_poses() {
        let p = params();
        let q = inverse_kinematics(&TaskPose::new(Vector2::new(0.0, 0.1), 0.0), &p).unwrap();
        assert_abs_diff_eq!(q.to_vector(), Vector3::zeros(), epsilon = 1e-15);
        let q = inverse_kinematics(&TaskPose::new(Vector2::new(0.0, 0.12), 0.0), &p).unwrap();
        assert_abs_diff_eq!(q.to_vector(), Vector3::new(0.0, 0.0, 0.2), epsilon = 1e-14);
    }

    #[test]
    fn inverse_rejects_collapsed_segment() {
        let p = params();
        let r = inverse_kinematics(&TaskPose::new(Vector2::new(0.0, -0.01), 0.0), &p);
        assert!(matches!(r, Err(Error::NotInvertible(_))));
    }

    #[test]
    fn axial_column_points_along_backbone_at_rest() {
        let p = params();
        let j = jacobian(&Configuration::default(), &p);
        assert_abs_diff_eq!(j[(0, 2)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(j[(1, 2)], p.length, epsilon = 1e-15);
    }

    #[test]
    fn continuity_across_taylor_switch() {
        let p = params();
        let k_switch = POSITION_TAYLOR_THRESHOLD / p.length;
        for sign in [-1.0, 1.0] {
            let lo = Configuration::new(sign * k_switch * (1.0 - 1e-9), 0.1, 0.05);
            let hi = Configuration::new(sign * k_switch * (1.0 + 1e-9), 0.1, 0.05);
            let a = forward_kinematics(&lo, p.length, &p).unwrap();
            let b = forward_kinematics(&hi, p.length, &p).unwrap();
            assert!((a.x - b.x).norm() < 1e-10);
        }
    }

    #[test]
    fn polyline_ends_at_tip() {
        let p = params();
        let q = Configuration::new(5.0, 0.02, 0.1);
        let pts = backbone_polyline(&q, &p, 20);
        assert_eq!(pts.len(), 20);
        assert_abs_diff_eq!(pts[0], Vector2::zeros(), epsilon = 1e-15);
        let tip = forward_kinematics(&q, p.length, &p).unwrap();
        assert_abs_diff_eq!(pts[19], tip.x, epsilon = 1e-15);
    }
}
