use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::Configuration;
use crate::error::{Error, Result};

/// Physical parameters of the planar two-rod robot.
///
/// Field names in configuration files match the serde names below
/// (`K`, `D`, `S_ax0`, `C_S`, `C_eps` keep their symbolic spelling).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotParams {
    /// Undeformed segment length, m.
    pub length: f64,
    /// Lateral distance of each rod from the centreline, m.
    pub rod_offset: f64,
    /// Linear mass density, kg/m.
    pub lin_density: f64,
    /// Rotational inertia density of the cross sections, kg m.
    pub rot_inertia_density: f64,
    /// Gravity vector, m/s^2.
    pub gravity: Vector2<f64>,
    /// Passive stiffness, diag units (N m^2, N, N).
    #[serde(rename = "K", with = "mat3_rows")]
    pub stiffness: Matrix3<f64>,
    /// Rest configuration.
    pub q0: Configuration,
    /// Damping, symmetric positive definite.
    #[serde(rename = "D", with = "mat3_rows")]
    pub damping: Matrix3<f64>,
    /// Passive axial rod stiffness, N.
    #[serde(rename = "S_ax0")]
    pub s_ax0: f64,
    /// Change of axial rod stiffness per radian of twist, N/rad.
    #[serde(rename = "C_S")]
    pub c_s: f64,
    /// Rest elongation per radian of twist, 1/rad.
    #[serde(rename = "C_eps")]
    pub c_eps: f64,
    /// Maximum twist angle, rad.
    pub phi_max: f64,
    /// Handedness of each rod (+1 or -1); maps twist magnitudes to servo signs.
    pub handedness: [f64; 2],
    /// Gauss-Legendre points used for the dynamics integrals.
    #[serde(default = "default_quadrature_points")]
    pub quadrature_points: usize,
}

fn default_quadrature_points() -> usize {
    5
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            length: 0.1,
            rod_offset: 0.024,
            lin_density: 0.75,
            rot_inertia_density: 6e-4,
            gravity: Vector2::new(0.0, 9.81),
            stiffness: Matrix3::from_diagonal(&Vector3::new(7.5e-4, 7.5, 7.5)),
            q0: Configuration::default(),
            damping: Matrix3::from_diagonal(&Vector3::new(1.2e-4, 0.09, 0.18)),
            s_ax0: 6.0,
            c_s: 1.5,
            c_eps: 0.1,
            phi_max: 3.49,
            handedness: [1.0, -1.0],
            quadrature_points: 5,
        }
    }
}

impl RobotParams {
    /// Checks every invariant; returns the offending quantity on failure.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("length", self.length),
            ("rod_offset", self.rod_offset),
            ("lin_density", self.lin_density),
            ("phi_max", self.phi_max),
            ("S_ax0", self.s_ax0),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        if !(self.rot_inertia_density.is_finite() && self.rot_inertia_density >= 0.0) {
            return Err(Error::InvalidParameter(
                "rot_inertia_density must be >= 0".into(),
            ));
        }
        if self.s_ax0 + self.c_s * self.phi_max <= 0.0 {
            return Err(Error::InvalidParameter(
                "rod stiffness S_ax0 + C_S * phi_max must stay positive".into(),
            ));
        }
        check_spd("K", &self.stiffness)?;
        check_spd("D", &self.damping)?;
        if !self.q0.is_valid() {
            return Err(Error::InvalidParameter(
                "q0 must be a valid configuration".into(),
            ));
        }
        if self.handedness.iter().any(|h| *h != 1.0 && *h != -1.0) {
            return Err(Error::InvalidParameter(
                "handedness entries must be +1 or -1".into(),
            ));
        }
        if !(1..=16).contains(&self.quadrature_points) {
            return Err(Error::InvalidParameter(
                "quadrature_points must be in 1..=16".into(),
            ));
        }
        Ok(())
    }

    /// Axial rod stiffness at twist `phi`.
    pub fn rod_stiffness(&self, phi: f64) -> f64 {
        self.s_ax0 + self.c_s * phi
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let p: Self = toml::from_str(s)?;
        p.validate()?;
        Ok(p)
    }
}

fn check_spd(name: &str, m: &Matrix3<f64>) -> Result<()> {
    if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
        return Err(Error::InvalidParameter(format!("{name} must be symmetric")));
    }
    if m.cholesky().is_none() {
        return Err(Error::InvalidParameter(format!(
            "{name} must be positive definite"
        )));
    }
    Ok(())
}

/// Row-major `[[f64; 3]; 3]` representation for config files.
pub(crate) mod mat3_rows {
    use nalgebra::Matrix3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix3<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]));
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix3<f64>, D::Error> {
        let rows = <[[f64; 3]; 3]>::deserialize(d)?;
        Ok(Matrix3::from_fn(|i, j| rows[i][j]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        RobotParams::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip_keeps_symbolic_keys() {
        let p = RobotParams::default();
        let text = toml::to_string(&p).unwrap();
        assert!(text.contains("S_ax0"));
        assert!(text.contains("C_eps"));
        assert!(text.contains("K = "));
        let back = RobotParams::from_toml_str(&text).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn rejects_non_spd_damping() {
        let mut p = RobotParams::default();
        p.damping[(0, 0)] = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn rejects_stiffness_turning_negative_over_actuation_range() {
        let p = RobotParams {
            c_s: -20.0,
            ..RobotParams::default()
        };
        assert!(p.validate().is_err());
    }
}
