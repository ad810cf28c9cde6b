//! Kinematics of a 7-DOF Franka-style arm.
//!
//! Joint frames follow the modified (Craig) Denavit-Hartenberg convention:
//! each row applies `RotX(alpha) * TransX(a) * RotZ(theta + offset) * TransZ(d)`.

mod ik;
mod kinematics;
mod trajectory;

use std::path::Path;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ConfigError;

pub use ik::{solve_ik, IkOptions};
pub use kinematics::{forward_kinematics, jacobian, pose_unchecked, Jacobian};
pub use trajectory::{plan_trajectory, PlanOptions, TargetTable, Trajectory, Waypoint};

pub const DOF: usize = 7;

/// Joint angles in radians.
pub type JointConfig = [f64; DOF];

/// Customary ready pose of the Panda.
pub const Q_HOME: JointConfig = [0.0, -0.785, 0.0, -2.356, 0.0, 1.571, 0.785];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhRow {
    pub a: f64,
    pub d: f64,
    pub alpha: f64,
    #[serde(default)]
    pub theta_offset: f64,
}

impl DhRow {
    pub const fn new(a: f64, d: f64, alpha: f64) -> Self {
        Self {
            a,
            d,
            alpha,
            theta_offset: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimit {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicParams {
    pub rows: Vec<DhRow>,
    pub flange: DhRow,
    pub limits: Vec<JointLimit>,
}

use std::f64::consts::FRAC_PI_2;

impl KinematicParams {
    /// Franka Emika Panda, as published in the robot's interface documentation.
    pub fn panda() -> Self {
        let limit = |lower, upper| JointLimit { lower, upper };
        Self {
            rows: vec![
                DhRow::new(0.0, 0.333, 0.0),
                DhRow::new(0.0, 0.0, -FRAC_PI_2),
                DhRow::new(0.0, 0.316, FRAC_PI_2),
                DhRow::new(0.0825, 0.0, FRAC_PI_2),
                DhRow::new(-0.0825, 0.384, -FRAC_PI_2),
                DhRow::new(0.0, 0.0, FRAC_PI_2),
                DhRow::new(0.088, 0.0, FRAC_PI_2),
            ],
            flange: DhRow::new(0.0, 0.107, 0.0),
            limits: vec![
                limit(-2.8973, 2.8973),
                limit(-1.7628, 1.7628),
                limit(-2.8973, 2.8973),
                limit(-3.0718, -0.0698),
                limit(-2.8973, 2.8973),
                limit(-0.0175, 3.7525),
                limit(-2.8973, 2.8973),
            ],
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let params: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            ConfigError::invalid(
                format!("robot.params_path:{}", e.path()),
                e.inner().to_string(),
            )
        })?;
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.rows.len() != DOF {
            return Err(ConfigError::invalid("robot.params.rows", "expected 7 rows"));
        }
        if self.limits.len() != DOF {
            return Err(ConfigError::invalid(
                "robot.params.limits",
                "expected 7 limits",
            ));
        }
        for (i, l) in self.limits.iter().enumerate() {
            #[allow(clippy::neg_cmp_op_on_partial_ord)] // also rejects NaN
            if !(l.lower < l.upper) {
                return Err(ConfigError::invalid(
                    format!("robot.params.limits[{i}]"),
                    "lower must be below upper",
                ));
            }
        }
        Ok(())
    }

    /// Indices of joints outside their limits.
    pub fn violations(&self, q: &JointConfig) -> Vec<usize> {
        q.iter()
            .zip(&self.limits)
            .enumerate()
            .filter(|(_, (v, l))| !(l.lower..=l.upper).contains(*v))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn clamp(&self, q: &mut JointConfig) {
        for (v, l) in q.iter_mut().zip(&self.limits) {
            *v = v.clamp(l.lower, l.upper);
        }
    }
}

impl Default for KinematicParams {
    fn default() -> Self {
        Self::panda()
    }
}

/// End-effector pose in the base frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EePose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl EePose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn position_error(&self, other: &EePose) -> f64 {
        (self.position - other.position).norm()
    }

    pub fn orientation_error(&self, other: &EePose) -> f64 {
        self.orientation.angle_to(&other.orientation)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("joints out of limits: {0:?}")]
    OutOfLimits(Vec<usize>),
    #[error("unreachable target: position error {position_error:.3e} m, orientation error {orientation_error:.3e} rad")]
    Unreachable {
        position_error: f64,
        orientation_error: f64,
    },
    #[error("path infeasible at waypoint {index}: {reason}")]
    PathInfeasible { index: usize, reason: String },
    #[error("no target for color {0}")]
    NoTarget(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panda_params_are_valid() {
        let p = KinematicParams::panda();
        p.validate().unwrap();
        assert!(p.violations(&Q_HOME).is_empty());
    }

    #[test]
    fn violations_and_clamp() {
        let p = KinematicParams::panda();
        let mut q = Q_HOME;
        q[3] = 0.5;
        q[5] = -1.0;
        assert_eq!(p.violations(&q), vec![3, 5]);
        p.clamp(&mut q);
        assert!(p.violations(&q).is_empty());
        assert_eq!(q[3], -0.0698);
    }

    #[test]
    fn params_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panda.json");
        std::fs::write(
            &path,
            serde_json::to_string(&KinematicParams::panda()).unwrap(),
        )
        .unwrap();
        assert_eq!(
            KinematicParams::load(&path).unwrap(),
            KinematicParams::panda()
        );

        std::fs::write(
            &path,
            r#"{"rows":[],"flange":{"a":0,"d":0,"alpha":0},"limits":[]}"#,
        )
        .unwrap();
        assert_eq!(
            KinematicParams::load(&path).unwrap_err().path(),
            "robot.params.rows"
        );
    }
}
