use std::collections::BTreeMap;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::ik::{solve_ik, IkOptions};
use super::kinematics::{check_limits, pose_unchecked};
use super::{EePose, JointConfig, KinematicParams, KinematicsError};
use crate::pipeline::ColorTarget;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Waypoint {
    pub q: JointConfig,
    /// Seconds since the start of the trajectory.
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub waypoints: Vec<Waypoint>,
    pub sample_rate: f64,
}

impl Trajectory {
    pub fn duration(&self) -> f64 {
        self.waypoints.last().map_or(0.0, |w| w.t)
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn final_q(&self) -> Option<JointConfig> {
        self.waypoints.last().map(|w| w.q)
    }
}

/// Where each color area sits, in the robot base frame. All targets share
/// one tool-down orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTable {
    positions: BTreeMap<ColorTarget, Vector3<f64>>,
    orientation: UnitQuaternion<f64>,
}

impl TargetTable {
    pub const RADIUS: f64 = 0.45;
    pub const HEIGHT: f64 = 0.10;

    pub fn new(
        positions: BTreeMap<ColorTarget, Vector3<f64>>,
        orientation: UnitQuaternion<f64>,
    ) -> Self {
        Self {
            positions,
            orientation,
        }
    }

    /// Regular colors every 30 degrees on a front semicircle, black at its
    /// midpoint; orientation is the flange orientation at `home`.
    pub fn default_for(params: &KinematicParams, home: &JointConfig) -> Self {
        let layout = [
            (ColorTarget::Red, -75.0),
            (ColorTarget::Orange, -45.0),
            (ColorTarget::Yellow, -15.0),
            (ColorTarget::Black, 0.0),
            (ColorTarget::Green, 15.0),
            (ColorTarget::Blue, 45.0),
            (ColorTarget::Purple, 75.0),
        ];
        let positions = layout
            .into_iter()
            .map(|(color, deg): (ColorTarget, f64)| {
                let a = deg.to_radians();
                (
                    color,
                    Vector3::new(Self::RADIUS * a.cos(), Self::RADIUS * a.sin(), Self::HEIGHT),
                )
            })
            .collect();
        Self::new(positions, pose_unchecked(home, params).orientation)
    }

    pub fn position(&self, color: ColorTarget) -> Option<Vector3<f64>> {
        self.positions.get(&color).copied()
    }

    pub fn pose(&self, color: ColorTarget) -> Option<EePose> {
        self.position(color)
            .map(|p| EePose::new(p, self.orientation))
    }

    pub fn orientation(&self) -> UnitQuaternion<f64> {
        self.orientation
    }

    pub fn set(&mut self, color: ColorTarget, position: Vector3<f64>) {
        self.positions.insert(color, position);
    }

    pub fn iter(&self) -> impl Iterator<Item = (ColorTarget, Vector3<f64>)> + '_ {
        self.positions.iter().map(|(c, p)| (*c, *p))
    }

    /// Every regular color must have an entry that IK can reach from `home`.
    pub fn validate(
        &self,
        params: &KinematicParams,
        home: &JointConfig,
    ) -> Result<(), KinematicsError> {
        for color in ColorTarget::ALL.into_iter().filter(|c| !c.tutorial_only()) {
            let pose = self
                .pose(color)
                .ok_or_else(|| KinematicsError::NoTarget(color.to_string()))?;
            solve_ik(&pose, home, params, &IkOptions::default())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanOptions {
    /// End-effector speed along the segment, m/s.
    pub speed: f64,
    /// Waypoints per second.
    pub sample_rate: f64,
    /// Largest joint change allowed between consecutive waypoints, radians.
    pub max_joint_delta: f64,
    pub ik: IkOptions,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            speed: 0.25,
            sample_rate: 100.0,
            max_joint_delta: 0.1,
            ik: IkOptions::default(),
        }
    }
}

/// Number of waypoints for a straight segment: `ceil(duration * rate) + 1`,
/// or 1 for a zero-length segment.
pub(crate) fn waypoint_count(distance: f64, opts: &PlanOptions) -> usize {
    if distance <= f64::EPSILON {
        return 1;
    }
    let samples = distance / opts.speed * opts.sample_rate;
    // Absorb rounding so an exact multiple does not gain a zero-length step.
    (samples - 1e-9).ceil().max(1.0) as usize + 1
}

/// Straight Cartesian segment from the current flange position to the
/// color's target at constant speed, each sample solved by IK seeded with
/// the previous waypoint.
pub fn plan_trajectory(
    start: &JointConfig,
    color: ColorTarget,
    table: &TargetTable,
    params: &KinematicParams,
    opts: &PlanOptions,
) -> Result<Trajectory, KinematicsError> {
    check_limits(start, params)?;
    let goal = table
        .position(color)
        .ok_or_else(|| KinematicsError::NoTarget(color.to_string()))?;
    let from = pose_unchecked(start, params).position;
    let delta = goal - from;
    let distance = delta.norm();
    let count = waypoint_count(distance, opts);
    let duration = distance / opts.speed;
    let step = 1.0 / opts.sample_rate;

    let mut waypoints = Vec::with_capacity(count);
    waypoints.push(Waypoint { q: *start, t: 0.0 });
    for k in 1..count {
        let (t, position) = if k + 1 == count {
            (duration, goal)
        } else {
            let t = k as f64 * step;
            (t, from + delta * (t * opts.speed / distance))
        };
        let prev = waypoints[k - 1].q;
        let target = EePose::new(position, table.orientation());
        let q = solve_ik(&target, &prev, params, &opts.ik).map_err(|e| {
            KinematicsError::PathInfeasible {
                index: k,
                reason: e.to_string(),
            }
        })?;
        let jump = q
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if jump >= opts.max_joint_delta {
            return Err(KinematicsError::PathInfeasible {
                index: k,
                reason: format!("joint step {jump:.3} rad exceeds {}", opts.max_joint_delta),
            });
        }
        waypoints.push(Waypoint { q, t });
    }
    Ok(Trajectory {
        waypoints,
        sample_rate: opts.sample_rate,
    })
}
