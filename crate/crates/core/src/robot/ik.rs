use nalgebra::{Matrix6, SVector, Vector6};
use serde::{Deserialize, Serialize};

use super::kinematics::{check_limits, jacobian_unchecked, pose_unchecked};
use super::{EePose, JointConfig, KinematicParams, KinematicsError, DOF};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IkOptions {
    /// Damping factor lambda.
    pub damping: f64,
    /// Largest per-joint change in one iteration, radians.
    pub max_step: f64,
    pub position_tolerance: f64,
    pub orientation_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            damping: 0.05,
            max_step: 0.1,
            position_tolerance: 1e-4,
            orientation_tolerance: 1e-3,
            max_iterations: 200,
        }
    }
}

/// Position error and rotation-vector error, both in the base frame.
fn pose_error(target: &EePose, current: &EePose) -> Vector6<f64> {
    let dp = target.position - current.position;
    let dw = (target.orientation * current.orientation.inverse()).scaled_axis();
    Vector6::new(dp.x, dp.y, dp.z, dw.x, dw.y, dw.z)
}

/// Damped least squares: `dq = J^T (J J^T + lambda^2 I)^-1 e`, each joint
/// step clamped to `max_step`, then the result clamped to the joint limits.
///
/// A joint sitting on a limit whose step would push it further out is
/// removed from the Jacobian for that iteration, so the remaining joints
/// take up the motion instead of the step being lost to clamping.
pub fn solve_ik(
    target: &EePose,
    seed: &JointConfig,
    params: &KinematicParams,
    opts: &IkOptions,
) -> Result<JointConfig, KinematicsError> {
    check_limits(seed, params)?;
    let damping = Matrix6::identity() * opts.damping * opts.damping;
    let mut q = *seed;
    let mut last = (f64::INFINITY, f64::INFINITY);
    for iteration in 0..=opts.max_iterations {
        let current = pose_unchecked(&q, params);
        let err = pose_error(target, &current);
        let position_error = err.fixed_rows::<3>(0).norm();
        let orientation_error = err.fixed_rows::<3>(3).norm();
        last = (position_error, orientation_error);
        if position_error < opts.position_tolerance
            && orientation_error < opts.orientation_tolerance
        {
            return Ok(q);
        }
        if iteration == opts.max_iterations {
            break;
        }
        let mut j = jacobian_unchecked(&q, params);
        let mut dq = SVector::<f64, DOF>::zeros();
        for _ in 0..DOF {
            let Some(inv) = (j * j.transpose() + damping).try_inverse() else {
                break;
            };
            dq = j.transpose() * (inv * err);
            let pinned: Vec<usize> = (0..DOF)
                .filter(|&i| j.column(i).iter().any(|v| *v != 0.0))
                .filter(|&i| {
                    let limit = params.limits[i];
                    (q[i] >= limit.upper && dq[i] > 0.0) || (q[i] <= limit.lower && dq[i] < 0.0)
                })
                .collect();
            if pinned.is_empty() {
                break;
            }
            for i in pinned {
                j.column_mut(i).fill(0.0);
            }
        }
        for i in 0..DOF {
            q[i] += dq[i].clamp(-opts.max_step, opts.max_step);
        }
        params.clamp(&mut q);
    }
    Err(KinematicsError::Unreachable {
        position_error: last.0,
        orientation_error: last.1,
    })
}
