use nalgebra::{Isometry3, SMatrix, Translation3, UnitQuaternion, Vector3};

use super::{DhRow, EePose, JointConfig, KinematicParams, KinematicsError, DOF};

/// Geometric Jacobian: rows 0..3 linear velocity, rows 3..6 angular velocity.
pub type Jacobian = SMatrix<f64, 6, DOF>;

fn link_transform(row: &DhRow, theta: f64) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::new(row.a, 0.0, 0.0),
        UnitQuaternion::from_axis_angle(&Vector3::x_axis(), row.alpha),
    ) * Isometry3::from_parts(
        Translation3::new(0.0, 0.0, row.d),
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), theta + row.theta_offset),
    )
}

/// Frame of every joint (its z axis is the joint axis) and the flange frame.
pub(crate) fn joint_frames(
    q: &JointConfig,
    params: &KinematicParams,
) -> ([Isometry3<f64>; DOF], Isometry3<f64>) {
    let mut frames = [Isometry3::identity(); DOF];
    let mut acc = Isometry3::identity();
    for (i, (row, &theta)) in params.rows.iter().zip(q).enumerate() {
        acc *= link_transform(row, theta);
        frames[i] = acc;
    }
    let flange = acc * link_transform(&params.flange, 0.0);
    (frames, flange)
}

/// FK without the joint-limit check.
pub fn pose_unchecked(q: &JointConfig, params: &KinematicParams) -> EePose {
    let (_, flange) = joint_frames(q, params);
    EePose::new(flange.translation.vector, flange.rotation)
}

pub fn forward_kinematics(
    q: &JointConfig,
    params: &KinematicParams,
) -> Result<EePose, KinematicsError> {
    check_limits(q, params)?;
    Ok(pose_unchecked(q, params))
}

pub(crate) fn check_limits(
    q: &JointConfig,
    params: &KinematicParams,
) -> Result<(), KinematicsError> {
    let bad = params.violations(q);
    if bad.is_empty() {
        Ok(())
    } else {
        Err(KinematicsError::OutOfLimits(bad))
    }
}

pub(crate) fn jacobian_unchecked(q: &JointConfig, params: &KinematicParams) -> Jacobian {
    let (frames, flange) = joint_frames(q, params);
    let ee = flange.translation.vector;
    let mut jac = Jacobian::zeros();
    for (i, frame) in frames.iter().enumerate() {
        let axis = frame.rotation * Vector3::z();
        let linear = axis.cross(&(ee - frame.translation.vector));
        jac.fixed_view_mut::<3, 1>(0, i).copy_from(&linear);
        jac.fixed_view_mut::<3, 1>(3, i).copy_from(&axis);
    }
    jac
}

pub fn jacobian(q: &JointConfig, params: &KinematicParams) -> Result<Jacobian, KinematicsError> {
    check_limits(q, params)?;
    Ok(jacobian_unchecked(q, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot::Q_HOME;

    #[test]
    fn home_pose_matches_golden() {
        // Independent 4x4 homogeneous-matrix chain (numpy), frozen.
        let pose = forward_kinematics(&Q_HOME, &KinematicParams::panda()).unwrap();
        let golden = Vector3::new(
            3.070195700516105e-01,
            -6.945639121910836e-17,
            5.902695582766445e-01,
        );
        assert!((pose.position - golden).norm() < 1e-12);
        let r = pose.orientation.to_rotation_matrix();
        let golden_r = [
            [
                7.073882691671997e-01,
                -7.068251811053661e-01,
                6.681345410768345e-17,
            ],
            [
                -7.068251811053661e-01,
                -7.073882691671997e-01,
                -8.663007795899975e-17,
            ],
            [9.116297481945781e-17, 3.137427172528755e-17, -1.0],
        ];
        for (i, row) in golden_r.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((r[(i, j)] - v).abs() < 1e-12, "r[{i}][{j}]");
            }
        }
        assert!(pose.position.norm() < 1.2);
    }

    #[test]
    fn second_golden_config() {
        let q = [0.3, -0.5, 0.2, -1.9, 0.4, 1.2, -0.6];
        let pose = forward_kinematics(&q, &KinematicParams::panda()).unwrap();
        let golden = Vector3::new(0.27379571992332397, 0.23590620588353617, 0.6749097989358499);
        assert!((pose.position - golden).norm() < 1e-12);
        // scipy quaternion (x, y, z, w) up to sign
        let g = [
            0.8196348875019746,
            0.5443350081139964,
            -0.09515163999975312,
            -0.15114303006264815,
        ];
        let c = pose.orientation.coords;
        let dot: f64 = (0..4).map(|i| c[i] * g[i]).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn joint_one_rotates_about_vertical() {
        let params = KinematicParams::panda();
        let a = forward_kinematics(&Q_HOME, &params).unwrap().position;
        let mut q = Q_HOME;
        q[0] += 0.7;
        let b = forward_kinematics(&q, &params).unwrap().position;
        assert!((a.z - b.z).abs() < 1e-12);
        assert!((a.xy().norm() - b.xy().norm()).abs() < 1e-12);
    }

    #[test]
    fn out_of_limits_is_rejected() {
        let mut q = Q_HOME;
        q[1] = 2.0;
        assert_eq!(
            forward_kinematics(&q, &KinematicParams::panda()),
            Err(KinematicsError::OutOfLimits(vec![1]))
        );
        assert!(jacobian(&q, &KinematicParams::panda()).is_err());
    }

    #[test]
    fn determinism() {
        let params = KinematicParams::panda();
        let a = forward_kinematics(&Q_HOME, &params).unwrap();
        let b = forward_kinematics(&Q_HOME, &params).unwrap();
        assert_eq!(a.position.as_slice(), b.position.as_slice());
        assert_eq!(
            a.orientation.coords.as_slice(),
            b.orientation.coords.as_slice()
        );
    }

    #[test]
    fn jacobian_at_home() {
        let params = KinematicParams::panda();
        let j = jacobian(&Q_HOME, &params).unwrap();
        for c in 0..DOF {
            assert!(j.column(c).norm() > 1e-6, "column {c} is zero");
        }
        let (frames, _) = joint_frames(&Q_HOME, &params);
        let axis7 = frames[6].rotation * Vector3::z();
        let w7 = j.fixed_view::<3, 1>(3, 6).into_owned();
        assert!((w7 - axis7).norm() < 1e-15);
    }
}
