//! Rolling-contact model of the spherical foot and the corrected leg inverse
//! kinematics (foot-end kinematic modification, FKM).
//!
//! With the ball centre at `p̂ = forward_kinematics(α)`, the real ground
//! contact sits one radius below it. As the calf tilts away from the vertical
//! by `φ`, a foot that rolls without slip has travelled an arc `r·φ`, so the
//! point on the ground that was touched when the calf was vertical (the *ideal
//! foothold*) lies a horizontal distance `r·φ` away from the current contact,
//! along the horizontal projection of the calf axis.

use std::sync::OnceLock;

use nalgebra::Vector3;
use thiserror::Error;

use crate::geometry::{
    calf_direction, forward_kinematics, inverse_kinematics, HipFramePoint, JointAngles, KinematicsError, KneeBranch,
    LegGeometry,
};

pub const MAX_FKM_ITERATIONS: usize = 50;
/// Fixed-point residual accepted by [`corrected_inverse_kinematics`] (m).
pub const FKM_TOLERANCE: f64 = 1e-7;
/// Residual at which the fixed-point iteration stops early (m).
const FKM_TARGET_RESIDUAL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RollingOffset {
    /// Horizontal offset from the real contact to the ideal foothold (hip frame, z = 0).
    pub delta: Vector3<f64>,
    /// Calf tilt angle (rad) driving the roll.
    pub phi: f64,
}

/// How the calf tilt angle is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiConvention {
    /// `arccos(−c1·c23)`: angle between the calf axis and the upward vertical.
    AsPrinted,
    /// `π − arccos(−c1·c23)`: angle between the calf axis and the downward vertical.
    Complement,
}

impl PhiConvention {
    /// Tilt from the calf-axis horizontal norm and its downward cosine `c1·c23`.
    fn phi(self, horizontal: f64, down_cos: f64) -> f64 {
        match self {
            PhiConvention::AsPrinted => horizontal.atan2(-down_cos),
            PhiConvention::Complement => horizontal.atan2(down_cos),
        }
    }
}

/// The φ convention in effect, fixed the first time it is requested: the one
/// that yields no roll offset when the calf hangs vertically.
pub fn phi_convention() -> PhiConvention {
    static CONVENTION: OnceLock<PhiConvention> = OnceLock::new();
    *CONVENTION.get_or_init(|| {
        let vertical = calf_direction(&JointAngles::new(0.0, 0.4, -0.4));
        let horizontal = vertical.x.hypot(vertical.y);
        let down_cos = -vertical.z;
        if PhiConvention::AsPrinted.phi(horizontal, down_cos).abs() < 1e-12 {
            PhiConvention::AsPrinted
        } else {
            debug_assert!(PhiConvention::Complement.phi(horizontal, down_cos).abs() < 1e-12);
            PhiConvention::Complement
        }
    })
}

pub fn rolling_offset(geom: &LegGeometry, alpha: &JointAngles) -> RollingOffset {
    let calf = calf_direction(alpha);
    let horizontal = calf.x.hypot(calf.y);
    let phi = phi_convention().phi(horizontal, -calf.z);
    if horizontal == 0.0 {
        return RollingOffset { delta: Vector3::zeros(), phi };
    }
    let scale = geom.foot_radius * phi / horizontal;
    RollingOffset {
        delta: Vector3::new(scale * calf.x, scale * calf.y, 0.0),
        phi,
    }
}

/// Ground contact of the ball: one radius below the ball centre.
pub fn real_contact_point(geom: &LegGeometry, alpha: &JointAngles) -> HipFramePoint {
    let mut p = forward_kinematics(geom, alpha);
    p.z -= geom.foot_radius;
    p
}

/// Ideal foothold: real contact shifted by the rolling offset.
pub fn ideal_foothold(geom: &LegGeometry, alpha: &JointAngles) -> HipFramePoint {
    real_contact_point(geom, alpha) + rolling_offset(geom, alpha).delta
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FkmError {
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("corrected inverse kinematics did not converge: residual {residual:.3e} m after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectedSolution {
    pub angles: JointAngles,
    /// ‖real_contact(α′) + Δ(α′) − ideal‖ (m).
    pub residual: f64,
    pub iterations: usize,
}

/// Joint angles whose rolled foot puts the ideal foothold on `ideal`.
///
/// Solves `real_contact(α′) + Δ(α′) = ideal` by fixed-point iteration on the
/// ball-centre target `ideal + r·ẑ − Δ(α′)`; the first pass, which evaluates
/// `Δ` at the point-foot solution, is the classical closed-form correction.
pub fn corrected_inverse_kinematics(
    geom: &LegGeometry,
    ideal: &HipFramePoint,
    branch: KneeBranch,
) -> Result<CorrectedSolution, FkmError> {
    let lift = Vector3::new(0.0, 0.0, geom.foot_radius);
    let residual_of = |alpha: &JointAngles| (ideal_foothold(geom, alpha) - ideal).norm();

    // The uncorrected guess can fall just outside the workspace even when the
    // corrected target is inside; start from the nearest reachable point.
    let guess = ideal + lift;
    let norm = guess.norm();
    let clamped = if norm > 0.0 { norm.clamp(geom.min_reach(), geom.max_reach()) } else { norm };
    let guess = if clamped != norm { guess * (clamped / norm) } else { guess };
    let mut alpha = inverse_kinematics(geom, &guess, branch)?;
    let mut residual = residual_of(&alpha);
    let mut iterations = 0;
    while residual > FKM_TARGET_RESIDUAL && iterations < MAX_FKM_ITERATIONS {
        let delta = rolling_offset(geom, &alpha).delta;
        let next = inverse_kinematics(geom, &(ideal + lift - delta), branch)?;
        let next_residual = residual_of(&next);
        iterations += 1;
        if next_residual >= residual {
            // rounding floor reached
            break;
        }
        alpha = next;
        residual = next_residual;
    }
    if residual > FKM_TOLERANCE {
        return Err(FkmError::NoConvergence { residual, iterations });
    }
    Ok(CorrectedSolution {
        angles: alpha,
        residual,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn geom() -> LegGeometry {
        LegGeometry::default()
    }

    #[test]
    fn convention_is_complement_for_this_frame() {
        assert_eq!(phi_convention(), PhiConvention::Complement);
    }

    #[test]
    fn vertical_calf_has_no_offset() {
        let off = rolling_offset(&geom(), &JointAngles::new(0.0, 0.4, -0.4));
        assert_eq!(off.delta, Vector3::zeros());
        assert_eq!(off.phi, 0.0);
    }

    #[test]
    fn offset_matches_rolled_sphere() {
        // Calf axis from the difference of the knee and foot points, tilt via
        // arccos, arc length accumulated over 1e5 increments, 40 digits.
        let off = rolling_offset(&geom(), &JointAngles::new(0.2, 0.3, -0.6));
        assert_abs_diff_eq!(off.phi, 0.358_872_654_676_541_2, epsilon = 1e-14);
        assert_abs_diff_eq!(off.delta.x, -0.006_794_103_379_283_776, epsilon = 1e-15);
        assert_abs_diff_eq!(off.delta.y, 0.004_363_471_702_453_785, epsilon = 1e-15);
        assert_eq!(off.delta.z, 0.0);
    }

    #[test]
    fn contact_sits_below_ball_centre() {
        let g = geom();
        let alpha = JointAngles::new(0.1, 0.5, -1.2);
        let centre = forward_kinematics(&g, &alpha);
        assert_eq!(real_contact_point(&g, &alpha), centre - Vector3::new(0.0, 0.0, g.foot_radius));
        let zero_abad = real_contact_point(&g, &JointAngles::new(0.0, 0.5, -1.2));
        assert_eq!(zero_abad.y, 0.0);
    }

    #[test]
    fn point_foot_reduces_to_plain_ik() {
        let g = geom().with_foot_radius(0.0);
        let target = Vector3::new(0.03, -0.02, -0.27);
        let plain = inverse_kinematics(&g, &target, KneeBranch::Backward).unwrap();
        let corrected = corrected_inverse_kinematics(&g, &target, KneeBranch::Backward).unwrap();
        assert_eq!(corrected.angles, plain);
    }

    #[test]
    fn vertical_calf_target_needs_no_correction() {
        let g = geom();
        let alpha = JointAngles::new(0.0, 0.4, -0.4);
        let ideal = ideal_foothold(&g, &alpha);
        let sol = corrected_inverse_kinematics(&g, &ideal, KneeBranch::Backward).unwrap();
        assert!(sol.angles.max_abs_diff(&alpha) < 1e-9);
        assert!(rolling_offset(&g, &sol.angles).delta.norm() < 1e-10);
        let plain = inverse_kinematics(&g, &forward_kinematics(&g, &alpha), KneeBranch::Backward).unwrap();
        assert!(sol.angles.max_abs_diff(&plain) < 1e-9);
    }

    #[test]
    fn correction_shrinks_with_radius() {
        let target = Vector3::new(0.02, -0.03, -0.27);
        let plain = inverse_kinematics(&geom(), &target, KneeBranch::Backward).unwrap();
        let mut last = 0.0;
        for r in [0.001, 0.005, 0.01, 0.02, 0.03] {
            let g = geom().with_foot_radius(r);
            let lifted = target - Vector3::new(0.0, 0.0, r);
            let sol = corrected_inverse_kinematics(&g, &lifted, KneeBranch::Backward).unwrap();
            let gap = sol.angles.max_abs_diff(&plain);
            assert!(gap > last, "gap must grow with r");
            assert!(gap < 5.0 * r, "gap {gap} not O(r) at r = {r}");
            last = gap;
        }
    }

    proptest! {
        #[test]
        fn offset_length_is_arc_length(a1 in -0.8f64..0.8, a2 in -1.5f64..1.5, a3 in -2.6f64..-0.1) {
            let g = geom();
            let off = rolling_offset(&g, &JointAngles::new(a1, a2, a3));
            prop_assert_eq!(off.delta.z, 0.0);
            prop_assert!(off.phi >= 0.0 && off.phi <= std::f64::consts::PI);
            if off.phi > 0.0 {
                let ratio = off.delta.norm() / (g.foot_radius * off.phi);
                prop_assert!((ratio - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn offset_is_coplanar_with_calf(a1 in -0.8f64..0.8, a2 in -1.5f64..1.5, a3 in -2.6f64..-0.1) {
            let alpha = JointAngles::new(a1, a2, a3);
            let off = rolling_offset(&geom(), &alpha);
            let calf = calf_direction(&alpha);
            let triple = off.delta.dot(&calf.cross(&Vector3::z()));
            prop_assert!(triple.abs() < 1e-12);
            // same horizontal heading as the calf axis
            prop_assert!(off.delta.x * calf.x + off.delta.y * calf.y >= 0.0);
        }

        #[test]
        fn corrected_ik_hits_ideal(a1 in -0.6f64..0.6, a2 in -1.0f64..1.2, a3 in -2.4f64..-0.3) {
            let g = geom();
            let alpha = JointAngles::new(a1, a2, a3);
            // stance-like postures: calf within 60° of hanging straight down
            prop_assume!(-calf_direction(&alpha).z > 0.5);
            let ideal = ideal_foothold(&g, &alpha);
            let sol = corrected_inverse_kinematics(&g, &ideal, KneeBranch::Backward).unwrap();
            let err = (ideal_foothold(&g, &sol.angles) - ideal).norm();
            prop_assert!(err < FKM_TOLERANCE);
            prop_assert!((err - sol.residual).abs() < 1e-15);
        }
    }
}
