//! Leg geometry, joint conventions and point-foot kinematics of a 3-DoF leg.
//!
//! Every leg uses the same hip-root frame, aligned with the body: x forward,
//! y to the left, z up. A foot hanging below its hip therefore has z < 0.
//! The forward map places the *ball centre* of the foot; the ground contact of
//! a spherical foot is handled in [`crate::rolling`].

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Position relative to a hip joint, expressed in the hip-root frame (m).
pub type HipFramePoint = Vector3<f64>;

/// Distances below this are treated as lying on the hip-roll axis.
const SINGULAR_EPS: f64 = 1e-12;
/// Slack on the reach annulus so that forward-kinematics outputs at full
/// extension are accepted despite rounding.
const REACH_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Leg {
    FR,
    FL,
    BR,
    BL,
}

impl Leg {
    pub const ALL: [Leg; 4] = [Leg::FR, Leg::FL, Leg::BR, Leg::BL];

    pub fn index(self) -> usize {
        match self {
            Leg::FR => 0,
            Leg::FL => 1,
            Leg::BR => 2,
            Leg::BL => 3,
        }
    }

    /// Trot pairing: FR+BL move together, FL+BR move together.
    pub fn diagonal(self) -> Diagonal {
        match self {
            Leg::FR | Leg::BL => Diagonal::A,
            Leg::FL | Leg::BR => Diagonal::B,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Leg::FR => "FR",
            Leg::FL => "FL",
            Leg::BR => "BR",
            Leg::BL => "BL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Diagonal {
    /// FR and BL.
    A,
    /// FL and BR.
    B,
}

impl Diagonal {
    pub fn legs(self) -> [Leg; 2] {
        match self {
            Diagonal::A => [Leg::FR, Leg::BL],
            Diagonal::B => [Leg::FL, Leg::BR],
        }
    }
}

/// Sign of the knee angle selected by inverse kinematics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KneeBranch {
    /// Knee angle ≤ 0.
    #[default]
    Backward,
    /// Knee angle ≥ 0.
    Forward,
}

impl KneeBranch {
    pub fn of(knee: f64) -> Self {
        if knee > 0.0 {
            KneeBranch::Forward
        } else {
            KneeBranch::Backward
        }
    }

    fn sign(self) -> f64 {
        match self {
            KneeBranch::Backward => -1.0,
            KneeBranch::Forward => 1.0,
        }
    }
}

/// Joint vector (ab/ad, thigh pitch, knee), radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointAngles {
    pub ab_ad: f64,
    pub thigh: f64,
    pub knee: f64,
}

impl JointAngles {
    pub fn new(ab_ad: f64, thigh: f64, knee: f64) -> Self {
        Self { ab_ad, thigh, knee }
    }

    pub fn is_finite(&self) -> bool {
        self.ab_ad.is_finite() && self.thigh.is_finite() && self.knee.is_finite()
    }

    pub fn branch(&self) -> KneeBranch {
        KneeBranch::of(self.knee)
    }

    /// Largest absolute component difference.
    pub fn max_abs_diff(&self, other: &JointAngles) -> f64 {
        (self.ab_ad - other.ab_ad)
            .abs()
            .max((self.thigh - other.thigh).abs())
            .max((self.knee - other.knee).abs())
    }
}

/// Box of admissible joint angles (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointLimits {
    pub ab_ad: [f64; 2],
    pub thigh: [f64; 2],
    pub knee: [f64; 2],
}

impl Default for JointLimits {
    fn default() -> Self {
        Self {
            ab_ad: [-0.8, 0.8],
            thigh: [-1.5, 1.5],
            knee: [-2.6, -0.1],
        }
    }
}

impl JointLimits {
    pub fn contains(&self, alpha: &JointAngles) -> bool {
        let within = |v: f64, [lo, hi]: [f64; 2]| v >= lo && v <= hi;
        within(alpha.ab_ad, self.ab_ad) && within(alpha.thigh, self.thigh) && within(alpha.knee, self.knee)
    }
}

/// Link lengths, foot radius and body footprint. Lengths in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LegGeometry {
    /// Hip-to-knee length.
    pub l_thigh: f64,
    /// Knee-to-ball-centre length.
    pub l_calf: f64,
    /// Radius of the spherical foot.
    pub foot_radius: f64,
    /// Longitudinal hip spacing.
    pub body_length: f64,
    /// Lateral hip spacing.
    pub body_width: f64,
    pub joint_limits: JointLimits,
}

impl Default for LegGeometry {
    fn default() -> Self {
        Self {
            l_thigh: 0.215,
            l_calf: 0.20,
            foot_radius: 0.0225,
            body_length: 0.38,
            body_width: 0.10,
            joint_limits: JointLimits::default(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("link lengths must be positive (thigh {l_thigh}, calf {l_calf})")]
    NonPositiveLink { l_thigh: f64, l_calf: f64 },
    #[error("foot radius {0} must lie in [0, calf length)")]
    FootRadius(f64),
    #[error("body dimensions must be non-negative and finite")]
    BodyDimensions,
}

impl LegGeometry {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.l_thigh > 0.0 && self.l_calf > 0.0) {
            return Err(GeometryError::NonPositiveLink {
                l_thigh: self.l_thigh,
                l_calf: self.l_calf,
            });
        }
        if !(self.foot_radius >= 0.0 && self.foot_radius < self.l_calf) {
            return Err(GeometryError::FootRadius(self.foot_radius));
        }
        if !(self.body_length >= 0.0
            && self.body_width >= 0.0
            && self.body_length.is_finite()
            && self.body_width.is_finite())
        {
            return Err(GeometryError::BodyDimensions);
        }
        Ok(())
    }

    pub fn max_reach(&self) -> f64 {
        self.l_thigh + self.l_calf
    }

    pub fn min_reach(&self) -> f64 {
        (self.l_thigh - self.l_calf).abs()
    }

    /// Hip position relative to the body centre, body frame.
    pub fn hip_offset(&self, leg: Leg) -> Vector3<f64> {
        let (hx, hy) = (self.body_length / 2.0, self.body_width / 2.0);
        match leg {
            Leg::FR => Vector3::new(hx, -hy, 0.0),
            Leg::FL => Vector3::new(hx, hy, 0.0),
            Leg::BR => Vector3::new(-hx, -hy, 0.0),
            Leg::BL => Vector3::new(-hx, hy, 0.0),
        }
    }

    pub fn with_foot_radius(mut self, foot_radius: f64) -> Self {
        self.foot_radius = foot_radius;
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("target at distance {distance:.6} m is outside the reachable shell [{min:.6}, {max:.6}] m")]
    Unreachable { distance: f64, min: f64, max: f64 },
    #[error("target lies on the hip-roll axis; ab/ad angle is undefined")]
    Singular,
    #[error("target is not finite")]
    NonFinite,
}

/// Unit vector of the calf link (knee towards ball centre) in the hip frame.
pub fn calf_direction(alpha: &JointAngles) -> Vector3<f64> {
    let (s1, c1) = alpha.ab_ad.sin_cos();
    let (s23, c23) = (alpha.thigh + alpha.knee).sin_cos();
    Vector3::new(s23, s1 * c23, -c1 * c23)
}

/// Ball-centre position of the point-foot model.
pub fn forward_kinematics(geom: &LegGeometry, alpha: &JointAngles) -> HipFramePoint {
    let (l2, l3) = (geom.l_thigh, geom.l_calf);
    let (s1, c1) = alpha.ab_ad.sin_cos();
    let (s2, c2) = alpha.thigh.sin_cos();
    let (s23, c23) = (alpha.thigh + alpha.knee).sin_cos();
    Vector3::new(
        s23 * l3 + s2 * l2,
        s1 * c23 * l3 + s1 * c2 * l2,
        -c1 * c23 * l3 - c1 * c2 * l2,
    )
}

/// Analytic inverse of [`forward_kinematics`].
///
/// The ab/ad angle is taken so that the sagittal-plane leg extension is
/// non-negative (ab/ad ∈ (−π/2, π/2] for feet below the hip). The knee angle
/// comes from the half-angle form of the law of cosines, which stays well
/// conditioned close to full extension.
pub fn inverse_kinematics(
    geom: &LegGeometry,
    target: &HipFramePoint,
    branch: KneeBranch,
) -> Result<JointAngles, KinematicsError> {
    if !(target.x.is_finite() && target.y.is_finite() && target.z.is_finite()) {
        return Err(KinematicsError::NonFinite);
    }
    let (l2, l3) = (geom.l_thigh, geom.l_calf);
    let dist_sq = target.norm_squared();
    let dist = dist_sq.sqrt();
    let (min, max) = (geom.min_reach(), geom.max_reach());
    if dist > max + REACH_SLACK || dist < min - REACH_SLACK {
        return Err(KinematicsError::Unreachable { distance: dist, min, max });
    }
    let extension = target.y.hypot(target.z);
    if extension < SINGULAR_EPS {
        return Err(KinematicsError::Singular);
    }

    // (l2 + l3)^2 - |p|^2 = 4 l2 l3 sin^2(knee / 2)
    let half_sin_sq = (((l2 + l3) * (l2 + l3) - dist_sq) / (4.0 * l2 * l3)).clamp(0.0, 1.0);
    let knee = branch.sign() * 2.0 * half_sin_sq.sqrt().asin();

    let ab_ad = target.y.atan2(-target.z);

    // In the sagittal plane: x = a sin(t) + b cos(t), h = a cos(t) - b sin(t)
    let (sk, ck) = knee.sin_cos();
    let a = l2 + l3 * ck;
    let b = l3 * sk;
    let thigh = target.x.atan2(extension) - b.atan2(a);

    Ok(JointAngles { ab_ad, thigh, knee })
}
