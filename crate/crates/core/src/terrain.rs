//! Ground plane estimation from foot contacts, foothold remapping, body
//! posture targets, and the ground-truth terrain models used by the plant.

use nalgebra::{Matrix2, Matrix3, Rotation3, SymmetricEigen, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gait::FootholdPlan;

/// Condition number of the (centred) normal matrix above which a fit is refused.
pub const MAX_CONDITION: f64 = 1e8;

/// `tan(60°)`: steeper fitted slopes are treated as estimation failures.
pub fn max_slope() -> f64 {
    60f64.to_radians().tan()
}

/// `z = a0 + a1·x + a2·y`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TerrainPlane {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

impl TerrainPlane {
    pub const FLAT: TerrainPlane = TerrainPlane { a0: 0.0, a1: 0.0, a2: 0.0 };

    pub fn new(a0: f64, a1: f64, a2: f64) -> Self {
        Self { a0, a1, a2 }
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        self.a0 + self.a1 * x + self.a2 * y
    }

    /// Upward (unnormalised) normal `(−a1, −a2, 1)`.
    pub fn normal(&self) -> Vector3<f64> {
        Vector3::new(-self.a1, -self.a2, 1.0)
    }

    pub fn is_valid(&self) -> bool {
        let bound = max_slope();
        self.a0.is_finite() && self.a1.abs() < bound && self.a2.abs() < bound
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TerrainError {
    #[error("degenerate contact set: {reason}")]
    Degenerate { reason: String },
}

/// Latest world-frame contact of each leg, in FR, FL, BR, BL order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContactHistory {
    pub contacts: [Option<Vector3<f64>>; 4],
}

impl ContactHistory {
    pub fn new(contacts: [Option<Vector3<f64>>; 4]) -> Self {
        Self { contacts }
    }

    pub fn all(points: [Vector3<f64>; 4]) -> Self {
        Self { contacts: points.map(Some) }
    }

    pub fn valid(&self) -> impl Iterator<Item = &Vector3<f64>> {
        self.contacts.iter().flatten()
    }
}

/// Least-squares plane through the valid contacts.
///
/// Solved on coordinates centred at the contact centroid, which leaves the
/// conditioning independent of where in the world the robot stands.
pub fn fit_plane(history: &ContactHistory) -> Result<TerrainPlane, TerrainError> {
    let points: Vec<&Vector3<f64>> = history.valid().collect();
    if points.len() < 3 {
        return Err(TerrainError::Degenerate {
            reason: format!("{} valid contacts, need 3", points.len()),
        });
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector3::zeros(), |acc, p| acc + **p) / n;

    let mut sxx = Matrix2::zeros();
    let mut sxz = Vector2::zeros();
    for p in &points {
        let d = **p - mean;
        let xy = Vector2::new(d.x, d.y);
        sxx += xy * xy.transpose();
        sxz += xy * d.z;
    }

    let normal_matrix = Matrix3::new(n, 0.0, 0.0, 0.0, sxx[(0, 0)], sxx[(0, 1)], 0.0, sxx[(1, 0)], sxx[(1, 1)]);
    let eig = SymmetricEigen::new(normal_matrix).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        return Err(TerrainError::Degenerate {
            reason: format!("normal matrix condition {:.3e}", hi / lo),
        });
    }
    let slope = sxx.cholesky().ok_or_else(|| TerrainError::Degenerate {
        reason: "normal matrix not positive definite".into(),
    })?;
    let g = slope.solve(&sxz);
    let plane = TerrainPlane::new(mean.z - g.x * mean.x - g.y * mean.y, g.x, g.y);
    if !plane.is_valid() {
        return Err(TerrainError::Degenerate {
            reason: format!("implausible slope ({:.3}, {:.3})", plane.a1, plane.a2),
        });
    }
    Ok(plane)
}

/// Lift a foothold onto the plane: x, y kept, `z ← a1·x + a2·y + z + a0`.
pub fn remap_point(plane: &TerrainPlane, p: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(p.x, p.y, plane.a1 * p.x + plane.a2 * p.y + p.z + plane.a0)
}

pub fn remap_foothold(plane: &TerrainPlane, plan: &FootholdPlan) -> FootholdPlan {
    FootholdPlan {
        footholds: plan.footholds.map(|p| remap_point(plane, &p)),
        hip_projections: plan.hip_projections,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Posture {
    pub pitch: f64,
    pub roll: f64,
}

/// Body pitch and roll that make the body plane parallel to `plane` for a
/// body heading of `yaw`, with the attitude composed as `Rz(yaw)·Ry(pitch)·Rx(roll)`.
///
/// At zero yaw, `pitch = −atan(a1)`; roll is `atan(a2)` on ground without
/// pitch and `atan(a2·cos(pitch))` in general, which is what keeps the normals
/// exactly parallel.
pub fn posture_target(plane: &TerrainPlane, yaw: f64) -> Posture {
    let (s, c) = yaw.sin_cos();
    let gx = c * plane.a1 + s * plane.a2;
    let gy = -s * plane.a1 + c * plane.a2;
    Posture {
        pitch: -gx.atan(),
        roll: (gy / (1.0 + gx * gx).sqrt()).atan(),
    }
}

/// Body rotation for a yaw/pitch/roll triple.
pub fn body_rotation(yaw: f64, pitch: f64, roll: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), yaw)
        * Rotation3::from_axis_angle(&Vector3::y_axis(), pitch)
        * Rotation3::from_axis_angle(&Vector3::x_axis(), roll)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerrainModel {
    Flat,
    Slope {
        #[serde(rename = "slope_pitch_deg")]
        pitch_deg: f64,
    },
    Stairs {
        #[serde(rename = "stair_rise")]
        rise: f64,
        #[serde(rename = "stair_run")]
        run: f64,
    },
}

impl Default for TerrainModel {
    fn default() -> Self {
        TerrainModel::Flat
    }
}

impl TerrainModel {
    pub fn height(&self, x: f64, _y: f64) -> f64 {
        match *self {
            TerrainModel::Flat => 0.0,
            TerrainModel::Slope { pitch_deg } => pitch_deg.to_radians().tan() * x,
            TerrainModel::Stairs { rise, run } => rise * (x / run).floor(),
        }
    }

    /// Ground plane under `(x, y)`; on stairs, the tread.
    pub fn local_plane(&self, x: f64, y: f64) -> TerrainPlane {
        match *self {
            TerrainModel::Flat => TerrainPlane::FLAT,
            TerrainModel::Slope { pitch_deg } => TerrainPlane::new(0.0, pitch_deg.to_radians().tan(), 0.0),
            TerrainModel::Stairs { .. } => TerrainPlane::new(self.height(x, y), 0.0, 0.0),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TerrainModel::Flat => "flat",
            TerrainModel::Slope { .. } => "slope",
            TerrainModel::Stairs { .. } => "stairs",
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match *self {
            TerrainModel::Flat => Ok(()),
            TerrainModel::Slope { pitch_deg } if pitch_deg.is_finite() && pitch_deg.abs() < 60.0 => Ok(()),
            TerrainModel::Slope { pitch_deg } => Err(format!("slope pitch {pitch_deg}° out of range")),
            TerrainModel::Stairs { rise, run } if rise.is_finite() && run > 0.0 && rise.abs() < run => Ok(()),
            TerrainModel::Stairs { rise, run } => Err(format!("stairs rise {rise} / run {run} invalid")),
        }
    }
}
