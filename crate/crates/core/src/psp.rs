//! Projected-support-polygon CoM planner.
//!
//! Every leg contributes a vertex: the stance-diagonal midpoint `O` plus the
//! leg's horizontal offset from `O`, scaled by a phase weight that peaks at
//! mid-stance and vanishes in swing. The desired CoM is the plain average of
//! the four vertices.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::gait::{ContactMode, GaitState};
use crate::geometry::Leg;
use crate::terrain::TerrainPlane;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    #[default]
    Gaussian,
    Geometric,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PspParams {
    pub distribution: Distribution,
    /// Spread of the weight bump, in units of stance duration.
    pub sigma: f64,
    /// CoM height above the fitted ground plane (m).
    pub standing_height: f64,
}

impl Default for PspParams {
    fn default() -> Self {
        Self {
            distribution: Distribution::Gaussian,
            sigma: 0.16,
            standing_height: 0.29,
        }
    }
}

/// Unit-peak bump over stance progress `s ∈ [0, 1]`, maximal at `s = 0.5`.
///
/// * Gaussian: `exp(−(s − ½)² / 2σ²)`.
/// * Geometric: two-sided geometric decay `exp(−|s − ½| / σ)`.
/// * Poisson: the pmf with mean `λ = 1/(2σ)`, evaluated at `k = s/σ` via
///   `ln Γ`, scaled by its value at `k = λ`. The continuous extension peaks
///   slightly before the mean, hence the clamp.
pub fn bump(s: f64, params: &PspParams) -> f64 {
    let sigma = params.sigma;
    match params.distribution {
        Distribution::Gaussian => (-(s - 0.5).powi(2) / (2.0 * sigma * sigma)).exp(),
        Distribution::Geometric => (-(s - 0.5).abs() / sigma).exp(),
        Distribution::Poisson => {
            let lambda = 0.5 / sigma;
            let log_pmf = |k: f64| k * lambda.ln() - lambda - ln_gamma(k + 1.0);
            (log_pmf(s / sigma) - log_pmf(lambda)).exp().min(1.0)
        }
    }
}

pub fn stance_weight(phase: f64, mode: ContactMode, duty: f64, params: &PspParams) -> f64 {
    match mode {
        ContactMode::Swing => 0.0,
        ContactMode::Stance => bump(phase / duty, params).clamp(0.0, 1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportVertexSet {
    pub origin: Vector3<f64>,
    pub offsets: [Vector3<f64>; 4],
    /// Horizontal projections of `offsets`.
    pub projected: [Vector3<f64>; 4],
    pub weights: [f64; 4],
    pub weighted: [Vector3<f64>; 4],
    /// `O` on the ground plane `z = 0` plus the weighted offset.
    pub vertices: [Vector3<f64>; 4],
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PspError {
    #[error("need at least two stance legs, have {0}")]
    DegenerateSupport(usize),
}

pub fn support_vertices(feet: &[Vector3<f64>; 4], modes: [ContactMode; 4], weights: [f64; 4]) -> Result<SupportVertexSet, PspError> {
    let stance: Vec<&Vector3<f64>> = feet.iter().zip(modes).filter(|(_, m)| *m == ContactMode::Stance).map(|(f, _)| f).collect();
    if stance.len() < 2 {
        return Err(PspError::DegenerateSupport(stance.len()));
    }
    let origin = stance.iter().fold(Vector3::zeros(), |acc, f| acc + **f) / stance.len() as f64;
    let base = Vector3::new(origin.x, origin.y, 0.0);
    let offsets = feet.map(|f| f - origin);
    let projected = offsets.map(|r| Vector3::new(r.x, r.y, 0.0));
    let weighted: [Vector3<f64>; 4] = std::array::from_fn(|i| projected[i] * weights[i]);
    let vertices = weighted.map(|v| base + v);
    Ok(SupportVertexSet {
        origin,
        offsets,
        projected,
        weights,
        weighted,
        vertices,
    })
}

/// Desired CoM: vertex average in xy, standing height above `plane` in z.
pub fn desired_com(
    feet: &[Vector3<f64>; 4],
    gait: &GaitState,
    params: &PspParams,
    plane: &TerrainPlane,
) -> Result<Vector3<f64>, PspError> {
    let duty = gait.params.duty;
    let weights = Leg::ALL.map(|leg| stance_weight(gait.phase(leg), gait.mode(leg), duty, params));
    let set = support_vertices(feet, gait.modes(), weights)?;
    let mean = set.vertices.iter().fold(Vector3::zeros(), |acc, v| acc + v) / 4.0;
    Ok(Vector3::new(mean.x, mean.y, plane.height(mean.x, mean.y) + params.standing_height))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComReference {
    pub target: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub dt: f64,
    pub positions: Vec<Vector3<f64>>,
}

/// Straight-line reference from `current` reaching `target` after `period`,
/// sampled every `dt` (first sample one `dt` in).
pub fn interpolate_com(current: &Vector3<f64>, target: &Vector3<f64>, period: f64, dt: f64) -> ComReference {
    debug_assert!(period > 0.0 && dt > 0.0 && dt <= period);
    let velocity = (target - current) / period;
    let count = (period / dt + 1e-9).floor() as usize;
    let mut positions: Vec<Vector3<f64>> = (1..=count).map(|k| current + velocity * (k as f64 * dt)).collect();
    if ((count as f64) * dt - period).abs() < 1e-9 * period {
        if let Some(last) = positions.last_mut() {
            *last = *target;
        }
    }
    ComReference {
        target: *target,
        velocity,
        dt,
        positions,
    }
}
