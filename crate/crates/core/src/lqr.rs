//! Reference-path queries, the linearised unicycle body model, a discrete
//! Riccati solver and the tracking correction built on it.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2, Matrix3, Matrix3x2, SMatrix, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DARE_TOLERANCE: f64 = 1e-10;
pub const DARE_MAX_ITERATIONS: usize = 100_000;

/// Wrap to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReferencePath {
    /// Ordered samples traversed at `speed`.
    Samples { points: Vec<Vector2<f64>>, speed: f64 },
    /// Spin in place about `center`, heading `theta0 + omega·t`.
    Spin { center: Vector2<f64>, theta0: f64, omega: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalPoint {
    pub index: usize,
    pub point: Vector2<f64>,
    pub heading: f64,
    /// Unbounded (`f64::INFINITY`) on straight stretches, 0 for a spin.
    pub curvature_radius: f64,
    pub speed: f64,
}

/// Nearest path sample to `com` with its tangent heading and curvature radius.
/// `t` is only used by spin references.
pub fn goal_point(path: &ReferencePath, com: &Vector2<f64>, t: f64) -> GoalPoint {
    match path {
        ReferencePath::Spin { center, theta0, omega } => GoalPoint {
            index: 0,
            point: *center,
            heading: theta0 + omega * t,
            curvature_radius: 0.0,
            speed: 0.0,
        },
        ReferencePath::Samples { points, speed } => {
            assert!(!points.is_empty(), "empty reference path");
            let index = points
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - com).norm_squared().total_cmp(&(b.1 - com).norm_squared()))
                .map(|(i, _)| i)
                .unwrap();
            let (d1, d2) = path_derivatives(points, index);
            let heading = d1.y.atan2(d1.x);
            let cross = (d1.x * d2.y - d1.y * d2.x).abs();
            let curvature_radius = if cross == 0.0 {
                f64::INFINITY
            } else {
                d1.norm_squared().powf(1.5) / cross
            };
            GoalPoint {
                index,
                point: points[index],
                heading,
                curvature_radius,
                speed: *speed,
            }
        }
    }
}

/// First and second derivatives per sample: centred differences inside,
/// one-sided at the ends.
fn path_derivatives(points: &[Vector2<f64>], i: usize) -> (Vector2<f64>, Vector2<f64>) {
    let n = points.len();
    if n == 1 {
        return (Vector2::x(), Vector2::zeros());
    }
    if n == 2 {
        return (points[1] - points[0], Vector2::zeros());
    }
    let c = i.clamp(1, n - 2);
    let (a, b, d) = (points[c - 1], points[c], points[c + 1]);
    let first = if i == 0 {
        b - a
    } else if i == n - 1 {
        d - b
    } else {
        (d - a) / 2.0
    };
    (first, d - 2.0 * b + a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BVariant {
    /// Input `(v, ω)`: the exact Jacobian of the unicycle model.
    #[default]
    UnicycleConsistent,
    /// Input `(v, δ)` with the third row `(tan γ, v_r / cos δ)`.
    AsPrinted,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LqrError {
    #[error("linearisation is singular (cos γ = {cos_gamma:.3e}, cos δ = {cos_delta:.3e})")]
    SingularLinearization { cos_gamma: f64, cos_delta: f64 },
    #[error("Riccati iteration did not converge in {iterations} iterations (controllability rank {controllability_rank})")]
    NoConvergence { iterations: usize, controllability_rank: usize },
    #[error("R + BᵀPB is not positive definite")]
    NotPositiveDefinite,
    #[error("closed loop is not stable (spectral radius {spectral_radius})")]
    Unstable { spectral_radius: f64 },
}

/// Continuous-time Jacobians of `ẋ = v cos γ, ẏ = v sin γ, γ̇ = ω` about the reference.
pub fn linearize(gamma_r: f64, v_r: f64, delta_r: f64, variant: BVariant) -> Result<(Matrix3<f64>, Matrix3x2<f64>), LqrError> {
    let (s, c) = gamma_r.sin_cos();
    #[rustfmt::skip]
    let a = Matrix3::new(
        0.0, 0.0, -v_r * s,
        0.0, 0.0, v_r * c,
        0.0, 0.0, 0.0,
    );
    let b = match variant {
        BVariant::UnicycleConsistent => Matrix3x2::new(c, 0.0, s, 0.0, 0.0, 1.0),
        BVariant::AsPrinted => {
            let cos_delta = delta_r.cos();
            if c.abs() < 1e-6 || cos_delta.abs() < 1e-6 {
                return Err(LqrError::SingularLinearization {
                    cos_gamma: c,
                    cos_delta,
                });
            }
            Matrix3x2::new(c, 0.0, s, 0.0, gamma_r.tan(), v_r / cos_delta)
        }
    };
    Ok((a, b))
}

/// Forward Euler: `A_d = I + A·dt`, `B_d = B·dt`.
pub fn discretize<const N: usize, const M: usize>(
    a: &SMatrix<f64, N, N>,
    b: &SMatrix<f64, N, M>,
    dt: f64,
) -> (SMatrix<f64, N, N>, SMatrix<f64, N, M>) {
    (SMatrix::identity() + a * dt, b * dt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrSolution<const N: usize, const M: usize> {
    pub p: SMatrix<f64, N, N>,
    pub k: SMatrix<f64, M, N>,
    pub iterations: usize,
    pub spectral_radius: f64,
}

fn riccati_step<const N: usize, const M: usize>(
    a: &SMatrix<f64, N, N>,
    b: &SMatrix<f64, N, M>,
    q: &SMatrix<f64, N, N>,
    r: &SMatrix<f64, M, M>,
    p: &SMatrix<f64, N, N>,
) -> Result<SMatrix<f64, N, N>, LqrError> {
    let s = r + b.transpose() * p * b;
    let chol = s.cholesky().ok_or(LqrError::NotPositiveDefinite)?;
    let bt_p = b.transpose() * p;
    let next = q + a.transpose() * (p - p * b * chol.solve(&bt_p)) * a;
    Ok((next + next.transpose()) * 0.5)
}

/// One step of the finite-horizon cost-to-go recursion, exposed for checks
/// against the stationary solution.
pub fn riccati_recursion<const N: usize, const M: usize>(
    a: &SMatrix<f64, N, N>,
    b: &SMatrix<f64, N, M>,
    q: &SMatrix<f64, N, N>,
    r: &SMatrix<f64, M, M>,
    p: &SMatrix<f64, N, N>,
) -> Result<SMatrix<f64, N, N>, LqrError> {
    riccati_step(a, b, q, r, p)
}

pub fn lqr_gain<const N: usize, const M: usize>(
    a: &SMatrix<f64, N, N>,
    b: &SMatrix<f64, N, M>,
    r: &SMatrix<f64, M, M>,
    p: &SMatrix<f64, N, N>,
) -> Result<SMatrix<f64, M, N>, LqrError> {
    let s = r + b.transpose() * p * b;
    let chol = s.cholesky().ok_or(LqrError::NotPositiveDefinite)?;
    Ok(chol.solve(&(b.transpose() * p * a)))
}

pub fn spectral_radius<const N: usize>(m: &SMatrix<f64, N, N>) -> f64 {
    let d = DMatrix::from_column_slice(N, N, m.as_slice());
    d.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Rank of `[B, AB, …, Aᴺ⁻¹B]`.
pub fn controllability_rank<const N: usize, const M: usize>(a: &SMatrix<f64, N, N>, b: &SMatrix<f64, N, M>) -> usize {
    let mut ctrb = DMatrix::zeros(N, N * M);
    let mut block = *b;
    for i in 0..N {
        ctrb.view_mut((0, i * M), (N, M)).copy_from(&block);
        block = a * block;
    }
    let scale = ctrb.amax().max(f64::MIN_POSITIVE);
    ctrb.rank(1e-10 * scale)
}

/// Stationary discrete Riccati solution by fixed-point iteration from `P = Q`,
/// and the gain `K = (R + BᵀPB)⁻¹BᵀPA`.
pub fn solve_lqr<const N: usize, const M: usize>(
    a: &SMatrix<f64, N, N>,
    b: &SMatrix<f64, N, M>,
    q: &SMatrix<f64, N, N>,
    r: &SMatrix<f64, M, M>,
) -> Result<LqrSolution<N, M>, LqrError> {
    let mut p = *q;
    let mut iterations = 0;
    loop {
        if iterations == DARE_MAX_ITERATIONS {
            return Err(LqrError::NoConvergence {
                iterations,
                controllability_rank: controllability_rank(a, b),
            });
        }
        // a diverging recursion (typically an uncontrollable unstable mode)
        // overflows before it reaches the iteration cap
        let next = match riccati_step(a, b, q, r, &p) {
            Ok(n) if n.iter().all(|v| v.is_finite()) => n,
            _ => {
                return Err(LqrError::NoConvergence {
                    iterations,
                    controllability_rank: controllability_rank(a, b),
                })
            }
        };
        iterations += 1;
        let change = (next - p).amax();
        p = next;
        if change < DARE_TOLERANCE {
            break;
        }
    }
    let k = lqr_gain(a, b, r, &p)?;
    let spectral_radius = spectral_radius(&(a - b * k));
    if spectral_radius >= 1.0 {
        return Err(LqrError::Unstable { spectral_radius });
    }
    Ok(LqrSolution {
        p,
        k,
        iterations,
        spectral_radius,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LqrParams {
    pub enabled: bool,
    pub q_diag: [f64; 3],
    pub r_diag: [f64; 2],
    /// Discretisation step of the design model (s).
    pub dt: f64,
    pub b_variant: BVariant,
    /// Lower bound on the linearisation speed (m/s).
    pub vr_floor: f64,
    /// Saturation of the forward-speed correction (m/s).
    pub v_max: f64,
    /// Saturation of the second input channel (rad/s or rad).
    pub second_max: f64,
}

impl Default for LqrParams {
    fn default() -> Self {
        Self {
            enabled: true,
            q_diag: [10.0, 10.0, 1.0],
            r_diag: [0.5, 0.5],
            dt: 0.01,
            b_variant: BVariant::UnicycleConsistent,
            vr_floor: 0.05,
            v_max: 0.2,
            second_max: 2.0,
        }
    }
}

impl LqrParams {
    pub fn q(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::from(self.q_diag))
    }

    pub fn r(&self) -> Matrix2<f64> {
        Matrix2::from_diagonal(&Vector2::from(self.r_diag))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.q_diag.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
            return Err("lqr.q_diag must be finite and ≥ 0".into());
        }
        if self.r_diag.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err("lqr.r_diag must be finite and > 0".into());
        }
        if !(self.dt > 0.0) || !(self.vr_floor >= 0.0) || !(self.v_max > 0.0) || !(self.second_max > 0.0) {
            return Err("lqr.dt, lqr.v_max and lqr.second_max must be > 0, lqr.vr_floor ≥ 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Design {
    pub a: Matrix3<f64>,
    pub b: Matrix3x2<f64>,
    pub a_d: Matrix3<f64>,
    pub b_d: Matrix3x2<f64>,
    pub solution: LqrSolution<3, 2>,
}

/// Linearise about `(gamma_r, v_r, delta_r)` and solve the discrete problem.
pub fn design(params: &LqrParams, gamma_r: f64, v_r: f64, delta_r: f64) -> Result<Design, LqrError> {
    let (a, b) = linearize(gamma_r, v_r.max(params.vr_floor), delta_r, params.b_variant)?;
    let (a_d, b_d) = discretize(&a, &b, params.dt);
    let solution = solve_lqr(&a_d, &b_d, &params.q(), &params.r())?;
    Ok(Design { a, b, a_d, b_d, solution })
}

/// `X − X_r` with the yaw component wrapped.
pub fn tracking_error(x: &Vector3<f64>, x_r: &Vector3<f64>) -> Vector3<f64> {
    let e = x - x_r;
    Vector3::new(e.x, e.y, wrap_angle(e.z))
}

/// `ũ = K·X̃`.
pub fn control_correction(k: &SMatrix<f64, 2, 3>, error: &Vector3<f64>) -> Vector2<f64> {
    k * error
}

/// Input actually commanded, `u = u_r − ũ`, saturated, as `(v, ω)`.
///
/// For the as-printed variant the second channel is a steering angle; the yaw
/// rate follows from the path's steering geometry `ω = v·tan(δ)/R_path`
/// with the path curvature radius standing in for the wheelbase (no turning
/// when the path is straight).
pub fn command(params: &LqrParams, u_r: &Vector2<f64>, correction: &Vector2<f64>, curvature_radius: f64) -> Vector2<f64> {
    let u = u_r - correction;
    let v = u.x.clamp(-params.v_max, params.v_max);
    let second = u.y.clamp(-params.second_max, params.second_max);
    match params.b_variant {
        BVariant::UnicycleConsistent => Vector2::new(v, second),
        BVariant::AsPrinted => {
            let omega = if curvature_radius.is_finite() && curvature_radius > 0.0 {
                v * second.tan() / curvature_radius
            } else {
                0.0
            };
            Vector2::new(v, omega)
        }
    }
}

/// Gain cache refreshed once per gait step.
#[derive(Debug, Clone)]
pub struct Tracker {
    pub params: LqrParams,
    current: Option<(u64, Design)>,
}

impl Tracker {
    pub fn new(params: LqrParams) -> Self {
        Self { params, current: None }
    }

    /// Gain for gait step `step`, relinearised at `gamma_r` when the step changes.
    pub fn design_for(&mut self, step: u64, gamma_r: f64, v_r: f64, delta_r: f64) -> Result<&Design, LqrError> {
        if self.current.as_ref().map(|(s, _)| *s) != Some(step) {
            self.current = Some((step, design(&self.params, gamma_r, v_r, delta_r)?));
        }
        Ok(&self.current.as_ref().unwrap().1)
    }
}
