//! Trot phase clock and the turning/spinning footstep planner.

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{Diagonal, Leg, LegGeometry};

/// Phases this close to a mode boundary are snapped onto it, so that a clock
/// driven by repeated small increments switches on the intended tick.
const PHASE_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactMode {
    Stance,
    Swing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaitParams {
    /// Full trot cycle (s).
    pub cycle_period: f64,
    /// Fraction of the cycle a leg spends in stance.
    pub duty: f64,
    /// Swing apex above the straight liftoff-touchdown chord (m).
    pub swing_height: f64,
}

impl Default for GaitParams {
    fn default() -> Self {
        Self {
            cycle_period: 0.4,
            duty: 0.5,
            swing_height: 0.04,
        }
    }
}

impl GaitParams {
    /// Duration of one footstep: the stance time of a leg.
    pub fn step_duration(&self) -> f64 {
        self.cycle_period * self.duty
    }
}

/// Trot clock. Diagonal A (FR, BL) runs at `phase`, diagonal B half a cycle
/// later, so the pair invariant holds by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitState {
    phase: f64,
    pub params: GaitParams,
    /// Half-cycle steps completed.
    pub step_index: u64,
}

impl GaitState {
    /// Diagonal A at the start of its stance.
    pub fn new(params: GaitParams) -> Self {
        Self {
            phase: 0.0,
            params,
            step_index: 0,
        }
    }

    pub fn phase(&self, leg: Leg) -> f64 {
        match leg.diagonal() {
            Diagonal::A => self.phase,
            Diagonal::B => wrap_unit(self.phase + 0.5),
        }
    }

    /// Stance for phase in `[0, duty)`, swing for `[duty, 1)`.
    pub fn mode(&self, leg: Leg) -> ContactMode {
        if self.phase(leg) < self.params.duty {
            ContactMode::Stance
        } else {
            ContactMode::Swing
        }
    }

    pub fn modes(&self) -> [ContactMode; 4] {
        Leg::ALL.map(|leg| self.mode(leg))
    }

    pub fn stance_legs(&self) -> Vec<Leg> {
        Leg::ALL.into_iter().filter(|&l| self.mode(l) == ContactMode::Stance).collect()
    }

    /// Normalised progress through the current stance or swing interval.
    pub fn mode_progress(&self, leg: Leg) -> f64 {
        let phase = self.phase(leg);
        let duty = self.params.duty;
        match self.mode(leg) {
            ContactMode::Stance => phase / duty,
            ContactMode::Swing => (phase - duty) / (1.0 - duty),
        }
    }

    pub fn advance_phase(&self, dt: f64) -> GaitState {
        debug_assert!(dt > 0.0);
        let raw = self.phase + dt / self.params.cycle_period;
        let total = snap(raw, self.params.duty);
        let crossings = (2.0 * total).floor() - (2.0 * self.phase).floor();
        GaitState {
            phase: wrap_unit(total),
            params: self.params,
            step_index: self.step_index + crossings.max(0.0) as u64,
        }
    }
}

fn wrap_unit(x: f64) -> f64 {
    let w = x - x.floor();
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Snap onto the nearest half-cycle or duty boundary when within `PHASE_SNAP`.
fn snap(x: f64, duty: f64) -> f64 {
    let half = (2.0 * x).round() / 2.0;
    if (x - half).abs() < PHASE_SNAP {
        return half;
    }
    for offset in [duty, duty + 0.5, duty - 0.5] {
        let shifted = x - offset;
        let nearest = shifted.round();
        if (shifted - nearest).abs() < PHASE_SNAP {
            return nearest + offset;
        }
    }
    x
}

/// Turning command. `radius == 0` spins in place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TurnCommand {
    /// Turning radius (m).
    pub radius: f64,
    /// Yaw rate (rad/s).
    pub omega: f64,
}

impl Default for TurnCommand {
    fn default() -> Self {
        Self { radius: 0.0, omega: 0.7 }
    }
}

impl TurnCommand {
    pub fn is_spin(&self) -> bool {
        self.radius == 0.0
    }

    /// Yaw change over one step.
    pub fn yaw_increment(&self, step_duration: f64) -> f64 {
        self.omega * step_duration
    }
}

/// Body-frame translation of the body centre when turning by `gamma` on a
/// circle of `radius`. The body always walks forward; the sign of `gamma`
/// picks the side the turn centre is on (left for positive).
pub fn translation_step(radius: f64, gamma: f64) -> Vector3<f64> {
    Vector3::new(radius * gamma.abs().sin(), radius * gamma.signum() * (1.0 - gamma.cos()), 0.0)
}

/// Hip offset of `leg` after the body rotates by `gamma`.
pub fn rotation_step(geom: &LegGeometry, leg: Leg, gamma: f64) -> Vector3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), gamma) * geom.hip_offset(leg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootholdPlan {
    /// Commanded footholds, world frame.
    pub footholds: [Vector3<f64>; 4],
    /// Vertical hip projections the plan was built from.
    pub hip_projections: [Vector3<f64>; 4],
}

/// Footholds for a step that turns the body by `gamma` on a circle of
/// `radius`. Each foothold is the current hip projection moved by the
/// difference between the hip's end-of-step place (arc translation plus
/// rotated offset) and its current offset, expressed in the world through the
/// current body yaw. With `gamma = 0` the feet land under the hips.
pub fn plan_footholds(
    geom: &LegGeometry,
    radius: f64,
    gamma: f64,
    body_yaw: f64,
    hip_projections: [Vector3<f64>; 4],
) -> FootholdPlan {
    let to_world = Rotation3::from_axis_angle(&Vector3::z_axis(), body_yaw);
    let translation = translation_step(radius, gamma);
    let footholds = Leg::ALL.map(|leg| {
        let step = translation + rotation_step(geom, leg, gamma) - geom.hip_offset(leg);
        hip_projections[leg.index()] + to_world * step
    });
    FootholdPlan {
        footholds,
        hip_projections,
    }
}

/// Vertical projections of the hips onto `z = ground_height`.
pub fn hip_projections(geom: &LegGeometry, body_xy: [f64; 2], body_yaw: f64, ground_height: f64) -> [Vector3<f64>; 4] {
    let to_world = Rotation3::from_axis_angle(&Vector3::z_axis(), body_yaw);
    Leg::ALL.map(|leg| {
        let h = to_world * geom.hip_offset(leg);
        Vector3::new(body_xy[0] + h.x, body_xy[1] + h.y, ground_height)
    })
}

/// Swing foot path: half-cycloid in the vertical plane through liftoff and
/// touchdown, apex `height` above the chord. `s` is swing progress in [0, 1].
pub fn swing_point(start: &Vector3<f64>, end: &Vector3<f64>, height: f64, s: f64) -> Vector3<f64> {
    let s = s.clamp(0.0, 1.0);
    let tau = std::f64::consts::TAU;
    let blend = s - (tau * s).sin() / tau;
    let lift = height * 0.5 * (1.0 - (tau * s).cos());
    let mut p = start + (end - start) * blend;
    p.z += lift;
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn state() -> GaitState {
        GaitState::new(GaitParams::default())
    }

    #[test]
    fn full_period_is_identity_plus_two_steps() {
        let s = state();
        let t = s.advance_phase(0.4);
        assert_eq!(t.phase(Leg::FR), s.phase(Leg::FR));
        assert_eq!(t.modes(), s.modes());
        assert_eq!(t.step_index, 2);
    }

    #[test]
    fn half_period_swaps_diagonals() {
        let s = state();
        assert_eq!(s.stance_legs(), vec![Leg::FR, Leg::BL]);
        let t = s.advance_phase(0.2);
        assert_eq!(t.stance_legs(), vec![Leg::FL, Leg::BR]);
        assert_eq!(t.step_index, 1);
    }

    #[test]
    fn millisecond_ticks_switch_on_schedule() {
        let mut s = state();
        for tick in 1..=2000u64 {
            s = s.advance_phase(0.001);
            assert_eq!(s.step_index, tick / 200, "tick {tick}");
            let expected = if (tick / 200) % 2 == 0 { Leg::FR } else { Leg::FL };
            assert_eq!(s.mode(expected), ContactMode::Stance, "tick {tick}");
        }
    }

    #[test]
    fn boundary_counts_as_entering_mode() {
        let s = state().advance_phase(0.2);
        assert_eq!(s.phase(Leg::FR), 0.5);
        assert_eq!(s.mode(Leg::FR), ContactMode::Swing);
    }

    #[test]
    fn translation_vanishes_for_spin_or_zero_angle() {
        assert_eq!(translation_step(0.0, 0.7), Vector3::zeros());
        assert_eq!(translation_step(1.3, 0.0), Vector3::zeros());
    }

    #[test]
    fn right_turn_mirrors_left() {
        let (l, r) = (translation_step(0.5, 0.2), translation_step(0.5, -0.2));
        assert_eq!((l.x, l.y), (r.x, -r.y));
    }

    #[test]
    fn translation_on_arc() {
        let d = translation_step(0.5, 0.2);
        assert_abs_diff_eq!(d.x, 0.099_334_665_397_530_61, epsilon = 1e-15);
        assert_abs_diff_eq!(d.y, 0.009_966_711_079_379_184, epsilon = 1e-15);
        assert_eq!(d.z, 0.0);
    }

    #[test]
    fn rotation_of_front_right_hip() {
        let g = LegGeometry::default();
        assert_abs_diff_eq!(rotation_step(&g, Leg::FR, 0.0), Vector3::new(0.19, -0.05, 0.0), epsilon = 1e-16);
        let r = rotation_step(&g, Leg::FR, 0.1);
        assert_abs_diff_eq!(r.x, 0.194_042_462_235_166_3, epsilon = 1e-15);
        assert_abs_diff_eq!(r.y, -0.030_781_859_101_003_94, epsilon = 1e-15);
    }

    #[test]
    fn neutral_plan_steps_under_hips() {
        let g = LegGeometry::default();
        let hips = hip_projections(&g, [0.3, -0.2], 0.4, 0.0);
        let plan = plan_footholds(&g, 0.0, 0.0, 0.4, hips);
        for i in 0..4 {
            assert_abs_diff_eq!(plan.footholds[i], hips[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn spin_plan_rotates_about_body_centre() {
        let g = LegGeometry::default();
        let (yaw, gamma) = (0.3, 0.7 * 0.2);
        let centre = Vector3::new(1.0, 2.0, 0.0);
        let plan = plan_footholds(&g, 0.0, gamma, yaw, hip_projections(&g, [1.0, 2.0], yaw, 0.0));
        for leg in Leg::ALL {
            // rotation-matrix oracle written out by hand
            let (s, c) = (yaw + gamma).sin_cos();
            let o = g.hip_offset(leg);
            let expected = centre + Vector3::new(c * o.x - s * o.y, s * o.x + c * o.y, 0.0);
            assert_abs_diff_eq!(plan.footholds[leg.index()], expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn mirrored_width_mirrors_plan() {
        let g = LegGeometry::default();
        let mut m = g;
        m.body_width = -g.body_width;
        let a = plan_footholds(&g, 0.4, 0.2, 0.0, hip_projections(&g, [0.0, 0.0], 0.0, 0.0));
        let b = plan_footholds(&m, 0.4, -0.2, 0.0, hip_projections(&m, [0.0, 0.0], 0.0, 0.0));
        // W → −W together with the turn direction reflects y
        for i in 0..4 {
            assert_abs_diff_eq!(a.footholds[i].x, b.footholds[i].x, epsilon = 1e-15);
            assert_abs_diff_eq!(a.footholds[i].y, -b.footholds[i].y, epsilon = 1e-15);
        }
    }

    #[test]
    fn spin_closure_over_many_steps() {
        let g = LegGeometry::default();
        let gamma = 0.14;
        let initial = hip_projections(&g, [0.0, 0.0], 0.0, 0.0);
        let mut yaw = 0.0;
        for n in 1..=50 {
            let plan = plan_footholds(&g, 0.0, gamma, yaw, hip_projections(&g, [0.0, 0.0], yaw, 0.0));
            yaw += gamma;
            let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), n as f64 * gamma);
            for i in 0..4 {
                assert_abs_diff_eq!(plan.footholds[i], rot * initial[i], epsilon = 1e-12);
            }
            let centroid: Vector3<f64> = plan.footholds.iter().sum::<Vector3<f64>>() / 4.0;
            assert!(centroid.norm() < 1e-12);
        }
    }

    #[test]
    fn turning_centroid_moves_along_circle() {
        let g = LegGeometry::default();
        let (radius, gamma) = (0.8, 0.12);
        let mut centre = [0.0, 0.0];
        let mut yaw = 0.0;
        for _ in 0..40 {
            let plan = plan_footholds(&g, radius, gamma, yaw, hip_projections(&g, centre, yaw, 0.0));
            let centroid: Vector3<f64> = plan.footholds.iter().sum::<Vector3<f64>>() / 4.0;
            let chord = (centroid.xy() - nalgebra::Vector2::new(centre[0], centre[1])).norm();
            assert_abs_diff_eq!(chord, 2.0 * radius * (gamma / 2.0).sin(), epsilon = 1e-9);
            // turn centre sits `radius` to the left of the heading
            let pivot = nalgebra::Vector2::new(centre[0] - radius * yaw.sin(), centre[1] + radius * yaw.cos());
            assert_abs_diff_eq!((centroid.xy() - pivot).norm(), radius, epsilon = 1e-9);
            centre = [centroid.x, centroid.y];
            yaw += gamma;
        }
    }

    #[test]
    fn swing_path_endpoints_and_apex() {
        let a = Vector3::new(0.0, 0.0, 0.0);
        let b = Vector3::new(0.1, 0.02, 0.0);
        assert_abs_diff_eq!(swing_point(&a, &b, 0.04, 0.0), a, epsilon = 1e-15);
        assert_abs_diff_eq!(swing_point(&a, &b, 0.04, 1.0), b, epsilon = 1e-15);
        assert_abs_diff_eq!(swing_point(&a, &b, 0.04, 0.5).z, 0.04, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn random_increments_keep_invariants(dts in proptest::collection::vec(1e-5f64..0.3, 1..1000)) {
            let mut s = state();
            let mut elapsed = 0.0;
            for dt in dts {
                s = s.advance_phase(dt);
                elapsed += dt;
                for leg in Leg::ALL {
                    let p = s.phase(leg);
                    prop_assert!((0.0..1.0).contains(&p));
                }
                prop_assert_eq!(s.phase(Leg::FR), s.phase(Leg::BL));
                prop_assert_eq!(s.phase(Leg::FL), s.phase(Leg::BR));
                prop_assert_eq!(s.mode(Leg::FR), s.mode(Leg::BL));
                prop_assert_eq!(s.stance_legs().len(), 2);
                // brute recount of half-cycle boundaries from elapsed time
                let expected = (elapsed / 0.2 + 1e-6).floor() as u64;
                prop_assert!(s.step_index.abs_diff(expected) <= 1);
            }
        }

        #[test]
        fn rotation_preserves_norm(gamma in -6.3f64..6.3, idx in 0usize..4) {
            let g = LegGeometry::default();
            let leg = Leg::ALL[idx];
            prop_assert!((rotation_step(&g, leg, gamma).norm() - g.hip_offset(leg).norm()).abs() < 1e-15);
        }
    }
}
