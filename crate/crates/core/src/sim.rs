//! Closed-loop kinematic plant.
//!
//! The body follows its commanded motion exactly except for two disturbances:
//! the roll of the ball feet, and seeded touchdown noise. Each stance foot
//! pins a ground point (the foothold the controller asked for); whatever the
//! joint angles make of that point relative to the hip, the body shifts by
//! the opposite amount, averaged over the stance feet. With the point-foot
//! IK the mismatch is the rolling offset, which turns with the body and walks
//! the CoM around a circle; with the corrected IK only the solver residual is
//! left.

use std::str::FromStr;

use nalgebra::{Rotation3, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::gait::{self, ContactMode, GaitState};
use crate::geometry::{inverse_kinematics, JointAngles, KneeBranch, Leg};
use crate::log::{Record, TrajectoryLog};
use crate::lqr::{self, LqrError, ReferencePath, Tracker};
use crate::psp::{self, PspError};
use crate::rolling::{corrected_inverse_kinematics, ideal_foothold, rolling_offset, FkmError};
use crate::terrain::{self, ContactHistory, Posture, TerrainPlane};

/// Controller configurations compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Point-foot IK, no tracking.
    Baseline,
    /// Corrected IK, no tracking.
    Fkm,
    /// Corrected IK and LQR tracking.
    Asc,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::Baseline, Ablation::Fkm, Ablation::Asc];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Baseline => "baseline",
            Ablation::Fkm => "fkm",
            Ablation::Asc => "asc",
        }
    }

    pub fn apply(self, cfg: &Config) -> Config {
        let mut c = cfg.clone();
        c.fkm.enabled = self != Ablation::Baseline;
        c.lqr.enabled = self == Ablation::Asc;
        c
    }
}

impl FromStr for Ablation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(Ablation::Baseline),
            "fkm" => Ok(Ablation::Fkm),
            "asc" => Ok(Ablation::Asc),
            other => Err(format!("unknown ablation {other:?} (expected baseline, fkm or asc)")),
        }
    }
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("fall detected at tick {tick} (t = {t:.3} s): {reason}")]
    FallDetected { tick: u64, t: f64, reason: String },
    #[error("leg {leg} at tick {tick}: {source}")]
    Kinematics {
        tick: u64,
        leg: &'static str,
        #[source]
        source: FkmError,
    },
    #[error("tracker at tick {tick}: {source}")]
    Lqr {
        tick: u64,
        #[source]
        source: LqrError,
    },
    #[error("CoM planner at tick {tick}: {source}")]
    Support {
        tick: u64,
        #[source]
        source: PspError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegState {
    pub mode: ContactMode,
    /// Stance: the pinned foothold. Swing: the planned touchdown point.
    pub anchor: Vector3<f64>,
    /// Swing start (ground contact at liftoff).
    pub liftoff: Vector3<f64>,
    pub angles: JointAngles,
    /// World-frame mismatch between the realised and pinned foothold at the
    /// previous tick; `None` right after touchdown.
    pub mismatch: Option<Vector3<f64>>,
    /// Current ground contact of the ball (world).
    pub contact: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub tick: u64,
    pub t: f64,
    pub gait: GaitState,
    /// True CoM.
    pub com: Vector3<f64>,
    /// Continuous yaw.
    pub yaw: f64,
    pub posture: Posture,
    /// Pose the controller would hold if nothing disturbed it: `(x, y, yaw)`.
    pub believed: Vector3<f64>,
    pub legs: [LegState; 4],
    pub plane: TerrainPlane,
    pub history: ContactHistory,
    /// Pose at the latest touchdown, `(x, y, yaw)`.
    pub touchdown_pose: Vector3<f64>,
    pub touchdown_t: f64,
}

pub struct Simulator {
    pub cfg: Config,
    state: PlantState,
    reference: ReferencePath,
    tracker: Tracker,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
}

fn yaw_rotation(yaw: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), yaw)
}

impl Simulator {
    /// Robot standing at the origin facing +x, diagonal A about to start stance.
    pub fn new(cfg: Config) -> Result<Self, SimError> {
        cfg.validate()?;
        let g = &cfg.geometry;
        let terrain_model = cfg.terrain;
        let yaw = 0.0;
        let origin = Vector2::zeros();

        let hips = gait::hip_projections(g, [origin.x, origin.y], yaw, 0.0);
        let ground = |p: Vector3<f64>| Vector3::new(p.x, p.y, terrain_model.height(p.x, p.y));
        let history = ContactHistory::all(hips.map(ground));
        let plane = terrain::fit_plane(&history).unwrap_or(terrain_model.local_plane(origin.x, origin.y));

        let gait = GaitState::new(cfg.gait);
        let legs = Leg::ALL.map(|leg| {
            let foot = ground(hips[leg.index()]);
            LegState {
                mode: gait.mode(leg),
                anchor: foot,
                liftoff: foot,
                angles: JointAngles::default(),
                mismatch: None,
                contact: foot,
            }
        });
        let com = Vector3::new(origin.x, origin.y, plane.height(origin.x, origin.y) + cfg.psp.standing_height);
        let reference = if cfg.turn.is_spin() {
            ReferencePath::Spin {
                center: origin,
                theta0: yaw,
                omega: cfg.turn.omega,
            }
        } else {
            circle_path(origin, yaw, cfg.turn.radius, cfg.turn.omega)
        };
        let noise = (cfg.sim.noise_sigma > 0.0).then(|| Normal::new(0.0, cfg.sim.noise_sigma).expect("validated sigma"));
        let mut sim = Simulator {
            tracker: Tracker::new(cfg.lqr),
            rng: ChaCha8Rng::seed_from_u64(cfg.sim.seed),
            noise,
            reference,
            state: PlantState {
                tick: 0,
                t: 0.0,
                gait,
                com,
                yaw,
                posture: terrain::posture_target(&plane, yaw),
                believed: Vector3::new(origin.x, origin.y, yaw),
                legs,
                plane,
                history,
                touchdown_pose: Vector3::new(origin.x, origin.y, yaw),
                touchdown_t: 0.0,
            },
            cfg,
        };
        sim.lift_off(&swinging_legs(&sim.state.gait));
        sim.pose_legs()?;
        Ok(sim)
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    fn step_duration(&self) -> f64 {
        self.cfg.gait.step_duration()
    }

    /// Plan touchdown points for legs that are starting their swing.
    fn lift_off(&mut self, legs: &[Leg]) {
        let g = &self.cfg.geometry;
        let s = &self.state;
        let gamma = self.cfg.turn.yaw_increment(self.step_duration());
        let hips = gait::hip_projections(g, [s.com.x, s.com.y], s.yaw, 0.0);
        let plan = gait::plan_footholds(g, self.cfg.turn.radius, gamma, s.yaw, hips);
        let plan = terrain::remap_foothold(&s.plane, &plan);
        for &leg in legs {
            let l = &mut self.state.legs[leg.index()];
            l.liftoff = l.contact;
            l.anchor = plan.footholds[leg.index()];
            l.mode = ContactMode::Swing;
            l.mismatch = None;
        }
    }

    /// Legs finishing their swing pin their footholds on the real ground.
    fn touch_down(&mut self, legs: &[Leg]) {
        let mut shift = Vector2::zeros();
        for &leg in legs {
            let mut anchor = self.state.legs[leg.index()].anchor;
            if let Some(noise) = &self.noise {
                let n = Vector2::new(noise.sample(&mut self.rng), noise.sample(&mut self.rng));
                anchor.x += n.x;
                anchor.y += n.y;
                shift += n;
            }
            anchor.z = self.cfg.terrain.height(anchor.x, anchor.y);
            let l = &mut self.state.legs[leg.index()];
            l.anchor = anchor;
            l.mode = ContactMode::Stance;
            l.mismatch = None;
            self.state.history.contacts[leg.index()] = Some(anchor);
        }
        if !legs.is_empty() {
            shift /= legs.len() as f64;
            self.state.com.x += shift.x;
            self.state.com.y += shift.y;
        }
        // a degenerate contact set keeps the previous plane
        if let Ok(plane) = terrain::fit_plane(&self.state.history) {
            self.state.plane = plane;
        }
        let s = &mut self.state;
        s.touchdown_pose = Vector3::new(s.com.x, s.com.y, s.yaw);
        s.touchdown_t = s.t;
    }

    /// Where the support pattern puts the CoM now: the planner's target plus
    /// the nominal advance along the turning arc since touchdown.
    fn com_target(&self) -> Result<Vector3<f64>, SimError> {
        let s = &self.state;
        let feet = s.legs.map(|l| if l.mode == ContactMode::Stance { l.anchor } else { l.contact });
        let target = psp::desired_com(&feet, &s.gait, &self.cfg.psp, &s.plane).map_err(|source| SimError::Support { tick: s.tick, source })?;
        if self.cfg.turn.is_spin() {
            return Ok(target);
        }
        let elapsed = s.t - s.touchdown_t;
        let advance = yaw_rotation(s.touchdown_pose.z) * gait::translation_step(self.cfg.turn.radius, self.cfg.turn.omega * elapsed);
        let xy = target.xy() + advance.xy();
        Ok(Vector3::new(xy.x, xy.y, s.plane.height(xy.x, xy.y) + self.cfg.psp.standing_height))
    }

    /// Joint angles for the current commanded body pose; returns the mean
    /// world-frame increment of the foothold mismatch over the stance legs.
    fn pose_legs(&mut self) -> Result<Vector3<f64>, SimError> {
        let g = self.cfg.geometry;
        let s = &self.state;
        let rot = terrain::body_rotation(s.yaw, s.posture.pitch, s.posture.roll);
        let lift = Vector3::new(0.0, 0.0, g.foot_radius);
        let progress = Leg::ALL.map(|leg| s.gait.mode_progress(leg));
        let tick = s.tick;
        let com = s.com;
        let fkm = self.cfg.fkm.enabled;
        let swing_height = self.cfg.gait.swing_height;

        let mut increment = Vector3::zeros();
        let mut stance = 0usize;
        for leg in Leg::ALL {
            let l = &mut self.state.legs[leg.index()];
            let hip = com + rot * g.hip_offset(leg);
            let fail = |source: FkmError| SimError::Kinematics { tick, leg: leg.name(), source };
            match l.mode {
                ContactMode::Stance => {
                    let target = rot.inverse() * (l.anchor - hip);
                    let angles = if fkm {
                        corrected_inverse_kinematics(&g, &target, KneeBranch::Backward).map_err(fail)?.angles
                    } else {
                        inverse_kinematics(&g, &(target + lift), KneeBranch::Backward).map_err(|e| fail(e.into()))?
                    };
                    let realised = ideal_foothold(&g, &angles);
                    let mismatch = rot * (realised - target);
                    if let Some(prev) = l.mismatch {
                        increment += mismatch - prev;
                    }
                    stance += 1;
                    l.mismatch = Some(mismatch);
                    l.angles = angles;
                    l.contact = l.anchor - rot * rolling_offset(&g, &angles).delta;
                }
                ContactMode::Swing => {
                    let foot = gait::swing_point(&l.liftoff, &l.anchor, swing_height, progress[leg.index()]);
                    let target = rot.inverse() * (foot - hip) + lift;
                    if let Ok(angles) = inverse_kinematics(&g, &target, KneeBranch::Backward) {
                        l.angles = angles;
                    }
                    l.contact = foot;
                }
            }
        }
        Ok(if stance > 0 { increment / stance as f64 } else { increment })
    }

    fn check_fall(&self) -> Result<(), SimError> {
        let s = &self.state;
        let fall = |reason: String| Err(SimError::FallDetected { tick: s.tick, t: s.t, reason });
        let tilt = self.cfg.sim.fall_tilt;
        if s.posture.roll.abs() > tilt || s.posture.pitch.abs() > tilt {
            return fall(format!("attitude roll {:.3} pitch {:.3} rad", s.posture.roll, s.posture.pitch));
        }
        let stance: Vec<Vector2<f64>> = s.legs.iter().filter(|l| l.mode == ContactMode::Stance).map(|l| l.anchor.xy()).collect();
        if stance.len() >= 2 {
            let (a, b) = (stance[0], stance[stance.len() - 1]);
            let d = b - a;
            let p = s.com.xy() - a;
            let dist = if d.norm() > 0.0 { (d.x * p.y - d.y * p.x).abs() / d.norm() } else { p.norm() };
            if dist > self.cfg.sim.fall_band {
                return fall(format!("CoM {dist:.3} m off the support diagonal"));
            }
        }
        if !s.com.iter().all(|c| c.is_finite()) {
            return fall("non-finite state".into());
        }
        Ok(())
    }

    pub fn record(&self, cmd_com: Vector3<f64>, command: Vector2<f64>) -> Record {
        let s = &self.state;
        Record {
            t: s.t,
            com: s.com.into(),
            yaw: s.yaw,
            roll: s.posture.roll,
            pitch: s.posture.pitch,
            cmd_com: cmd_com.into(),
            v_cmd: command.x,
            omega_cmd: command.y,
            contact: s.legs.map(|l| l.mode == ContactMode::Stance),
            feet: s.legs.map(|l| l.contact.into()),
        }
    }

    /// Advance one tick.
    pub fn step(&mut self) -> Result<Record, SimError> {
        let dt = self.cfg.sim.dt;
        let before = self.state.gait;
        let after = before.advance_phase(dt);
        self.state.gait = after;
        self.state.tick += 1;
        self.state.t = self.state.tick as f64 * dt;

        if after.step_index != before.step_index {
            let landing: Vec<Leg> = Leg::ALL.into_iter().filter(|&l| after.mode(l) == ContactMode::Stance).collect();
            let lifting = swinging_legs(&after);
            self.touch_down(&landing);
            self.lift_off(&lifting);
        }

        let target = self.com_target()?;
        let reference = interpolate_velocity(&self.state.com, &target, self.cfg.gait.cycle_period, dt);

        // tracking command (v, ω)
        let s = &self.state;
        let goal = lqr::goal_point(&self.reference, &s.com.xy(), s.t);
        let u_r = Vector2::new(goal.speed, self.cfg.turn.omega);
        let command = if self.cfg.lqr.enabled {
            let step = s.gait.step_index;
            let design = self
                .tracker
                .design_for(step, goal.heading, goal.speed, 0.0)
                .map_err(|source| SimError::Lqr { tick: s.tick, source })?;
            let x = Vector3::new(s.com.x, s.com.y, s.yaw);
            let x_r = Vector3::new(goal.point.x, goal.point.y, goal.heading);
            let correction = lqr::control_correction(&design.solution.k, &lqr::tracking_error(&x, &x_r));
            lqr::command(&self.cfg.lqr, &u_r, &correction, goal.curvature_radius)
        } else {
            u_r
        };

        let heading = Vector2::new(self.state.yaw.cos(), self.state.yaw.sin());
        let displacement = (reference + heading * command.x) * dt;
        let s = &mut self.state;
        s.com.x += displacement.x;
        s.com.y += displacement.y;
        s.yaw += command.y * dt;
        s.believed += Vector3::new(displacement.x, displacement.y, command.y * dt);
        s.posture = terrain::posture_target(&s.plane, s.yaw);
        s.com.z = s.plane.height(s.com.x, s.com.y) + self.cfg.psp.standing_height;

        let increment = self.pose_legs()?;
        let s = &mut self.state;
        s.com.x -= increment.x;
        s.com.y -= increment.y;
        s.com.z = s.plane.height(s.com.x, s.com.y) + self.cfg.psp.standing_height;
        self.check_fall()?;
        Ok(self.record(target, command))
    }

    pub fn initial_record(&self) -> Record {
        let s = &self.state;
        let target = self.com_target().unwrap_or(s.com);
        let u = Vector2::new(0.0, self.cfg.turn.omega);
        self.record(target, u)
    }
}

/// CoM velocity that reaches `target` over `period`, as the first sample of
/// the interpolated reference.
fn interpolate_velocity(current: &Vector3<f64>, target: &Vector3<f64>, period: f64, dt: f64) -> Vector2<f64> {
    let r = psp::interpolate_com(current, target, period, dt.min(period));
    r.velocity.xy()
}

fn swinging_legs(g: &GaitState) -> Vec<Leg> {
    Leg::ALL.into_iter().filter(|&l| g.mode(l) == ContactMode::Swing).collect()
}

/// Densely sampled turning circle starting at `start` with heading `yaw`.
fn circle_path(start: Vector2<f64>, yaw: f64, radius: f64, omega: f64) -> ReferencePath {
    let side = if omega >= 0.0 { 1.0 } else { -1.0 };
    let center = start + side * radius * Vector2::new(-yaw.sin(), yaw.cos());
    let n = 3600;
    let points = (0..n)
        .map(|i| {
            let a = yaw - side * std::f64::consts::FRAC_PI_2 + side * 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            center + radius * Vector2::new(a.cos(), a.sin())
        })
        .collect();
    ReferencePath::Samples {
        points,
        speed: radius * omega.abs(),
    }
}

/// Run the configured duration and return every tick, starting at `t = 0`.
pub fn run(cfg: &Config) -> Result<TrajectoryLog, SimError> {
    let mut sim = Simulator::new(cfg.clone())?;
    let ticks = (cfg.sim.duration / cfg.sim.dt).round() as u64;
    let mut records = Vec::with_capacity(ticks as usize + 1);
    records.push(sim.initial_record());
    for _ in 0..ticks {
        records.push(sim.step()?);
    }
    Ok(TrajectoryLog { records })
}
