//! `quadspin`: run, analyse and sweep spin experiments from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;
use quadspin::config::Config;
use quadspin::log::TrajectoryLog;
use quadspin::metrics::{analyze, distance_trend, MetricsError};
use quadspin::rolling::{corrected_inverse_kinematics, ideal_foothold, real_contact_point, rolling_offset};
use quadspin::sim::{run, Ablation, SimError};
use quadspin::sweep::sweep;
use quadspin::{geometry, lqr, JointAngles, KneeBranch};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUN: u8 = 3;
const EXIT_DATA: u8 = 4;

#[derive(Parser)]
#[command(name = "quadspin", version, about = "Spin-in-place locomotion planner, simulator and drift analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop simulation and write its trajectory log.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Controller set: baseline, fkm or asc (default: as configured).
        #[arg(long)]
        ablation: Option<Ablation>,
        #[arg(long, default_value = "trajectory.csv")]
        out: PathBuf,
    },
    /// Compute drift metrics of a trajectory log.
    Analyze {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 5.0)]
        trim_seconds: f64,
        /// Footstep duration used to sample the distance trend (s).
        #[arg(long, default_value_t = 0.2)]
        step_seconds: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an ablation × seed × spin-rate grid.
    Sweep(SweepArgs),
    /// Print the linearised model and LQR gain at a reference heading.
    LqrGain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        heading: f64,
    },
    /// Leg kinematics for debugging.
    Kin(KinArgs),
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "baseline,fkm,asc")]
    ablations: Vec<String>,
    /// Seed list: `1..5` (inclusive) or `1,2,9`.
    #[arg(long, default_value = "1..5")]
    seeds: String,
    #[arg(long, value_delimiter = ',')]
    omega: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[group(required = true, multiple = false, id = "query")]
struct KinQuery {
    /// Forward kinematics of `a1,a2,a3` (rad).
    #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true)]
    fk: Option<Vec<f64>>,
    /// Inverse kinematics of hip-frame point `x,y,z` (m).
    #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true)]
    ik: Option<Vec<f64>>,
}

#[derive(Args)]
struct KinArgs {
    #[command(flatten)]
    query: KinQuery,
    /// Treat the IK target as an ideal foothold and apply the rolling correction.
    #[arg(long)]
    fkm: bool,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn fail(code: u8, error: impl Into<anyhow::Error>) -> Failure {
    Failure { code, error: error.into() }
}

fn load_config(path: &Path) -> Result<Config, Failure> {
    Config::load(path).map_err(|e| fail(EXIT_CONFIG, e))
}

fn sim_code(e: &SimError) -> u8 {
    match e {
        SimError::Config(_) => EXIT_CONFIG,
        _ => EXIT_RUN,
    }
}

fn metrics_code(e: &MetricsError) -> u8 {
    match e {
        MetricsError::InsufficientData(_) => EXIT_DATA,
        MetricsError::Degenerate(_) => EXIT_DATA,
    }
}

fn write_json(value: &serde_json::Value, out: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("json values serialise");
    match out {
        Some(path) => std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display())).map_err(|e| fail(1, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let spec = spec.trim();
    if let Some((a, b)) = spec.split_once("..") {
        // both ends inclusive; `1..=5` is accepted too
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim_start_matches('=').trim().parse()?);
        if b < a {
            bail!("empty seed range {spec}");
        }
        return Ok((a..=b).collect());
    }
    spec.split(',').filter(|s| !s.trim().is_empty()).map(|s| Ok(s.trim().parse()?)).collect()
}

fn three(v: &[f64], what: &str) -> Result<[f64; 3]> {
    v.try_into().map_err(|_| anyhow!("{what} needs exactly three comma-separated numbers"))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate {
            config,
            seed,
            ablation,
            out,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(a) = ablation {
                cfg = a.apply(&cfg);
            }
            if let Some(s) = seed {
                cfg.sim.seed = s;
            }
            let log = run(&cfg).map_err(|e| fail(sim_code(&e), e))?;
            log.save(&out).map_err(|e| fail(1, e))?;
            eprintln!("wrote {} records to {}", log.records.len(), out.display());
            Ok(())
        }
        Command::Analyze {
            log,
            trim_seconds,
            step_seconds,
            out,
        } => {
            let data = TrajectoryLog::load(&log).map_err(|e| fail(EXIT_DATA, e))?;
            let metrics = analyze(&data, trim_seconds).map_err(|e| fail(metrics_code(&e), e))?;
            let trend = distance_trend(&data, trim_seconds, step_seconds).ok();
            let value = serde_json::json!({ "metrics": metrics, "distance_trend": trend });
            write_json(&value, out.as_deref())
        }
        Command::Sweep(args) => {
            let cfg = load_config(&args.config)?;
            let ablations: Vec<Ablation> = args
                .ablations
                .iter()
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.parse::<Ablation>().map_err(|e| fail(EXIT_CONFIG, anyhow!(e))))
                .collect::<Result<_, _>>()?;
            let seeds = parse_seeds(&args.seeds).map_err(|e| fail(EXIT_CONFIG, e))?;
            let report = sweep(&cfg, &ablations, &seeds, &args.omega);
            let value = serde_json::to_value(&report).expect("report serialises");
            write_json(&value, args.out.as_deref())
        }
        Command::LqrGain { config, heading } => {
            let cfg = load_config(&config)?;
            let v_r = cfg.turn.radius * cfg.turn.omega.abs();
            let d = lqr::design(&cfg.lqr, heading, v_r, 0.0).map_err(|e| fail(EXIT_RUN, e))?;
            println!("linearised at heading {heading} rad, v_r {:.4} m/s (floor {}), dt {} s", v_r.max(cfg.lqr.vr_floor), cfg.lqr.vr_floor, cfg.lqr.dt);
            println!("A ={}B ={}P ={}K ={}", d.a, d.b, d.solution.p, d.solution.k);
            println!("closed-loop spectral radius {:.12}", d.solution.spectral_radius);
            println!("Riccati iterations {}", d.solution.iterations);
            Ok(())
        }
        Command::Kin(args) => {
            let geom = match &args.config {
                Some(p) => load_config(p)?.geometry,
                None => geometry::LegGeometry::default(),
            };
            if let Some(fk) = args.query.fk {
                let [a1, a2, a3] = three(&fk, "--fk").map_err(|e| fail(EXIT_CONFIG, e))?;
                let alpha = JointAngles::new(a1, a2, a3);
                let p = geometry::forward_kinematics(&geom, &alpha);
                let off = rolling_offset(&geom, &alpha);
                let value = serde_json::json!({
                    "ball_center": [p.x, p.y, p.z],
                    "real_contact": <[f64; 3]>::from(real_contact_point(&geom, &alpha)),
                    "ideal_foothold": <[f64; 3]>::from(ideal_foothold(&geom, &alpha)),
                    "delta": [off.delta.x, off.delta.y, off.delta.z],
                    "phi": off.phi,
                });
                write_json(&value, None)
            } else {
                let ik = args.query.ik.expect("clap enforces one query");
                let target = Vector3::from(three(&ik, "--ik").map_err(|e| fail(EXIT_CONFIG, e))?);
                let value = if args.fkm {
                    let sol = corrected_inverse_kinematics(&geom, &target, KneeBranch::Backward).map_err(|e| fail(EXIT_RUN, e))?;
                    let a = sol.angles;
                    serde_json::json!({ "angles": [a.ab_ad, a.thigh, a.knee], "residual": sol.residual, "iterations": sol.iterations })
                } else {
                    let a = geometry::inverse_kinematics(&geom, &target, KneeBranch::Backward).map_err(|e| fail(EXIT_RUN, e))?;
                    serde_json::json!({ "angles": [a.ab_ad, a.thigh, a.knee] })
                };
                write_json(&value, None)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
