//! Ablation × seed × spin-rate grids, run in parallel, with the comparisons
//! the experiments care about: radius ordering across controllers and the
//! error trend across spin rates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::metrics::{analyze, distance_trend, SpinMetrics, Trend};
use crate::sim::{run, Ablation};

/// Required relative margin between consecutive ablations in the ordering.
pub const ORDERING_MARGIN: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellOutcome {
    Ok { metrics: SpinMetrics, distance_trend: Option<Trend> },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub ablation: Ablation,
    pub seed: u64,
    pub omega: f64,
    pub outcome: CellOutcome,
}

impl Cell {
    pub fn metrics(&self) -> Option<&SpinMetrics> {
        match &self.outcome {
            CellOutcome::Ok { metrics, .. } => Some(metrics),
            CellOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, sd })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub ablation: Ablation,
    pub omega: f64,
    pub completed: usize,
    pub failed: usize,
    pub radius_m: Option<MeanSd>,
    pub radial_variance_m2: Option<MeanSd>,
    pub mean_position_error_m: Option<MeanSd>,
    pub roll_variance_rad2: Option<MeanSd>,
    pub pitch_variance_rad2: Option<MeanSd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingVerdict {
    pub omega: f64,
    /// Mean radii in baseline, fkm, asc order.
    pub radii_m: [f64; 3],
    /// `r_baseline / r_fkm − 1` and `r_fkm / r_asc − 1`.
    pub margins: [f64; 2],
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaTrendVerdict {
    pub ablation: Ablation,
    pub omegas: Vec<f64>,
    pub mean_position_error_m: Vec<f64>,
    pub nondecreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub terrain: String,
    pub trim_seconds: f64,
    pub cells: Vec<Cell>,
    pub aggregates: Vec<Aggregate>,
    /// Present for every spin rate at which all three ablations completed.
    pub ordering: Vec<OrderingVerdict>,
    /// Present for ablations swept over more than one spin rate.
    pub omega_trend: Vec<OmegaTrendVerdict>,
}

fn run_cell(base: &Config, ablation: Ablation, seed: u64, omega: f64) -> Cell {
    let mut cfg = ablation.apply(base);
    cfg.sim.seed = seed;
    cfg.turn.omega = omega;
    let outcome = match run(&cfg) {
        Err(e) => CellOutcome::Failed { error: e.to_string() },
        Ok(log) => match analyze(&log, cfg.sim.trim_seconds) {
            Err(e) => CellOutcome::Failed { error: e.to_string() },
            Ok(metrics) => CellOutcome::Ok {
                metrics,
                distance_trend: distance_trend(&log, cfg.sim.trim_seconds, cfg.gait.step_duration()).ok(),
            },
        },
    };
    Cell {
        ablation,
        seed,
        omega,
        outcome,
    }
}

/// Run every (ablation, seed, ω) combination; failures are recorded per cell.
/// An empty `omegas` list uses the spin rate of `base`.
pub fn sweep(base: &Config, ablations: &[Ablation], seeds: &[u64], omegas: &[f64]) -> SweepReport {
    let omegas: Vec<f64> = if omegas.is_empty() { vec![base.turn.omega] } else { omegas.to_vec() };
    let mut jobs = Vec::new();
    for &a in ablations {
        for &w in &omegas {
            for &s in seeds {
                jobs.push((a, s, w));
            }
        }
    }
    let cells: Vec<Cell> = jobs.par_iter().map(|&(a, s, w)| run_cell(base, a, s, w)).collect();

    let mut aggregates = Vec::new();
    for &a in ablations {
        for &w in &omegas {
            let group: Vec<&Cell> = cells.iter().filter(|c| c.ablation == a && c.omega == w).collect();
            let ok: Vec<&SpinMetrics> = group.iter().filter_map(|c| c.metrics()).collect();
            let stat = |f: fn(&SpinMetrics) -> f64| MeanSd::of(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
            aggregates.push(Aggregate {
                ablation: a,
                omega: w,
                completed: ok.len(),
                failed: group.len() - ok.len(),
                radius_m: stat(|m| m.circle.radius),
                radial_variance_m2: stat(|m| m.circle.radial_variance),
                mean_position_error_m: stat(|m| m.mean_position_error),
                roll_variance_rad2: stat(|m| m.roll_variance),
                pitch_variance_rad2: stat(|m| m.pitch_variance),
            });
        }
    }

    let find = |a: Ablation, w: f64| aggregates.iter().find(|g| g.ablation == a && g.omega == w);
    let mut ordering = Vec::new();
    for &w in &omegas {
        let radii: Option<Vec<f64>> = Ablation::ALL
            .iter()
            .map(|&a| find(a, w).filter(|g| g.failed == 0).and_then(|g| g.radius_m).map(|r| r.mean))
            .collect();
        if let Some(r) = radii {
            let margins = [r[0] / r[1] - 1.0, r[1] / r[2] - 1.0];
            ordering.push(OrderingVerdict {
                omega: w,
                radii_m: [r[0], r[1], r[2]],
                margins,
                holds: margins.iter().all(|m| *m > ORDERING_MARGIN),
            });
        }
    }

    let mut omega_trend = Vec::new();
    if omegas.len() > 1 {
        let mut sorted = omegas.clone();
        sorted.sort_by(f64::total_cmp);
        for &a in ablations {
            let errors: Option<Vec<f64>> = sorted
                .iter()
                .map(|&w| find(a, w).filter(|g| g.failed == 0).and_then(|g| g.mean_position_error_m).map(|e| e.mean))
                .collect();
            if let Some(errors) = errors {
                omega_trend.push(OmegaTrendVerdict {
                    ablation: a,
                    omegas: sorted.clone(),
                    nondecreasing: errors.windows(2).all(|w| w[1] >= w[0]),
                    mean_position_error_m: errors,
                });
            }
        }
    }

    SweepReport {
        terrain: base.terrain.name().to_string(),
        trim_seconds: base.sim.trim_seconds,
        cells,
        aggregates,
        ordering,
        omega_trend,
    }
}
