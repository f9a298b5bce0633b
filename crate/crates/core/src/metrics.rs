//! Drift statistics of a logged run: circle fit of the CoM path, attitude
//! moments, acceleration spread and a HAC-robust drift trend.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::log::TrajectoryLog;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("degenerate point set: {0}")]
    Degenerate(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
    /// Sample variance of the distances to `center` (m²).
    pub radial_variance: f64,
}

fn sample_variance(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.clone().sum::<f64>() / n as f64;
    xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
}

fn mean_of(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count();
    if n == 0 {
        0.0
    } else {
        xs.sum::<f64>() / n as f64
    }
}

/// Algebraic (Kåsa) least-squares circle.
///
/// Works on coordinates centred at the centroid: the offset `c` of the
/// algebraic model then decouples and the centre solves a 2×2 system.
pub fn fit_circle(points: &[Vector2<f64>]) -> Result<Circle, MetricsError> {
    if points.len() < 3 {
        return Err(MetricsError::Degenerate(format!("{} points, need 3", points.len())));
    }
    let n = points.len() as f64;
    let mean = points.iter().sum::<Vector2<f64>>() / n;
    let mut m = Matrix2::zeros();
    let mut rhs = Vector2::zeros();
    let mut mean_sq = 0.0;
    for p in points {
        let d = p - mean;
        let sq = d.norm_squared();
        m += d * d.transpose();
        rhs += d * (0.5 * sq);
        mean_sq += sq / n;
    }
    let eig = m.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 1e-12 * hi) || hi == 0.0 {
        return Err(MetricsError::Degenerate("points are collinear".into()));
    }
    let c = m.cholesky().ok_or_else(|| MetricsError::Degenerate("singular scatter".into()))?.solve(&rhs);
    let center = mean + c;
    let radius = (c.norm_squared() + mean_sq).sqrt();
    let radial_variance = sample_variance(points.iter().map(|p| (p - center).norm()));
    Ok(Circle {
        center: center.into(),
        radius,
        radial_variance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinMetrics {
    pub circle: Circle,
    /// False when the path was too degenerate for a fit and the centroid /
    /// RMS distance stand in for centre / radius.
    pub circle_fitted: bool,
    pub roll_mean: f64,
    pub roll_variance: f64,
    pub pitch_mean: f64,
    pub pitch_variance: f64,
    /// Summed per-axis variance of the CoM acceleration ((m/s²)²).
    pub linear_acceleration_variance: f64,
    /// Variance of the yaw acceleration ((rad/s²)²).
    pub angular_acceleration_variance: f64,
    /// Largest |x| and |y| of the CoM relative to where the run started (m).
    pub max_abs_x: f64,
    pub max_abs_y: f64,
    /// Mean distance of the CoM from where the run started (m).
    pub mean_position_error: f64,
    pub samples: usize,
    pub trim_seconds: f64,
}

/// Statistics of the part of `log` after the first `trim_seconds`.
///
/// Offsets are measured from the first logged CoM, which is the commanded
/// spin centre for spin-in-place runs.
pub fn analyze(log: &TrajectoryLog, trim_seconds: f64) -> Result<SpinMetrics, MetricsError> {
    let first = log.records.first().ok_or_else(|| MetricsError::InsufficientData("empty log".into()))?;
    let origin = Vector2::new(first.com[0], first.com[1]);
    let cut = first.t + trim_seconds;
    let kept: Vec<_> = log.records.iter().filter(|r| r.t >= cut).collect();
    if kept.len() < 3 {
        return Err(MetricsError::InsufficientData(format!(
            "{} records after trimming {trim_seconds} s",
            kept.len()
        )));
    }
    let points: Vec<Vector2<f64>> = kept.iter().map(|r| Vector2::new(r.com[0], r.com[1])).collect();
    let centroid = points.iter().sum::<Vector2<f64>>() / points.len() as f64;
    let spread = points.iter().map(|p| (p - centroid).norm()).fold(0.0, f64::max);

    let (circle, circle_fitted) = if spread < 1e-12 {
        (
            Circle {
                center: centroid.into(),
                radius: 0.0,
                radial_variance: 0.0,
            },
            false,
        )
    } else {
        match fit_circle(&points) {
            Ok(c) => (c, true),
            Err(_) => {
                let rms = mean_of(points.iter().map(|p| (p - centroid).norm_squared())).sqrt();
                let var = sample_variance(points.iter().map(|p| (p - centroid).norm()));
                (
                    Circle {
                        center: centroid.into(),
                        radius: rms,
                        radial_variance: var,
                    },
                    false,
                )
            }
        }
    };

    let mut lin = [Vec::new(), Vec::new()];
    let mut ang = Vec::new();
    for w in kept.windows(3) {
        let (a, b, c) = (w[0], w[1], w[2]);
        let h1 = b.t - a.t;
        let h2 = c.t - b.t;
        // non-uniform second difference; reduces to the central one for h1 = h2
        let d2 = |fa: f64, fb: f64, fc: f64| 2.0 * ((fc - fb) / h2 - (fb - fa) / h1) / (h1 + h2);
        for k in 0..2 {
            lin[k].push(d2(a.com[k], b.com[k], c.com[k]));
        }
        ang.push(d2(a.yaw, b.yaw, c.yaw));
    }
    let offsets = points.iter().map(|p| p - origin);

    Ok(SpinMetrics {
        circle,
        circle_fitted,
        roll_mean: mean_of(kept.iter().map(|r| r.roll)),
        roll_variance: sample_variance(kept.iter().map(|r| r.roll)),
        pitch_mean: mean_of(kept.iter().map(|r| r.pitch)),
        pitch_variance: sample_variance(kept.iter().map(|r| r.pitch)),
        linear_acceleration_variance: sample_variance(lin[0].iter().copied()) + sample_variance(lin[1].iter().copied()),
        angular_acceleration_variance: sample_variance(ang.iter().copied()),
        max_abs_x: offsets.clone().map(|d| d.x.abs()).fold(0.0, f64::max),
        max_abs_y: offsets.clone().map(|d| d.y.abs()).fold(0.0, f64::max),
        mean_position_error: mean_of(offsets.map(|d| d.norm())),
        samples: kept.len(),
        trim_seconds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub slope: f64,
    pub intercept: f64,
    /// Autocorrelation-robust standard error of the slope.
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Bartlett bandwidth used (`n − 1` for the full-bandwidth interval).
    pub lags: usize,
    pub n: usize,
}

impl Trend {
    pub fn ci_contains_zero(&self) -> bool {
        self.ci_low <= 0.0 && 0.0 <= self.ci_high
    }
}

/// Two-sided 95 % critical value of the slope t-statistic with a Bartlett
/// long-run variance at bandwidth equal to the sample size, for a regression
/// on an intercept and a linear trend (fixed-b asymptotics; Monte Carlo
/// value, 2·10⁵ draws at n = 500…4000).
pub const FIXED_B_CRITICAL_95: f64 = 5.78;

/// OLS slope of `y` on `x` with a 95 % interval robust to autocorrelated
/// errors.
///
/// With `lags = None` the long-run variance uses the Bartlett kernel at full
/// bandwidth and the interval uses [`FIXED_B_CRITICAL_95`]; this keeps close
/// to nominal coverage on slowly mixing errors such as a closed-loop drift
/// log, where the textbook `⌊4·(n/100)^{2/9}⌋` lags cover zero well under
/// half the time. `Some(l)` gives the classical Newey–West interval with `l`
/// lags and Student-t quantiles on `n − 2` degrees of freedom.
pub fn linear_trend(x: &[f64], y: &[f64], lags: Option<usize>) -> Result<Trend, MetricsError> {
    let n = x.len();
    if n != y.len() || n < 4 {
        return Err(MetricsError::InsufficientData(format!("{n} samples for a trend")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(MetricsError::Degenerate("constant regressor".into()));
    }
    let slope = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / sxx;
    let intercept = my - slope * mx;
    let scores: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - intercept - slope * a)).collect();
    let (lags, lrv, crit) = match lags {
        None => {
            // Σ_{|l|<n} (1 − |l|/n)·γ_l = (2/n)·Σ_t S_t², S_t the partial sums of the scores
            let mut partial = 0.0;
            let lrv = 2.0 / nf
                * scores
                    .iter()
                    .map(|v| {
                        partial += v;
                        partial * partial
                    })
                    .sum::<f64>();
            (n - 1, lrv, FIXED_B_CRITICAL_95)
        }
        Some(lags) => {
            let lags = lags.min(n - 1);
            let mut lrv = scores.iter().map(|u| u * u).sum::<f64>();
            for l in 1..=lags {
                let w = 1.0 - l as f64 / (lags as f64 + 1.0);
                let gamma: f64 = (l..n).map(|t| scores[t] * scores[t - l]).sum();
                lrv += 2.0 * w * gamma;
            }
            let t = StudentsT::new(0.0, 1.0, nf - 2.0).expect("n ≥ 4").inverse_cdf(0.975);
            (lags, lrv, t)
        }
    };
    let std_error = lrv.max(0.0).sqrt() / sxx;
    Ok(Trend {
        slope,
        intercept,
        std_error,
        ci_low: slope - crit * std_error,
        ci_high: slope + crit * std_error,
        lags,
        n,
    })
}

/// Trend of the CoM distance from where the run started, sampled once per
/// `period` after the trim (one sample per footstep when `period` is the
/// step duration).
pub fn distance_trend(log: &TrajectoryLog, trim_seconds: f64, period: f64) -> Result<Trend, MetricsError> {
    let first = log.records.first().ok_or_else(|| MetricsError::InsufficientData("empty log".into()))?;
    let origin = Vector2::new(first.com[0], first.com[1]);
    let mut next = first.t + trim_seconds;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for r in &log.records {
        if r.t + 1e-9 >= next {
            xs.push(r.t);
            ys.push((Vector2::new(r.com[0], r.com[1]) - origin).norm());
            next += period;
        }
    }
    linear_trend(&xs, &ys, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log::Record;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn circle_points(cx: f64, cy: f64, r: f64, n: usize) -> Vec<Vector2<f64>> {
        (0..n)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64 + 0.3;
                Vector2::new(cx + r * a.cos(), cy + r * a.sin())
            })
            .collect()
    }

    #[test]
    fn exact_circle() {
        let c = fit_circle(&circle_points(1.0, 2.0, 0.05, 50)).unwrap();
        assert_abs_diff_eq!(c.center[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(c.center[1], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(c.radius, 0.05, epsilon = 1e-10);
        assert!(c.radial_variance < 1e-20);
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let line: Vec<_> = (0..10).map(|i| Vector2::new(i as f64, 2.0 * i as f64)).collect();
        assert!(matches!(fit_circle(&line), Err(MetricsError::Degenerate(_))));
        assert!(fit_circle(&line[..2]).is_err());
    }

    #[test]
    fn radial_noise_shows_up_as_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 0.002).unwrap();
        let pts: Vec<_> = circle_points(0.0, 0.0, 0.1, 1000)
            .into_iter()
            .map(|p| p * (1.0 + noise.sample(&mut rng) / 0.1))
            .collect();
        let c = fit_circle(&pts).unwrap();
        let ratio = c.radial_variance / 0.002f64.powi(2);
        assert!((0.8..1.2).contains(&ratio), "ratio {ratio}");
    }

    fn log_of(points: impl Iterator<Item = (f64, [f64; 2])>) -> TrajectoryLog {
        TrajectoryLog {
            records: points
                .map(|(t, xy)| Record {
                    t,
                    com: [xy[0], xy[1], 0.29],
                    ..Default::default()
                })
                .collect(),
        }
    }

    #[test]
    fn stationary_log() {
        let log = log_of((0..8000).map(|i| (i as f64 * 1e-3, [0.3, -0.1])));
        let m = analyze(&log, 5.0).unwrap();
        assert_eq!(m.circle.radius, 0.0);
        assert_eq!(m.circle.radial_variance, 0.0);
        assert_eq!((m.max_abs_x, m.max_abs_y, m.mean_position_error), (0.0, 0.0, 0.0));
        assert_eq!(m.linear_acceleration_variance, 0.0);
    }

    #[test]
    fn synthetic_spin_circle() {
        let r = 0.0112;
        let log = log_of((0..20_000).map(|i| {
            let t = i as f64 * 1e-3;
            let a = 0.7 * t;
            (t, [r * a.cos() - r, r * a.sin()])
        }));
        let m = analyze(&log, 5.0).unwrap();
        assert!(m.circle_fitted);
        assert_abs_diff_eq!(m.circle.radius, r, epsilon = 1e-9);
        assert_abs_diff_eq!(m.circle.center[0], -r, epsilon = 1e-9);
        assert!(m.max_abs_x <= 2.0 * r + 1e-12 && m.max_abs_x > 1.9 * r);
        // centripetal acceleration r·ω² in a rotating direction
        // (minus the squared mean over a non-integer number of turns)
        let expected = (r * 0.49f64).powi(2);
        assert!((m.linear_acceleration_variance / expected - 1.0).abs() < 0.03);
    }

    #[test]
    fn trim_longer_than_log() {
        let log = log_of((0..100).map(|i| (i as f64 * 1e-3, [0.0, 0.0])));
        assert!(matches!(analyze(&log, 5.0), Err(MetricsError::InsufficientData(_))));
        assert!(matches!(analyze(&TrajectoryLog::default(), 0.0), Err(MetricsError::InsufficientData(_))));
    }

    #[test]
    fn trend_of_exact_line_and_noise() {
        let x: Vec<f64> = (0..200).map(|i| i as f64 * 0.2).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.01 + 0.003 * v).collect();
        let t = linear_trend(&x, &y, None).unwrap();
        assert_abs_diff_eq!(t.slope, 0.003, epsilon = 1e-12);
        assert!(!t.ci_contains_zero());

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut covered = 0;
        for _ in 0..400 {
            let y: Vec<f64> = x.iter().map(|_| noise.sample(&mut rng)).collect();
            covered += linear_trend(&x, &y, None).unwrap().ci_contains_zero() as usize;
        }
        // nominal 95 % coverage, loosened for the finite-sample bandwidth
        assert!(covered >= 360, "covered {covered}/400");
    }

    #[test]
    fn trend_interval_on_slowly_mixing_errors() {
        // AR(1) errors with ρ = 0.95, no trend
        let x: Vec<f64> = (0..175).map(|i| i as f64 * 0.2).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let (mut full, mut rule) = (0, 0);
        for _ in 0..400 {
            let mut e = 0.0;
            let y: Vec<f64> = x
                .iter()
                .map(|_| {
                    e = 0.95 * e + noise.sample(&mut rng);
                    e
                })
                .collect();
            full += linear_trend(&x, &y, None).unwrap().ci_contains_zero() as usize;
            rule += linear_trend(&x, &y, Some(4)).unwrap().ci_contains_zero() as usize;
        }
        // about 86 % and 44 % in a large simulation
        assert!(full >= 320, "full bandwidth {full}/400");
        assert!(rule < 240, "rule-of-thumb {rule}/400");
    }

    #[test]
    fn fixed_b_critical_value() {
        // 95th percentile of |t| under iid errors, re-simulated
        let x: Vec<f64> = (0..300).map(|i| i as f64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut t: Vec<f64> = (0..20_000)
            .map(|_| {
                let y: Vec<f64> = x.iter().map(|_| noise.sample(&mut rng)).collect();
                let tr = linear_trend(&x, &y, None).unwrap();
                (tr.slope / tr.std_error).abs()
            })
            .collect();
        t.sort_by(f64::total_cmp);
        let q = t[19_000];
        assert!((q - FIXED_B_CRITICAL_95).abs() < 0.2, "{q}");
    }

    proptest! {
        #[test]
        fn circle_fit_is_translation_equivariant(
            tx in -50.0f64..50.0, ty in -50.0f64..50.0,
            r in 0.01f64..1.0,
            jitter in proptest::collection::vec(-1e-3f64..1e-3, 40),
        ) {
            let base: Vec<_> = circle_points(0.2, -0.1, r, 40).into_iter().zip(&jitter).map(|(p, j)| p * (1.0 + j)).collect();
            let moved: Vec<_> = base.iter().map(|p| p + Vector2::new(tx, ty)).collect();
            let (a, b) = (fit_circle(&base).unwrap(), fit_circle(&moved).unwrap());
            prop_assert!((b.center[0] - a.center[0] - tx).abs() < 1e-12 * (1.0 + tx.abs()) * 10.0);
            prop_assert!((b.center[1] - a.center[1] - ty).abs() < 1e-12 * (1.0 + ty.abs()) * 10.0);
            prop_assert!((b.radius - a.radius).abs() < 1e-11);
            prop_assert!((b.radial_variance - a.radial_variance).abs() < 1e-12);
        }
    }
}
