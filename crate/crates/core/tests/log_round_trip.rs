use quadspin::log::TrajectoryLog;
use quadspin::metrics::analyze;
use quadspin::sim::{run, Ablation};
use quadspin::Config;

#[test]
fn saved_log_analyses_identically() {
    let mut cfg = Ablation::Baseline.apply(&Config::default());
    cfg.sim.duration = 4.0;
    cfg.sim.seed = 9;
    let log = run(&cfg).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.csv");
    log.save(&path).unwrap();
    let back = TrajectoryLog::load(&path).unwrap();
    assert_eq!(back, log);
    assert_eq!(analyze(&back, 1.0).unwrap(), analyze(&log, 1.0).unwrap());
}

#[test]
fn seeds_change_only_the_noise() {
    let mut cfg = Config::default();
    cfg.sim.duration = 2.0;
    let a = run(&cfg).unwrap();
    cfg.sim.seed += 1;
    let b = run(&cfg).unwrap();
    assert_ne!(a.to_csv_bytes(), b.to_csv_bytes());

    cfg.sim.noise_sigma = 0.0;
    let c = run(&cfg).unwrap();
    cfg.sim.seed += 1;
    assert_eq!(c.to_csv_bytes(), run(&cfg).unwrap().to_csv_bytes());
}
