//! Run configuration: one TOML document with a section per subsystem.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gait::{GaitParams, TurnCommand};
use crate::geometry::LegGeometry;
use crate::lqr::LqrParams;
use crate::psp::PspParams;
use crate::terrain::TerrainModel;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported schema_version {found} (expected {SCHEMA_VERSION})")]
    Schema { found: u32 },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FkmParams {
    pub enabled: bool,
}

impl Default for FkmParams {
    fn default() -> Self {
        Self { enabled: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    /// Tick (s).
    pub dt: f64,
    /// Simulated time (s).
    pub duration: f64,
    /// Std-dev of the xy touchdown perturbation (m).
    pub noise_sigma: f64,
    pub seed: u64,
    /// Transient removed before analysis (s).
    pub trim_seconds: f64,
    /// Roll/pitch beyond which the run is declared fallen (rad).
    pub fall_tilt: f64,
    /// Allowed CoM distance from the stance diagonal (m).
    pub fall_band: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 0.001,
            duration: 40.0,
            noise_sigma: 0.001,
            seed: 1,
            trim_seconds: 5.0,
            fall_tilt: 0.6,
            fall_band: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    #[serde(default)]
    pub geometry: LegGeometry,
    #[serde(default)]
    pub fkm: FkmParams,
    #[serde(default)]
    pub gait: GaitParams,
    #[serde(default)]
    pub turn: TurnCommand,
    #[serde(default)]
    pub terrain: TerrainModel,
    #[serde(default)]
    pub psp: PspParams,
    #[serde(default)]
    pub lqr: LqrParams,
    #[serde(default)]
    pub sim: SimParams,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            geometry: LegGeometry::default(),
            fkm: FkmParams::default(),
            gait: GaitParams::default(),
            turn: TurnCommand::default(),
            terrain: TerrainModel::default(),
            psp: PspParams::default(),
            lqr: LqrParams::default(),
            sim: SimParams::default(),
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema {
                found: self.schema_version,
            });
        }
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if let Err(e) = self.geometry.validate() {
            return invalid(e.to_string());
        }
        let g = &self.gait;
        if !(g.cycle_period > 0.0 && g.duty > 0.0 && g.duty < 1.0 && g.swing_height >= 0.0) {
            return invalid("gait needs cycle_period > 0, 0 < duty < 1, swing_height ≥ 0".into());
        }
        if !(self.turn.radius >= 0.0 && self.turn.radius.is_finite() && self.turn.omega.is_finite()) {
            return invalid("turn.radius must be ≥ 0 and turn.omega finite".into());
        }
        if let Err(e) = self.terrain.validate() {
            return invalid(e);
        }
        if !(self.psp.sigma > 0.0 && self.psp.standing_height > 0.0 && self.psp.standing_height < self.geometry.max_reach()) {
            return invalid("psp.sigma must be > 0 and psp.standing_height within leg reach".into());
        }
        if let Err(e) = self.lqr.validate() {
            return invalid(e);
        }
        let s = &self.sim;
        if !(s.dt > 0.0 && s.dt <= self.gait.step_duration() && s.duration > 0.0 && s.duration.is_finite()) {
            return invalid("sim.dt must be in (0, step duration] and sim.duration > 0".into());
        }
        if !(s.noise_sigma >= 0.0 && s.trim_seconds >= 0.0 && s.fall_tilt > 0.0 && s.fall_band > 0.0) {
            return invalid("sim.noise_sigma, sim.trim_seconds ≥ 0; fall thresholds > 0".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_gets_defaults() {
        let cfg = Config::from_toml_str("schema_version = 1\n").unwrap();
        assert_eq!(cfg, Config::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = Config::default();
        cfg.terrain = TerrainModel::Stairs { rise: 0.04, run: 0.25 };
        cfg.turn.omega = 1.2;
        let back = Config::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn terrain_section_layout() {
        let cfg = Config::from_toml_str("schema_version = 1\n[terrain]\nkind = \"slope\"\nslope_pitch_deg = 10.0\n").unwrap();
        assert_eq!(cfg.terrain, TerrainModel::Slope { pitch_deg: 10.0 });
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        assert!(matches!(
            Config::from_toml_str("schema_version = 1\n[gait]\nperiod = 0.3\n"),
            Err(ConfigError::Parse(_))
        ));
        assert!(matches!(Config::from_toml_str("schema_version = 1\nextra = 2\n"), Err(ConfigError::Parse(_))));
        assert!(matches!(Config::from_toml_str("schema_version = 7\n"), Err(ConfigError::Schema { found: 7 })));
        assert!(matches!(Config::from_toml_str(""), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(
            Config::from_toml_str("schema_version = 1\n[gait]\nduty = 1.5\n"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            Config::from_toml_str("schema_version = 1\n[geometry]\nfoot_radius = 0.3\n"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            Config::from_toml_str("schema_version = 1\n[lqr]\nr_diag = [0.0, 1.0]\n"),
            Err(ConfigError::Invalid(_))
        ));
    }
}
