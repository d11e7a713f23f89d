//! Run configuration, read from TOML.
//!
//! Power-valued fields accept either a bare number (watts) or a string with a
//! unit: `"10 dBm"`, `"0 dBW"`, `"1e-3 W"`, `"1 mW"`, or `"0 dB"`. A bare `dB`
//! is taken relative to `system.db_reference`.

use crate::ao::{AoSettings, StepSettings};
use crate::beamforming::BeamSettings;
use crate::channel::{point_along, FadingParams, Point3};
use crate::metrics::{SystemParams, Tolerances};
use crate::phase::PhaseSettings;
use crate::power::PowerSettings;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

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
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum DbReference {
    #[default]
    #[serde(rename = "dBW")]
    DbW,
    #[serde(rename = "dBm")]
    DbM,
}

/// A power level as written in the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PowerValue {
    Watts(f64),
    Text(String),
}

impl PowerValue {
    pub fn to_watts(&self, db_ref: DbReference) -> Result<f64, ConfigError> {
        match self {
            PowerValue::Watts(w) => Ok(*w),
            PowerValue::Text(t) => parse_power(t, db_ref),
        }
    }
}

impl fmt::Display for PowerValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PowerValue::Watts(w) => write!(f, "{w} W"),
            PowerValue::Text(t) => f.write_str(t),
        }
    }
}

pub fn parse_power(text: &str, db_ref: DbReference) -> Result<f64, ConfigError> {
    let t = text.trim();
    let split = t
        .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
        .unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let x = f64::from_str(num.trim()).map_err(|_| invalid(format!("cannot parse power {text:?}")))?;
    let db = |offset: f64| 10f64.powf((x + offset) / 10.0);
    let watts = match unit.trim() {
        "" | "W" => x,
        "mW" => x * 1e-3,
        "dBW" => db(0.0),
        "dBm" => db(-30.0),
        "dB" => match db_ref {
            DbReference::DbW => db(0.0),
            DbReference::DbM => db(-30.0),
        },
        u => return Err(invalid(format!("unknown power unit {u:?} in {text:?}"))),
    };
    Ok(watts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub k: usize,
    pub nr: usize,
    pub m: usize,
    pub irs_enabled: bool,
    pub area_side: f64,
    pub bs_pos: Point3,
    pub irs_pos: Point3,
    /// When set, the IRS is placed at this 3-D distance from the BS on the
    /// line towards the area centre, keeping the height of `irs_pos`.
    pub irs_bs_distance: Option<f64>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            k: 3,
            nr: 4,
            m: 30,
            irs_enabled: true,
            area_side: 100.0,
            bs_pos: [0.0, 0.0, 25.0],
            irs_pos: [25.0, 25.0, 20.0],
            irs_bs_distance: None,
        }
    }
}

impl Scenario {
    pub fn area_centre(&self) -> Point3 {
        [self.area_side / 2.0, self.area_side / 2.0, 0.0]
    }

    pub fn resolved_irs_pos(&self) -> Point3 {
        match self.irs_bs_distance {
            Some(d) => point_along(self.bs_pos, self.area_centre(), self.irs_pos[2], d),
            None => self.irs_pos,
        }
    }

    /// Number of reflecting elements actually simulated.
    pub fn effective_m(&self) -> usize {
        if self.irs_enabled {
            self.m
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub sigma2: PowerValue,
    pub bandwidth_hz: f64,
    pub r_min_bps: f64,
    pub p_max: PowerValue,
    pub p_gap: PowerValue,
    pub db_reference: DbReference,
    pub qos_enabled: bool,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            sigma2: PowerValue::Text("-80 dBm".into()),
            bandwidth_hz: 2e6,
            r_min_bps: 0.5e6,
            p_max: PowerValue::Text("0 dB".into()),
            p_gap: PowerValue::Text("10 dBm".into()),
            db_reference: DbReference::DbW,
            qos_enabled: true,
        }
    }
}

impl SystemConfig {
    pub fn params(&self) -> Result<SystemParams, ConfigError> {
        let r = self.db_reference;
        let sp = SystemParams::new(
            self.sigma2.to_watts(r)?,
            self.bandwidth_hz,
            self.r_min_bps,
            self.p_gap.to_watts(r)?,
            self.p_max.to_watts(r)?,
        )
        .map_err(|e| invalid(e.to_string()))?;
        Ok(if self.qos_enabled { sp } else { sp.without_qos() })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub ao: AoSettings,
    pub beamforming: BeamSettings,
    pub power: PowerSettings,
    pub phase: PhaseSettings,
    pub tolerances: Tolerances,
}

impl SolverConfig {
    pub fn steps(&self) -> StepSettings {
        StepSettings {
            beamforming: self.beamforming.clone(),
            power: self.power.clone(),
            phase: self.phase.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Leave `wall_ms` empty so that repeated runs produce identical files.
    pub record_wall_time: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { record_wall_time: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub trials: usize,
    pub scenario: Scenario,
    pub fading: FadingParams,
    pub system: SystemConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 20,
            scenario: Scenario::default(),
            fading: FadingParams::default(),
            system: SystemConfig::default(),
            solver: SolverConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl FromStr for RunConfig {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let cfg: RunConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        text.parse()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn system_params(&self) -> Result<SystemParams, ConfigError> {
        self.system.params()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.scenario;
        if s.k == 0 {
            return Err(invalid("scenario.k must be at least 1"));
        }
        if s.nr == 0 {
            return Err(invalid("scenario.nr must be at least 1"));
        }
        if !(s.area_side > 0.0 && s.area_side.is_finite()) {
            return Err(invalid("scenario.area_side must be positive"));
        }
        let finite = |p: &Point3| p.iter().all(|x| x.is_finite());
        if !finite(&s.bs_pos) || !finite(&s.irs_pos) {
            return Err(invalid("positions must be finite"));
        }
        if let Some(d) = s.irs_bs_distance {
            if !(d > 0.0 && d.is_finite()) {
                return Err(invalid("scenario.irs_bs_distance must be positive"));
            }
        }
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        self.fading.validate().map_err(|e| invalid(e.to_string()))?;
        self.system_params()?;
        let ao = &self.solver.ao;
        if ao.t0_max == 0 || ao.init_retries == 0 || !(ao.eps0 > 0.0) {
            return Err(invalid("solver.ao caps and tolerances must be positive"));
        }
        let bf = &self.solver.beamforming;
        if !(bf.delta1 > 0.0 && bf.delta2 > 0.0 && bf.eps1 > 0.0) || bf.t1_max == 0 || bf.reg < 0.0 {
            return Err(invalid("solver.beamforming step sizes, eps1 and t1_max must be positive"));
        }
        Ok(())
    }
}
