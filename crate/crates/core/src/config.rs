//! Campaign configuration, read from TOML. Every field has a default, so an
//! empty file describes the reference setup: ten sondes released from
//! 1700 m and two ground stations.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::Window;
use crate::atmosphere::WindField;
use crate::balloon::BalloonSpec;
use crate::flight::{AmbientModel, Dynamics, SensorErrorModel};
use crate::geo::GeodeticAnchor;
use crate::ingest::{CLUSTER_STEP, DEFAULT_MAX_GAP};
use crate::telemetry::{ChannelModel, Station};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

/// Per-sonde replacement of selected sensor error fields.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorOverride {
    pub sonde: u8,
    pub temp_bias: Option<f64>,
    pub radiation_offset: Option<f64>,
    pub accel_bias: Option<f64>,
    pub drift_rate: Option<f64>,
}

impl SensorOverride {
    pub fn apply(&self, base: &SensorErrorModel) -> SensorErrorModel {
        let mut m = *base;
        if let Some(v) = self.temp_bias {
            m.temp_bias = v;
        }
        if let Some(v) = self.radiation_offset {
            m.radiation_offset = v;
        }
        if let Some(v) = self.accel_bias {
            m.accel_bias = v;
        }
        if let Some(v) = self.drift_rate {
            m.drift_rate = v;
        }
        m
    }
}

/// Ground reference thermometers logged at the launch site before release.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    /// Length of the logged window ending at release, s.
    pub window_s: f64,
    pub interval_s: f64,
    pub noise_sigma: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self { window_s: 300.0, interval_s: 1.0, noise_sigma: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StereoConfig {
    pub focal_px: f64,
    pub baseline_m: f64,
    /// Camera A position, ENU metres from the launch point.
    pub origin: [f64; 3],
    pub heading_deg: f64,
    pub elevation_deg: f64,
    pub pixel_sigma: f64,
    /// Tracked pair of sondes.
    pub sondes: [u8; 2],
    /// Recorded from release, s.
    pub duration_s: f64,
    pub frame_interval_s: f64,
}

impl Default for StereoConfig {
    fn default() -> Self {
        Self {
            focal_px: 1000.0,
            baseline_m: 16.0,
            origin: [-150.0, -100.0, 0.0],
            heading_deg: 55.0,
            elevation_deg: 15.0,
            pixel_sigma: 0.3,
            sondes: [1, 2],
            duration_s: 60.0,
            frame_interval_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub payloads_g: Vec<f64>,
    pub radii_m: Vec<f64>,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            payloads_g: vec![15.0, 17.5, 20.0, 22.5, 25.0],
            radii_m: (0..=10).map(|i| 0.18 + 0.01 * i as f64).map(|r| (r * 100.0).round() / 100.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub step_s: f64,
    pub max_gap: f64,
    pub calibrate: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self { step_s: CLUSTER_STEP, max_gap: DEFAULT_MAX_GAP, calibrate: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub comparison_bin_m: f64,
    pub drift_threshold_m: f64,
    pub bv_bin_m: f64,
    pub bv_t0: f64,
    pub detrend: bool,
    pub window: Window,
    pub q_cadence_s: f64,
    pub q_average_s: f64,
    pub h_distance: f64,
    pub h_temperature: f64,
    pub h_humidity: f64,
    pub h_velocity: f64,
    pub kalman_accel_sigma: f64,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            comparison_bin_m: 400.0,
            drift_threshold_m: 3000.0,
            bv_bin_m: 25.0,
            bv_t0: 281.0,
            detrend: true,
            window: Window::Rect,
            q_cadence_s: 10.0,
            q_average_s: 60.0,
            h_distance: 100.0,
            h_temperature: 1.0,
            h_humidity: 2.0,
            h_velocity: 0.75,
            kalman_accel_sigma: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Drives every random stream (wind, ambient, sensors, schedules,
    /// channel).
    pub seed: u64,
    pub sondes: u8,
    pub launch: GeodeticAnchor,
    /// Sondes start on a circle of this radius around the launch point, m.
    pub launch_spread_m: f64,
    /// Power-on to release, s.
    pub prelaunch_s: f64,
    /// Flight time after release, s.
    pub duration_s: f64,
    pub tick_s: f64,
    /// GPS time of week at power-on, s.
    pub start_tow_s: f64,
    pub out: PathBuf,
    pub balloon: BalloonSpec,
    pub dynamics: DynamicsConfig,
    pub sensor: SensorErrorModel,
    pub sensor_overrides: Vec<SensorOverride>,
    pub wind: WindField,
    pub ambient: AmbientModel,
    pub channel: ChannelModel,
    pub stations: Vec<Station>,
    pub reference: ReferenceConfig,
    pub stereo: StereoConfig,
    pub design: DesignConfig,
    pub ingest: IngestConfig,
    pub analyze: AnalyzeConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    pub drag_coefficient: f64,
    pub horizontal_tau: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        let d = Dynamics::default();
        Self { drag_coefficient: d.drag_coefficient, horizontal_tau: d.horizontal_tau }
    }
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            sondes: 10,
            launch: GeodeticAnchor::new(7.4787, 45.7839, 1700.0),
            launch_spread_m: 5.0,
            prelaunch_s: 600.0,
            duration_s: 1800.0,
            tick_s: 1.0,
            start_tow_s: 36_000.0,
            out: PathBuf::from("out"),
            balloon: BalloonSpec { radius: 0.21, ..BalloonSpec::default() },
            dynamics: DynamicsConfig::default(),
            sensor: SensorErrorModel::default(),
            sensor_overrides: Vec::new(),
            wind: WindField::default(),
            ambient: AmbientModel::default(),
            channel: ChannelModel::default(),
            stations: vec![
                Station { id: 1, position: [0.0, 0.0, 2.0] },
                Station { id: 2, position: [3000.0, 1500.0, 300.0] },
            ],
            reference: ReferenceConfig::default(),
            stereo: StereoConfig::default(),
            design: DesignConfig::default(),
            ingest: IngestConfig::default(),
            analyze: AnalyzeConfig::default(),
        }
    }
}

impl SimulationConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("serializable")
    }

    /// Set the master seed on every seeded component.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.sync_seeds();
        self
    }

    pub fn sync_seeds(&mut self) {
        self.wind.seed = self.seed;
        self.channel.seed = self.seed;
    }

    pub fn dynamics(&self) -> Dynamics {
        Dynamics {
            balloon: self.balloon,
            drag_coefficient: self.dynamics.drag_coefficient,
            horizontal_tau: self.dynamics.horizontal_tau,
        }
    }

    pub fn sensor_for(&self, sonde: u8) -> SensorErrorModel {
        self.sensor_overrides
            .iter()
            .filter(|o| o.sonde == sonde)
            .fold(self.sensor, |m, o| o.apply(&m))
    }

    /// Every violated constraint, one message per field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut check = |ok: bool, msg: &str| {
            if !ok {
                errs.push(msg.to_string());
            }
        };
        check(self.sondes >= 1, "sondes: must be >= 1");
        check(self.duration_s > 0.0 && self.duration_s.is_finite(), "duration_s: must be > 0");
        check(self.prelaunch_s >= 0.0 && self.prelaunch_s.is_finite(), "prelaunch_s: must be >= 0");
        check(self.tick_s > 0.0 && self.tick_s <= 5.0, "tick_s: must lie in (0, 5]");
        check(!self.stations.is_empty(), "stations: need at least one station");
        check(self.launch_spread_m >= 0.0, "launch_spread_m: must be >= 0");
        check(self.start_tow_s >= 0.0 && self.start_tow_s + self.prelaunch_s + self.duration_s < 604_800.0, "start_tow_s: flight must fit in one GPS week");
        check((-180.0..=180.0).contains(&self.launch.lon), "launch.lon: must lie in [-180, 180]");
        check((-90.0..=90.0).contains(&self.launch.lat), "launch.lat: must lie in [-90, 90]");
        let mut ids: Vec<u32> = self.stations.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        check(ids.windows(2).all(|w| w[0] != w[1]), "stations: duplicate station id");
        if let Err(e) = self.balloon.validate() {
            errs.push(format!("balloon: {e}"));
        }
        if let Err(e) = self.sensor.validate() {
            errs.push(format!("sensor: {e}"));
        }
        for o in &self.sensor_overrides {
            if o.sonde == 0 || o.sonde > self.sondes {
                errs.push(format!("sensor_overrides: sonde {} does not exist", o.sonde));
            }
        }
        if let Err(e) = self.channel.validate() {
            errs.push(e);
        }
        let w = &self.wind;
        if !(w.correlation_time > 0.0) {
            errs.push("wind.correlation_time: must be > 0".into());
        }
        if w.fluctuation_sigma.iter().any(|s| !(*s >= 0.0)) {
            errs.push("wind.fluctuation_sigma: must be >= 0".into());
        }
        if !(self.ambient.correlation_time > 0.0) {
            errs.push("ambient.correlation_time: must be > 0".into());
        }
        let r = &self.reference;
        if !(r.interval_s > 0.0 && r.window_s > 0.0 && r.window_s <= self.prelaunch_s) {
            errs.push("reference: need 0 < window_s <= prelaunch_s and interval_s > 0".into());
        }
        let s = &self.stereo;
        if !(s.focal_px > 0.0 && s.baseline_m > 0.0 && s.frame_interval_s > 0.0 && s.pixel_sigma >= 0.0) {
            errs.push("stereo: focal_px, baseline_m and frame_interval_s must be > 0".into());
        }
        if !(self.ingest.step_s > 0.0 && self.ingest.max_gap > 0.0) {
            errs.push("ingest: step_s and max_gap must be > 0".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        let c = SimulationConfig::from_toml("", Path::new("x.toml")).unwrap();
        assert_eq!(c, SimulationConfig::default());
        c.validate().unwrap();
        assert_eq!(c.sondes, 10);
        assert_eq!(c.stations.len(), 2);
        assert_eq!(c.launch.alt, 1700.0);
        assert_eq!(c.channel.period_range, [3.0, 4.0]);
    }

    #[test]
    fn analysis_defaults() {
        let a = AnalyzeConfig::default();
        assert_eq!((a.h_distance, a.h_temperature, a.h_humidity, a.h_velocity), (100.0, 1.0, 2.0, 0.75));
        assert_eq!((a.q_cadence_s, a.q_average_s), (10.0, 60.0));
        assert_eq!((a.bv_bin_m, a.bv_t0, a.comparison_bin_m), (25.0, 281.0, 400.0));
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = SimulationConfig::default();
        c.sensor_overrides.push(SensorOverride { sonde: 3, temp_bias: Some(1.2), ..Default::default() });
        let back = SimulationConfig::from_toml(&c.to_toml(), Path::new("x.toml")).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.sensor_for(3).temp_bias, 1.2);
        assert_eq!(back.sensor_for(4).temp_bias, 0.0);
    }

    #[test]
    fn lists_every_bad_field() {
        let text = "sondes = 0\ntick_s = 9.0\nstations = []\n";
        let c = SimulationConfig::from_toml(text, Path::new("x.toml")).unwrap();
        match c.validate() {
            Err(ConfigError::Invalid(errs)) => {
                assert_eq!(errs.len(), 3, "{errs:?}");
                assert!(errs[0].starts_with("sondes"));
                assert!(errs[1].starts_with("tick_s"));
                assert!(errs[2].starts_with("stations"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(SimulationConfig::from_toml("bogus = 1", Path::new("x.toml")), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn seed_reaches_components() {
        let c = SimulationConfig::default().with_seed(7);
        assert_eq!((c.wind.seed, c.channel.seed), (7, 7));
    }
}
