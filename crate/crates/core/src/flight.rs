//! Ground-truth flight of each sonde and synthesis of its noisy readings.
//!
//! Vertical motion follows the buoyancy–drag balance of a closed sphere,
//! horizontal motion relaxes toward the local wind, and the orientation
//! spins slowly about the local vertical. Observations add the error
//! characteristics measured on the real probes: constant bias with a
//! warm-up transient, radiation offset, altitude drift, humidity range
//! compression, and GNSS noise.

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atmosphere::{self, interp_table, OuTrack, WindRealization};
use crate::balloon::BalloonSpec;
use crate::geo::GeodeticAnchor;
use crate::rng::{self, Domain};
use crate::GRAVITY;

/// Local geomagnetic field in ENU, gauss (northern Italy, roughly).
pub const MAG_FIELD_ENU: [f64; 3] = [0.0, 0.23, -0.42];

#[derive(Debug, Error, PartialEq)]
pub enum FlightError {
    #[error("time step {0} s outside (0, 5]")]
    InvalidStep(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SondeTruthState {
    pub sonde_id: u8,
    pub time: f64,
    /// ENU metres relative to `anchor`.
    pub position: Vector3<f64>,
    pub anchor: GeodeticAnchor,
    pub velocity: Vector3<f64>,
    /// ENU kinematic acceleration over the last step.
    pub acceleration: Vector3<f64>,
    /// Body → local.
    pub orientation: UnitQuaternion<f64>,
    /// Yaw rate about the local vertical, rad/s.
    pub spin_rate: f64,
}

impl SondeTruthState {
    pub fn at_rest(sonde_id: u8, anchor: GeodeticAnchor, position: Vector3<f64>) -> Self {
        Self {
            sonde_id,
            time: 0.0,
            position,
            anchor,
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
            spin_rate: 0.0,
        }
    }

    pub fn altitude(&self) -> f64 {
        self.anchor.alt + self.position.z
    }

    /// (east, north, altitude) as used by the wind and ambient fields.
    pub fn field_position(&self) -> Vector3<f64> {
        Vector3::new(self.position.x, self.position.y, self.altitude())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Dynamics {
    pub balloon: BalloonSpec,
    pub drag_coefficient: f64,
    /// Horizontal relaxation time toward the wind, s.
    pub horizontal_tau: f64,
}

impl Default for Dynamics {
    fn default() -> Self {
        Self {
            balloon: BalloonSpec { radius: 0.21, ..BalloonSpec::default() },
            drag_coefficient: 0.47,
            horizontal_tau: 2.0,
        }
    }
}

fn air_density(altitude: f64) -> f64 {
    let h = altitude.clamp(0.0, atmosphere::TROPOPAUSE);
    atmosphere::isa_sample(h).expect("clamped into range").density
}

/// Advance one sonde by `dt` seconds with semi-implicit Euler.
pub fn step_truth(
    state: &SondeTruthState,
    wind: &mut WindRealization,
    dynamics: &Dynamics,
    dt: f64,
) -> Result<SondeTruthState, FlightError> {
    if !(dt > 0.0 && dt <= 5.0) {
        return Err(FlightError::InvalidStep(dt));
    }
    let air = wind.wind_at(&state.field_position(), state.time);
    let rho = air_density(state.altitude());
    let balloon = &dynamics.balloon;
    let mass = balloon.total_mass();

    // vertical: buoyancy explicit, quadratic drag on the air-relative
    // velocity implicit
    let buoyancy = GRAVITY * (rho * balloon.lift_volume() - mass) / mass;
    let k = 0.5 * rho * dynamics.drag_coefficient * balloon.cross_section() / mass;
    let rel = state.velocity.z - air.z;
    let rel_new = (rel + dt * buoyancy) / (1.0 + dt * k * rel.abs());
    let w = rel_new + air.z;

    // horizontal: exact first-order relaxation toward the wind
    let decay = if dynamics.horizontal_tau > 0.0 { (-dt / dynamics.horizontal_tau).exp() } else { 0.0 };
    let vx = air.x + (state.velocity.x - air.x) * decay;
    let vy = air.y + (state.velocity.y - air.y) * decay;

    let velocity = Vector3::new(vx, vy, w);
    let spin = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), state.spin_rate * dt);
    Ok(SondeTruthState {
        time: state.time + dt,
        position: state.position + velocity * dt,
        acceleration: (velocity - state.velocity) / dt,
        velocity,
        orientation: spin * state.orientation,
        ..state.clone()
    })
}

/// Ambient air the sonde is immersed in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ambient {
    pub pressure: f64,
    pub temperature: f64,
    pub humidity: f64,
    pub sun_exposed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmbientModel {
    /// `(altitude m, K)` anomaly added to the ISA temperature.
    pub temperature_anomaly: Vec<[f64; 2]>,
    pub temperature_sigma: f64,
    /// `(altitude m, %RH)` mean humidity profile.
    pub humidity_profile: Vec<[f64; 2]>,
    pub humidity_sigma: f64,
    pub correlation_time: f64,
    pub sun_exposed: bool,
}

impl Default for AmbientModel {
    fn default() -> Self {
        Self {
            temperature_anomaly: vec![[0.0, 0.0], [2000.0, 0.0], [2150.0, 1.5], [2500.0, 0.0]],
            temperature_sigma: 0.3,
            humidity_profile: vec![[0.0, 75.0], [1700.0, 60.0], [3000.0, 40.0], [6000.0, 20.0]],
            humidity_sigma: 3.0,
            correlation_time: 60.0,
            sun_exposed: true,
        }
    }
}

impl AmbientModel {
    pub fn quiet() -> Self {
        Self { temperature_sigma: 0.0, humidity_sigma: 0.0, ..Self::default() }
    }

    /// Mean (fluctuation-free) ambient state at an altitude.
    pub fn mean_at(&self, altitude: f64) -> Ambient {
        let isa = atmosphere::isa_sample(altitude.clamp(0.0, atmosphere::TROPOPAUSE))
            .expect("clamped into range");
        let anomaly = interp_table(&self.temperature_anomaly, altitude).unwrap_or(0.0);
        let humidity = interp_table(&self.humidity_profile, altitude)
            .or_else(|| self.humidity_profile.last().map(|k| k[1]))
            .unwrap_or(50.0);
        Ambient {
            pressure: isa.pressure,
            temperature: isa.temperature + anomaly,
            humidity,
            sun_exposed: self.sun_exposed,
        }
    }

    pub fn realization(&self, seed: u64, sonde_id: u64) -> AmbientRealization {
        AmbientRealization {
            model: self.clone(),
            temperature: OuTrack::new(
                self.temperature_sigma,
                self.correlation_time,
                rng::stream(seed, Domain::Ambient, sonde_id * 2),
            ),
            humidity: OuTrack::new(
                self.humidity_sigma,
                self.correlation_time,
                rng::stream(seed, Domain::Ambient, sonde_id * 2 + 1),
            ),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AmbientRealization {
    model: AmbientModel,
    temperature: OuTrack,
    humidity: OuTrack,
}

impl AmbientRealization {
    pub fn at(&mut self, altitude: f64, time: f64) -> Ambient {
        let mut a = self.model.mean_at(altitude);
        a.temperature += self.temperature.at(time);
        a.humidity = (a.humidity + self.humidity.at(time)).clamp(0.0, 100.0);
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorErrorModel {
    /// Steady temperature bias μ, K.
    pub temp_bias: f64,
    pub temp_noise_sigma: f64,
    /// Added to the temperature when the sonde is in the sun, K.
    pub radiation_offset: f64,
    pub drift_threshold_altitude: f64,
    /// K per metre above the threshold.
    pub drift_rate: f64,
    /// Humidity compression `pivot + gain (RH − pivot)`, `0 < gain ≤ 1`.
    pub rh_gain: f64,
    pub rh_pivot: f64,
    pub rh_noise_sigma: f64,
    pub pressure_noise_sigma: f64,
    pub gnss_horizontal_sigma: f64,
    pub gnss_vertical_sigma: f64,
    pub gnss_speed_sigma: f64,
    /// Accelerometer bias on every axis, mg.
    pub accel_bias: f64,
    /// Temperature excess right after power-on, decaying with `warmup_tau`.
    pub warmup_excess: f64,
    pub warmup_tau: f64,
}

impl Default for SensorErrorModel {
    fn default() -> Self {
        Self {
            temp_bias: 0.0,
            temp_noise_sigma: 0.1,
            radiation_offset: 1.28,
            drift_threshold_altitude: 3000.0,
            drift_rate: 5e-4,
            rh_gain: 0.9,
            rh_pivot: 50.0,
            rh_noise_sigma: 0.5,
            pressure_noise_sigma: 10.0,
            gnss_horizontal_sigma: 3.5,
            gnss_vertical_sigma: 7.0,
            gnss_speed_sigma: 0.4,
            accel_bias: 5.0,
            warmup_excess: 1.5,
            warmup_tau: 120.0,
        }
    }
}

impl SensorErrorModel {
    /// Perfect instrument.
    pub fn ideal() -> Self {
        Self {
            temp_bias: 0.0,
            temp_noise_sigma: 0.0,
            radiation_offset: 0.0,
            drift_threshold_altitude: 3000.0,
            drift_rate: 0.0,
            rh_gain: 1.0,
            rh_pivot: 50.0,
            rh_noise_sigma: 0.0,
            pressure_noise_sigma: 0.0,
            gnss_horizontal_sigma: 0.0,
            gnss_vertical_sigma: 0.0,
            gnss_speed_sigma: 0.0,
            accel_bias: 0.0,
            warmup_excess: 0.0,
            warmup_tau: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let sigmas = [
            ("temp_noise_sigma", self.temp_noise_sigma),
            ("rh_noise_sigma", self.rh_noise_sigma),
            ("pressure_noise_sigma", self.pressure_noise_sigma),
            ("gnss_horizontal_sigma", self.gnss_horizontal_sigma),
            ("gnss_vertical_sigma", self.gnss_vertical_sigma),
            ("gnss_speed_sigma", self.gnss_speed_sigma),
            ("warmup_tau", self.warmup_tau),
        ];
        for (name, v) in sigmas {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{name} must be finite and >= 0"));
            }
        }
        if !(self.rh_gain > 0.0 && self.rh_gain <= 1.0) {
            return Err("rh_gain must lie in (0, 1]".into());
        }
        Ok(())
    }

    /// Deterministic part of the temperature error at a given state.
    pub fn temperature_error(&self, altitude: f64, elapsed: f64, sun_exposed: bool) -> f64 {
        let mut e = self.temp_bias;
        if self.warmup_tau > 0.0 {
            e += self.warmup_excess * (-elapsed / self.warmup_tau).exp();
        }
        if sun_exposed {
            e += self.radiation_offset;
        }
        if altitude > self.drift_threshold_altitude {
            e += self.drift_rate * (altitude - self.drift_threshold_altitude);
        }
        e
    }
}

/// One instrument record, in the units of the telemetry packet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSample {
    pub sonde_id: u8,
    /// GNSS time of week, s.
    pub time: f64,
    /// Pa
    pub pressure: f64,
    /// K
    pub temperature: f64,
    /// %RH, within [0, 100]
    pub humidity: f64,
    pub lon: f64,
    pub lat: f64,
    pub altitude: f64,
    /// North, east, down; m/s.
    pub vel_ned: [f64; 3],
    /// g
    pub accel_body: [f64; 3],
    /// gauss
    pub mag_body: [f64; 3],
    /// w, x, y, z (body → local)
    pub orientation: [f64; 4],
}

fn gauss<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    sigma * z
}

/// Instrument reading of a truth state. `time_offset` maps simulation time
/// onto GNSS time of week.
pub fn observe<R: Rng>(
    state: &SondeTruthState,
    ambient: &Ambient,
    err: &SensorErrorModel,
    elapsed_since_poweron: f64,
    time_offset: f64,
    rng: &mut R,
) -> SensorSample {
    let altitude = state.altitude();
    let temperature = ambient.temperature
        + err.temperature_error(altitude, elapsed_since_poweron.max(0.0), ambient.sun_exposed)
        + gauss(rng, err.temp_noise_sigma);
    let humidity = (err.rh_pivot + err.rh_gain * (ambient.humidity - err.rh_pivot)
        + gauss(rng, err.rh_noise_sigma))
    .clamp(0.0, 100.0);
    let pressure = ambient.pressure + gauss(rng, err.pressure_noise_sigma);

    let noisy = Vector3::new(
        state.position.x + gauss(rng, err.gnss_horizontal_sigma),
        state.position.y + gauss(rng, err.gnss_horizontal_sigma),
        state.position.z + gauss(rng, err.gnss_vertical_sigma),
    );
    let (lon, lat, alt) = state.anchor.to_geodetic(&noisy);
    let v = state.velocity;
    let vel_ned = [
        v.y + gauss(rng, err.gnss_speed_sigma),
        v.x + gauss(rng, err.gnss_speed_sigma),
        -v.z + gauss(rng, err.gnss_speed_sigma),
    ];

    let to_body = state.orientation.inverse();
    let specific = to_body * ((state.acceleration + Vector3::new(0.0, 0.0, GRAVITY)) / GRAVITY);
    let bias = err.accel_bias * 1e-3;
    let mag = to_body * Vector3::from(MAG_FIELD_ENU);
    let q = state.orientation.quaternion();

    SensorSample {
        sonde_id: state.sonde_id,
        time: state.time + time_offset,
        pressure,
        temperature,
        humidity,
        lon,
        lat,
        altitude: alt,
        vel_ned,
        accel_body: [specific.x + bias, specific.y + bias, specific.z + bias],
        mag_body: [mag.x, mag.y, mag.z],
        orientation: [q.w, q.i, q.j, q.k],
    }
}

/// Everything needed to fly one sonde from power-on.
#[derive(Debug, Clone)]
pub struct SondeFlight {
    pub seed: u64,
    pub sonde_id: u8,
    pub anchor: GeodeticAnchor,
    /// Launch offset from the anchor, ENU metres.
    pub launch_offset: Vector3<f64>,
    /// Power-on to release, s. The sonde is held at the launch point.
    pub prelaunch: f64,
    pub duration: f64,
    pub tick: f64,
    pub time_offset: f64,
    pub dynamics: Dynamics,
    pub errors: SensorErrorModel,
}

#[derive(Debug, Clone)]
pub struct SondeRun {
    /// Truth at every tick, starting at power-on.
    pub truth: Vec<(SondeTruthState, Ambient)>,
    /// Observations at the requested times.
    pub samples: Vec<SensorSample>,
}

impl SondeFlight {
    /// Fly the sonde and sample it at `observe_at` (sorted, seconds since
    /// power-on). Wind and ambient realizations are per-sonde streams.
    pub fn run(
        &self,
        wind: &crate::atmosphere::WindField,
        ambient: &AmbientModel,
        observe_at: &[f64],
    ) -> Result<SondeRun, FlightError> {
        if !(self.tick > 0.0 && self.tick <= 5.0) {
            return Err(FlightError::InvalidStep(self.tick));
        }
        let id = u64::from(self.sonde_id);
        let mut wind = wind.realization(id);
        let mut air = ambient.realization(self.seed, id);
        let mut noise = rng::stream(self.seed, Domain::Sensor, id);
        let mut spin_rng = rng::stream(self.seed, Domain::Spin, id);

        let mut state = SondeTruthState::at_rest(self.sonde_id, self.anchor, self.launch_offset);
        state.spin_rate = spin_rng.gen_range(-0.3..0.3);
        let end = self.prelaunch + self.duration;

        let mut truth = Vec::new();
        let mut samples = Vec::with_capacity(observe_at.len());
        let mut obs = observe_at.iter().copied().filter(|&t| t >= 0.0 && t <= end).peekable();
        let mut next_tick = 0.0;
        let mut k = 0u64;
        loop {
            while let Some(&t) = obs.peek() {
                if t > state.time {
                    break;
                }
                obs.next();
                let amb = air.at(state.altitude(), state.time);
                samples.push(observe(&state, &amb, &self.errors, state.time, self.time_offset, &mut noise));
            }
            if state.time >= next_tick {
                let amb = air.at(state.altitude(), state.time);
                truth.push((state.clone(), amb));
                k += 1;
                next_tick = k as f64 * self.tick;
            }
            if state.time >= end {
                break;
            }
            let target = obs.peek().map_or(next_tick, |&t| t.min(next_tick)).min(end);
            let dt = target - state.time;
            if dt <= 0.0 {
                break;
            }
            state = if target <= self.prelaunch {
                // held at the launch point
                SondeTruthState { time: target, ..state }
            } else {
                step_truth(&state, &mut wind, &self.dynamics, dt)?
            };
            state.time = target;
        }
        Ok(SondeRun { truth, samples })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atmosphere::WindField;
    use crate::balloon;

    fn anchor() -> GeodeticAnchor {
        GeodeticAnchor::new(7.47, 45.72, 0.0)
    }

    fn frictionless() -> Dynamics {
        Dynamics { drag_coefficient: 0.0, ..Dynamics::default() }
    }

    #[test]
    fn rejects_bad_steps() {
        let s = SondeTruthState::at_rest(0, anchor(), Vector3::zeros());
        let mut w = WindField::calm().realization(0);
        let d = Dynamics::default();
        assert_eq!(step_truth(&s, &mut w, &d, 0.0), Err(FlightError::InvalidStep(0.0)));
        assert!(step_truth(&s, &mut w, &d, 5.5).is_err());
        assert!(step_truth(&s, &mut w, &d, 5.0).is_ok());
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let d = Dynamics::default();
        let h = balloon::attainable_altitude(&d.balloon).unwrap();
        let mut s = SondeTruthState::at_rest(0, anchor(), Vector3::new(0.0, 0.0, h));
        let mut w = WindField::calm().realization(0);
        for _ in 0..600 {
            s = step_truth(&s, &mut w, &d, 1.0).unwrap();
        }
        assert!((s.position - Vector3::new(0.0, 0.0, h)).norm() < 1e-3, "{}", s.position);
    }

    #[test]
    fn rises_to_equilibrium_with_decaying_overshoot() {
        let d = Dynamics::default();
        let h_eq = balloon::attainable_altitude(&d.balloon).unwrap();
        let mut s = SondeTruthState::at_rest(0, anchor(), Vector3::new(0.0, 0.0, h_eq - 800.0));
        let mut w = WindField::calm().realization(0);
        let mut errs = Vec::new();
        for _ in 0..7200 {
            s = step_truth(&s, &mut w, &d, 1.0).unwrap();
            errs.push(s.altitude() - h_eq);
        }
        // peaks of |error| between sign changes
        let mut peaks = Vec::new();
        let mut cur: f64 = 0.0;
        for pair in errs.windows(2) {
            cur = cur.max(pair[1].abs());
            if pair[0].signum() != pair[1].signum() {
                peaks.push(cur);
                cur = 0.0;
            }
        }
        peaks.push(cur);
        assert!(peaks[0] > 700.0);
        for p in peaks.windows(2) {
            assert!(p[1] < p[0], "overshoot must decay: {peaks:?}");
        }
        assert!(errs.last().unwrap().abs() < 1.0);
    }

    #[test]
    fn small_oscillation_at_isopycnic_frequency() {
        let d = frictionless();
        let h_eq = balloon::attainable_altitude(&d.balloon).unwrap();
        let mut s = SondeTruthState::at_rest(0, anchor(), Vector3::new(0.0, 0.0, h_eq + 5.0));
        let mut w = WindField::calm().realization(0);
        let dt = 0.5;
        let mut crossings = Vec::new();
        let mut prev = s.altitude() - h_eq;
        while crossings.len() < 9 {
            s = step_truth(&s, &mut w, &d, dt).unwrap();
            let e = s.altitude() - h_eq;
            if prev > 0.0 && e <= 0.0 || prev < 0.0 && e >= 0.0 {
                // linear interpolation of the crossing time
                crossings.push(s.time - dt * e / (e - prev));
            }
            prev = e;
        }
        let period = 2.0 * (crossings[8] - crossings[0]) / 8.0;
        // linearized buoyancy ODE: ω² = −(g/ρ) dρ/dz
        let omega = atmosphere::isopycnic_frequency(h_eq, GRAVITY).unwrap();
        let expected = 2.0 * std::f64::consts::PI / omega;
        assert!((period - expected).abs() / expected < 0.1, "{period} vs {expected}");
    }

    #[test]
    fn horizontal_motion_follows_wind() {
        let d = Dynamics::default();
        let h_eq = balloon::attainable_altitude(&d.balloon).unwrap();
        let field = WindField { mean_wind: [4.0, -2.0, 0.0], ..WindField::calm() };
        let mut w = field.realization(0);
        let mut s = SondeTruthState::at_rest(0, anchor(), Vector3::new(0.0, 0.0, h_eq));
        for _ in 0..60 {
            s = step_truth(&s, &mut w, &d, 1.0).unwrap();
        }
        assert!((s.velocity.x - 4.0).abs() < 1e-6);
        assert!((s.velocity.y + 2.0).abs() < 1e-6);
    }

    #[test]
    fn ideal_observation_is_truth() {
        let mut s = SondeTruthState::at_rest(4, anchor(), Vector3::new(120.0, -40.0, 1500.0));
        s.velocity = Vector3::new(1.0, 2.0, 0.5);
        s.orientation = UnitQuaternion::from_euler_angles(0.1, -0.2, 1.0);
        let amb = Ambient { pressure: 85_000.0, temperature: 281.0, humidity: 63.0, sun_exposed: true };
        let mut r = rng::stream(1, Domain::Sensor, 0);
        let o = observe(&s, &amb, &SensorErrorModel::ideal(), 30.0, 0.0, &mut r);
        assert_eq!(o.temperature, 281.0);
        assert_eq!(o.humidity, 63.0);
        assert_eq!(o.pressure, 85_000.0);
        let (lon, lat, alt) = s.anchor.to_geodetic(&s.position);
        assert_eq!((o.lon, o.lat, o.altitude), (lon, lat, alt));
        assert_eq!(o.vel_ned, [2.0, 1.0, -0.5]);
        // at rest the accelerometer reads the reaction to gravity
        let up = s.orientation.inverse() * Vector3::z();
        for i in 0..3 {
            assert!((o.accel_body[i] - up[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn radiation_offset_on_shielded_truth() {
        let s = SondeTruthState::at_rest(0, anchor(), Vector3::zeros());
        let amb = Ambient { pressure: 90_000.0, temperature: 281.0, humidity: 50.0, sun_exposed: true };
        let err = SensorErrorModel { radiation_offset: 1.28, ..SensorErrorModel::ideal() };
        let mut r = rng::stream(1, Domain::Sensor, 0);
        let o = observe(&s, &amb, &err, 0.0, 0.0, &mut r);
        assert!((o.temperature - 282.28).abs() < 1e-12);
        let shade = Ambient { sun_exposed: false, ..amb };
        assert_eq!(observe(&s, &shade, &err, 0.0, 0.0, &mut r).temperature, 281.0);
    }

    #[test]
    fn warmup_and_drift_terms() {
        let err = SensorErrorModel {
            temp_bias: 0.5,
            warmup_excess: 2.0,
            warmup_tau: 120.0,
            drift_rate: 1e-3,
            drift_threshold_altitude: 3000.0,
            ..SensorErrorModel::ideal()
        };
        assert!((err.temperature_error(1000.0, 0.0, false) - 2.5).abs() < 1e-12);
        assert!((err.temperature_error(1000.0, 1e6, false) - 0.5).abs() < 1e-12);
        assert!((err.temperature_error(4000.0, 1e6, false) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn humidity_stays_in_range() {
        let s = SondeTruthState::at_rest(0, anchor(), Vector3::zeros());
        let err = SensorErrorModel { rh_noise_sigma: 30.0, ..SensorErrorModel::default() };
        let mut r = rng::stream(3, Domain::Sensor, 0);
        for rh in [0.0, 2.0, 50.0, 98.0, 100.0] {
            let amb = Ambient { pressure: 90_000.0, temperature: 280.0, humidity: rh, sun_exposed: false };
            for _ in 0..200 {
                let o = observe(&s, &amb, &err, 0.0, 0.0, &mut r);
                assert!((0.0..=100.0).contains(&o.humidity));
            }
        }
        // compression pulls extremes toward the pivot
        let err = SensorErrorModel { rh_gain: 0.8, rh_pivot: 50.0, ..SensorErrorModel::ideal() };
        let high = Ambient { pressure: 9e4, temperature: 280.0, humidity: 90.0, sun_exposed: false };
        assert!((observe(&s, &high, &err, 0.0, 0.0, &mut r).humidity - 82.0).abs() < 1e-12);
    }

    #[test]
    fn cluster_flight_is_reproducible() {
        let flight = SondeFlight {
            seed: 11,
            sonde_id: 2,
            anchor: GeodeticAnchor::new(7.47, 45.72, 1700.0),
            launch_offset: Vector3::new(1.0, 0.0, 0.0),
            prelaunch: 60.0,
            duration: 300.0,
            tick: 1.0,
            time_offset: 0.0,
            dynamics: Dynamics::default(),
            errors: SensorErrorModel::default(),
        };
        let obs: Vec<f64> = (0..100).map(|k| 0.3 + 3.5 * k as f64).collect();
        let a = flight.run(&WindField::default(), &AmbientModel::default(), &obs).unwrap();
        let b = flight.run(&WindField::default(), &AmbientModel::default(), &obs).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.truth.len(), 361);
        assert_eq!(a.samples.len(), 100);
        // held during pre-launch
        assert_eq!(a.truth[59].0.position, Vector3::new(1.0, 0.0, 0.0));
        assert!(a.truth[360].0.position.z > 50.0);
        for (s, t) in a.samples.iter().zip(&obs) {
            assert!((s.time - t).abs() < 1e-9);
        }
    }
}
