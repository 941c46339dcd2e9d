//! International Standard Atmosphere (troposphere) and a seeded synthetic
//! wind field.

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, Domain};

pub const SEA_LEVEL_TEMPERATURE: f64 = 288.15;
pub const SEA_LEVEL_PRESSURE: f64 = 101_325.0;
/// Nominal sea-level density. The ideal-gas value `p0 / (R T0)` is
/// 1.2249995 kg·m⁻³; both are accepted as "sea level" by the inverse.
pub const SEA_LEVEL_DENSITY: f64 = 1.225;
pub const LAPSE_RATE: f64 = 0.0065;
pub const R_SPECIFIC: f64 = 287.053;
pub const STANDARD_GRAVITY: f64 = 9.80665;
pub const TROPOPAUSE: f64 = 11_000.0;

#[derive(Debug, Error, PartialEq)]
pub enum AtmosphereError {
    #[error("altitude {0} m outside the modelled troposphere [0, 11000] m")]
    AltitudeOutOfRange(f64),
    #[error("density {0} kg/m3 outside the tropospheric range")]
    DensityOutOfRange(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtmosphereSample {
    pub altitude: f64,
    pub pressure: f64,
    pub temperature: f64,
    pub density: f64,
}

fn barometric_exponent() -> f64 {
    STANDARD_GRAVITY / (R_SPECIFIC * LAPSE_RATE)
}

pub fn isa_sample(altitude: f64) -> Result<AtmosphereSample, AtmosphereError> {
    if !(0.0..=TROPOPAUSE).contains(&altitude) {
        return Err(AtmosphereError::AltitudeOutOfRange(altitude));
    }
    let temperature = SEA_LEVEL_TEMPERATURE - LAPSE_RATE * altitude;
    let pressure =
        SEA_LEVEL_PRESSURE * (temperature / SEA_LEVEL_TEMPERATURE).powf(barometric_exponent());
    Ok(AtmosphereSample {
        altitude,
        pressure,
        temperature,
        density: pressure / (R_SPECIFIC * temperature),
    })
}

/// Closed-form inverse of the ISA density law.
pub fn isa_altitude_for_density(density: f64) -> Result<f64, AtmosphereError> {
    let top = isa_sample(TROPOPAUSE).expect("tropopause in range").density;
    if !(density > top && density <= SEA_LEVEL_DENSITY * (1.0 + 1e-12)) {
        return Err(AtmosphereError::DensityOutOfRange(density));
    }
    let rho0 = SEA_LEVEL_PRESSURE / (R_SPECIFIC * SEA_LEVEL_TEMPERATURE);
    let t = SEA_LEVEL_TEMPERATURE * (density / rho0).powf(1.0 / (barometric_exponent() - 1.0));
    Ok(((SEA_LEVEL_TEMPERATURE - t) / LAPSE_RATE).max(0.0))
}

/// Oscillation frequency (rad/s) of a constant-volume parcel displaced
/// vertically in the ISA density gradient: `ω² = -(g/ρ) dρ/dz`.
pub fn isopycnic_frequency(altitude: f64, gravity: f64) -> Result<f64, AtmosphereError> {
    let s = isa_sample(altitude)?;
    let n2 = gravity * (barometric_exponent() - 1.0) * LAPSE_RATE / s.temperature;
    Ok(n2.sqrt())
}

/// Piecewise-linear interpolation over `(x, y)` knots sorted by `x`.
/// Returns `None` outside the knot range.
pub(crate) fn interp_table(table: &[[f64; 2]], x: f64) -> Option<f64> {
    let first = table.first()?;
    let last = table.last()?;
    if x < first[0] || x > last[0] {
        return None;
    }
    if table.len() == 1 {
        return Some(first[1]);
    }
    let i = table.partition_point(|k| k[0] <= x).clamp(1, table.len() - 1);
    let (a, b) = (table[i - 1], table[i]);
    if b[0] == a[0] {
        return Some(b[1]);
    }
    Some(a[1] + (b[1] - a[1]) * (x - a[0]) / (b[0] - a[0]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindField {
    pub seed: u64,
    /// East, north, up; m/s.
    pub mean_wind: [f64; 3],
    /// Per-axis standard deviation of the fluctuation, m/s.
    pub fluctuation_sigma: [f64; 3],
    pub correlation_time: f64,
    /// `(altitude m, vertical wind m/s)` knots, ascending in altitude.
    /// Zero outside the table.
    pub updraft_profile: Vec<[f64; 2]>,
}

impl Default for WindField {
    fn default() -> Self {
        Self {
            seed: 0,
            mean_wind: [3.0, 1.0, 0.0],
            fluctuation_sigma: [1.0, 1.0, 0.3],
            correlation_time: 60.0,
            updraft_profile: Vec::new(),
        }
    }
}

impl WindField {
    pub fn calm() -> Self {
        Self {
            mean_wind: [0.0; 3],
            fluctuation_sigma: [0.0; 3],
            ..Self::default()
        }
    }

    pub fn updraft_at(&self, altitude: f64) -> f64 {
        interp_table(&self.updraft_profile, altitude).unwrap_or(0.0)
    }

    /// Independent realization of the fluctuations seen by one sonde.
    pub fn realization(&self, sonde_id: u64) -> WindRealization {
        let axes = [0usize, 1, 2].map(|axis| {
            OuTrack::new(
                self.fluctuation_sigma[axis],
                self.correlation_time,
                rng::stream(self.seed, Domain::Wind, sonde_id * 4 + axis as u64),
            )
        });
        WindRealization { field: self.clone(), axes }
    }
}

/// Stationary Ornstein–Uhlenbeck process with exact discretization:
/// `x' = a x + σ √(1 − a²) ξ`, `a = exp(-Δt/τ)`.
#[derive(Debug, Clone)]
pub struct OuProcess {
    sigma: f64,
    tau: f64,
    state: f64,
}

impl OuProcess {
    /// Starts from the stationary distribution.
    pub fn new<R: Rng>(sigma: f64, tau: f64, rng: &mut R) -> Self {
        let z: f64 = rng.sample(StandardNormal);
        Self { sigma, tau, state: sigma * z }
    }

    pub fn value(&self) -> f64 {
        self.state
    }

    pub fn advance<R: Rng>(&mut self, dt: f64, rng: &mut R) -> f64 {
        if self.sigma == 0.0 || self.tau <= 0.0 {
            self.state = 0.0;
            return 0.0;
        }
        let a = (-dt / self.tau).exp();
        let z: f64 = rng.sample(StandardNormal);
        self.state = a * self.state + self.sigma * (1.0 - a * a).sqrt() * z;
        self.state
    }
}

/// OU path sampled lazily on a fixed grid and linearly interpolated in
/// between. Grid values depend only on the stream, never on query order.
#[derive(Debug, Clone)]
pub struct OuTrack {
    step: f64,
    process: Option<OuProcess>,
    rng: ChaCha8Rng,
    values: Vec<f64>,
}

impl OuTrack {
    pub fn new(sigma: f64, tau: f64, mut rng: ChaCha8Rng) -> Self {
        let active = sigma > 0.0 && tau > 0.0;
        let step = if active { (tau / 50.0).min(1.0) } else { 1.0 };
        let process = active.then(|| OuProcess::new(sigma, tau, &mut rng));
        let values = vec![process.as_ref().map_or(0.0, OuProcess::value)];
        Self { step, process, rng, values }
    }

    pub fn at(&mut self, t: f64) -> f64 {
        let Some(process) = self.process.as_mut() else {
            return 0.0;
        };
        let t = t.max(0.0);
        let idx = (t / self.step).floor() as usize;
        while self.values.len() < idx + 2 {
            let v = process.advance(self.step, &mut self.rng);
            self.values.push(v);
        }
        let frac = t / self.step - idx as f64;
        let (a, b) = (self.values[idx], self.values[idx + 1]);
        a + (b - a) * frac
    }
}

/// The wind one sonde experiences: shared mean and updraft, private
/// fluctuations.
#[derive(Debug, Clone)]
pub struct WindRealization {
    field: WindField,
    axes: [OuTrack; 3],
}

impl WindRealization {
    /// `position` is (east m, north m, altitude m above sea level).
    pub fn wind_at(&mut self, position: &Vector3<f64>, time: f64) -> Vector3<f64> {
        let m = self.field.mean_wind;
        Vector3::new(
            m[0] + self.axes[0].at(time),
            m[1] + self.axes[1].at(time),
            m[2] + self.axes[2].at(time) + self.field.updraft_at(position.z),
        )
    }
}

/// One-shot query. Builds the sonde's realization and evaluates it; prefer
/// [`WindField::realization`] for repeated queries.
pub fn wind_at(field: &WindField, sonde_id: u64, position: &Vector3<f64>, time: f64) -> Vector3<f64> {
    field.realization(sonde_id).wind_at(position, time)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand evaluation of the troposphere law with the same constants.
    fn oracle_density(h: f64) -> f64 {
        let t = 288.15 - 0.0065 * h;
        let p = 101_325.0 * (t / 288.15_f64).powf(9.80665 / (287.053 * 0.0065));
        p / (287.053 * t)
    }

    #[test]
    fn sea_level_and_tropopause() {
        let s = isa_sample(0.0).unwrap();
        assert!((s.density - 1.225).abs() / 1.225 < 1e-6);
        let top = isa_sample(11_000.0).unwrap();
        assert!((top.temperature - 216.65).abs() < 1e-9);
    }

    #[test]
    fn density_at_1682_m() {
        let s = isa_sample(1682.0).unwrap();
        assert!((s.density - 1.0391).abs() < 5e-5, "{}", s.density);
        assert!((s.density - oracle_density(1682.0)).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_altitudes() {
        assert_eq!(isa_sample(-1.0), Err(AtmosphereError::AltitudeOutOfRange(-1.0)));
        assert!(isa_sample(11_000.1).is_err());
        assert!(isa_altitude_for_density(1.3).is_err());
        assert!(isa_altitude_for_density(0.3).is_err());
        let top = isa_sample(11_000.0).unwrap().density;
        assert!(isa_altitude_for_density(top).is_err());
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(isa_altitude_for_density(1.225).unwrap(), 0.0);
        let h = isa_altitude_for_density(1.0391).unwrap();
        assert!((h - 1682.0).abs() < 1.0, "{h}");
        for h in [500.0, 2500.0, 8000.0] {
            let rho = isa_sample(h).unwrap().density;
            let back = isa_altitude_for_density(rho).unwrap();
            assert!((back - h).abs() < 0.01);
            let again = isa_sample(back).unwrap().density;
            assert!(((again - rho) / rho).abs() < 1e-9);
        }
    }

    #[test]
    fn ideal_gas_and_monotonicity() {
        let mut prev = f64::INFINITY;
        for i in 0..=1100 {
            let s = isa_sample(i as f64 * 10.0).unwrap();
            assert!(s.density > 0.0 && s.pressure > 0.0 && s.temperature > 0.0);
            assert!(s.density < prev);
            prev = s.density;
            let resid = (s.pressure - s.density * R_SPECIFIC * s.temperature).abs() / s.pressure;
            assert!(resid < 1e-6);
        }
    }

    #[test]
    fn isopycnic_frequency_matches_finite_difference() {
        let h = 2000.0;
        let dz = 0.5;
        let rho = isa_sample(h).unwrap().density;
        let drho = (isa_sample(h + dz).unwrap().density - isa_sample(h - dz).unwrap().density) / (2.0 * dz);
        let fd = (-9.81 * drho / rho).sqrt();
        let w = isopycnic_frequency(h, 9.81).unwrap();
        assert!((w - fd).abs() / fd < 1e-6);
    }

    #[test]
    fn degenerate_noise_gives_mean_wind() {
        let field = WindField {
            mean_wind: [5.0, 0.0, 0.0],
            fluctuation_sigma: [0.0; 3],
            ..WindField::default()
        };
        for t in [0.0, 1.5, 1000.0] {
            let w = wind_at(&field, 3, &Vector3::new(10.0, -4.0, 2000.0), t);
            assert_eq!(w, Vector3::new(5.0, 0.0, 0.0));
        }
    }

    #[test]
    fn same_seed_same_wind() {
        let field = WindField { seed: 9, ..WindField::default() };
        let mut a = field.realization(2);
        let mut b = field.realization(2);
        let mut c = field.realization(3);
        let p = Vector3::new(0.0, 0.0, 1800.0);
        let mut differs = false;
        for k in 0..500 {
            let t = k as f64 * 0.7;
            assert_eq!(a.wind_at(&p, t), b.wind_at(&p, t));
            differs |= a.wind_at(&p, t) != c.wind_at(&p, t);
        }
        assert!(differs);
        // query order does not matter
        let mut d = field.realization(2);
        let late = d.wind_at(&p, 300.0);
        let early = d.wind_at(&p, 3.0);
        assert_eq!(late, a.wind_at(&p, 300.0));
        assert_eq!(early, a.wind_at(&p, 3.0));
    }

    #[test]
    fn ou_lag_autocorrelation() {
        let field = WindField {
            mean_wind: [0.0; 3],
            fluctuation_sigma: [1.0, 1.0, 1.0],
            correlation_time: 60.0,
            ..WindField::default()
        };
        let mut r = field.realization(0);
        let p = Vector3::zeros();
        let n = 100_000;
        let xs: Vec<f64> = (0..n + 60).map(|k| r.wind_at(&p, k as f64).x).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        let cov = (0..n).map(|k| (xs[k] - mean) * (xs[k + 60] - mean)).sum::<f64>() / n as f64;
        let rho = cov / var;
        assert!((rho - (-1.0f64).exp()).abs() < 0.1, "rho = {rho}");
    }

    #[test]
    fn ou_is_stationary() {
        let mut rng = rng::stream(5, Domain::Wind, 0);
        let sigma = 1.7;
        let mut p = OuProcess::new(sigma, 1.0, &mut rng);
        let n = 100_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x = p.advance(1.0, &mut rng);
            s += x;
            s2 += x * x;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((var - sigma * sigma).abs() / (sigma * sigma) < 0.1, "var = {var}");
    }

    #[test]
    fn updraft_table() {
        let field = WindField {
            updraft_profile: vec![[1700.0, 0.0], [2200.0, 1.5], [2600.0, 0.0]],
            ..WindField::calm()
        };
        assert_eq!(field.updraft_at(1000.0), 0.0);
        assert!((field.updraft_at(1950.0) - 0.75).abs() < 1e-12);
        assert!((field.updraft_at(2400.0) - 0.75).abs() < 1e-12);
        assert_eq!(field.updraft_at(3000.0), 0.0);
    }
}
