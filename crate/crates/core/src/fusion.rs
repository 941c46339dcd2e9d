//! Orientation (gradient-descent AHRS), frame rotation of the
//! accelerometer, and a position/velocity Kalman filter that coasts on the
//! IMU through GNSS outages.

use nalgebra::{Matrix3, Matrix3x4, Matrix6, Quaternion, UnitQuaternion, Vector3, Vector4, Vector6};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flight::SensorSample;
use crate::geo::GeodeticAnchor;
use crate::rng::{self, Domain};
use crate::GRAVITY;

pub const DEFAULT_BETA: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("measurement noise covariance is not positive definite")]
    NoiseNotPositiveDefinite,
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("quaternion has zero norm")]
    ZeroQuaternion,
}

/// Body to local (ENU) rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orientation(pub UnitQuaternion<f64>);

impl Orientation {
    pub fn identity() -> Self {
        Self(UnitQuaternion::identity())
    }

    pub fn from_wxyz(q: [f64; 4]) -> Result<Self, FusionError> {
        let raw = Quaternion::new(q[0], q[1], q[2], q[3]);
        if !(raw.norm() > 0.0) {
            return Err(FusionError::ZeroQuaternion);
        }
        Ok(Self(UnitQuaternion::from_quaternion(raw)))
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn to_local(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    pub fn angle_to(&self, other: &Orientation) -> f64 {
        self.0.angle_to(&other.0)
    }
}

impl Default for Orientation {
    fn default() -> Self {
        Self::identity()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AhrsStep {
    pub orientation: Orientation,
    /// Accelerometer read zero, only the gyro was integrated.
    pub gyro_only: bool,
}

/// Objective `R(q)ᵀ d − s` and its Jacobian with respect to `(w, x, y, z)`.
fn objective(q: &Quaternion<f64>, d: &Vector3<f64>, s: &Vector3<f64>) -> (Vector3<f64>, Matrix3x4<f64>) {
    let (q1, q2, q3, q4) = (q.w, q.i, q.j, q.k);
    let (dx, dy, dz) = (d.x, d.y, d.z);
    let f = Vector3::new(
        2.0 * dx * (0.5 - q3 * q3 - q4 * q4) + 2.0 * dy * (q1 * q4 + q2 * q3) + 2.0 * dz * (q2 * q4 - q1 * q3) - s.x,
        2.0 * dx * (q2 * q3 - q1 * q4) + 2.0 * dy * (0.5 - q2 * q2 - q4 * q4) + 2.0 * dz * (q1 * q2 + q3 * q4) - s.y,
        2.0 * dx * (q1 * q3 + q2 * q4) + 2.0 * dy * (q3 * q4 - q1 * q2) + 2.0 * dz * (0.5 - q2 * q2 - q3 * q3) - s.z,
    );
    #[rustfmt::skip]
    let j = Matrix3x4::new(
        2.0 * dy * q4 - 2.0 * dz * q3,
        2.0 * dy * q3 + 2.0 * dz * q4,
        -4.0 * dx * q3 + 2.0 * dy * q2 - 2.0 * dz * q1,
        -4.0 * dx * q4 + 2.0 * dy * q1 + 2.0 * dz * q2,

        -2.0 * dx * q4 + 2.0 * dz * q2,
        2.0 * dx * q3 - 4.0 * dy * q2 + 2.0 * dz * q1,
        2.0 * dx * q2 + 2.0 * dz * q4,
        -2.0 * dx * q1 - 4.0 * dy * q4 + 2.0 * dz * q3,

        2.0 * dx * q3 - 2.0 * dy * q2,
        2.0 * dx * q4 - 2.0 * dy * q1 - 4.0 * dz * q2,
        2.0 * dx * q1 + 2.0 * dy * q4 - 4.0 * dz * q3,
        2.0 * dx * q2 + 2.0 * dy * q3,
    );
    (f, j)
}

/// One filter step. The gyro is integrated exactly over `dt`, then the
/// quaternion moves `β·dt` down the normalized gradient of the gravity and
/// magnetic alignment error. A zero magnetometer skips the heading term.
pub fn ahrs_update(
    q: Orientation,
    gyro: [f64; 3],
    accel: [f64; 3],
    mag: [f64; 3],
    dt: f64,
    beta: f64,
) -> Result<AhrsStep, FusionError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(FusionError::InvalidStep(dt));
    }
    let omega = Vector3::from(gyro);
    let rotated = q.0 * UnitQuaternion::from_scaled_axis(omega * dt);
    let a = Vector3::from(accel);
    if a.norm() == 0.0 {
        return Ok(AhrsStep { orientation: Orientation(rotated), gyro_only: true });
    }
    let qq = *q.0.quaternion();
    let (fa, ja) = objective(&qq, &Vector3::z(), &a.normalize());
    let mut grad: Vector4<f64> = ja.transpose() * fa;
    let m = Vector3::from(mag);
    if m.norm() > 0.0 {
        let m = m.normalize();
        let h = q.0 * m;
        let b = Vector3::new(0.0, h.x.hypot(h.y), h.z);
        let (fm, jm) = objective(&qq, &b, &m);
        grad += jm.transpose() * fm;
    }
    let mut next = *rotated.quaternion();
    let n = grad.norm();
    if n > 0.0 {
        let g = grad / n * (beta * dt);
        next -= Quaternion::new(g[0], g[1], g[2], g[3]);
    }
    Ok(AhrsStep { orientation: Orientation(UnitQuaternion::from_quaternion(next)), gyro_only: false })
}

/// Stateful wrapper around [`ahrs_update`].
#[derive(Debug, Clone)]
pub struct Ahrs {
    pub orientation: Orientation,
    pub beta: f64,
    pub gyro_only_steps: u64,
}

impl Ahrs {
    pub fn new(beta: f64) -> Self {
        Self { orientation: Orientation::identity(), beta, gyro_only_steps: 0 }
    }

    pub fn update(&mut self, gyro: [f64; 3], accel: [f64; 3], mag: [f64; 3], dt: f64) -> Result<AhrsStep, FusionError> {
        let step = ahrs_update(self.orientation, gyro, accel, mag, dt, self.beta)?;
        self.orientation = step.orientation;
        self.gyro_only_steps += step.gyro_only as u64;
        Ok(step)
    }
}

/// Accelerometer reading (g, body) to local acceleration without gravity,
/// m/s².
pub fn body_to_local(accel_body: [f64; 3], q: &Orientation) -> Vector3<f64> {
    q.to_local(&Vector3::from(accel_body)) * GRAVITY - Vector3::new(0.0, 0.0, GRAVITY)
}

// ---------------------------------------------------------------------------
// Kalman filter

#[derive(Debug, Clone, PartialEq)]
pub struct NavState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub covariance: Matrix6<f64>,
}

impl NavState {
    pub fn new(position: Vector3<f64>, velocity: Vector3<f64>, covariance: Matrix6<f64>) -> Self {
        Self { position, velocity, covariance }
    }

    pub fn vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.position.x,
            self.position.y,
            self.position.z,
            self.velocity.x,
            self.velocity.y,
            self.velocity.z,
        )
    }

    fn set_vector(&mut self, x: &Vector6<f64>) {
        self.position = x.fixed_rows::<3>(0).into();
        self.velocity = x.fixed_rows::<3>(3).into();
    }

    /// Smallest covariance eigenvalue.
    pub fn min_eigenvalue(&self) -> f64 {
        self.covariance.symmetric_eigenvalues().min()
    }
}

/// GNSS position/velocity fix in the local frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GnssFix {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

impl GnssFix {
    fn vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.position.x,
            self.position.y,
            self.position.z,
            self.velocity.x,
            self.velocity.y,
            self.velocity.z,
        )
    }
}

/// Diagonal fix covariance from per-axis sigmas.
pub fn measurement_noise(horizontal: f64, vertical: f64, speed: f64) -> Matrix6<f64> {
    let (h, v, s) = (horizontal * horizontal, vertical * vertical, speed * speed);
    Matrix6::from_diagonal(&Vector6::new(h, h, v, s, s, s))
}

fn symmetrize(m: &Matrix6<f64>) -> Matrix6<f64> {
    (m + m.transpose()) * 0.5
}

/// Constant-acceleration prediction. `accel_sigma` is the white
/// acceleration noise per step, m/s².
pub fn kalman_predict(s: &NavState, accel_local: &Vector3<f64>, dt: f64, accel_sigma: f64) -> Result<NavState, FusionError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(FusionError::InvalidStep(dt));
    }
    let mut f = Matrix6::identity();
    f.fixed_view_mut::<3, 3>(0, 3).copy_from(&(Matrix3::identity() * dt));
    let mut g = nalgebra::Matrix6x3::zeros();
    g.fixed_view_mut::<3, 3>(0, 0).copy_from(&(Matrix3::identity() * (0.5 * dt * dt)));
    g.fixed_view_mut::<3, 3>(3, 0).copy_from(&(Matrix3::identity() * dt));
    let q = g * g.transpose() * (accel_sigma * accel_sigma);
    Ok(NavState {
        position: s.position + s.velocity * dt + accel_local * (0.5 * dt * dt),
        velocity: s.velocity + accel_local * dt,
        covariance: symmetrize(&(f * s.covariance * f.transpose() + q)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Innovation {
    pub residual: Vector6<f64>,
    pub covariance: Matrix6<f64>,
}

/// Linear update with a direct position/velocity measurement, Joseph form.
pub fn kalman_update(s: &NavState, fix: &GnssFix, noise: &Matrix6<f64>) -> Result<(NavState, Innovation), FusionError> {
    if noise.cholesky().is_none() || (noise - noise.transpose()).abs().max() > 1e-12 * noise.abs().max() {
        return Err(FusionError::NoiseNotPositiveDefinite);
    }
    let p = &s.covariance;
    let innov_cov = symmetrize(&(p + noise));
    let chol = innov_cov.cholesky().ok_or(FusionError::SingularInnovation)?;
    let gain = chol.solve(p).transpose(); // P S⁻¹, both symmetric
    let residual = fix.vector() - s.vector();
    let mut next = s.clone();
    next.set_vector(&(s.vector() + gain * residual));
    let ikh = Matrix6::identity() - gain;
    next.covariance = symmetrize(&(ikh * p * ikh.transpose() + gain * noise * gain.transpose()));
    Ok((next, Innovation { residual, covariance: innov_cov }))
}

/// Filter instance for one sonde.
#[derive(Debug, Clone)]
pub struct NavFilter {
    pub state: NavState,
    pub accel_sigma: f64,
    pub noise: Matrix6<f64>,
}

impl NavFilter {
    pub fn new(fix: &GnssFix, noise: Matrix6<f64>, accel_sigma: f64) -> Self {
        Self { state: NavState::new(fix.position, fix.velocity, noise), accel_sigma, noise }
    }

    pub fn predict(&mut self, accel_local: &Vector3<f64>, dt: f64) -> Result<(), FusionError> {
        self.state = kalman_predict(&self.state, accel_local, dt, self.accel_sigma)?;
        Ok(())
    }

    pub fn update(&mut self, fix: &GnssFix) -> Result<Innovation, FusionError> {
        let (s, innov) = kalman_update(&self.state, fix, &self.noise)?;
        self.state = s;
        Ok(innov)
    }
}

// ---------------------------------------------------------------------------
// ground-side fused track

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedPoint {
    pub time: f64,
    pub gnss: [f64; 3],
    pub fused: [f64; 3],
    pub velocity: [f64; 3],
}

/// Fuse a decoded packet stream (one sonde, time-ordered). Every packet
/// carries a fix and an IMU reading, so gaps between packets are coasted
/// on the last acceleration.
pub fn fuse_track(samples: &[SensorSample], anchor: &GeodeticAnchor, noise: Matrix6<f64>, accel_sigma: f64) -> Result<Vec<FusedPoint>, FusionError> {
    let Some(first) = samples.first() else {
        return Ok(Vec::new());
    };
    let fix_of = |s: &SensorSample| GnssFix {
        position: anchor.to_enu(s.lon, s.lat, s.altitude),
        velocity: Vector3::new(s.vel_ned[1], s.vel_ned[0], -s.vel_ned[2]),
    };
    let mut filter = NavFilter::new(&fix_of(first), noise, accel_sigma);
    let mut out = Vec::with_capacity(samples.len());
    let mut prev = first;
    for s in samples {
        let fix = fix_of(s);
        let dt = s.time - prev.time;
        if dt > 0.0 {
            let q = Orientation::from_wxyz(prev.orientation)?;
            filter.predict(&body_to_local(prev.accel_body, &q), dt)?;
            filter.update(&fix)?;
        }
        let st = &filter.state;
        out.push(FusedPoint {
            time: s.time,
            gnss: fix.position.into(),
            fused: st.position.into(),
            velocity: st.velocity.into(),
        });
        prev = s;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// outage scenario

/// Synthetic trajectory with a GNSS outage, used to compare the fused
/// track against dead reckoning and against interpolating across the gap.
#[derive(Debug, Clone)]
pub struct OutageScenario {
    pub epochs: usize,
    pub gnss_interval: f64,
    pub imu_rate: usize,
    pub outage: (f64, f64),
    pub accel_amplitude: f64,
    pub accel_period: f64,
    pub accel_bias: f64,
    pub accel_noise: f64,
    pub horizontal_sigma: f64,
    pub vertical_sigma: f64,
    pub speed_sigma: f64,
    pub process_sigma: f64,
}

impl Default for OutageScenario {
    fn default() -> Self {
        Self {
            epochs: 200,
            gnss_interval: 1.0,
            imu_rate: 10,
            outage: (80.0, 110.0),
            accel_amplitude: 0.3,
            accel_period: 60.0,
            accel_bias: 0.01,
            accel_noise: 0.05,
            horizontal_sigma: 3.5,
            vertical_sigma: 7.0,
            speed_sigma: 0.4,
            process_sigma: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutageErrors {
    pub fused: f64,
    pub dead_reckoning: f64,
    pub interpolated: f64,
}

const PHASES: [f64; 3] = [0.0, 1.1, 2.3];
const V0: [f64; 3] = [3.0, 1.0, 0.2];

impl OutageScenario {
    fn truth(&self, t: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let w = std::f64::consts::TAU / self.accel_period;
        let amp = self.accel_amplitude;
        let mut p = Vector3::zeros();
        let mut v = Vector3::zeros();
        let mut a = Vector3::zeros();
        for i in 0..3 {
            let ph = PHASES[i];
            a[i] = amp * (w * t + ph).sin();
            v[i] = V0[i] + amp / w * (ph.cos() - (w * t + ph).cos());
            p[i] = V0[i] * t + amp / w * ph.cos() * t - amp / (w * w) * ((w * t + ph).sin() - ph.sin());
        }
        (p, v, a)
    }

    fn in_outage(&self, t: f64) -> bool {
        t > self.outage.0 && t < self.outage.1
    }

    /// RMS 3-D position error of the three estimates over all epochs.
    pub fn run(&self, seed: u64, run: u64) -> OutageErrors {
        let mut rng = rng::keyed(seed, Domain::Sensor, &[run]);
        let mut gauss = |s: f64| -> f64 { s * rng.sample::<f64, _>(StandardNormal) };

        let times: Vec<f64> = (0..self.epochs).map(|k| k as f64 * self.gnss_interval).collect();
        let fixes: Vec<GnssFix> = times
            .iter()
            .map(|&t| {
                let (p, v, _) = self.truth(t);
                GnssFix {
                    position: p + Vector3::new(gauss(self.horizontal_sigma), gauss(self.horizontal_sigma), gauss(self.vertical_sigma)),
                    velocity: v + Vector3::new(gauss(self.speed_sigma), gauss(self.speed_sigma), gauss(self.speed_sigma)),
                }
            })
            .collect();
        let dt = self.gnss_interval / self.imu_rate as f64;
        let bias = Vector3::repeat(self.accel_bias);
        let imu: Vec<Vec<Vector3<f64>>> = times
            .iter()
            .map(|&t| {
                (0..self.imu_rate)
                    .map(|j| {
                        let (_, _, a) = self.truth(t + j as f64 * dt);
                        a + bias + Vector3::new(gauss(self.accel_noise), gauss(self.accel_noise), gauss(self.accel_noise))
                    })
                    .collect()
            })
            .collect();

        let noise = measurement_noise(self.horizontal_sigma, self.vertical_sigma, self.speed_sigma);
        let mut fused = NavFilter::new(&fixes[0], noise, self.process_sigma);
        let mut dead = fused.clone();
        let mut fused_err = 0.0;
        let mut dead_err = 0.0;
        for (k, &t) in times.iter().enumerate() {
            if k > 0 {
                for a in &imu[k - 1] {
                    fused.predict(a, dt).expect("positive step");
                    dead.predict(a, dt).expect("positive step");
                }
                if !self.in_outage(t) {
                    fused.update(&fixes[k]).expect("valid noise");
                }
            }
            let truth = self.truth(t).0;
            fused_err += (fused.state.position - truth).norm_squared();
            dead_err += (dead.state.position - truth).norm_squared();
        }

        let available: Vec<usize> = (0..times.len()).filter(|&k| !self.in_outage(times[k])).collect();
        let mut interp_err = 0.0;
        for (k, &t) in times.iter().enumerate() {
            let est = match available.binary_search(&k) {
                Ok(_) => fixes[k].position,
                Err(i) => {
                    let (a, b) = (available[i - 1], available[i]);
                    let w = (t - times[a]) / (times[b] - times[a]);
                    fixes[a].position * (1.0 - w) + fixes[b].position * w
                }
            };
            interp_err += (est - self.truth(t).0).norm_squared();
        }

        let n = times.len() as f64;
        OutageErrors {
            fused: (fused_err / n).sqrt(),
            dead_reckoning: (dead_err / n).sqrt(),
            interpolated: (interp_err / n).sqrt(),
        }
    }

    /// Per-run errors and their ensemble RMS.
    pub fn ensemble(&self, seed: u64, runs: u64) -> (Vec<OutageErrors>, OutageErrors) {
        let all: Vec<OutageErrors> = (0..runs).map(|r| self.run(seed, r)).collect();
        let rms = |f: fn(&OutageErrors) -> f64| (all.iter().map(|e| f(e).powi(2)).sum::<f64>() / all.len() as f64).sqrt();
        let summary = OutageErrors {
            fused: rms(|e| e.fused),
            dead_reckoning: rms(|e| e.dead_reckoning),
            interpolated: rms(|e| e.interpolated),
        };
        (all, summary)
    }
}
