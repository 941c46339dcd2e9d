//! C ABI over `sonde-core`.
//!
//! Every fallible call returns a [`SondeStatus`]; results go through out
//! pointers. Stateful objects are opaque handles created by `*_new` and
//! released by the matching `*_free`. The text of the most recent error on
//! the calling thread is available from [`sonde_last_error`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::Vector3;
use sonde_core::analysis::{self, AnalysisError, DistanceNeighborGraph, QuantityKind, Snapshot};
use sonde_core::atmosphere::{self, AtmosphereError};
use sonde_core::balloon::{self, BalloonError, BalloonSpec};
use sonde_core::flight::SensorSample;
use sonde_core::fusion::{self, Ahrs, FusionError, GnssFix, NavFilter};
use sonde_core::telemetry::{self, CodecError, PACKET_LEN};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SondeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfRange = 3,
    CannotFloat = 4,
    WrongLength = 5,
    CrcMismatch = 6,
    UnknownVersion = 7,
    TooFewSondes = 8,
    NotPositiveDefinite = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

/// Quantity binned by a neighbor graph.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SondeQuantity {
    Distance = 0,
    Temperature = 1,
    Humidity = 2,
    Velocity = 3,
}

impl From<SondeQuantity> for QuantityKind {
    fn from(q: SondeQuantity) -> Self {
        match q {
            SondeQuantity::Distance => QuantityKind::Distance,
            SondeQuantity::Temperature => QuantityKind::Temperature,
            SondeQuantity::Humidity => QuantityKind::Humidity,
            SondeQuantity::Velocity => QuantityKind::Velocity,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SondeAtmosphere {
    /// m
    pub altitude: f64,
    /// Pa
    pub pressure: f64,
    /// K
    pub temperature: f64,
    /// kg/m3
    pub density: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SondeBalloonSpec {
    /// m
    pub radius: f64,
    /// m
    pub sheet_thickness: f64,
    /// kg/m3
    pub material_density: f64,
    /// kg/mol
    pub gas_molar_mass: f64,
    /// kg/mol
    pub air_molar_mass: f64,
    /// kg
    pub payload_mass: f64,
}

impl From<SondeBalloonSpec> for BalloonSpec {
    fn from(s: SondeBalloonSpec) -> Self {
        Self {
            radius: s.radius,
            sheet_thickness: s.sheet_thickness,
            material_density: s.material_density,
            gas_molar_mass: s.gas_molar_mass,
            air_molar_mass: s.air_molar_mass,
            payload_mass: s.payload_mass,
        }
    }
}

impl From<BalloonSpec> for SondeBalloonSpec {
    fn from(s: BalloonSpec) -> Self {
        Self {
            radius: s.radius,
            sheet_thickness: s.sheet_thickness,
            material_density: s.material_density,
            gas_molar_mass: s.gas_molar_mass,
            air_molar_mass: s.air_molar_mass,
            payload_mass: s.payload_mass,
        }
    }
}

/// One instrument record in packet units.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SondeSample {
    pub sonde_id: u8,
    /// GNSS time of week, s
    pub time: f64,
    /// Pa
    pub pressure: f64,
    /// K
    pub temperature: f64,
    /// %RH
    pub humidity: f64,
    pub lon: f64,
    pub lat: f64,
    /// m
    pub altitude: f64,
    /// north, east, down; m/s
    pub vel_ned: [f64; 3],
    /// g
    pub accel_body: [f64; 3],
    /// gauss
    pub mag_body: [f64; 3],
    /// w, x, y, z
    pub orientation: [f64; 4],
}

impl From<&SondeSample> for SensorSample {
    fn from(s: &SondeSample) -> Self {
        Self {
            sonde_id: s.sonde_id,
            time: s.time,
            pressure: s.pressure,
            temperature: s.temperature,
            humidity: s.humidity,
            lon: s.lon,
            lat: s.lat,
            altitude: s.altitude,
            vel_ned: s.vel_ned,
            accel_body: s.accel_body,
            mag_body: s.mag_body,
            orientation: s.orientation,
        }
    }
}

impl From<&SensorSample> for SondeSample {
    fn from(s: &SensorSample) -> Self {
        Self {
            sonde_id: s.sonde_id,
            time: s.time,
            pressure: s.pressure,
            temperature: s.temperature,
            humidity: s.humidity,
            lon: s.lon,
            lat: s.lat,
            altitude: s.altitude,
            vel_ned: s.vel_ned,
            accel_body: s.accel_body,
            mag_body: s.mag_body,
            orientation: s.orientation,
        }
    }
}

/// Opaque distance-neighbor graph.
pub struct SondeQGraph(DistanceNeighborGraph);

/// Opaque orientation filter.
pub struct SondeAhrs(Ahrs);

/// Opaque position/velocity Kalman filter.
pub struct SondeNavFilter(NavFilter);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl ToString) {
    let text = CString::new(msg.to_string().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn fail(status: SondeStatus, msg: impl ToString) -> SondeStatus {
    set_error(msg);
    status
}

/// Run `f`, turning panics into [`SondeStatus::Panic`].
fn guard(f: impl FnOnce() -> SondeStatus) -> SondeStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(SondeStatus::Panic, "internal panic"))
}

macro_rules! deref {
    ($p:expr) => {
        match unsafe { $p.as_ref() } {
            Some(v) => v,
            None => return fail(SondeStatus::NullPointer, concat!("null pointer: ", stringify!($p))),
        }
    };
}

macro_rules! deref_mut {
    ($p:expr) => {
        match unsafe { $p.as_mut() } {
            Some(v) => v,
            None => return fail(SondeStatus::NullPointer, concat!("null pointer: ", stringify!($p))),
        }
    };
}

unsafe fn array3(p: *const f64) -> Option<[f64; 3]> {
    if p.is_null() {
        return None;
    }
    let s = std::slice::from_raw_parts(p, 3);
    Some([s[0], s[1], s[2]])
}

fn atmosphere_status(e: AtmosphereError) -> SondeStatus {
    fail(SondeStatus::OutOfRange, e)
}

fn balloon_status(e: BalloonError) -> SondeStatus {
    match e {
        BalloonError::CannotFloat(_) => fail(SondeStatus::CannotFloat, e),
        _ => fail(SondeStatus::InvalidArgument, e),
    }
}

fn codec_status(e: CodecError) -> SondeStatus {
    let status = match e {
        CodecError::OutOfRange { .. } => SondeStatus::OutOfRange,
        CodecError::WrongLength(_) => SondeStatus::WrongLength,
        CodecError::CrcMismatch { .. } => SondeStatus::CrcMismatch,
        CodecError::UnknownVersion(_) => SondeStatus::UnknownVersion,
    };
    fail(status, e)
}

fn analysis_status(e: AnalysisError) -> SondeStatus {
    match e {
        AnalysisError::TooFewSondes(_) => fail(SondeStatus::TooFewSondes, e),
        _ => fail(SondeStatus::InvalidArgument, e),
    }
}

fn fusion_status(e: FusionError) -> SondeStatus {
    match e {
        FusionError::NoiseNotPositiveDefinite | FusionError::SingularInnovation => {
            fail(SondeStatus::NotPositiveDefinite, e)
        }
        _ => fail(SondeStatus::InvalidArgument, e),
    }
}

// ---------------------------------------------------------------------------
// errors

/// Static description of a status code. Never null.
#[no_mangle]
pub extern "C" fn sonde_status_message(status: SondeStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        SondeStatus::Ok => b"ok\0",
        SondeStatus::NullPointer => b"null pointer argument\0",
        SondeStatus::InvalidArgument => b"invalid argument\0",
        SondeStatus::OutOfRange => b"value out of range\0",
        SondeStatus::CannotFloat => b"balloon cannot float in the troposphere\0",
        SondeStatus::WrongLength => b"packet has the wrong length\0",
        SondeStatus::CrcMismatch => b"packet CRC mismatch\0",
        SondeStatus::UnknownVersion => b"unknown packet version\0",
        SondeStatus::TooFewSondes => b"need at least two sondes\0",
        SondeStatus::NotPositiveDefinite => b"matrix not positive definite\0",
        SondeStatus::BufferTooSmall => b"output buffer too small\0",
        SondeStatus::Panic => b"internal panic\0",
    };
    s.as_ptr().cast()
}

/// Detail of the last failure on this thread. Valid until the next failing
/// call on the same thread; empty when nothing failed yet.
#[no_mangle]
pub extern "C" fn sonde_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

// ---------------------------------------------------------------------------
// atmosphere and balloon

#[no_mangle]
pub unsafe extern "C" fn sonde_isa_sample(altitude: f64, out: *mut SondeAtmosphere) -> SondeStatus {
    guard(|| {
        let out = deref_mut!(out);
        match atmosphere::isa_sample(altitude) {
            Ok(s) => {
                *out = SondeAtmosphere {
                    altitude: s.altitude,
                    pressure: s.pressure,
                    temperature: s.temperature,
                    density: s.density,
                };
                SondeStatus::Ok
            }
            Err(e) => atmosphere_status(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn sonde_isa_altitude_for_density(density: f64, out_altitude: *mut f64) -> SondeStatus {
    guard(|| {
        let out = deref_mut!(out_altitude);
        match atmosphere::isa_altitude_for_density(density) {
            Ok(h) => {
                *out = h;
                SondeStatus::Ok
            }
            Err(e) => atmosphere_status(e),
        }
    })
}

/// Current prototype sphere: R 0.20 m, 20 µm sheet, 17.5 g payload, helium.
#[no_mangle]
pub unsafe extern "C" fn sonde_balloon_default(out: *mut SondeBalloonSpec) -> SondeStatus {
    guard(|| {
        *deref_mut!(out) = BalloonSpec::default().into();
        SondeStatus::Ok
    })
}

/// Skin mass, kg.
#[no_mangle]
pub unsafe extern "C" fn sonde_balloon_mass(spec: *const SondeBalloonSpec, out_kg: *mut f64) -> SondeStatus {
    guard(|| {
        let spec: BalloonSpec = (*deref!(spec)).into();
        let out = deref_mut!(out_kg);
        if let Err(e) = spec.validate() {
            return balloon_status(e);
        }
        *out = balloon::balloon_mass(&spec);
        SondeStatus::Ok
    })
}

/// Floating altitude, m.
#[no_mangle]
pub unsafe extern "C" fn sonde_attainable_altitude(spec: *const SondeBalloonSpec, out_m: *mut f64) -> SondeStatus {
    guard(|| {
        let spec: BalloonSpec = (*deref!(spec)).into();
        let out = deref_mut!(out_m);
        match balloon::attainable_altitude(&spec) {
            Ok(h) => {
                *out = h;
                SondeStatus::Ok
            }
            Err(e) => balloon_status(e),
        }
    })
}

/// Squared Brunt-Väisälä frequency from a temperature step, s^-2.
#[no_mangle]
pub extern "C" fn sonde_bv_n2(delta_t: f64, delta_z: f64, t0: f64) -> f64 {
    analysis::bv_n2(delta_t, delta_z, t0)
}

// ---------------------------------------------------------------------------
// codec

/// Encode into `out`, which must hold at least 64 bytes.
#[no_mangle]
pub unsafe extern "C" fn sonde_encode(sample: *const SondeSample, seq: u16, out: *mut u8, out_len: usize) -> SondeStatus {
    guard(|| {
        let sample = SensorSample::from(deref!(sample));
        if out.is_null() {
            return fail(SondeStatus::NullPointer, "null pointer: out");
        }
        if out_len < PACKET_LEN {
            return fail(SondeStatus::BufferTooSmall, format!("need {PACKET_LEN} bytes, got {out_len}"));
        }
        match telemetry::encode(&sample, seq) {
            Ok(bytes) => {
                std::slice::from_raw_parts_mut(out, PACKET_LEN).copy_from_slice(&bytes);
                SondeStatus::Ok
            }
            Err(e) => codec_status(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn sonde_decode(
    bytes: *const u8,
    len: usize,
    out_sample: *mut SondeSample,
    out_seq: *mut u16,
) -> SondeStatus {
    guard(|| {
        if bytes.is_null() {
            return fail(SondeStatus::NullPointer, "null pointer: bytes");
        }
        let out_sample = deref_mut!(out_sample);
        let out_seq = deref_mut!(out_seq);
        match telemetry::decode(std::slice::from_raw_parts(bytes, len)) {
            Ok((s, seq)) => {
                *out_sample = SondeSample::from(&s);
                *out_seq = seq;
                SondeStatus::Ok
            }
            Err(e) => codec_status(e),
        }
    })
}

// ---------------------------------------------------------------------------
// neighbor graph

fn qgraph_out(result: Result<DistanceNeighborGraph, AnalysisError>, out: &mut *mut SondeQGraph) -> SondeStatus {
    match result {
        Ok(g) => {
            *out = Box::into_raw(Box::new(SondeQGraph(g)));
            SondeStatus::Ok
        }
        Err(e) => analysis_status(e),
    }
}

/// Graph of 3-D separations. `positions` holds `n` packed `[e, n, u]`
/// triples; non-finite entries are excluded.
#[no_mangle]
pub unsafe extern "C" fn sonde_qgraph_from_positions(
    positions: *const f64,
    n: usize,
    h: f64,
    out: *mut *mut SondeQGraph,
) -> SondeStatus {
    guard(|| {
        let out = deref_mut!(out);
        if positions.is_null() && n > 0 {
            return fail(SondeStatus::NullPointer, "null pointer: positions");
        }
        let flat = if n == 0 { &[][..] } else { std::slice::from_raw_parts(positions, n * 3) };
        let p = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        qgraph_out(analysis::distance_neighbor_graph(&Snapshot::Positions(p), QuantityKind::Distance, h, 0.0), out)
    })
}

/// Graph of absolute reading differences for a scalar quantity.
#[no_mangle]
pub unsafe extern "C" fn sonde_qgraph_from_scalars(
    values: *const f64,
    n: usize,
    quantity: SondeQuantity,
    h: f64,
    out: *mut *mut SondeQGraph,
) -> SondeStatus {
    guard(|| {
        let out = deref_mut!(out);
        if values.is_null() && n > 0 {
            return fail(SondeStatus::NullPointer, "null pointer: values");
        }
        let v = if n == 0 { Vec::new() } else { std::slice::from_raw_parts(values, n).to_vec() };
        qgraph_out(analysis::distance_neighbor_graph(&Snapshot::Scalars(v), quantity.into(), h, 0.0), out)
    })
}

/// Number of bins; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn sonde_qgraph_bins(graph: *const SondeQGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.q.len())
}

/// Sondes taking part in the graph.
#[no_mangle]
pub unsafe extern "C" fn sonde_qgraph_sondes(graph: *const SondeQGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.n as usize)
}

/// Copy Q into `out[0..len]`. `len` must be at least the bin count.
#[no_mangle]
pub unsafe extern "C" fn sonde_qgraph_values(graph: *const SondeQGraph, out: *mut f64, len: usize) -> SondeStatus {
    guard(|| {
        let g = &deref!(graph).0;
        if out.is_null() && !g.q.is_empty() {
            return fail(SondeStatus::NullPointer, "null pointer: out");
        }
        if len < g.q.len() {
            return fail(SondeStatus::BufferTooSmall, format!("need {} values, got {len}", g.q.len()));
        }
        if !g.q.is_empty() {
            std::slice::from_raw_parts_mut(out, g.q.len()).copy_from_slice(&g.q);
        }
        SondeStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn sonde_qgraph_free(graph: *mut SondeQGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

// ---------------------------------------------------------------------------
// AHRS

/// Filter starting at the identity orientation.
#[no_mangle]
pub unsafe extern "C" fn sonde_ahrs_new(beta: f64, out: *mut *mut SondeAhrs) -> SondeStatus {
    guard(|| {
        let out = deref_mut!(out);
        if !(beta >= 0.0 && beta.is_finite()) {
            return fail(SondeStatus::InvalidArgument, format!("beta must be finite and >= 0, got {beta}"));
        }
        *out = Box::into_raw(Box::new(SondeAhrs(Ahrs::new(beta))));
        SondeStatus::Ok
    })
}

/// One filter step. `gyro` rad/s, `accel` g, `mag` gauss, 3 values each.
/// `out_quat` (optional) receives w, x, y, z; `out_gyro_only` (optional) is
/// set to 1 when the accelerometer was unusable.
#[no_mangle]
pub unsafe extern "C" fn sonde_ahrs_update(
    ahrs: *mut SondeAhrs,
    gyro: *const f64,
    accel: *const f64,
    mag: *const f64,
    dt: f64,
    out_quat: *mut f64,
    out_gyro_only: *mut i32,
) -> SondeStatus {
    guard(|| {
        let ahrs = &mut deref_mut!(ahrs).0;
        let (Some(g), Some(a), Some(m)) = (array3(gyro), array3(accel), array3(mag)) else {
            return fail(SondeStatus::NullPointer, "null sensor vector");
        };
        match ahrs.update(g, a, m, dt) {
            Ok(step) => {
                if !out_quat.is_null() {
                    std::slice::from_raw_parts_mut(out_quat, 4).copy_from_slice(&step.orientation.wxyz());
                }
                if let Some(flag) = out_gyro_only.as_mut() {
                    *flag = step.gyro_only as i32;
                }
                SondeStatus::Ok
            }
            Err(e) => fusion_status(e),
        }
    })
}

/// Current orientation as w, x, y, z.
#[no_mangle]
pub unsafe extern "C" fn sonde_ahrs_orientation(ahrs: *const SondeAhrs, out_quat: *mut f64) -> SondeStatus {
    guard(|| {
        let ahrs = &deref!(ahrs).0;
        if out_quat.is_null() {
            return fail(SondeStatus::NullPointer, "null pointer: out_quat");
        }
        std::slice::from_raw_parts_mut(out_quat, 4).copy_from_slice(&ahrs.orientation.wxyz());
        SondeStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn sonde_ahrs_free(ahrs: *mut SondeAhrs) {
    if !ahrs.is_null() {
        drop(Box::from_raw(ahrs));
    }
}

// ---------------------------------------------------------------------------
// navigation filter

/// Filter initialised at a first fix (ENU m, m/s). The sigmas describe the
/// GNSS fix noise; `accel_sigma` the process noise, m/s².
#[no_mangle]
pub unsafe extern "C" fn sonde_nav_new(
    position: *const f64,
    velocity: *const f64,
    horizontal_sigma: f64,
    vertical_sigma: f64,
    speed_sigma: f64,
    accel_sigma: f64,
    out: *mut *mut SondeNavFilter,
) -> SondeStatus {
    guard(|| {
        let out = deref_mut!(out);
        let (Some(p), Some(v)) = (array3(position), array3(velocity)) else {
            return fail(SondeStatus::NullPointer, "null position or velocity");
        };
        let sigmas = [horizontal_sigma, vertical_sigma, speed_sigma];
        if sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return fail(SondeStatus::NotPositiveDefinite, "fix sigmas must be finite and > 0");
        }
        if !(accel_sigma >= 0.0 && accel_sigma.is_finite()) {
            return fail(SondeStatus::InvalidArgument, "accel_sigma must be finite and >= 0");
        }
        let fix = GnssFix { position: Vector3::from(p), velocity: Vector3::from(v) };
        let noise = fusion::measurement_noise(horizontal_sigma, vertical_sigma, speed_sigma);
        *out = Box::into_raw(Box::new(SondeNavFilter(NavFilter::new(&fix, noise, accel_sigma))));
        SondeStatus::Ok
    })
}

/// Propagate with local acceleration (gravity removed, m/s²) over `dt` s.
#[no_mangle]
pub unsafe extern "C" fn sonde_nav_predict(nav: *mut SondeNavFilter, accel: *const f64, dt: f64) -> SondeStatus {
    guard(|| {
        let nav = &mut deref_mut!(nav).0;
        let Some(a) = array3(accel) else {
            return fail(SondeStatus::NullPointer, "null pointer: accel");
        };
        match nav.predict(&Vector3::from(a), dt) {
            Ok(()) => SondeStatus::Ok,
            Err(e) => fusion_status(e),
        }
    })
}

/// Correct with a GNSS fix.
#[no_mangle]
pub unsafe extern "C" fn sonde_nav_update(
    nav: *mut SondeNavFilter,
    position: *const f64,
    velocity: *const f64,
) -> SondeStatus {
    guard(|| {
        let nav = &mut deref_mut!(nav).0;
        let (Some(p), Some(v)) = (array3(position), array3(velocity)) else {
            return fail(SondeStatus::NullPointer, "null position or velocity");
        };
        match nav.update(&GnssFix { position: Vector3::from(p), velocity: Vector3::from(v) }) {
            Ok(_) => SondeStatus::Ok,
            Err(e) => fusion_status(e),
        }
    })
}

/// Copy the state out. Either pointer may be null; `out_trace` receives the
/// covariance trace.
#[no_mangle]
pub unsafe extern "C" fn sonde_nav_state(
    nav: *const SondeNavFilter,
    out_position: *mut f64,
    out_velocity: *mut f64,
    out_trace: *mut f64,
) -> SondeStatus {
    guard(|| {
        let s = &deref!(nav).0.state;
        if !out_position.is_null() {
            std::slice::from_raw_parts_mut(out_position, 3).copy_from_slice(s.position.as_slice());
        }
        if !out_velocity.is_null() {
            std::slice::from_raw_parts_mut(out_velocity, 3).copy_from_slice(s.velocity.as_slice());
        }
        if let Some(t) = out_trace.as_mut() {
            *t = s.covariance.trace();
        }
        SondeStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn sonde_nav_free(nav: *mut SondeNavFilter) {
    if !nav.is_null() {
        drop(Box::from_raw(nav));
    }
}
