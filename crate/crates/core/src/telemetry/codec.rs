//! 64-byte little-endian telemetry frame.
//!
//! ```text
//! off  size  field
//!   0    1   version (= 1)
//!   1    1   sonde_id
//!   2    2   seq                u16
//!   4    4   tow_ms             u32, GNSS time of week in ms
//!   8    4   lon                i32, 1e-7 deg
//!  12    4   lat                i32, 1e-7 deg
//!  16    4   alt_mm             i32
//!  20   12   vel N/E/D          i32 each, mm/s
//!  32    4   pressure           u32, Pa
//!  36    2   temperature        i16, (T − 223.15 K) · 100
//!  38    2   humidity           u16, centi-%RH
//!  40    6   accel x/y/z        i16 each, mg
//!  46    6   mag x/y/z          i16 each, milligauss
//!  52    8   quat w/x/y/z       i16 each, 2^-14
//!  60    2   reserved           zero
//!  62    2   crc                CRC-16/CCITT-FALSE over bytes 0..62
//! ```

use crc::{Crc, CRC_16_IBM_3740};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flight::SensorSample;

pub const PACKET_LEN: usize = 64;
pub const PROTOCOL_VERSION: u8 = 1;
pub const TEMPERATURE_ZERO: f64 = 223.15;
pub const QUAT_SCALE: f64 = 16384.0;
const WEEK_MS: f64 = 604_800_000.0;

/// CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection).
pub const CCITT_FALSE: Crc<u16> = Crc::<u16>::new(&CRC_16_IBM_3740);

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("field `{field}` out of range: {value}")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("packet length {0}, expected 64")]
    WrongLength(usize),
    #[error("CRC mismatch: computed {computed:#06x}, stored {stored:#06x}")]
    CrcMismatch { computed: u16, stored: u16 },
    #[error("unknown protocol version {0}")]
    UnknownVersion(u8),
}

/// Raw integer fields of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TelemetryPacket {
    pub version: u8,
    pub sonde_id: u8,
    pub seq: u16,
    pub tow_ms: u32,
    pub lon: i32,
    pub lat: i32,
    pub alt_mm: i32,
    pub vel_ned: [i32; 3],
    pub pressure: u32,
    pub temperature: i16,
    pub humidity: u16,
    pub accel: [i16; 3],
    pub mag: [i16; 3],
    pub quat: [i16; 4],
}

fn quantize<T: TryFrom<i64>>(field: &'static str, value: f64, scale: f64, min: f64, max: f64) -> Result<T, CodecError> {
    let raw = (value * scale).round();
    if !raw.is_finite() || raw < min || raw > max {
        return Err(CodecError::OutOfRange { field, value });
    }
    T::try_from(raw as i64).map_err(|_| CodecError::OutOfRange { field, value })
}

fn q_i32(field: &'static str, value: f64, scale: f64) -> Result<i32, CodecError> {
    quantize(field, value, scale, i32::MIN as f64, i32::MAX as f64)
}

fn q_i16(field: &'static str, value: f64, scale: f64) -> Result<i16, CodecError> {
    quantize(field, value, scale, i16::MIN as f64, i16::MAX as f64)
}

impl TelemetryPacket {
    pub fn from_sample(sample: &SensorSample, seq: u16) -> Result<Self, CodecError> {
        let tow_ms: u32 = quantize("tow_ms", sample.time, 1e3, 0.0, WEEK_MS - 1.0)?;
        if !(-90.0..=90.0).contains(&sample.lat) {
            return Err(CodecError::OutOfRange { field: "lat", value: sample.lat });
        }
        if !(-180.0..=180.0).contains(&sample.lon) {
            return Err(CodecError::OutOfRange { field: "lon", value: sample.lon });
        }
        let v = sample.vel_ned;
        let a = sample.accel_body;
        let m = sample.mag_body;
        let q = sample.orientation;
        Ok(Self {
            version: PROTOCOL_VERSION,
            sonde_id: sample.sonde_id,
            seq,
            tow_ms,
            lon: q_i32("lon", sample.lon, 1e7)?,
            lat: q_i32("lat", sample.lat, 1e7)?,
            alt_mm: q_i32("altitude", sample.altitude, 1e3)?,
            vel_ned: [
                q_i32("vel_n", v[0], 1e3)?,
                q_i32("vel_e", v[1], 1e3)?,
                q_i32("vel_d", v[2], 1e3)?,
            ],
            pressure: quantize("pressure", sample.pressure, 1.0, 0.0, u32::MAX as f64)?,
            temperature: q_i16("temperature", sample.temperature - TEMPERATURE_ZERO, 100.0)
                .map_err(|_| CodecError::OutOfRange { field: "temperature", value: sample.temperature })?,
            humidity: quantize("humidity", sample.humidity, 100.0, 0.0, u16::MAX as f64)?,
            accel: [q_i16("accel_x", a[0], 1e3)?, q_i16("accel_y", a[1], 1e3)?, q_i16("accel_z", a[2], 1e3)?],
            mag: [q_i16("mag_x", m[0], 1e3)?, q_i16("mag_y", m[1], 1e3)?, q_i16("mag_z", m[2], 1e3)?],
            quat: [
                q_i16("quat_w", q[0], QUAT_SCALE)?,
                q_i16("quat_x", q[1], QUAT_SCALE)?,
                q_i16("quat_y", q[2], QUAT_SCALE)?,
                q_i16("quat_z", q[3], QUAT_SCALE)?,
            ],
        })
    }

    pub fn to_sample(&self) -> SensorSample {
        let f3 = |v: [i32; 3], s: f64| [v[0] as f64 / s, v[1] as f64 / s, v[2] as f64 / s];
        let g3 = |v: [i16; 3], s: f64| [v[0] as f64 / s, v[1] as f64 / s, v[2] as f64 / s];
        SensorSample {
            sonde_id: self.sonde_id,
            time: self.tow_ms as f64 / 1e3,
            pressure: self.pressure as f64,
            temperature: self.temperature as f64 / 100.0 + TEMPERATURE_ZERO,
            humidity: self.humidity as f64 / 100.0,
            lon: self.lon as f64 / 1e7,
            lat: self.lat as f64 / 1e7,
            altitude: self.alt_mm as f64 / 1e3,
            vel_ned: f3(self.vel_ned, 1e3),
            accel_body: g3(self.accel, 1e3),
            mag_body: g3(self.mag, 1e3),
            orientation: self.quat.map(|c| c as f64 / QUAT_SCALE),
        }
    }

    pub fn to_bytes(&self) -> [u8; PACKET_LEN] {
        let mut b = [0u8; PACKET_LEN];
        b[0] = self.version;
        b[1] = self.sonde_id;
        b[2..4].copy_from_slice(&self.seq.to_le_bytes());
        b[4..8].copy_from_slice(&self.tow_ms.to_le_bytes());
        b[8..12].copy_from_slice(&self.lon.to_le_bytes());
        b[12..16].copy_from_slice(&self.lat.to_le_bytes());
        b[16..20].copy_from_slice(&self.alt_mm.to_le_bytes());
        for (i, v) in self.vel_ned.iter().enumerate() {
            b[20 + 4 * i..24 + 4 * i].copy_from_slice(&v.to_le_bytes());
        }
        b[32..36].copy_from_slice(&self.pressure.to_le_bytes());
        b[36..38].copy_from_slice(&self.temperature.to_le_bytes());
        b[38..40].copy_from_slice(&self.humidity.to_le_bytes());
        let words = self.accel.iter().chain(&self.mag).chain(&self.quat);
        for (i, v) in words.enumerate() {
            b[40 + 2 * i..42 + 2 * i].copy_from_slice(&v.to_le_bytes());
        }
        let crc = CCITT_FALSE.checksum(&b[..62]);
        b[62..64].copy_from_slice(&crc.to_le_bytes());
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() != PACKET_LEN {
            return Err(CodecError::WrongLength(bytes.len()));
        }
        let stored = u16::from_le_bytes([bytes[62], bytes[63]]);
        let computed = CCITT_FALSE.checksum(&bytes[..62]);
        if stored != computed {
            return Err(CodecError::CrcMismatch { computed, stored });
        }
        if bytes[0] != PROTOCOL_VERSION {
            return Err(CodecError::UnknownVersion(bytes[0]));
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let i16_at = |o: usize| i16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let i32_at = |o: usize| i32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        Ok(Self {
            version: bytes[0],
            sonde_id: bytes[1],
            seq: u16_at(2),
            tow_ms: u32_at(4),
            lon: i32_at(8),
            lat: i32_at(12),
            alt_mm: i32_at(16),
            vel_ned: [i32_at(20), i32_at(24), i32_at(28)],
            pressure: u32_at(32),
            temperature: i16_at(36),
            humidity: u16_at(38),
            accel: [i16_at(40), i16_at(42), i16_at(44)],
            mag: [i16_at(46), i16_at(48), i16_at(50)],
            quat: [i16_at(52), i16_at(54), i16_at(56), i16_at(58)],
        })
    }
}

pub fn encode(sample: &SensorSample, seq: u16) -> Result<[u8; PACKET_LEN], CodecError> {
    Ok(TelemetryPacket::from_sample(sample, seq)?.to_bytes())
}

/// Returns the sample (sonde id included) and the sequence number.
pub fn decode(bytes: &[u8]) -> Result<(SensorSample, u16), CodecError> {
    let p = TelemetryPacket::from_bytes(bytes)?;
    Ok((p.to_sample(), p.seq))
}

/// What a sample looks like after a trip through the wire.
pub fn quantized(sample: &SensorSample) -> Result<SensorSample, CodecError> {
    Ok(TelemetryPacket::from_sample(sample, 0)?.to_sample())
}
