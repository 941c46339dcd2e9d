//! Ground segment: merge station logs, drop duplicates, calibrate against
//! the pre-launch reference, resample onto a regular grid, persist.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::telemetry::{Outcome, ReceptionRecord, TelemetryPacket};

pub const DEFAULT_MAX_GAP: f64 = 3.0;
/// Grid for dual-sounding style comparisons.
pub const SOUNDING_STEP: f64 = 4.0;
/// Grid for cluster analysis.
pub const CLUSTER_STEP: f64 = 5.0;
/// Shortest pre-launch overlap accepted for calibration, s.
pub const MIN_CALIBRATION_WINDOW: f64 = 60.0;
pub const SAMPLES_FILE: &str = "samples.jsonl";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("need at least 2 source points, got {0}")]
    TooFewPoints(usize),
    #[error("timestamps not strictly increasing at index {0}")]
    NotIncreasing(usize),
    #[error("invalid grid step {0}")]
    InvalidStep(f64),
    #[error("{who}: only {span:.1} s of data inside the calibration window, need {MIN_CALIBRATION_WINDOW} s")]
    InsufficientOverlap { who: String, span: f64 },
    #[error("calibration of sonde {sonde_id} overflows field `{field}`")]
    CalibrationOverflow { sonde_id: u8, field: &'static str },
    #[error("empty calibration window [{0}, {1}]")]
    EmptyWindow(f64, f64),
    #[error("no sonde has a usable calibration window")]
    NoCalibratedSondes,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io { path: path.to_path_buf(), source }
}

// ---------------------------------------------------------------------------
// reception logs and deduplication

/// Read one JSONL reception log.
pub fn load_reception_log(path: &Path) -> Result<Vec<ReceptionRecord>, IngestError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| IngestError::Parse {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), IngestError> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).expect("serializable");
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(io_err(path))
}

/// Same `(sonde, seq)` delivered with different CRC-valid payloads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupeAnomaly {
    pub sonde_id: u8,
    pub seq: u16,
    pub kept_station: u32,
    pub conflicting_station: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DedupeResult {
    /// Unique packets sorted by `(sonde_id, seq)`.
    pub packets: Vec<TelemetryPacket>,
    pub anomalies: Vec<DedupeAnomaly>,
    /// Received records whose bytes failed to decode.
    pub rejected: usize,
}

/// Kept reception records, one per `(sonde, seq)`, earliest `rx_time` first
/// (ties go to the lower station id). Only received records take part.
pub fn dedupe_records(records: &[ReceptionRecord]) -> (Vec<ReceptionRecord>, Vec<DedupeAnomaly>, usize) {
    let mut received: Vec<&ReceptionRecord> =
        records.iter().filter(|r| r.outcome == Outcome::Received).collect();
    received.sort_by(|a, b| a.rx_time.total_cmp(&b.rx_time).then(a.station_id.cmp(&b.station_id)));

    let mut kept: BTreeMap<(u8, u16), &ReceptionRecord> = BTreeMap::new();
    let mut anomalies = Vec::new();
    let mut rejected = 0;
    for r in received {
        let Ok(p) = TelemetryPacket::from_bytes(&r.packet) else {
            rejected += 1;
            continue;
        };
        match kept.entry((p.sonde_id, p.seq)) {
            Entry::Vacant(v) => {
                v.insert(r);
            }
            Entry::Occupied(o) => {
                if o.get().packet != r.packet {
                    anomalies.push(DedupeAnomaly {
                        sonde_id: p.sonde_id,
                        seq: p.seq,
                        kept_station: o.get().station_id,
                        conflicting_station: r.station_id,
                    });
                }
            }
        }
    }
    (kept.into_values().cloned().collect(), anomalies, rejected)
}

pub fn dedupe(records: &[ReceptionRecord]) -> DedupeResult {
    let (kept, anomalies, rejected) = dedupe_records(records);
    let packets = kept
        .iter()
        .map(|r| TelemetryPacket::from_bytes(&r.packet).expect("validated in dedupe_records"))
        .collect();
    DedupeResult { packets, anomalies, rejected }
}

// ---------------------------------------------------------------------------
// pre-launch calibration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub sonde_id: u8,
    /// Subtracted from temperature readings, K.
    pub temp_offset: f64,
    pub rh_offset: f64,
    pub pressure_offset: f64,
    /// Comparison window `[t_start, t_end]`, s.
    pub window: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SondeOffsets {
    pub sonde_id: u8,
    pub mean: f64,
    /// Cluster mean minus this sonde's mean.
    pub dt_rel: f64,
    /// This sonde's mean minus the reference mean.
    pub dt_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreLaunchCalibration {
    pub records: Vec<CalibrationRecord>,
    pub offsets: Vec<SondeOffsets>,
    pub reference_mean: f64,
    pub cluster_mean: f64,
}

/// Mean of the points inside `[t0, t1]`, requiring at least
/// [`MIN_CALIBRATION_WINDOW`] seconds between first and last.
pub fn window_mean(points: &[(f64, f64)], window: (f64, f64), who: &str) -> Result<f64, IngestError> {
    let inside: Vec<&(f64, f64)> = points.iter().filter(|(t, _)| *t >= window.0 && *t <= window.1).collect();
    let span = match (inside.first(), inside.last()) {
        (Some(a), Some(b)) => b.0 - a.0,
        _ => 0.0,
    };
    if inside.is_empty() || span < MIN_CALIBRATION_WINDOW {
        return Err(IngestError::InsufficientOverlap { who: who.to_string(), span });
    }
    Ok(inside.iter().map(|(_, v)| v).sum::<f64>() / inside.len() as f64)
}

/// Offsets of every sonde against the cluster mean (`ΔT_rel`) and against
/// the unshielded reference (`ΔT_abs`, used as the temperature correction).
pub fn pre_launch_offsets(
    cluster: &[(u8, Vec<(f64, f64)>)],
    reference: &[(f64, f64)],
    window: (f64, f64),
) -> Result<PreLaunchCalibration, IngestError> {
    if !(window.1 > window.0) {
        return Err(IngestError::EmptyWindow(window.0, window.1));
    }
    if cluster.is_empty() {
        return Err(IngestError::NoCalibratedSondes);
    }
    let reference_mean = window_mean(reference, window, "reference")?;
    let means = cluster
        .iter()
        .map(|(id, pts)| window_mean(pts, window, &format!("sonde {id}")).map(|m| (*id, m)))
        .collect::<Result<Vec<_>, _>>()?;
    let cluster_mean = means.iter().map(|(_, m)| m).sum::<f64>() / means.len() as f64;
    let offsets: Vec<SondeOffsets> = means
        .iter()
        .map(|&(sonde_id, mean)| SondeOffsets {
            sonde_id,
            mean,
            dt_rel: cluster_mean - mean,
            dt_abs: mean - reference_mean,
        })
        .collect();
    let records = offsets
        .iter()
        .map(|o| CalibrationRecord {
            sonde_id: o.sonde_id,
            temp_offset: o.dt_abs,
            rh_offset: 0.0,
            pressure_offset: 0.0,
            window: [window.0, window.1],
        })
        .collect();
    Ok(PreLaunchCalibration { records, offsets, reference_mean, cluster_mean })
}

/// Radiation offset: unshielded minus shielded reference mean over the
/// window.
pub fn radiation_offset(
    unshielded: &[(f64, f64)],
    shielded: &[(f64, f64)],
    window: (f64, f64),
) -> Result<f64, IngestError> {
    Ok(window_mean(unshielded, window, "unshielded reference")?
        - window_mean(shielded, window, "shielded reference")?)
}

fn shift_i16(raw: i16, delta: i64, sonde_id: u8, field: &'static str) -> Result<i16, IngestError> {
    i16::try_from(raw as i64 + delta).map_err(|_| IngestError::CalibrationOverflow { sonde_id, field })
}

fn shift_u16(raw: u16, delta: i64, sonde_id: u8, field: &'static str) -> Result<u16, IngestError> {
    u16::try_from(raw as i64 + delta).map_err(|_| IngestError::CalibrationOverflow { sonde_id, field })
}

fn shift_u32(raw: u32, delta: i64, sonde_id: u8, field: &'static str) -> Result<u32, IngestError> {
    u32::try_from(raw as i64 + delta).map_err(|_| IngestError::CalibrationOverflow { sonde_id, field })
}

fn quantized_offsets(cal: &CalibrationRecord) -> (i64, i64, i64) {
    (
        (cal.temp_offset * 100.0).round() as i64,
        (cal.rh_offset * 100.0).round() as i64,
        cal.pressure_offset.round() as i64,
    )
}

/// Subtract the offsets in the packet's integer units, so that
/// [`remove_calibration`] restores the raw packet bit for bit.
pub fn apply_calibration(p: &TelemetryPacket, cal: &CalibrationRecord) -> Result<TelemetryPacket, IngestError> {
    let (t, rh, pa) = quantized_offsets(cal);
    Ok(TelemetryPacket {
        temperature: shift_i16(p.temperature, -t, p.sonde_id, "temperature")?,
        humidity: shift_u16(p.humidity, -rh, p.sonde_id, "humidity")?,
        pressure: shift_u32(p.pressure, -pa, p.sonde_id, "pressure")?,
        ..*p
    })
}

pub fn remove_calibration(p: &TelemetryPacket, cal: &CalibrationRecord) -> Result<TelemetryPacket, IngestError> {
    let (t, rh, pa) = quantized_offsets(cal);
    Ok(TelemetryPacket {
        temperature: shift_i16(p.temperature, t, p.sonde_id, "temperature")?,
        humidity: shift_u16(p.humidity, rh, p.sonde_id, "humidity")?,
        pressure: shift_u32(p.pressure, pa, p.sonde_id, "pressure")?,
        ..*p
    })
}

// ---------------------------------------------------------------------------
// regular series

/// Regularly gridded channel with explicit gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSeries {
    pub sonde_id: u8,
    pub quantity: String,
    pub step: f64,
    pub start: f64,
    pub values: Vec<Option<f64>>,
}

impl ChannelSeries {
    pub fn with_label(mut self, sonde_id: u8, quantity: &str) -> Self {
        self.sonde_id = sonde_id;
        self.quantity = quantity.to_string();
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.time(i))
    }

    pub fn missing(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// Grid index of `t`, if `t` lies on this grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = ((t - self.start) / self.step).round();
        if k < 0.0 || k as usize >= self.len() {
            return None;
        }
        ((self.time(k as usize) - t).abs() <= 1e-6 * self.step).then_some(k as usize)
    }

    pub fn at(&self, t: f64) -> Option<f64> {
        self.index_of(t).and_then(|i| self.values[i])
    }

    /// Longest run without missing values, as `(first index, slice)`.
    pub fn longest_complete_run(&self) -> (usize, Vec<f64>) {
        let mut best = (0, 0);
        let mut start = 0;
        for i in 0..=self.len() {
            if i == self.len() || self.values[i].is_none() {
                if i - start > best.1 - best.0 {
                    best = (start, i);
                }
                start = i + 1;
            }
        }
        let run = self.values[best.0..best.1].iter().map(|v| v.expect("complete run")).collect();
        (best.0, run)
    }

    /// Write as CSV `time_s,<quantity>`; missing values are empty cells.
    pub fn persist(&self, path: &Path) -> Result<(), IngestError> {
        let mut out = format!("time_s,{}\n", self.quantity);
        for (i, v) in self.values.iter().enumerate() {
            match v {
                Some(v) => out.push_str(&format!("{},{}\n", self.time(i), v)),
                None => out.push_str(&format!("{},\n", self.time(i))),
            }
        }
        let mut f = fs::File::create(path).map_err(io_err(path))?;
        f.write_all(out.as_bytes()).map_err(io_err(path))
    }

    /// Read a series written by [`ChannelSeries::persist`]. With
    /// `step = None` the step is inferred from the first two rows.
    pub fn load(path: &Path, sonde_id: u8, step: Option<f64>) -> Result<Self, IngestError> {
        let parse_err = |line: u64, message: String| IngestError::Parse { path: path.to_path_buf(), line, message };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| parse_err(0, e.to_string()))?;
        let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
        if headers.len() != 2 || &headers[0] != "time_s" {
            return Err(parse_err(1, format!("expected header `time_s,<quantity>`, got {headers:?}")));
        }
        let quantity = headers[1].to_string();
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                parse_err(line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != 2 {
                return Err(parse_err(line, format!("expected 2 fields, got {}", rec.len())));
            }
            let t: f64 = rec[0].trim().parse().map_err(|e| parse_err(line, format!("bad time `{}`: {e}", &rec[0])))?;
            let v = match rec[1].trim() {
                "" => None,
                s => Some(s.parse::<f64>().map_err(|e| parse_err(line, format!("bad value `{s}`: {e}")))?),
            };
            times.push((line, t));
            values.push(v);
        }
        let step = match step {
            Some(s) => s,
            None if times.len() >= 2 => times[1].1 - times[0].1,
            None => return Err(parse_err(1, "cannot infer the grid step from fewer than 2 rows".into())),
        };
        if !(step > 0.0) {
            return Err(IngestError::InvalidStep(step));
        }
        let start = times.first().map_or(0.0, |t| t.1);
        for (i, &(line, t)) in times.iter().enumerate() {
            let expected = start + i as f64 * step;
            if (t - expected).abs() > 1e-6 * step {
                return Err(parse_err(line, format!("time {t} off the regular grid (expected {expected})")));
            }
        }
        Ok(Self { sonde_id, quantity, step, start, values })
    }
}

/// Linear interpolation onto the absolute grid `k · step`. Grid points
/// farther than `max_gap · step` from every source point stay missing.
pub fn resample(points: &[(f64, f64)], step: f64, max_gap: f64) -> Result<ChannelSeries, IngestError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(IngestError::InvalidStep(step));
    }
    if points.len() < 2 {
        return Err(IngestError::TooFewPoints(points.len()));
    }
    if let Some(i) = points.windows(2).position(|w| !(w[1].0 > w[0].0)) {
        return Err(IngestError::NotIncreasing(i + 1));
    }
    let first = points[0].0;
    let last = points[points.len() - 1].0;
    let k0 = (first / step).ceil();
    let k1 = (last / step).floor();
    let start = k0 * step;
    let n = if k1 >= k0 { (k1 - k0) as usize + 1 } else { 0 };
    let limit = max_gap * step;
    let slack = 1e-9 * step;

    let mut values = Vec::with_capacity(n);
    let mut j = 0; // points[j].0 <= t < points[j + 1].0
    for i in 0..n {
        let t = (start + i as f64 * step).clamp(first, last);
        while j + 2 < points.len() && points[j + 1].0 <= t {
            j += 1;
        }
        let (a, b) = (points[j], points[j + 1]);
        let nearest = (t - a.0).min(b.0 - t);
        if nearest > limit + slack {
            values.push(None);
            continue;
        }
        if t == a.0 {
            values.push(Some(a.1));
        } else if t == b.0 {
            values.push(Some(b.1));
        } else {
            values.push(Some(a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0)));
        }
    }
    Ok(ChannelSeries { sonde_id: 0, quantity: "value".into(), step, start, values })
}

// ---------------------------------------------------------------------------
// manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEntry {
    pub sonde_id: u8,
    pub quantity: String,
    /// Relative to the manifest's directory.
    pub path: String,
    pub start: f64,
    pub step: f64,
    pub len: usize,
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub step: f64,
    pub max_gap: f64,
    pub sondes: Vec<u8>,
    pub packets_per_sonde: BTreeMap<u8, usize>,
    pub channels: Vec<ChannelEntry>,
    pub calibration: Option<PreLaunchCalibration>,
    /// Sondes without enough pre-launch data; their readings are raw.
    pub uncalibrated: Vec<u8>,
    pub radiation_offset: Option<f64>,
    pub anomalies: Vec<DedupeAnomaly>,
    pub rejected_packets: usize,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| IngestError::Parse {
            path: path.to_path_buf(),
            line: e.line() as u64,
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        let text = serde_json::to_string_pretty(self).expect("serializable");
        fs::write(path, text + "\n").map_err(io_err(path))
    }

    pub fn channel(&self, sonde_id: u8, quantity: &str) -> Option<&ChannelEntry> {
        self.channels.iter().find(|c| c.sonde_id == sonde_id && c.quantity == quantity)
    }

    /// Load one channel relative to `base` (the manifest directory).
    pub fn load_channel(&self, base: &Path, sonde_id: u8, quantity: &str) -> Result<Option<ChannelSeries>, IngestError> {
        let Some(entry) = self.channel(sonde_id, quantity) else {
            return Ok(None);
        };
        let mut s = ChannelSeries::load(&base.join(&entry.path), sonde_id, Some(entry.step))?;
        s.start = entry.start;
        Ok(Some(s))
    }
}

/// Channels extracted from every packet.
pub const QUANTITIES: [&str; 9] =
    ["temperature", "humidity", "pressure", "lon", "lat", "altitude", "vel_n", "vel_e", "vel_d"];

fn channel_value(p: &TelemetryPacket, quantity: &str) -> f64 {
    let s = p.to_sample();
    match quantity {
        "temperature" => s.temperature,
        "humidity" => s.humidity,
        "pressure" => s.pressure,
        "lon" => s.lon,
        "lat" => s.lat,
        "altitude" => s.altitude,
        "vel_n" => s.vel_ned[0],
        "vel_e" => s.vel_ned[1],
        "vel_d" => s.vel_ned[2],
        _ => unreachable!("unknown quantity {quantity}"),
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationInput {
    pub reference: Vec<(f64, f64)>,
    pub shielded: Option<Vec<(f64, f64)>>,
    /// Defaults to the time span of `reference`.
    pub window: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub step: f64,
    pub max_gap: f64,
    pub calibration: Option<CalibrationInput>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self { step: CLUSTER_STEP, max_gap: DEFAULT_MAX_GAP, calibration: None }
    }
}

#[derive(Debug, Clone)]
pub struct IngestOutput {
    pub manifest: Manifest,
    pub series: Vec<ChannelSeries>,
    /// Unique packets after calibration, sorted by `(sonde_id, seq)`.
    pub packets: Vec<TelemetryPacket>,
}

/// Read a two-column `time_s,<value>` CSV as raw points, skipping empty
/// cells. Rows need not be regular.
pub fn load_points(path: &Path) -> Result<Vec<(f64, f64)>, IngestError> {
    let parse_err = |line: u64, message: String| IngestError::Parse { path: path.to_path_buf(), line, message };
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(0, e.to_string()))?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() < 2 {
            return Err(parse_err(line, "expected 2 fields".into()));
        }
        if rec[1].trim().is_empty() {
            continue;
        }
        let t: f64 = rec[0].trim().parse().map_err(|e| parse_err(line, format!("bad time: {e}")))?;
        let v: f64 = rec[1].trim().parse().map_err(|e| parse_err(line, format!("bad value: {e}")))?;
        out.push((t, v));
    }
    Ok(out)
}

/// Dedupe, calibrate and resample every sonde's channels.
pub fn ingest(records: &[ReceptionRecord], opts: &IngestOptions) -> Result<IngestOutput, IngestError> {
    let deduped = dedupe(records);
    let mut by_sonde: BTreeMap<u8, Vec<TelemetryPacket>> = BTreeMap::new();
    for p in deduped.packets {
        by_sonde.entry(p.sonde_id).or_default().push(p);
    }

    let mut calibration = None;
    let mut uncalibrated = Vec::new();
    let mut radiation = None;
    if let Some(cal) = &opts.calibration {
        let window = match cal.window {
            Some(w) => w,
            None => match (cal.reference.first(), cal.reference.last()) {
                (Some(a), Some(b)) => (a.0, b.0),
                _ => return Err(IngestError::EmptyWindow(0.0, 0.0)),
            },
        };
        let mut cluster = Vec::new();
        for (&id, packets) in &by_sonde {
            let pts: Vec<(f64, f64)> = packets.iter().map(|p| (p.tow_ms as f64 / 1e3, channel_value(p, "temperature"))).collect();
            if window_mean(&pts, window, "").is_ok() {
                cluster.push((id, pts));
            } else {
                uncalibrated.push(id);
            }
        }
        if cluster.is_empty() {
            return Err(IngestError::NoCalibratedSondes);
        }
        calibration = Some(pre_launch_offsets(&cluster, &cal.reference, window)?);
        if let Some(sh) = &cal.shielded {
            radiation = Some(radiation_offset(&cal.reference, sh, window)?);
        }
    }

    let mut series = Vec::new();
    let mut channels = Vec::new();
    let mut calibrated = Vec::new();
    let mut packets_per_sonde = BTreeMap::new();
    for (&id, packets) in &by_sonde {
        packets_per_sonde.insert(id, packets.len());
        let record = calibration.as_ref().and_then(|c: &PreLaunchCalibration| c.records.iter().find(|r| r.sonde_id == id));
        let packets: Vec<TelemetryPacket> = match record {
            Some(r) => packets.iter().map(|p| apply_calibration(p, r)).collect::<Result<_, _>>()?,
            None => packets.clone(),
        };
        calibrated.extend_from_slice(&packets);
        // seq order is transmit order; duplicate times cannot occur
        let times: Vec<f64> = packets.iter().map(|p| p.tow_ms as f64 / 1e3).collect();
        if times.len() < 2 {
            continue;
        }
        for q in QUANTITIES {
            let pts: Vec<(f64, f64)> = times.iter().zip(&packets).map(|(&t, p)| (t, channel_value(p, q))).collect();
            let s = resample(&pts, opts.step, opts.max_gap)?.with_label(id, q);
            channels.push(ChannelEntry {
                sonde_id: id,
                quantity: q.to_string(),
                path: format!("series/sonde_{id:02}_{q}.csv"),
                start: s.start,
                step: s.step,
                len: s.len(),
                missing: s.missing(),
            });
            series.push(s);
        }
    }

    let manifest = Manifest {
        step: opts.step,
        max_gap: opts.max_gap,
        sondes: by_sonde.keys().copied().collect(),
        packets_per_sonde,
        channels,
        calibration,
        uncalibrated,
        radiation_offset: radiation,
        anomalies: deduped.anomalies,
        rejected_packets: deduped.rejected,
    };
    Ok(IngestOutput { manifest, series, packets: calibrated })
}

/// Write series CSVs, the decoded samples (`samples.jsonl`) and
/// `manifest.json` under `out_dir`.
pub fn write_output(out_dir: &Path, output: &IngestOutput) -> Result<PathBuf, IngestError> {
    let series_dir = out_dir.join("series");
    fs::create_dir_all(&series_dir).map_err(io_err(&series_dir))?;
    for (entry, s) in output.manifest.channels.iter().zip(&output.series) {
        s.persist(&out_dir.join(&entry.path))?;
    }
    let samples: Vec<_> = output.packets.iter().map(|p| p.to_sample()).collect();
    write_jsonl(&out_dir.join(SAMPLES_FILE), &samples)?;
    let path = out_dir.join("manifest.json");
    output.manifest.save(&path)?;
    Ok(path)
}
