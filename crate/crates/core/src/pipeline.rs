//! The three file-based stages: simulate a campaign, ingest the station
//! logs, analyze the ingested series.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::neighbor::{
    position_frames, q_graph_rows, q_moment_rows, scalar_frames, Q_GRAPH_HEADER, Q_MOMENT_HEADER,
};
use crate::analysis::spectrum::spectrum_of;
use crate::analysis::stereo::{camera_to_enu, enu_to_camera};
use crate::analysis::{
    self, binned_temp_comparison, bv_ensemble, bv_profile, fit_linear_drift, gnss_relative_distance, loglog_slope,
    q_graph_timeseries, rmse_mbe, AnalysisError, DistanceNeighborGraph, PositionTrack, QuantityKind, Snapshot,
    StereoFrame, StereoRig,
};
use crate::config::{ConfigError, SimulationConfig};
use crate::flight::{FlightError, SensorSample, SondeFlight, SondeTruthState};
use crate::fusion::{self, FusionError};
use crate::ingest::{self, ChannelSeries, IngestError, IngestOptions, Manifest};
use crate::rng::{self, Domain};
use crate::telemetry::{self, CodecError, ReceptionRecord, StationSummary, TxEvent};

pub const TRUTH_FILE: &str = "truth.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const REFERENCE_USH_FILE: &str = "reference_ush.csv";
pub const REFERENCE_SH_FILE: &str = "reference_sh.csv";
pub const STEREO_FILE: &str = "stereo_tracks.csv";

/// Analyses accepted by [`analyze`], in execution order.
pub const ANALYSES: [&str; 8] =
    ["rmse-mbe", "binned-comparison", "drift-fit", "spectrum", "bv", "q-graphs", "stereo-check", "fusion"];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Flight(#[from] FlightError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl PipelineError {
    /// Input the user can fix (exit code 1) as opposed to a runtime
    /// failure (exit code 2).
    pub fn is_validation(&self) -> bool {
        matches!(self, Self::Config(_) | Self::Usage(_))
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| PipelineError::Io { path: dir.to_path_buf(), source })?;
    }
    fs::write(path, contents).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })
}

/// `(time, value)` pairs.
type Series = Vec<(f64, f64)>;

/// Per-sonde `(time, frame)` rows.
pub type StereoTracks = BTreeMap<u8, Vec<(f64, Option<StereoFrame>)>>;

fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub sonde_id: u8,
    /// GPS time of week, s.
    pub time: f64,
    /// ENU metres from the launch point.
    pub enu: [f64; 3],
    pub lon: f64,
    pub lat: f64,
    pub altitude: f64,
    pub velocity: [f64; 3],
    pub temperature: f64,
    pub pressure: f64,
    pub humidity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StereoRow {
    pub time: f64,
    pub sonde_id: u8,
    pub frame: Option<StereoFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub seed: u64,
    pub sondes: u8,
    pub release_tow: f64,
    pub packets_sent: BTreeMap<u8, usize>,
    pub stations: Vec<StationSummary>,
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub summary: SimulationSummary,
    /// Sorted by `(sonde_id, time)`.
    pub truth: Vec<TruthRecord>,
    pub receptions: BTreeMap<u32, Vec<ReceptionRecord>>,
    pub reference_ush: Vec<(f64, f64)>,
    pub reference_sh: Vec<(f64, f64)>,
    pub stereo: Vec<StereoRow>,
}

fn gauss<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        sigma * rng.sample::<f64, _>(StandardNormal)
    }
}

/// Truth position at `t` (seconds since power-on) by linear interpolation
/// between ticks.
fn position_at(truth: &[(SondeTruthState, crate::flight::Ambient)], t: f64) -> Vector3<f64> {
    let i = truth.partition_point(|(s, _)| s.time <= t);
    if i == 0 {
        return truth[0].0.position;
    }
    if i == truth.len() {
        return truth[i - 1].0.position;
    }
    let (a, b) = (&truth[i - 1].0, &truth[i].0);
    let w = (t - a.time) / (b.time - a.time);
    a.position * (1.0 - w) + b.position * w
}

struct SondeOutput {
    truth: Vec<(SondeTruthState, crate::flight::Ambient)>,
    events: Vec<TxEvent>,
}

fn fly_sonde(cfg: &SimulationConfig, id: u8) -> Result<SondeOutput, PipelineError> {
    let end = cfg.prelaunch_s + cfg.duration_s;
    let mut sched_rng = rng::stream(cfg.seed, Domain::Schedule, u64::from(id));
    let schedule = telemetry::transmit_schedule(0.0, end, cfg.channel.period_range, &mut sched_rng);
    let angle = std::f64::consts::TAU * f64::from(id - 1) / f64::from(cfg.sondes);
    let flight = SondeFlight {
        seed: cfg.seed,
        sonde_id: id,
        anchor: cfg.launch,
        launch_offset: Vector3::new(angle.cos(), angle.sin(), 0.0) * cfg.launch_spread_m,
        prelaunch: cfg.prelaunch_s,
        duration: cfg.duration_s,
        tick: cfg.tick_s,
        time_offset: cfg.start_tow_s,
        dynamics: cfg.dynamics(),
        errors: cfg.sensor_for(id),
    };
    let run = flight.run(&cfg.wind, &cfg.ambient, &schedule)?;
    let mut events = Vec::with_capacity(run.samples.len());
    for (seq, (sample, &t)) in run.samples.iter().zip(&schedule).enumerate() {
        events.push(TxEvent {
            sonde_id: id,
            seq: seq as u16,
            time: cfg.start_tow_s + t,
            position: position_at(&run.truth, t),
            bytes: telemetry::encode(sample, seq as u16)?,
        });
    }
    Ok(SondeOutput { truth: run.truth, events })
}

/// Run the whole campaign in memory.
pub fn simulate(cfg: &SimulationConfig) -> Result<SimulationOutput, PipelineError> {
    let mut cfg = cfg.clone();
    cfg.sync_seeds();
    cfg.validate()?;

    let mut truth = Vec::new();
    let mut events = Vec::new();
    let mut tracks = BTreeMap::new();
    let mut packets_sent = BTreeMap::new();
    for id in 1..=cfg.sondes {
        let out = fly_sonde(&cfg, id)?;
        packets_sent.insert(id, out.events.len());
        for (s, amb) in &out.truth {
            let (lon, lat, alt) = s.anchor.to_geodetic(&s.position);
            truth.push(TruthRecord {
                sonde_id: id,
                time: cfg.start_tow_s + s.time,
                enu: s.position.into(),
                lon,
                lat,
                altitude: alt,
                velocity: s.velocity.into(),
                temperature: amb.temperature,
                pressure: amb.pressure,
                humidity: amb.humidity,
            });
        }
        events.extend(out.events);
        tracks.insert(id, out.truth);
    }
    events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.sonde_id.cmp(&b.sonde_id)));

    let mut receptions = BTreeMap::new();
    let mut stations = Vec::new();
    for st in &cfg.stations {
        let recs = telemetry::receive_at(&events, st, &cfg.channel);
        stations.push(telemetry::summarize(st.id, &recs));
        receptions.insert(st.id, recs);
    }

    let release = cfg.start_tow_s + cfg.prelaunch_s;
    let (reference_ush, reference_sh) = reference_logs(&cfg, release);
    let stereo = stereo_rows(&cfg, &tracks);

    Ok(SimulationOutput {
        summary: SimulationSummary { seed: cfg.seed, sondes: cfg.sondes, release_tow: release, packets_sent, stations },
        truth,
        receptions,
        reference_ush,
        reference_sh,
        stereo,
    })
}

/// Unshielded and shielded launch-site thermometers over the window that
/// ends at release.
fn reference_logs(cfg: &SimulationConfig, release: f64) -> (Series, Series) {
    let r = &cfg.reference;
    let n = (r.window_s / r.interval_s).round() as usize;
    let air = cfg.ambient.mean_at(cfg.launch.alt).temperature;
    let mut ush_rng = rng::keyed(cfg.seed, Domain::Ambient, &[u64::MAX, 0]);
    let mut sh_rng = rng::keyed(cfg.seed, Domain::Ambient, &[u64::MAX, 1]);
    let radiation = if cfg.ambient.sun_exposed { cfg.sensor.radiation_offset } else { 0.0 };
    let mut ush = Vec::with_capacity(n + 1);
    let mut sh = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = release - r.window_s + k as f64 * r.interval_s;
        ush.push((t, air + radiation + gauss(&mut ush_rng, r.noise_sigma)));
        sh.push((t, air + gauss(&mut sh_rng, r.noise_sigma)));
    }
    (ush, sh)
}

fn stereo_rows(cfg: &SimulationConfig, tracks: &BTreeMap<u8, Vec<(SondeTruthState, crate::flight::Ambient)>>) -> Vec<StereoRow> {
    let s = &cfg.stereo;
    let rig = StereoRig { focal_px: s.focal_px, baseline: s.baseline_m };
    let origin = Vector3::from(s.origin);
    let (heading, elevation) = (s.heading_deg.to_radians(), s.elevation_deg.to_radians());
    let frames = (s.duration_s / s.frame_interval_s).round() as usize;
    let mut rows = Vec::new();
    for k in 0..=frames {
        let t = cfg.prelaunch_s + k as f64 * s.frame_interval_s;
        if t > cfg.prelaunch_s + cfg.duration_s {
            break;
        }
        for &id in &s.sondes {
            let Some(track) = tracks.get(&id) else { continue };
            let p = enu_to_camera(&position_at(track, t), &origin, heading, elevation);
            let mut noise = rng::keyed(cfg.seed, Domain::Sensor, &[u64::MAX - 1, u64::from(id), k as u64]);
            let frame = rig.project(&p).map(|f| {
                let dv = gauss(&mut noise, s.pixel_sigma);
                StereoFrame {
                    a: [f.a[0] + gauss(&mut noise, s.pixel_sigma), f.a[1] + dv],
                    b: [f.b[0] + gauss(&mut noise, s.pixel_sigma), f.b[1] + dv],
                }
            });
            rows.push(StereoRow { time: cfg.start_tow_s + t, sonde_id: id, frame });
        }
    }
    rows
}

fn points_csv(quantity: &str, points: &[(f64, f64)]) -> String {
    let mut out = format!("time_s,{quantity}\n");
    for (t, v) in points {
        out.push_str(&format!("{t},{v}\n"));
    }
    out
}

pub fn reception_file(station: u32) -> String {
    format!("reception_{station}.jsonl")
}

/// Write the simulation products under `dir`.
pub fn write_simulation(dir: &Path, cfg: &SimulationConfig, out: &SimulationOutput) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|source| PipelineError::Io { path: dir.to_path_buf(), source })?;
    ingest::write_jsonl(&dir.join(TRUTH_FILE), &out.truth)?;
    for (id, recs) in &out.receptions {
        ingest::write_jsonl(&dir.join(reception_file(*id)), recs)?;
    }
    write(&dir.join(REFERENCE_USH_FILE), points_csv("temperature", &out.reference_ush))?;
    write(&dir.join(REFERENCE_SH_FILE), points_csv("temperature", &out.reference_sh))?;
    let mut stereo = String::from("time_s,sonde_id,ua,va,ub,vb\n");
    for r in &out.stereo {
        match r.frame {
            Some(f) => stereo.push_str(&format!("{},{},{},{},{},{}\n", r.time, r.sonde_id, f.a[0], f.a[1], f.b[0], f.b[1])),
            None => stereo.push_str(&format!("{},{},,,,\n", r.time, r.sonde_id)),
        }
    }
    write(&dir.join(STEREO_FILE), stereo)?;
    write(&dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&out.summary).expect("serializable") + "\n")?;
    let mut resolved = cfg.clone();
    resolved.sync_seeds();
    write(&dir.join("config.toml"), resolved.to_toml())
}

// ---------------------------------------------------------------------------
// ingest

/// Reception logs found in a simulation directory, by file name.
pub fn reception_logs(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let entries = fs::read_dir(dir).map_err(|source| PipelineError::Io { path: dir.to_path_buf(), source })?;
    let mut logs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("reception_") && n.ends_with(".jsonl"))
        })
        .collect();
    logs.sort();
    Ok(logs)
}

/// Dedupe, calibrate and resample the logs in `sim_dir` into `out_dir`.
pub fn run_ingest(sim_dir: &Path, out_dir: &Path, cfg: &SimulationConfig) -> Result<Manifest, PipelineError> {
    let logs = reception_logs(sim_dir)?;
    if logs.is_empty() {
        return Err(PipelineError::Usage(format!("no reception_*.jsonl logs in {}", sim_dir.display())));
    }
    let mut records = Vec::new();
    for log in &logs {
        records.extend(ingest::load_reception_log(log)?);
    }
    let calibration = if cfg.ingest.calibrate {
        let ush = sim_dir.join(REFERENCE_USH_FILE);
        if !ush.exists() {
            return Err(PipelineError::Usage(format!(
                "calibration requested but {} is missing",
                ush.display()
            )));
        }
        let sh = sim_dir.join(REFERENCE_SH_FILE);
        Some(ingest::CalibrationInput {
            reference: ingest::load_points(&ush)?,
            shielded: if sh.exists() { Some(ingest::load_points(&sh)?) } else { None },
            window: None,
        })
    } else {
        None
    };
    let opts = IngestOptions { step: cfg.ingest.step_s, max_gap: cfg.ingest.max_gap, calibration };
    let output = ingest::ingest(&records, &opts)?;
    ingest::write_output(out_dir, &output)?;
    Ok(output.manifest)
}

// ---------------------------------------------------------------------------
// analyze

struct Inputs<'a> {
    dir: &'a Path,
    manifest: Manifest,
    cfg: &'a SimulationConfig,
    sim_dir: Option<&'a Path>,
    truth: Option<BTreeMap<(u8, i64), TruthRecord>>,
}

fn ms(t: f64) -> i64 {
    (t * 1e3).round() as i64
}

impl Inputs<'_> {
    fn channel(&self, sonde: u8, q: &str) -> Result<Option<ChannelSeries>, PipelineError> {
        Ok(self.manifest.load_channel(self.dir, sonde, q)?)
    }

    fn release(&self) -> f64 {
        self.cfg.start_tow_s + self.cfg.prelaunch_s
    }

    /// Points of a channel from release onwards.
    fn flight_points(&self, s: &ChannelSeries) -> Vec<(f64, Option<f64>)> {
        let release = self.release();
        s.times().zip(s.values.iter().copied()).filter(|(t, _)| *t >= release).collect()
    }

    fn truth(&self) -> Result<&BTreeMap<(u8, i64), TruthRecord>, PipelineError> {
        self.truth.as_ref().ok_or_else(|| PipelineError::Usage("this analysis needs --sim with truth.jsonl".into()))
    }

    fn position_track(&self, sonde: u8) -> Result<Option<PositionTrack>, PipelineError> {
        let (Some(lon), Some(lat), Some(alt)) =
            (self.channel(sonde, "lon")?, self.channel(sonde, "lat")?, self.channel(sonde, "altitude")?)
        else {
            return Ok(None);
        };
        Ok(Some(PositionTrack::from_channels(&lon, &lat, &alt)?))
    }

    fn speed(&self, sonde: u8) -> Result<Option<ChannelSeries>, PipelineError> {
        let (Some(n), Some(e)) = (self.channel(sonde, "vel_n")?, self.channel(sonde, "vel_e")?) else {
            return Ok(None);
        };
        let values = n.values.iter().zip(&e.values).map(|(a, b)| Some((*a)?.hypot((*b)?))).collect();
        Ok(Some(ChannelSeries { quantity: "wind_speed".into(), values, ..n }))
    }
}

fn load_truth(path: &Path) -> Result<BTreeMap<(u8, i64), TruthRecord>, PipelineError> {
    let text = fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let r: TruthRecord = serde_json::from_str(line).map_err(|e| IngestError::Parse {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            message: e.to_string(),
        })?;
        out.insert((r.sonde_id, ms(r.time)), r);
    }
    Ok(out)
}

/// Run the named analyses on an ingest directory and write CSVs into
/// `out_dir`. Returns the summary also written to `analysis_summary.json`.
pub fn analyze(
    ingest_dir: &Path,
    sim_dir: Option<&Path>,
    out_dir: &Path,
    cfg: &SimulationConfig,
    names: &[String],
) -> Result<BTreeMap<String, serde_json::Value>, PipelineError> {
    if let Some(bad) = names.iter().find(|n| !ANALYSES.contains(&n.as_str())) {
        return Err(PipelineError::Usage(format!("unknown analysis `{bad}`; expected one of {}", ANALYSES.join(", "))));
    }
    let mut summary = BTreeMap::new();
    if names.is_empty() {
        return Ok(summary);
    }
    let manifest = Manifest::load(&ingest_dir.join("manifest.json"))?;
    let truth = match sim_dir {
        Some(d) if d.join(TRUTH_FILE).exists() => Some(load_truth(&d.join(TRUTH_FILE))?),
        _ => None,
    };
    let inp = Inputs { dir: ingest_dir, manifest, cfg, sim_dir, truth };
    fs::create_dir_all(out_dir).map_err(|source| PipelineError::Io { path: out_dir.to_path_buf(), source })?;

    for name in ANALYSES.iter().filter(|a| names.iter().any(|n| n == *a)) {
        let value = match *name {
            "rmse-mbe" => rmse_mbe_stage(&inp, out_dir)?,
            "binned-comparison" => binned_stage(&inp, out_dir)?,
            "drift-fit" => drift_stage(&inp, out_dir)?,
            "spectrum" => spectrum_stage(&inp, out_dir)?,
            "bv" => bv_stage(&inp, out_dir)?,
            "q-graphs" => q_stage(&inp, out_dir)?,
            "stereo-check" => stereo_stage(&inp, out_dir)?,
            "fusion" => fusion_stage(&inp, out_dir)?,
            _ => unreachable!(),
        };
        summary.insert(name.to_string(), value);
    }
    write(&out_dir.join("analysis_summary.json"), serde_json::to_string_pretty(&summary).expect("serializable") + "\n")?;
    Ok(summary)
}

fn truth_value(r: &TruthRecord, q: &str) -> f64 {
    match q {
        "temperature" => r.temperature,
        "humidity" => r.humidity,
        "pressure" => r.pressure,
        "altitude" => r.altitude,
        "lon" => r.lon,
        "lat" => r.lat,
        _ => unreachable!(),
    }
}

/// `(time, measured, truth)` on the grid.
fn paired(inp: &Inputs, sonde: u8, q: &str) -> Result<Vec<(f64, f64, TruthRecord)>, PipelineError> {
    let truth = inp.truth()?;
    let Some(s) = inp.channel(sonde, q)? else { return Ok(Vec::new()) };
    Ok(s.times()
        .zip(&s.values)
        .filter_map(|(t, v)| Some((t, (*v)?, truth.get(&(sonde, ms(t)))?.clone())))
        .collect())
}

fn rmse_mbe_stage(inp: &Inputs, out: &Path) -> Result<serde_json::Value, PipelineError> {
    let mut csv = String::from("sonde_id,quantity,n,rmse,mbe\n");
    let mut rows = 0;
    for &sonde in &inp.manifest.sondes {
        for q in ["lon", "lat", "altitude", "pressure", "temperature", "humidity"] {
            let p = paired(inp, sonde, q)?;
            if p.is_empty() {
                continue;
            }
            let a: Vec<f64> = p.iter().map(|x| x.1).collect();
            let b: Vec<f64> = p.iter().map(|x| truth_value(&x.2, q)).collect();
            let s = rmse_mbe(&a, &b)?;
            csv.push_str(&format!("{sonde},{q},{},{},{}\n", s.n, s.rmse, s.mbe));
            rows += 1;
        }
    }
    write(&out.join("rmse_mbe.csv"), csv)?;
    Ok(serde_json::json!({ "rows": rows }))
}

fn temperature_pairs(inp: &Inputs, sonde: u8) -> Result<Vec<(f64, f64, f64)>, PipelineError> {
    let release = inp.release();
    Ok(paired(inp, sonde, "temperature")?
        .into_iter()
        .filter(|(t, _, _)| *t >= release)
        .map(|(_, v, r)| (r.altitude, v, r.temperature))
        .collect())
}

fn binned_stage(inp: &Inputs, out: &Path) -> Result<serde_json::Value, PipelineError> {
    let mut csv = String::from("sonde_id,bin_lo_m,bin_hi_m,n,mean_diff_k,normalized_diff,ref_min_k,ref_max_k\n");
    let mut sondes = 0;
    for &sonde in &inp.manifest.sondes {
        let samples = temperature_pairs(inp, sonde)?;
        if samples.is_empty() {
            continue;
        }
        let s = binned_temp_comparison(&samples, inp.cfg.analyze.comparison_bin_m)?;
        for b in &s.bins {
            csv.push_str(&format!(
                "{sonde},{},{},{},{},{},{},{}\n",
                b.lo,
                b.hi,
                b.n,
                cell(b.mean_diff),
                cell(b.normalized_diff),
                cell(b.ref_min),
                cell(b.ref_max)
            ));
        }
        sondes += 1;
    }
    write(&out.join("binned_comparison.csv"), csv)?;
    Ok(serde_json::json!({ "sondes": sondes }))
}

fn drift_stage(inp: &Inputs, out: &Path) -> Result<serde_json::Value, PipelineError> {
    let threshold = inp.cfg.analyze.drift_threshold_m;
    let mut csv = String::from("sonde_id,threshold_m,n,slope_k_per_m,intercept_k,slope_stderr,note\n");
    let mut fitted = 0;
    for &sonde in &inp.manifest.sondes {
        let pts: Vec<(f64, f64)> = temperature_pairs(inp, sonde)?.iter().map(|(z, t, r)| (*z, t - r)).collect();
        match fit_linear_drift(&pts, threshold) {
            Ok(f) => {
                csv.push_str(&format!("{sonde},{threshold},{},{},{},{},\n", f.n, f.slope, f.intercept, f.slope_stderr));
                fitted += 1;
            }
            Err(AnalysisError::TooFewPoints { got, .. }) => {
                csv.push_str(&format!("{sonde},{threshold},{got},,,,too few points above threshold\n"));
            }
            Err(e) => return Err(e.into()),
        }
    }
    write(&out.join("drift_fit.csv"), csv)?;
    Ok(serde_json::json!({ "fitted": fitted }))
}

/// Longest gap-free stretch of the flight part of a series.
fn longest_flight_run(inp: &Inputs, s: &ChannelSeries) -> Vec<f64> {
    let pts = inp.flight_points(s);
    let mut best: &[(f64, Option<f64>)] = &[];
    for run in pts.split(|p| p.1.is_none()) {
        if run.len() > best.len() {
            best = run;
        }
    }
    best.iter().map(|p| p.1.expect("split on gaps")).collect()
}

fn spectrum_stage(inp: &Inputs, out: &Path) -> Result<serde_json::Value, PipelineError> {
    let a = &inp.cfg.analyze;
    let mut summary = String::from("sonde_id,quantity,len,f_min_hz,f_max_hz,variance,loglog_slope\n");
    let mut count = 0;
    for &sonde in &inp.manifest.sondes {
        let mut series = Vec::new();
        if let Some(s) = inp.speed(sonde)? {
            series.push(s);
        }
        for q in ["temperature", "humidity"] {
            if let Some(s) = inp.channel(sonde, q)? {
                series.push(s);
            }
        }
        for s in series {
            let values = longest_flight_run(inp, &s);
            let spec = match spectrum_of(&values, s.step, a.detrend, a.window) {
                Ok(spec) => spec,
                Err(AnalysisError::TooFewPoints { .. }) => continue,
                Err(e) => return Err(e.into()),
            };
            let slope = loglog_slope(&spec, spec.f_min() * 3.0, spec.f_max());
            write(&out.join(format!("spectra/{}_sonde_{sonde:02}.csv", s.quantity)), spec.to_csv())?;
            summary.push_str(&format!(
                "{sonde},{},{},{},{},{},{}\n",
                s.quantity,
                spec.len,
                spec.f_min(),
                spec.f_max(),
                spec.variance,
                cell(slope)
            ));
            count += 1;
        }
    }
    write(&out.join("spectrum_summary.csv"), summary)?;
    Ok(serde_json::json!({ "spectra": count }))
}

fn bv_stage(inp: &Inputs, out: &Path) -> Result<serde_json::Value, PipelineError> {
    let a = &inp.cfg.analyze;
    let mut profiles = Vec::new();
    for &sonde in &inp.manifest.sondes {
        let (Some(z), Some(t)) = (inp.channel(sonde, "altitude")?, inp.channel(sonde, "temperature")?) else {
            continue;
        };
        let samples: Vec<(f64, f64)> = inp
            .flight_points(&z)
            .into_iter()
            .zip(inp.flight_points(&t))
            .filter_map(|((_, z), (_, t))| Some((z?, t?)))
            .collect();
        match bv_profile(&samples, a.bv_bin_m, a.bv_t0) {
            Ok(p) => {
                write(&out.join(format!("bv/bv_sonde_{sonde:02}.csv")), p.to_csv())?;
                profiles.push(p);
            }
            Err(AnalysisError::SingleBin | AnalysisError::Empty) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    let mut stable = 0;
    if !profiles.is_empty() {
        let e = bv_ensemble(&profiles)?;
        stable = e.boundaries.iter().filter(|b| b.label == Some(analysis::Stability::Stable)).count();
        write(&out.join("bv_ensemble.csv"), e.to_csv())?;
    }
    Ok(serde_json::json!({ "profiles": profiles.len(), "ensemble_stable_boundaries": stable }))
}

fn flight_frames(inp: &Inputs, frames: Vec<(f64, Snapshot)>) -> Vec<(f64, Snapshot)> {
    let release = inp.release();
    frames.into_iter().filter(|(t, _)| *t >= release).collect()
}

fn q_stage(inp: &Inputs, out: &Path) -> Result<serde_json::Value, PipelineError> {
    let a = &inp.cfg.analyze;
    let mut tracks = Vec::new();
    let mut temperature = Vec::new();
    let mut humidity = Vec::new();
    let mut speed = Vec::new();
    for &sonde in &inp.manifest.sondes {
        tracks.extend(inp.position_track(sonde)?);
        temperature.extend(inp.channel(sonde, "temperature")?);
        humidity.extend(inp.channel(sonde, "humidity")?);
        speed.extend(inp.speed(sonde)?);
    }
    let mut csv = String::from(Q_GRAPH_HEADER);
    let mut moments = String::from(Q_MOMENT_HEADER);
    let mut minutes = BTreeMap::new();
    let inputs = [
        (QuantityKind::Distance, a.h_distance, position_frames(&tracks)),
        (QuantityKind::Temperature, a.h_temperature, scalar_frames(&temperature)),
        (QuantityKind::Humidity, a.h_humidity, scalar_frames(&humidity)),
        (QuantityKind::Velocity, a.h_velocity, scalar_frames(&speed)),
    ];
    for (kind, h, frames) in inputs {
        let frames = match frames {
            Ok(f) => flight_frames(inp, f),
            Err(AnalysisError::Empty) => continue,
            Err(e) => return Err(e.into()),
        };
        let graphs = q_graph_timeseries(&frames, kind, h, a.q_cadence_s, a.q_average_s)?;
        csv.push_str(&q_graph_rows(&graphs));
        moments.push_str(&q_moment_rows(&graphs));
        minutes.insert(kind.name().to_string(), graphs.len());
    }
    write(&out.join("q_graphs.csv"), csv)?;
    write(&out.join("q_moments.csv"), moments)?;
    Ok(serde_json::to_value(minutes).expect("serializable"))
}

/// Read `stereo_tracks.csv` into per-sonde `(time, frame)` rows.
pub fn load_stereo(path: &Path) -> Result<StereoTracks, PipelineError> {
    let parse_err = |line: u64, message: String| IngestError::Parse { path: path.to_path_buf(), line, message };
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(0, e.to_string()))?;
    let mut out: BTreeMap<u8, Vec<(f64, Option<StereoFrame>)>> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<Option<f64>, IngestError> {
            let s = rec.get(i).unwrap_or("").trim();
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|e| parse_err(line, format!("column {i}: {e}")))
        };
        let t = num(0)?.ok_or_else(|| parse_err(line, "missing time".into()))?;
        let id: u8 = rec.get(1).unwrap_or("").trim().parse().map_err(|e| parse_err(line, format!("sonde id: {e}")))?;
        let frame = match (num(2)?, num(3)?, num(4)?, num(5)?) {
            (Some(ua), Some(va), Some(ub), Some(vb)) => Some(StereoFrame { a: [ua, va], b: [ub, vb] }),
            _ => None,
        };
        out.entry(id).or_default().push((t, frame));
    }
    Ok(out)
}

fn stereo_stage(inp: &Inputs, out: &Path) -> Result<serde_json::Value, PipelineError> {
    let sim = inp.sim_dir.ok_or_else(|| PipelineError::Usage("stereo-check needs --sim".into()))?;
    let s = &inp.cfg.stereo;
    let rig = StereoRig { focal_px: s.focal_px, baseline: s.baseline_m };
    let rows = load_stereo(&sim.join(STEREO_FILE))?;
    let [ia, ib] = s.sondes;
    let (Some(ra), Some(rb)) = (rows.get(&ia), rows.get(&ib)) else {
        return Ok(serde_json::json!({ "frames": 0 }));
    };
    let gnss = match (inp.position_track(ia)?, inp.position_track(ib)?) {
        (Some(a), Some(b)) => Some(gnss_relative_distance(&a, &b)?),
        _ => None,
    };
    let (origin, heading, elevation) = (Vector3::from(s.origin), s.heading_deg.to_radians(), s.elevation_deg.to_radians());
    let mut csv = String::from("time_s,stereo_2d_m,stereo_3d_m,gnss_2d_m,gnss_3d_m\n");
    let mut diffs = Vec::new();
    for ((t, fa), (_, fb)) in ra.iter().zip(rb) {
        let pa = fa.and_then(|f| rig.triangulate(&f)).map(|p| camera_to_enu(&p, &origin, heading, elevation));
        let pb = fb.and_then(|f| rig.triangulate(&f)).map(|p| camera_to_enu(&p, &origin, heading, elevation));
        let (s2, s3) = match (pa, pb) {
            (Some(a), Some(b)) => (Some((a - b).xy().norm()), Some((a - b).norm())),
            _ => (None, None),
        };
        let (g2, g3) = gnss
            .as_ref()
            .and_then(|g| {
                let k = ((t - g.start) / g.step).round();
                if k < 0.0 || (g.time(k as usize) - t).abs() > 1e-6 {
                    return None;
                }
                Some((*g.horizontal.get(k as usize)?, *g.slant.get(k as usize)?))
            })
            .unwrap_or((None, None));
        if let (Some(a), Some(b)) = (s2, g2) {
            diffs.push((a - b).abs());
        }
        csv.push_str(&format!("{t},{},{},{},{}\n", cell(s2), cell(s3), cell(g2), cell(g3)));
    }
    write(&out.join("stereo_check.csv"), csv)?;
    let mean = (!diffs.is_empty()).then(|| diffs.iter().sum::<f64>() / diffs.len() as f64);
    Ok(serde_json::json!({ "compared": diffs.len(), "mean_abs_diff_2d_m": mean }))
}

fn fusion_stage(inp: &Inputs, out: &Path) -> Result<serde_json::Value, PipelineError> {
    let path = inp.dir.join(ingest::SAMPLES_FILE);
    let text = fs::read_to_string(&path).map_err(|source| PipelineError::Io { path: path.clone(), source })?;
    let mut by_sonde: BTreeMap<u8, Vec<SensorSample>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let s: SensorSample = serde_json::from_str(line).map_err(|e| IngestError::Parse {
            path: path.clone(),
            line: i as u64 + 1,
            message: e.to_string(),
        })?;
        by_sonde.entry(s.sonde_id).or_default().push(s);
    }
    let e = &inp.cfg.sensor;
    let noise = fusion::measurement_noise(
        e.gnss_horizontal_sigma.max(0.1),
        e.gnss_vertical_sigma.max(0.1),
        e.gnss_speed_sigma.max(0.01),
    );
    let mut tracks = 0;
    for (sonde, samples) in &by_sonde {
        let fused = fusion::fuse_track(samples, &inp.cfg.launch, noise, inp.cfg.analyze.kalman_accel_sigma)?;
        let mut csv = String::from("time_s,gnss_e,gnss_n,gnss_u,fused_e,fused_n,fused_u\n");
        for p in &fused {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                p.time, p.gnss[0], p.gnss[1], p.gnss[2], p.fused[0], p.fused[1], p.fused[2]
            ));
        }
        write(&out.join(format!("fusion/fused_track_sonde_{sonde:02}.csv")), csv)?;
        tracks += 1;
    }
    Ok(serde_json::json!({ "tracks": tracks }))
}

// ---------------------------------------------------------------------------
// cluster dispersion

/// Minute-averaged distance-neighbor graphs of the true sonde positions
/// after release.
pub fn truth_dispersion(out: &SimulationOutput, h: f64, cadence: f64, averaging: f64) -> Result<Vec<DistanceNeighborGraph>, PipelineError> {
    let release = out.summary.release_tow;
    let mut by_time: BTreeMap<i64, Vec<[f64; 3]>> = BTreeMap::new();
    for r in out.truth.iter().filter(|r| r.time >= release) {
        by_time.entry(ms(r.time)).or_default().push(r.enu);
    }
    let frames: Vec<(f64, Snapshot)> =
        by_time.into_iter().map(|(t, p)| (t as f64 / 1e3, Snapshot::Positions(p))).collect();
    Ok(q_graph_timeseries(&frames, QuantityKind::Distance, h, cadence, averaging)?)
}
