//! Acceptance suite. Prints one PASS/FAIL line per criterion. Set
//! `ACCEPTANCE_STRICT=1` to turn any FAIL into a non-zero exit.

mod common;

use std::path::Path;
use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use sonde_core::analysis::{
    bv_n2, bv_profile, distance_neighbor_graph, loglog_slope, spectrum::spectrum_of, stereo_distance, QuantityKind,
    Snapshot, StereoRig, Window,
};
use sonde_core::balloon::{attainable_altitude, balloon_mass, BalloonSpec};
use sonde_core::config::SimulationConfig;
use sonde_core::fusion::OutageScenario;
use sonde_core::ingest::{pre_launch_offsets, radiation_offset};
use sonde_core::pipeline;
use sonde_core::telemetry::{self, CodecError};
use sonde_core::GRAVITY;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn balloon_sizing() -> Outcome {
    let r20 = attainable_altitude(&BalloonSpec { radius: 0.20, ..BalloonSpec::default() }).map_err(|e| e.to_string())?;
    let r21 = attainable_altitude(&BalloonSpec { radius: 0.21, ..BalloonSpec::default() }).map_err(|e| e.to_string())?;
    check(
        (r20 - 1700.0).abs() <= 100.0 && (r21 - 2600.0).abs() <= 250.0,
        format!("R=0.20 m -> {r20:.0} m, R=0.21 m -> {r21:.0} m"),
    )
}

fn balloon_skin_mass() -> Outcome {
    let m = balloon_mass(&BalloonSpec::default()) * 1e3;
    check((m - 12.5).abs() <= 0.1, format!("sheet mass {m:.3} g"))
}

fn codec() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for i in 0..10_000u32 {
        let s = common::random_sample(&mut rng);
        let bytes = telemetry::encode(&s, i as u16).map_err(|e| e.to_string())?;
        let (back, seq) = telemetry::decode(&bytes).map_err(|e| e.to_string())?;
        if back != telemetry::quantized(&s).unwrap() || seq != i as u16 {
            mismatches += 1;
        }
    }
    let mut accepted = 0;
    let mut tried = 0;
    for _ in 0..4 {
        let bytes = telemetry::encode(&common::random_sample(&mut rng), 9).unwrap();
        for pos in 0..bytes.len() {
            for flip in 1..=255u8 {
                let mut bad = bytes;
                bad[pos] ^= flip;
                tried += 1;
                if !matches!(telemetry::decode(&bad), Err(CodecError::CrcMismatch { .. })) {
                    accepted += 1;
                }
            }
        }
    }
    check(
        mismatches == 0 && accepted == 0,
        format!("10000 round trips, {mismatches} mismatches; {tried} single-byte corruptions, {accepted} not caught by CRC"),
    )
}

fn q_conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut bad = 0;
    for i in 0..1000 {
        let n = rng.gen_range(2..=20usize);
        let kind = QuantityKind::ALL[i % 4];
        let snap = match kind {
            QuantityKind::Distance => Snapshot::Positions(
                (0..n)
                    .map(|_| [rng.gen_range(-2e3..2e3), rng.gen_range(-2e3..2e3), rng.gen_range(1e3..3e3)])
                    .collect(),
            ),
            _ => Snapshot::Scalars((0..n).map(|_| rng.gen_range(-10.0..10.0)).collect()),
        };
        let h = kind.default_bin_width();
        let g = distance_neighbor_graph(&snap, kind, h, 0.0).map_err(|e| e.to_string())?;
        if g.q_sum() != (n - 1) as f64 || g.counts.iter().sum::<u64>() != (n * (n - 1)) as u64 {
            bad += 1;
        }
    }
    let line = Snapshot::Positions(vec![[0.0, 0.0, 0.0], [50.0, 0.0, 0.0], [120.0, 0.0, 0.0], [400.0, 0.0, 0.0]]);
    let g = distance_neighbor_graph(&line, QuantityKind::Distance, 100.0, 0.0).unwrap();
    let hand = g.q == vec![1.0, 0.5, 0.5, 0.5, 0.5];
    check(bad == 0 && hand, format!("{bad}/1000 snapshots off N-1; 4-sonde example Q = {:?}", g.q))
}

/// Real series whose one-sided power follows `f^slope`, random phases.
fn power_law_series(len: usize, slope: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    for k in 1..len / 2 {
        let amp = (k as f64).powf(slope / 2.0);
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        buf[k] = Complex::from_polar(amp, phase);
        buf[len - k] = buf[k].conj();
    }
    FftPlanner::new().plan_fft_inverse(len).process(&mut buf);
    buf.iter().map(|c| c.re).collect()
}

fn spectrum() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let len = rng.gen_range(16..2000);
        let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-3.0..3.0) + 280.0).collect();
        let used = &x[..len & !1];
        let mean = used.iter().sum::<f64>() / used.len() as f64;
        let var = used.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / used.len() as f64;
        let s = spectrum_of(&x, 5.0, false, Window::Rect).map_err(|e| e.to_string())?;
        worst = worst.max((s.total_power() - var).abs() / var);
    }
    let mut slopes = Vec::new();
    for _ in 0..5 {
        let x = power_law_series(4096, -5.0 / 3.0, &mut rng);
        let s = spectrum_of(&x, 5.0, false, Window::Rect).unwrap();
        slopes.push(loglog_slope(&s, s.f_min(), s.f_max()).ok_or("no slope")?);
    }
    let slope_ok = slopes.iter().all(|s| (s + 5.0 / 3.0).abs() <= 0.2);
    let x = vec![0.0; 64].iter().enumerate().map(|(i, _)| (i as f64 * 0.3).sin()).collect::<Vec<_>>();
    let f4 = spectrum_of(&x, 4.0, false, Window::Rect).unwrap().f_max();
    let f5 = spectrum_of(&x, 5.0, false, Window::Rect).unwrap().f_max();
    check(
        worst < 1e-6 && slope_ok && f4 == 0.125 && f5 == 0.1,
        format!("Parseval worst rel. error {worst:.2e}; slopes {slopes:.3?}; f_max {f4} / {f5}"),
    )
}

fn brunt_vaisala() -> Outcome {
    let lapse = 0.0065;
    let samples: Vec<(f64, f64)> = (0..=1000).map(|i| 1000.0 + i as f64).map(|z| (z, 288.15 - lapse * z)).collect();
    let p = bv_profile(&samples, 25.0, 281.0).map_err(|e| e.to_string())?;
    let exact = -GRAVITY * lapse / 281.0;
    let worst = p.boundaries.iter().filter_map(|b| b.n2).map(|n| (n - exact).abs()).fold(0.0, f64::max);
    let n2 = bv_n2(1.43, 25.0, 281.0);
    let rounded = (n2 * 1e4).round() / 1e4;
    check(
        worst < 1e-12 && (0.002..=0.007).contains(&rounded),
        format!("linear lapse worst error {worst:.1e}; worked example N2 = {n2:.6} (~{rounded:.4}) s^-2"),
    )
}

fn dispersion() -> Outcome {
    let mut first = Vec::new();
    let mut second = Vec::new();
    for seed in 0..20u64 {
        let cfg = SimulationConfig::default().with_seed(1000 + seed);
        let out = pipeline::simulate(&cfg).map_err(|e| e.to_string())?;
        let graphs = pipeline::truth_dispersion(&out, 100.0, 10.0, 60.0).map_err(|e| e.to_string())?;
        if first.is_empty() {
            first = vec![0.0; graphs.len()];
            second = vec![0.0; graphs.len()];
        }
        for (i, g) in graphs.iter().enumerate().take(first.len()) {
            first[i] += g.first_bin() / 20.0;
            second[i] += g.second_moment() / 20.0;
        }
    }
    let first_break = first.windows(2).position(|w| w[1] > w[0]);
    let second_break = second.windows(2).position(|w| w[1] < w[0]);
    let minute = |b: Option<usize>| b.map_or("none".to_string(), |i| format!("minute {}", i + 1));
    check(
        first_break.is_none() && second_break.is_none() && first.len() > 1,
        format!(
            "{} minutes; first-bin Q rises at {}, second moment falls at {}; Q {:.2} -> {:.2}; moment {:.0} -> {:.0} m2",
            first.len(),
            minute(first_break),
            minute(second_break),
            first[0],
            first[first.len() - 1],
            second[0],
            second[second.len() - 1]
        ),
    )
}

fn fusion_outage() -> Outcome {
    let (_, rms) = OutageScenario::default().ensemble(8, 20);
    check(
        rms.fused < rms.dead_reckoning && rms.fused < rms.interpolated,
        format!(
            "RMS fused {:.2} m, dead reckoning {:.2} m, interpolated {:.2} m",
            rms.fused, rms.dead_reckoning, rms.interpolated
        ),
    )
}

fn stereo() -> Outcome {
    let rig = StereoRig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..60 {
        let p = Vector3::new(rng.gen_range(-40.0..40.0), rng.gen_range(0.0..60.0), rng.gen_range(60.0..250.0));
        let q = p + Vector3::new(rng.gen_range(-30.0..30.0), rng.gen_range(-10.0..10.0), rng.gen_range(-30.0..30.0));
        let d = stereo_distance(&rig, &[rig.project(&p).unwrap()], &[rig.project(&q).unwrap()]).unwrap();
        worst = worst.max((d[0].unwrap() - (p - q).norm()).abs());
    }

    let mut cfg = SimulationConfig { sondes: 2, ..SimulationConfig::default() };
    cfg.channel = telemetry::ChannelModel::perfect();
    cfg.sensor.gnss_horizontal_sigma = 3.5;
    let dir = tempfile::tempdir().unwrap();
    let (sim, ing, ana) = (dir.path().join("sim"), dir.path().join("ingest"), dir.path().join("analysis"));
    let out = pipeline::simulate(&cfg).map_err(|e| e.to_string())?;
    pipeline::write_simulation(&sim, &cfg, &out).map_err(|e| e.to_string())?;
    pipeline::run_ingest(&sim, &ing, &cfg).map_err(|e| e.to_string())?;
    let summary = pipeline::analyze(&ing, Some(&sim), &ana, &cfg, &["stereo-check".to_string()])
        .map_err(|e| e.to_string())?;
    let mean = summary["stereo-check"]["mean_abs_diff_2d_m"].as_f64().ok_or("no GNSS/stereo overlap")?;
    let n = summary["stereo-check"]["compared"].as_u64().unwrap_or(0);
    check(
        worst < 1e-9 && mean < 6.0,
        format!("noiseless worst error {worst:.1e} m; mean |GNSS - stereo| {mean:.2} m over {n} epochs in 60 s"),
    )
}

fn calibration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (sigma, sigma_ref, n) = (0.1, 0.05, 300usize);
    let window = (0.0, n as f64);
    let air = 284.0;
    let mut noise = |s: f64| s * rng.sample::<f64, _>(StandardNormal);
    let reference: Vec<(f64, f64)> = (0..n).map(|i| (i as f64 + 0.5, air + noise(sigma_ref))).collect();
    let biases: Vec<f64> = (0..10).map(|i| 0.2 + 2.4 * i as f64 / 9.0).collect();
    let cluster: Vec<(u8, Vec<(f64, f64)>)> = biases
        .iter()
        .enumerate()
        .map(|(k, b)| (k as u8 + 1, (0..n).map(|i| (i as f64 + 0.5, air + b + noise(sigma))).collect()))
        .collect();
    let cal = pre_launch_offsets(&cluster, &reference, window).map_err(|e| e.to_string())?;
    let tol = 3.0 * (sigma * sigma + sigma_ref * sigma_ref).sqrt() / (n as f64).sqrt();
    let worst = cal.offsets.iter().zip(&biases).map(|(o, b)| (o.dt_abs - b).abs()).fold(0.0, f64::max);

    let ush: Vec<(f64, f64)> = (0..n).map(|i| (i as f64 + 0.5, air + 1.28 + noise(sigma_ref))).collect();
    let sh: Vec<(f64, f64)> = (0..n).map(|i| (i as f64 + 0.5, air + noise(sigma_ref))).collect();
    let rad = radiation_offset(&ush, &sh, window).map_err(|e| e.to_string())?;
    check(
        worst <= tol && (rad - 1.28).abs() <= 0.1,
        format!("worst bias error {worst:.4} K (tolerance {tol:.4}); radiation offset {rad:.3} K"),
    )
}

fn run_pipeline(root: &Path) -> Result<String, String> {
    let cfg = SimulationConfig::default().with_seed(42);
    let (sim, ing, ana) = (root.join("sim"), root.join("ingest"), root.join("analysis"));
    let out = pipeline::simulate(&cfg).map_err(|e| e.to_string())?;
    pipeline::write_simulation(&sim, &cfg, &out).map_err(|e| e.to_string())?;
    pipeline::run_ingest(&sim, &ing, &cfg).map_err(|e| e.to_string())?;
    let names: Vec<String> = pipeline::ANALYSES.iter().map(|s| s.to_string()).collect();
    pipeline::analyze(&ing, Some(&sim), &ana, &cfg, &names).map_err(|e| e.to_string())?;
    Ok(common::tree_hash(root))
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ha = run_pipeline(a.path())?;
    let hb = run_pipeline(b.path())?;
    let files = common::tree_hashes(a.path()).len();
    check(ha == hb, format!("{files} files, hash {}", &ha[..16]))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("balloon sizing", balloon_sizing),
        ("balloon mass", balloon_skin_mass),
        ("codec round trip and CRC", codec),
        ("Q-graph conservation", q_conservation),
        ("spectrum", spectrum),
        ("Brunt-Vaisala", brunt_vaisala),
        ("dispersion widening", dispersion),
        ("fusion across GNSS outage", fusion_outage),
        ("stereo ranging", stereo),
        ("pre-launch calibration", calibration),
        ("end-to-end determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.2} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.2} s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}
