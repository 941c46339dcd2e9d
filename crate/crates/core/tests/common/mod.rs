#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use sha2::{Digest, Sha256};
use sonde_core::flight::SensorSample;

/// A sample with every field inside the codec's representable range.
pub fn random_sample<R: Rng>(rng: &mut R) -> SensorSample {
    let mut v3 = |lim: f64| [rng.gen_range(-lim..lim), rng.gen_range(-lim..lim), rng.gen_range(-lim..lim)];
    let vel = v3(60.0);
    let accel = v3(16.0);
    let mag = v3(4.0);
    let q = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let n = q.iter().map(|c: &f64| c * c).sum::<f64>().sqrt().max(1e-3);
    SensorSample {
        sonde_id: rng.gen(),
        time: rng.gen_range(0.0..604_799.0),
        pressure: rng.gen_range(10_000.0..110_000.0),
        temperature: rng.gen_range(193.15..323.15),
        humidity: rng.gen_range(0.0..100.0),
        lon: rng.gen_range(-180.0..180.0),
        lat: rng.gen_range(-90.0..90.0),
        altitude: rng.gen_range(-500.0..12_000.0),
        vel_ned: vel,
        accel_body: accel,
        mag_body: mag,
        orientation: [q[0] / n, q[1] / n, q[2] / n, q[3] / n],
    }
}

/// SHA-256 of every file under `dir`, keyed by relative path.
pub fn tree_hashes(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, hex::encode(Sha256::digest(std::fs::read(&path).unwrap())));
            }
        }
    }
    out
}

/// Hash of a whole tree.
pub fn tree_hash(dir: &Path) -> String {
    let mut h = Sha256::new();
    for (k, v) in tree_hashes(dir) {
        h.update(k.as_bytes());
        h.update(v.as_bytes());
    }
    hex::encode(h.finalize())
}
