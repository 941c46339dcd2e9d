use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::stereo::PositionTrack;
use super::AnalysisError;
use crate::geo::GeodeticAnchor;
use crate::ingest::ChannelSeries;

pub const Q_CADENCE: f64 = 10.0;
pub const Q_AVERAGING: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantityKind {
    Distance,
    Temperature,
    Humidity,
    Velocity,
}

impl QuantityKind {
    pub const ALL: [QuantityKind; 4] = [Self::Distance, Self::Temperature, Self::Humidity, Self::Velocity];

    /// m, K, %RH, m/s
    pub fn default_bin_width(self) -> f64 {
        match self {
            Self::Distance => 100.0,
            Self::Temperature => 1.0,
            Self::Humidity => 2.0,
            Self::Velocity => 0.75,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Distance => "distance",
            Self::Temperature => "temperature",
            Self::Humidity => "humidity",
            Self::Velocity => "velocity",
        }
    }
}

impl FromStr for QuantityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| format!("unknown quantity `{s}`"))
    }
}

/// Readings of every sonde at one instant. Non-finite entries mark sondes
/// without data.
#[derive(Debug, Clone, PartialEq)]
pub enum Snapshot {
    Positions(Vec<[f64; 3]>),
    Scalars(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceNeighborGraph {
    pub kind: QuantityKind,
    pub h: f64,
    pub time: f64,
    /// Sondes taking part; averaged over snapshots for aggregated graphs.
    pub n: f64,
    pub snapshots: usize,
    /// Sonde readings dropped as non-finite.
    pub excluded: usize,
    /// Ordered pair counts per bin `[n·h, (n+1)·h)`.
    pub counts: Vec<u64>,
    pub q: Vec<f64>,
}

impl DistanceNeighborGraph {
    /// `Σ Q`; for a single snapshot this is `N − 1` exactly.
    pub fn q_sum(&self) -> f64 {
        if self.snapshots == 1 {
            self.counts.iter().sum::<u64>() as f64 / self.n
        } else {
            self.q.iter().sum()
        }
    }

    pub fn first_bin(&self) -> f64 {
        self.q.first().copied().unwrap_or(0.0)
    }

    /// `Σ Q_n c_n² / Σ Q_n` with bin centres `c_n = (n + ½) h`.
    pub fn second_moment(&self) -> f64 {
        let total: f64 = self.q.iter().sum();
        if total == 0.0 {
            return 0.0;
        }
        self.q.iter().enumerate().map(|(n, q)| q * ((n as f64 + 0.5) * self.h).powi(2)).sum::<f64>() / total
    }
}

/// Richardson's distance-neighbor graph for one snapshot.
pub fn distance_neighbor_graph(
    snapshot: &Snapshot,
    kind: QuantityKind,
    h: f64,
    time: f64,
) -> Result<DistanceNeighborGraph, AnalysisError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(AnalysisError::InvalidBinWidth(h));
    }
    let (n, total, separations) = match (snapshot, kind) {
        (Snapshot::Positions(p), QuantityKind::Distance) => {
            let ok: Vec<&[f64; 3]> = p.iter().filter(|v| v.iter().all(|c| c.is_finite())).collect();
            let sep = pairwise(ok.len(), |i, j| {
                let d = [ok[i][0] - ok[j][0], ok[i][1] - ok[j][1], ok[i][2] - ok[j][2]];
                (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
            })?;
            (ok.len(), p.len(), sep)
        }
        (Snapshot::Scalars(s), QuantityKind::Temperature | QuantityKind::Humidity | QuantityKind::Velocity) => {
            let ok: Vec<f64> = s.iter().copied().filter(|v| v.is_finite()).collect();
            let sep = pairwise(ok.len(), |i, j| (ok[i] - ok[j]).abs())?;
            (ok.len(), s.len(), sep)
        }
        _ => return Err(AnalysisError::WrongReadings(kind)),
    };

    let mut counts: Vec<u64> = Vec::new();
    for d in separations {
        let bin = (d / h).floor() as usize;
        if counts.len() <= bin {
            counts.resize(bin + 1, 0);
        }
        counts[bin] += 1;
    }
    let q = counts.iter().map(|&c| c as f64 / n as f64).collect();
    Ok(DistanceNeighborGraph { kind, h, time, n: n as f64, snapshots: 1, excluded: total - n, counts, q })
}

/// Separations for every ordered pair `(k, j)`, `k ≠ j`.
fn pairwise(n: usize, dist: impl Fn(usize, usize) -> f64) -> Result<Vec<f64>, AnalysisError> {
    if n < 2 {
        return Err(AnalysisError::TooFewSondes(n));
    }
    let mut out = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        for j in i + 1..n {
            let d = dist(i, j);
            out.push(d);
            out.push(d);
        }
    }
    Ok(out)
}

/// Graphs every `cadence` seconds, averaged over windows of `averaging`
/// seconds counted from the first frame. Snapshots with fewer than two
/// valid sondes are skipped.
pub fn q_graph_timeseries(
    frames: &[(f64, Snapshot)],
    kind: QuantityKind,
    h: f64,
    cadence: f64,
    averaging: f64,
) -> Result<Vec<DistanceNeighborGraph>, AnalysisError> {
    let Some(t0) = frames.first().map(|f| f.0) else {
        return Ok(Vec::new());
    };
    let mut groups: BTreeMap<i64, Vec<DistanceNeighborGraph>> = BTreeMap::new();
    for (t, snap) in frames {
        let k = (t - t0) / cadence;
        if (k - k.round()).abs() > 1e-6 {
            continue;
        }
        match distance_neighbor_graph(snap, kind, h, *t) {
            Ok(g) => groups.entry(((t - t0) / averaging + 1e-9).floor() as i64).or_default().push(g),
            Err(AnalysisError::TooFewSondes(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(groups
        .into_iter()
        .map(|(m, gs)| {
            let bins = gs.iter().map(|g| g.counts.len()).max().unwrap_or(0);
            let mut q = vec![0.0; bins];
            let mut counts = vec![0u64; bins];
            for g in &gs {
                for (i, (c, v)) in g.counts.iter().zip(&g.q).enumerate() {
                    counts[i] += c;
                    q[i] += v;
                }
            }
            let k = gs.len() as f64;
            q.iter_mut().for_each(|v| *v /= k);
            DistanceNeighborGraph {
                kind,
                h,
                time: t0 + m as f64 * averaging,
                n: gs.iter().map(|g| g.n).sum::<f64>() / k,
                snapshots: gs.len(),
                excluded: gs.iter().map(|g| g.excluded).sum(),
                counts,
                q,
            }
        })
        .collect())
}

pub const Q_GRAPH_HEADER: &str = "kind,minute_start_s,snapshots,mean_n,bin,bin_lo,q\n";
pub const Q_MOMENT_HEADER: &str = "kind,minute_start_s,h,first_bin_q,second_moment\n";

/// Long-format rows, one per graph bin, matching [`Q_GRAPH_HEADER`].
pub fn q_graph_rows(graphs: &[DistanceNeighborGraph]) -> String {
    let mut out = String::new();
    for g in graphs {
        for (bin, q) in g.q.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{},{},{},{q}", g.kind.name(), g.time, g.snapshots, g.n, bin, bin as f64 * g.h);
        }
    }
    out
}

/// One row per graph, matching [`Q_MOMENT_HEADER`].
pub fn q_moment_rows(graphs: &[DistanceNeighborGraph]) -> String {
    let mut out = String::new();
    for g in graphs {
        let _ = writeln!(out, "{},{},{},{},{}", g.kind.name(), g.time, g.h, g.first_bin(), g.second_moment());
    }
    out
}

fn common_grid(starts: impl Iterator<Item = (f64, f64, usize)>) -> Result<(f64, f64, usize), AnalysisError> {
    let mut step = None;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (start, s, len) in starts {
        match step {
            None => step = Some(s),
            Some(prev) if prev != s => return Err(AnalysisError::GridMismatch(prev, s)),
            _ => {}
        }
        if len > 0 {
            lo = lo.min(start);
            hi = hi.max(start + (len - 1) as f64 * s);
        }
    }
    let step = step.ok_or(AnalysisError::Empty)?;
    if lo > hi {
        return Err(AnalysisError::Empty);
    }
    Ok((lo, step, ((hi - lo) / step).round() as usize + 1))
}

/// Snapshots of scalar series on the union of their (shared-step) grids.
pub fn scalar_frames(series: &[ChannelSeries]) -> Result<Vec<(f64, Snapshot)>, AnalysisError> {
    let (start, step, n) = common_grid(series.iter().map(|s| (s.start, s.step, s.len())))?;
    Ok((0..n)
        .map(|i| {
            let t = start + i as f64 * step;
            (t, Snapshot::Scalars(series.iter().map(|s| s.at(t).unwrap_or(f64::NAN)).collect()))
        })
        .collect())
}

/// Position snapshots in a tangent frame at the first available fix.
pub fn position_frames(tracks: &[PositionTrack]) -> Result<Vec<(f64, Snapshot)>, AnalysisError> {
    let (start, step, n) = common_grid(tracks.iter().map(|t| (t.start, t.step, t.fixes.len())))?;
    let first = tracks.iter().flat_map(|t| t.fixes.iter().flatten()).next().ok_or(AnalysisError::Empty)?;
    let anchor = GeodeticAnchor::new(first[0], first[1], first[2]);
    let at = |tr: &PositionTrack, t: f64| -> Option<[f64; 3]> {
        let k = ((t - tr.start) / tr.step).round();
        if k < 0.0 {
            return None;
        }
        let f = (*tr.fixes.get(k as usize)?)?;
        Some(anchor.to_enu(f[0], f[1], f[2]).into())
    };
    Ok((0..n)
        .map(|i| {
            let t = start + i as f64 * step;
            (t, Snapshot::Positions(tracks.iter().map(|tr| at(tr, t).unwrap_or([f64::NAN; 3])).collect()))
        })
        .collect())
}
