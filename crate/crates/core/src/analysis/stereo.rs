use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::geo::GeodeticAnchor;
use crate::ingest::ChannelSeries;

/// Rectified pinhole pair. Camera B sits `baseline` metres to the right of
/// camera A; pixel coordinates are relative to the principal point with
/// `v` pointing up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StereoRig {
    pub focal_px: f64,
    pub baseline: f64,
}

impl Default for StereoRig {
    fn default() -> Self {
        Self { focal_px: 1000.0, baseline: 16.0 }
    }
}

/// One object seen by both cameras in the same frame, `[u, v]` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StereoFrame {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl StereoRig {
    /// Camera-A frame point (x right, y up, z forward). `None` when the
    /// disparity is not positive.
    pub fn triangulate(&self, f: &StereoFrame) -> Option<Vector3<f64>> {
        let d = f.a[0] - f.b[0];
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let z = self.focal_px * self.baseline / d;
        Some(Vector3::new(f.a[0] * z / self.focal_px, f.a[1] * z / self.focal_px, z))
    }

    /// Pixel coordinates of a camera-A frame point in both cameras.
    pub fn project(&self, p: &Vector3<f64>) -> Option<StereoFrame> {
        if !(p.z > 0.0) {
            return None;
        }
        let s = self.focal_px / p.z;
        Some(StereoFrame { a: [p.x * s, p.y * s], b: [(p.x - self.baseline) * s, p.y * s] })
    }
}

/// Camera-A frame to ENU for a camera at `origin` looking along azimuth
/// `heading` (radians clockwise from north), tilted up by `elevation`.
pub fn camera_to_enu(p: &Vector3<f64>, origin: &Vector3<f64>, heading: f64, elevation: f64) -> Vector3<f64> {
    let (r, u, f) = camera_axes(heading, elevation);
    origin + r * p.x + u * p.y + f * p.z
}

/// Inverse of [`camera_to_enu`].
pub fn enu_to_camera(p: &Vector3<f64>, origin: &Vector3<f64>, heading: f64, elevation: f64) -> Vector3<f64> {
    let (r, u, f) = camera_axes(heading, elevation);
    let d = p - origin;
    Vector3::new(d.dot(&r), d.dot(&u), d.dot(&f))
}

/// Right, up and forward unit vectors in ENU.
fn camera_axes(heading: f64, elevation: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let (sh, ch) = heading.sin_cos();
    let (se, ce) = elevation.sin_cos();
    (
        Vector3::new(ch, -sh, 0.0),
        Vector3::new(-sh * se, -ch * se, ce),
        Vector3::new(sh * ce, ch * ce, se),
    )
}

pub fn triangulate_track(rig: &StereoRig, frames: &[StereoFrame]) -> Vec<Option<Vector3<f64>>> {
    frames.iter().map(|f| rig.triangulate(f)).collect()
}

/// Frame-by-frame separation of two tracked objects. Frames where either
/// point is invalid are `None`.
pub fn stereo_distance(rig: &StereoRig, first: &[StereoFrame], second: &[StereoFrame]) -> Result<Vec<Option<f64>>, AnalysisError> {
    if first.len() != second.len() {
        return Err(AnalysisError::LengthMismatch(first.len(), second.len()));
    }
    Ok(first
        .iter()
        .zip(second)
        .map(|(a, b)| Some((rig.triangulate(a)? - rig.triangulate(b)?).norm()))
        .collect())
}

/// Geodetic fixes on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionTrack {
    pub start: f64,
    pub step: f64,
    /// `[lon, lat, alt]`
    pub fixes: Vec<Option<[f64; 3]>>,
}

impl PositionTrack {
    pub fn from_channels(lon: &ChannelSeries, lat: &ChannelSeries, alt: &ChannelSeries) -> Result<Self, AnalysisError> {
        for s in [lat, alt] {
            if s.step != lon.step || s.start != lon.start {
                return Err(AnalysisError::GridMismatch(lon.step, s.step));
            }
            if s.len() != lon.len() {
                return Err(AnalysisError::LengthMismatch(lon.len(), s.len()));
            }
        }
        let fixes = (0..lon.len())
            .map(|i| Some([lon.values[i]?, lat.values[i]?, alt.values[i]?]))
            .collect();
        Ok(Self { start: lon.start, step: lon.step, fixes })
    }

    pub fn time(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    fn index(&self, t: f64) -> Option<usize> {
        let k = ((t - self.start) / self.step).round();
        (k >= 0.0 && (k as usize) < self.fixes.len()).then_some(k as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceSeries {
    pub start: f64,
    pub step: f64,
    pub horizontal: Vec<Option<f64>>,
    pub slant: Vec<Option<f64>>,
}

impl DistanceSeries {
    pub fn time(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        let mut out = String::from("time_s,distance_2d_m,distance_3d_m\n");
        for i in 0..self.horizontal.len() {
            out.push_str(&format!("{},{},{}\n", self.time(i), cell(self.horizontal[i]), cell(self.slant[i])));
        }
        out
    }
}

/// Separation of two sondes in a local tangent frame anchored at the first
/// common fix of `a`.
pub fn gnss_relative_distance(a: &PositionTrack, b: &PositionTrack) -> Result<DistanceSeries, AnalysisError> {
    if a.step != b.step {
        return Err(AnalysisError::GridMismatch(a.step, b.step));
    }
    let t0 = a.start.max(b.start);
    let t1 = a.time(a.fixes.len().saturating_sub(1)).min(b.time(b.fixes.len().saturating_sub(1)));
    if a.fixes.is_empty() || b.fixes.is_empty() || t1 < t0 {
        return Err(AnalysisError::NoOverlap);
    }
    let n = ((t1 - t0) / a.step).round() as usize + 1;
    let pairs: Vec<Option<([f64; 3], [f64; 3])>> = (0..n)
        .map(|i| {
            let t = t0 + i as f64 * a.step;
            Some((a.fixes[a.index(t)?]?, b.fixes[b.index(t)?]?))
        })
        .collect();
    let anchor = pairs.iter().flatten().next().ok_or(AnalysisError::NoOverlap)?.0;
    let anchor = GeodeticAnchor::new(anchor[0], anchor[1], anchor[2]);
    let diffs: Vec<Option<Vector3<f64>>> = pairs
        .iter()
        .map(|p| {
            p.map(|(fa, fb)| anchor.to_enu(fb[0], fb[1], fb[2]) - anchor.to_enu(fa[0], fa[1], fa[2]))
        })
        .collect();
    Ok(DistanceSeries {
        start: t0,
        step: a.step,
        horizontal: diffs.iter().map(|d| d.map(|d| d.xy().norm())).collect(),
        slant: diffs.iter().map(|d| d.map(|d| d.norm())).collect(),
    })
}
