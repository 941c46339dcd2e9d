use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::GRAVITY;

pub const BV_BIN_WIDTH: f64 = 25.0;
pub const BV_REFERENCE_TEMPERATURE: f64 = 281.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Neutral,
    /// Ensemble members disagree.
    Mixed,
}

impl Stability {
    fn of(n2: f64) -> Self {
        if n2 > 0.0 {
            Self::Stable
        } else if n2 < 0.0 {
            Self::Unstable
        } else {
            Self::Neutral
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BvBin {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub mean_altitude: Option<f64>,
    pub mean_temperature: Option<f64>,
}

/// N² between bin `i` and bin `i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BvBoundary {
    pub altitude: f64,
    pub n2: Option<f64>,
    pub label: Option<Stability>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BvProfile {
    pub bin_width: f64,
    pub t0: f64,
    pub bins: Vec<BvBin>,
    pub boundaries: Vec<BvBoundary>,
}

impl BvProfile {
    fn first_index(&self) -> i64 {
        (self.bins[0].lo / self.bin_width).round() as i64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("altitude_m,n2_s2,label\n");
        for b in &self.boundaries {
            let n2 = b.n2.map_or(String::new(), |v| v.to_string());
            let label = b.label.map_or(String::new(), |l| format!("{l:?}").to_lowercase());
            out.push_str(&format!("{},{n2},{label}\n", b.altitude));
        }
        out
    }
}

/// `N² = g · δT / T0 / Δz` with absolute temperatures.
pub fn bv_n2(delta_t: f64, delta_z: f64, t0: f64) -> f64 {
    GRAVITY * (delta_t / t0) / delta_z
}

/// Bin `(altitude m, temperature K)` samples and take N² between adjacent
/// bin means. `Δz` is the distance between the bins' mean altitudes.
pub fn bv_profile(samples: &[(f64, f64)], bin_width: f64, t0: f64) -> Result<BvProfile, AnalysisError> {
    if !(bin_width > 0.0) {
        return Err(AnalysisError::InvalidBinWidth(bin_width));
    }
    if samples.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let index = |z: f64| (z / bin_width).floor() as i64;
    let lo = samples.iter().map(|s| index(s.0)).min().expect("non-empty");
    let hi = samples.iter().map(|s| index(s.0)).max().expect("non-empty");
    if hi == lo {
        return Err(AnalysisError::SingleBin);
    }
    let mut acc = vec![(0usize, 0.0, 0.0); (hi - lo + 1) as usize];
    for &(z, t) in samples {
        let a = &mut acc[(index(z) - lo) as usize];
        a.0 += 1;
        a.1 += z;
        a.2 += t;
    }
    let bins: Vec<BvBin> = acc
        .iter()
        .enumerate()
        .map(|(i, &(n, z, t))| {
            let k = (lo + i as i64) as f64;
            BvBin {
                lo: k * bin_width,
                hi: (k + 1.0) * bin_width,
                n,
                mean_altitude: (n > 0).then(|| z / n as f64),
                mean_temperature: (n > 0).then(|| t / n as f64),
            }
        })
        .collect();
    let boundaries = bins
        .windows(2)
        .map(|w| {
            let n2 = match (w[0].mean_altitude, w[0].mean_temperature, w[1].mean_altitude, w[1].mean_temperature) {
                (Some(z0), Some(t0_), Some(z1), Some(t1)) => Some(bv_n2(t1 - t0_, z1 - z0, t0)),
                _ => None,
            };
            BvBoundary { altitude: w[0].hi, n2, label: n2.map(Stability::of) }
        })
        .collect();
    Ok(BvProfile { bin_width, t0, bins, boundaries })
}

/// Average several profiles on the union of their bins. A boundary is
/// labelled stable or unstable only when every profile has it and all
/// agree; otherwise it is mixed.
pub fn bv_ensemble(profiles: &[BvProfile]) -> Result<BvProfile, AnalysisError> {
    let first = profiles.first().ok_or(AnalysisError::Empty)?;
    if profiles.iter().any(|p| p.bin_width != first.bin_width || p.bins.is_empty()) {
        return Err(AnalysisError::MisalignedBins);
    }
    let w = first.bin_width;
    let lo = profiles.iter().map(|p| p.first_index()).min().expect("non-empty");
    let hi = profiles.iter().map(|p| p.first_index() + p.bins.len() as i64 - 1).max().expect("non-empty");
    let nb = (hi - lo + 1) as usize;

    let mut bins = Vec::with_capacity(nb);
    for i in 0..nb {
        let k = lo + i as i64;
        let members: Vec<&BvBin> = profiles
            .iter()
            .filter_map(|p| p.bins.get(usize::try_from(k - p.first_index()).ok()?))
            .filter(|b| b.n > 0)
            .collect();
        let m = members.len();
        let mean = |f: fn(&BvBin) -> Option<f64>| (m > 0).then(|| members.iter().filter_map(|b| f(b)).sum::<f64>() / m as f64);
        bins.push(BvBin {
            lo: k as f64 * w,
            hi: (k + 1) as f64 * w,
            n: members.iter().map(|b| b.n).sum(),
            mean_altitude: mean(|b| b.mean_altitude),
            mean_temperature: mean(|b| b.mean_temperature),
        });
    }

    let mut boundaries = Vec::with_capacity(nb.saturating_sub(1));
    for i in 0..nb.saturating_sub(1) {
        let k = lo + i as i64;
        let values: Vec<Option<f64>> = profiles
            .iter()
            .map(|p| {
                let j = usize::try_from(k - p.first_index()).ok()?;
                p.boundaries.get(j)?.n2
            })
            .collect();
        let present: Vec<f64> = values.iter().flatten().copied().collect();
        let n2 = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
        let label = if present.is_empty() {
            None
        } else if present.len() < values.len() {
            Some(Stability::Mixed)
        } else {
            let first = Stability::of(present[0]);
            Some(if present.iter().all(|&v| Stability::of(v) == first) { first } else { Stability::Mixed })
        };
        boundaries.push(BvBoundary { altitude: (k + 1) as f64 * w, n2, label });
    }
    Ok(BvProfile { bin_width: w, t0: first.t0, bins, boundaries })
}
