use serde::Serialize;

use super::AnalysisError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinRow {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    /// `<T − T_ref>`
    pub mean_diff: Option<f64>,
    /// `<(T − T_ref) / T_ref>`
    pub normalized_diff: Option<f64>,
    pub ref_min: Option<f64>,
    pub ref_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonStats {
    pub rmse: f64,
    pub mbe: f64,
    pub n: usize,
    pub bins: Vec<BinRow>,
}

/// RMSE and mean bias of `a − b`.
pub fn rmse_mbe(a: &[f64], b: &[f64]) -> Result<ComparisonStats, AnalysisError> {
    if a.len() != b.len() {
        return Err(AnalysisError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let n = a.len() as f64;
    let (sum, sq) = a.iter().zip(b).fold((0.0, 0.0), |(s, q), (x, y)| (s + (x - y), q + (x - y) * (x - y)));
    Ok(ComparisonStats { rmse: (sq / n).sqrt(), mbe: sum / n, n: a.len(), bins: Vec::new() })
}

/// Test-vs-reference temperature differences binned by reference altitude.
/// `samples` holds `(reference altitude m, T K, T_ref K)`. Bins are
/// contiguous from the lowest to the highest populated one; empty bins
/// come back with `None` fields.
pub fn binned_temp_comparison(samples: &[(f64, f64, f64)], bin_width: f64) -> Result<ComparisonStats, AnalysisError> {
    if !(bin_width > 0.0) {
        return Err(AnalysisError::InvalidBinWidth(bin_width));
    }
    let t: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let r: Vec<f64> = samples.iter().map(|s| s.2).collect();
    let mut stats = rmse_mbe(&t, &r)?;

    let index = |z: f64| (z / bin_width).floor() as i64;
    let lo = samples.iter().map(|s| index(s.0)).min().expect("non-empty");
    let hi = samples.iter().map(|s| index(s.0)).max().expect("non-empty");
    let mut acc = vec![(0usize, 0.0, 0.0, f64::INFINITY, f64::NEG_INFINITY); (hi - lo + 1) as usize];
    for &(z, tt, tr) in samples {
        let a = &mut acc[(index(z) - lo) as usize];
        a.0 += 1;
        a.1 += tt - tr;
        a.2 += (tt - tr) / tr;
        a.3 = a.3.min(tr);
        a.4 = a.4.max(tr);
    }
    stats.bins = acc
        .iter()
        .enumerate()
        .map(|(i, &(n, d, nd, mn, mx))| {
            let k = (lo + i as i64) as f64;
            let some = |v: f64| (n > 0).then_some(v);
            BinRow {
                lo: k * bin_width,
                hi: (k + 1.0) * bin_width,
                n,
                mean_diff: some(d / n as f64),
                normalized_diff: some(nd / n as f64),
                ref_min: some(mn),
                ref_max: some(mx),
            }
        })
        .collect();
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub n: usize,
    pub slope_stderr: f64,
}

/// Least-squares line through the `(altitude, difference)` points strictly
/// above `threshold`.
pub fn fit_linear_drift(points: &[(f64, f64)], threshold: f64) -> Result<LinearFit, AnalysisError> {
    let sel: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.0 > threshold).collect();
    if sel.len() < 10 {
        return Err(AnalysisError::TooFewPoints { need: 10, got: sel.len() });
    }
    let n = sel.len() as f64;
    let mx = sel.iter().map(|p| p.0).sum::<f64>() / n;
    let my = sel.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = sel.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = sel.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(AnalysisError::TooFewPoints { need: 2, got: 1 });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = sel.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let slope_stderr = (sse / (n - 2.0) / sxx).sqrt();
    Ok(LinearFit { slope, intercept, n: sel.len(), slope_stderr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Domain};
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn rmse_mbe_examples() {
        let s = rmse_mbe(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((s.rmse, s.mbe), (0.0, 0.0));
        let s = rmse_mbe(&[1.0, -1.0, 1.0, -1.0], &[0.0; 4]).unwrap();
        assert_eq!((s.rmse, s.mbe), (1.0, 0.0));
        let s = rmse_mbe(&[3.0, 4.0, 5.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.rmse, s.mbe), (2.0, 2.0));
        assert_eq!(rmse_mbe(&[1.0], &[]).unwrap_err(), AnalysisError::LengthMismatch(1, 0));
        assert_eq!(rmse_mbe(&[], &[]).unwrap_err(), AnalysisError::Empty);
    }

    #[test]
    fn rmse_bounds_mbe() {
        let mut r = rng::stream(1, Domain::Sensor, 0);
        for _ in 0..200 {
            let a: Vec<f64> = (0..20).map(|_| r.gen_range(-5.0..5.0)).collect();
            let b: Vec<f64> = (0..20).map(|_| r.gen_range(-5.0..5.0)).collect();
            let s = rmse_mbe(&a, &b).unwrap();
            assert!(s.rmse >= s.mbe.abs());
        }
    }

    #[test]
    fn offset_band() {
        let samples: Vec<(f64, f64, f64)> = (0..100)
            .map(|i| {
                let z = 400.0 + 4.0 * i as f64;
                let tr = 293.0 - 0.0065 * (z - 400.0);
                (z, tr + 1.26, tr)
            })
            .collect();
        let s = binned_temp_comparison(&samples, 400.0).unwrap();
        assert_eq!(s.bins.len(), 1);
        let row = &s.bins[0];
        assert_eq!((row.lo, row.hi, row.n), (400.0, 800.0, 100));
        assert!((row.mean_diff.unwrap() - 1.26).abs() < 1e-12);
        assert!((row.normalized_diff.unwrap() * 100.0 - 0.43).abs() < 0.01);
    }

    #[test]
    fn injected_bin_offsets_recovered() {
        let offsets = [0.5, -1.0, 0.0, 2.25];
        let samples: Vec<(f64, f64, f64)> = (0..1600)
            .filter(|z| !(800..1200).contains(z) || *z == 1000)
            .map(|z| {
                let z = z as f64;
                let k = (z / 400.0) as usize;
                (z, 280.0 + offsets[k], 280.0)
            })
            .collect();
        let s = binned_temp_comparison(&samples, 400.0).unwrap();
        for (row, off) in s.bins.iter().zip(offsets) {
            assert!((row.mean_diff.unwrap() - off).abs() < 1e-12);
        }
        let empty = binned_temp_comparison(&[(10.0, 1.0, 1.0), (900.0, 1.0, 1.0)], 400.0).unwrap();
        assert_eq!(empty.bins.len(), 3);
        assert_eq!(empty.bins[1].n, 0);
        assert_eq!(empty.bins[1].mean_diff, None);
    }

    #[test]
    fn drift_fit() {
        let exact: Vec<(f64, f64)> = (0..50).map(|i| (3000.0 + 20.0 * i as f64, 0.1 + 5e-4 * 20.0 * i as f64)).collect();
        let f = fit_linear_drift(&exact, 2999.0).unwrap();
        assert!((f.slope - 5e-4).abs() < 1e-15);

        let mut r = rng::stream(7, Domain::Sensor, 1);
        let noise = Normal::new(0.0, 0.2).unwrap();
        let noisy: Vec<(f64, f64)> = (0..500)
            .map(|i| {
                let z = 3000.0 + 4.0 * i as f64;
                (z, 5e-4 * (z - 3000.0) + noise.sample(&mut r))
            })
            .collect();
        let f = fit_linear_drift(&noisy, 3000.0).unwrap();
        assert!((f.slope / 5e-4 - 1.0).abs() < 0.05, "{f:?}");

        let flat: Vec<(f64, f64)> = (0..500).map(|i| (3000.0 + 4.0 * i as f64, noise.sample(&mut r))).collect();
        let f = fit_linear_drift(&flat, 2000.0).unwrap();
        assert!(f.slope.abs() < 3.0 * f.slope_stderr);

        assert!(matches!(fit_linear_drift(&exact[..9], 0.0), Err(AnalysisError::TooFewPoints { .. })));
    }
}
