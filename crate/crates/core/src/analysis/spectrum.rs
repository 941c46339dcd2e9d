use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::ingest::ChannelSeries;

pub const MIN_SPECTRUM_LEN: usize = 16;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Rect,
    Hann,
}

/// One-sided periodogram. With the rectangular window the powers sum to
/// the variance of the analysed (mean-removed, possibly detrended) data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerSpectrum {
    pub step: f64,
    pub window: Window,
    pub detrended: bool,
    /// Samples used; odd-length input drops its last sample.
    pub len: usize,
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
    /// Variance of the analysed data before windowing.
    pub variance: f64,
}

impl PowerSpectrum {
    pub fn f_max(&self) -> f64 {
        *self.frequencies.last().expect("non-empty spectrum")
    }

    pub fn f_min(&self) -> f64 {
        self.frequencies[0]
    }

    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("frequency_hz,power\n");
        for (f, p) in self.frequencies.iter().zip(&self.power) {
            out.push_str(&format!("{f},{p}\n"));
        }
        out
    }
}

fn remove_trend(x: &mut [f64], linear: bool) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if !linear {
        x.iter_mut().for_each(|v| *v -= mean);
        return;
    }
    let tm = (n - 1.0) / 2.0;
    let sxx: f64 = (0..x.len()).map(|i| (i as f64 - tm).powi(2)).sum();
    let sxy: f64 = x.iter().enumerate().map(|(i, v)| (i as f64 - tm) * (v - mean)).sum();
    let slope = sxy / sxx;
    for (i, v) in x.iter_mut().enumerate() {
        *v -= mean + slope * (i as f64 - tm);
    }
}

/// Periodogram of a complete series on frequencies `k / (L·step)`,
/// `k = 1 … L/2`.
pub fn power_spectrum(series: &ChannelSeries, detrend: bool, window: Window) -> Result<PowerSpectrum, AnalysisError> {
    let missing = series.missing();
    if missing > 0 {
        return Err(AnalysisError::MissingValues(missing));
    }
    let values: Vec<f64> = series.values.iter().map(|v| v.expect("checked")).collect();
    spectrum_of(&values, series.step, detrend, window)
}

pub fn spectrum_of(values: &[f64], step: f64, detrend: bool, window: Window) -> Result<PowerSpectrum, AnalysisError> {
    if values.len() < MIN_SPECTRUM_LEN {
        return Err(AnalysisError::TooFewPoints { need: MIN_SPECTRUM_LEN, got: values.len() });
    }
    let len = values.len() & !1;
    let mut x = values[..len].to_vec();
    remove_trend(&mut x, detrend);
    let variance = x.iter().map(|v| v * v).sum::<f64>() / len as f64;

    let weights: Vec<f64> = match window {
        Window::Rect => vec![1.0; len],
        Window::Hann => (0..len).map(|i| (std::f64::consts::PI * i as f64 / len as f64).sin().powi(2)).collect(),
    };
    // keep the windowed power comparable with the variance
    let energy = weights.iter().map(|w| w * w).sum::<f64>() / len as f64;
    let mut buf: Vec<Complex<f64>> = x.iter().zip(&weights).map(|(v, w)| Complex::new(v * w, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);

    let half = len / 2;
    let l2 = (len * len) as f64 * energy;
    let power = (1..=half)
        .map(|k| {
            let p = buf[k].norm_sqr() / l2;
            if k == half { p } else { 2.0 * p }
        })
        .collect();
    let mut frequencies: Vec<f64> = (1..=half).map(|k| k as f64 / (len as f64 * step)).collect();
    frequencies[half - 1] = 0.5 / step;
    Ok(PowerSpectrum { step, window, detrended: detrend, len, frequencies, power, variance })
}

/// Least-squares slope of `log10 power` against `log10 f` over
/// `[f_lo, f_hi]`.
pub fn loglog_slope(s: &PowerSpectrum, f_lo: f64, f_hi: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = s
        .frequencies
        .iter()
        .zip(&s.power)
        .filter(|(f, p)| **f >= f_lo && **f <= f_hi && **p > 0.0)
        .map(|(f, p)| (f.log10(), p.log10()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}
