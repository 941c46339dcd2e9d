//! Statistics over ingested series: comparison metrics, spectra,
//! stratification, stereo ranging and neighbor graphs.

pub mod bv;
pub mod comparison;
pub mod neighbor;
pub mod spectrum;
pub mod stereo;

use thiserror::Error;

pub use bv::{bv_ensemble, bv_n2, bv_profile, BvBoundary, BvProfile, Stability};
pub use comparison::{binned_temp_comparison, fit_linear_drift, rmse_mbe, BinRow, ComparisonStats, LinearFit};
pub use neighbor::{
    distance_neighbor_graph, q_graph_timeseries, DistanceNeighborGraph, QuantityKind, Snapshot,
};
pub use spectrum::{loglog_slope, power_spectrum, PowerSpectrum, Window};
pub use stereo::{camera_to_enu, enu_to_camera, gnss_relative_distance, stereo_distance, DistanceSeries, PositionTrack, StereoFrame, StereoRig};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("series has {0} missing values; resample or split it first")]
    MissingValues(usize),
    #[error("bin width must be positive, got {0}")]
    InvalidBinWidth(f64),
    #[error("profile covers a single bin")]
    SingleBin,
    #[error("profiles use different bin widths")]
    MisalignedBins,
    #[error("need at least 2 sondes with finite readings, got {0}")]
    TooFewSondes(usize),
    #[error("snapshot type does not match quantity {0:?}")]
    WrongReadings(QuantityKind),
    #[error("series have no time in common")]
    NoOverlap,
    #[error("grids differ: step {0} vs {1}")]
    GridMismatch(f64, f64),
}
