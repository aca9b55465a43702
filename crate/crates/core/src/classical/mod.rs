//! Baseline detectors (Liebe, WITM, ST-16, Sun et al.) and centroiders
//! (center of gravity, Gaussian grid).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::grid::PixelWindow;

pub mod centroid;
pub mod components;
pub mod detect;
pub mod filters;

pub use centroid::{centroid_cog, centroid_gaussian_grid};
pub use components::connected_components;
pub use detect::{detect_liebe, detect_st16, detect_sun, detect_witm, WitmOutcome};

/// 4-connected group of pixels with their source intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelCluster<T> {
    pub pixels: Vec<(usize, usize, T)>,
    pub bbox: PixelWindow,
    pub total: T,
}

impl<T: Copy> PixelCluster<T> {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentroidMethod {
    CenterOfGravity,
    GaussianGrid,
    Trilateration,
    /// Distance-weighted center of gravity over a trilateration window.
    DistanceWeighted,
}

impl fmt::Display for CentroidMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CentroidMethod::CenterOfGravity => "cog",
            CentroidMethod::GaussianGrid => "gaussian_grid",
            CentroidMethod::Trilateration => "trilateration",
            CentroidMethod::DistanceWeighted => "distance_weighted",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentroidFlag {
    /// Gaussian fit rejected; center of gravity used instead.
    GaussianFallback,
    /// Trilateration system was rank deficient.
    DegenerateTrilateration,
}

impl fmt::Display for CentroidFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CentroidFlag::GaussianFallback => "gaussian_fallback",
            CentroidFlag::DegenerateTrilateration => "degenerate_trilateration",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Centroid {
    pub u: f64,
    pub v: f64,
    pub method: CentroidMethod,
    /// Algorithm-specific: total intensity for intensity methods, residual norm for trilateration.
    pub quality: f64,
    pub flag: Option<CentroidFlag>,
}

/// Detector choice for the benchmark and CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    Liebe,
    Witm,
    St16,
    Sun,
}

impl Detector {
    pub const ALL: [Detector; 4] = [Detector::Liebe, Detector::Witm, Detector::St16, Detector::Sun];

    pub fn name(&self) -> &'static str {
        match self {
            Detector::Liebe => "liebe",
            Detector::Witm => "witm",
            Detector::St16 => "st16",
            Detector::Sun => "sun",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centroider {
    Cog,
    GaussianGrid,
}

impl Centroider {
    pub const ALL: [Centroider; 2] = [Centroider::Cog, Centroider::GaussianGrid];

    pub fn name(&self) -> &'static str {
        match self {
            Centroider::Cog => "cog",
            Centroider::GaussianGrid => "gaussian_grid",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WitmParams {
    pub w_b: f64,
    pub w_f: f64,
    pub eps: f64,
    pub max_iter: usize,
}

impl Default for WitmParams {
    fn default() -> Self {
        Self {
            w_b: 0.5,
            w_f: 0.5,
            eps: 0.5,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct St16Params {
    pub c: f64,
    pub min_px: usize,
    pub min_sum: f64,
}

impl Default for St16Params {
    fn default() -> Self {
        Self {
            c: 10.0,
            min_px: 2,
            min_sum: 30.0,
        }
    }
}

/// Thresholds and kernel constants of the baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassicalParams {
    pub liebe_k: f64,
    pub witm: WitmParams,
    pub st16: St16Params,
    pub sun_c: f64,
    pub gauss_window_half: usize,
}

impl Default for ClassicalParams {
    fn default() -> Self {
        Self {
            liebe_k: 5.0,
            witm: WitmParams::default(),
            st16: St16Params::default(),
            sun_c: 5.0,
            gauss_window_half: 2,
        }
    }
}

/// Runs a detector and a centroider end to end on one frame.
pub fn detect_and_centroid_classical(
    frame: &crate::grid::Grid<f64>,
    detector: Detector,
    centroider: Centroider,
    params: &ClassicalParams,
) -> Vec<Centroid> {
    let clusters = match detector {
        Detector::Liebe => connected_components(&detect_liebe(frame, params.liebe_k), frame),
        Detector::Witm => {
            let w = &params.witm;
            connected_components(&detect_witm(frame, w.w_b, w.w_f, w.eps, w.max_iter).mask, frame)
        }
        Detector::St16 => detect_st16(frame, params.st16.c, params.st16.min_px, params.st16.min_sum),
        Detector::Sun => connected_components(&detect_sun(frame, params.sun_c), frame),
    };
    clusters
        .iter()
        .filter_map(|c| match centroider {
            Centroider::Cog => centroid_cog(c).ok(),
            Centroider::GaussianGrid => centroid_gaussian_grid(frame, c, params.gauss_window_half).ok(),
        })
        .collect()
}
