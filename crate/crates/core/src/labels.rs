//! Training targets: binary star masks and Voronoi distance maps.

use serde::{Deserialize, Serialize};

use crate::grid::Grid;
use crate::scalar::Real;
use crate::simulate::star_window;

/// Distance labels are clamped here and divided by it before training.
pub const D_MAX: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthStar {
    pub id: u64,
    pub u: f64,
    pub v: f64,
    pub vmag: f64,
    pub sigma_psf: f64,
}

/// Ground-truth centroids of a rendered scene.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub stars: Vec<TruthStar>,
}

impl SceneTruth {
    pub fn centroids(&self) -> Vec<(f64, f64)> {
        self.stars.iter().map(|s| (s.u, s.v)).collect()
    }
}

/// Binary star mask, values exactly 0 or 1.
pub type SegmentationMap = Grid<u8>;

/// Per-pixel distance to the nearest star centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap<T> {
    pub grid: Grid<T>,
    /// Set when there were no stars and the grid holds the `D_MAX` sentinel.
    pub sentinel: bool,
}

impl<T: Real> DistanceMap<T> {
    /// Values clamped to `[0, d_max]` and scaled to `[0, 1]`.
    pub fn normalized(&self, d_max: T) -> Grid<T> {
        self.grid.map(|d| d.min(d_max) / d_max)
    }
}

/// Union of every star's defocus window.
pub fn make_segmentation_map(truth: &SceneTruth, width: usize, height: usize) -> SegmentationMap {
    let mut map = Grid::filled(width, height, 0u8);
    for s in &truth.stars {
        if let Some(win) = star_window(s.u, s.v, s.sigma_psf, width, height) {
            for (u, v) in win.pixels() {
                map.set(u, v, 1);
            }
        }
    }
    map
}

/// Euclidean distance from each pixel centre to the nearest centroid.
///
/// Star counts per frame are small, so the direct per-pixel minimum is used.
pub fn make_distance_map<T: Real>(truth: &SceneTruth, width: usize, height: usize) -> DistanceMap<T> {
    if truth.stars.is_empty() {
        return DistanceMap {
            grid: Grid::filled(width, height, T::lit(D_MAX)),
            sentinel: true,
        };
    }
    let centroids: Vec<(T, T)> = truth.stars.iter().map(|s| (T::lit(s.u), T::lit(s.v))).collect();
    let grid = Grid::from_fn(width, height, |u, v| {
        let (qu, qv) = (T::lit(u as f64), T::lit(v as f64));
        centroids
            .iter()
            .map(|&(cu, cv)| (qu - cu).hypot(qv - cv))
            .fold(T::infinity(), T::min)
    });
    DistanceMap {
        grid,
        sentinel: false,
    }
}
