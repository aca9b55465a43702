//! Threshold-based star pixel detectors.

use crate::grid::Grid;
use crate::scalar::Real;

use super::components::connected_components;
use super::filters::{box_mean, dilate_3x3, erode_3x3, gaussian_5x5};
use super::PixelCluster;

fn mean_std<T: Real>(xs: &[T]) -> (T, T) {
    let n = T::lit(xs.len().max(1) as f64);
    let mean = xs.iter().copied().sum::<T>() / n;
    let var = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
    (mean, var.sqrt())
}

fn threshold_mask<T: Real>(frame: &Grid<T>, threshold: impl Fn(usize, usize) -> T) -> Grid<u8> {
    Grid::from_fn(frame.width(), frame.height(), |u, v| {
        u8::from(frame.get(u, v) > threshold(u, v))
    })
}

/// Global threshold `mean + k·std`.
pub fn detect_liebe<T: Real>(frame: &Grid<T>, k: f64) -> Grid<u8> {
    let (mean, std) = mean_std(frame.as_slice());
    let t = mean + T::lit(k) * std;
    threshold_mask(frame, |_, _| t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitmOutcome<T> {
    pub mask: Grid<u8>,
    pub threshold: T,
    pub iterations: usize,
    /// Every pixel fell at or below the threshold during iteration.
    pub degenerate: bool,
    pub converged: bool,
}

/// Weighted iterative threshold: `T ← w_b·mean(≤T) + w_f·mean(>T)` from the global mean.
pub fn detect_witm<T: Real>(frame: &Grid<T>, w_b: f64, w_f: f64, eps: f64, max_iter: usize) -> WitmOutcome<T> {
    let xs = frame.as_slice();
    let (mut t, _) = mean_std(xs);
    let (wb, wf, eps) = (T::lit(w_b), T::lit(w_f), T::lit(eps));
    let empty = || Grid::filled(frame.width(), frame.height(), 0u8);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let (mut lo_sum, mut lo_n, mut hi_sum, mut hi_n) = (T::zero(), 0usize, T::zero(), 0usize);
        for &x in xs {
            if x > t {
                hi_sum += x;
                hi_n += 1;
            } else {
                lo_sum += x;
                lo_n += 1;
            }
        }
        if hi_n == 0 || lo_n == 0 {
            return WitmOutcome {
                mask: empty(),
                threshold: t,
                iterations,
                degenerate: true,
                converged: false,
            };
        }
        let next = wb * lo_sum / T::lit(lo_n as f64) + wf * hi_sum / T::lit(hi_n as f64);
        let step = (next - t).abs();
        t = next;
        if step < eps {
            converged = true;
            break;
        }
    }
    WitmOutcome {
        mask: threshold_mask(frame, |_, _| t),
        threshold: t,
        iterations,
        degenerate: false,
        converged,
    }
}

/// Half-length of the ST-16 horizontal averaging window (1x29).
pub const ST16_HALF_WINDOW: isize = 14;

/// Per-pixel local threshold: mean of the edge-clamped 1x29 row window plus `c`.
pub fn st16_local_threshold<T: Real>(frame: &Grid<T>, c: f64) -> Grid<T> {
    let n = T::lit((2 * ST16_HALF_WINDOW + 1) as f64);
    let c = T::lit(c);
    Grid::from_fn(frame.width(), frame.height(), |u, v| {
        let s: T = (-ST16_HALF_WINDOW..=ST16_HALF_WINDOW)
            .map(|d| frame.get_clamped(u as isize + d, v as isize))
            .sum();
        s / n + c
    })
}

/// ST-16 routine: local-threshold bright pixels grouped by 4-connectivity,
/// kept when large and bright enough to not be an isolated hot pixel.
pub fn detect_st16<T: Real>(frame: &Grid<T>, c: f64, min_px: usize, min_sum: f64) -> Vec<PixelCluster<T>> {
    let thr = st16_local_threshold(frame, c);
    let mask = threshold_mask(frame, |u, v| thr.get(u, v));
    let min_sum = T::lit(min_sum);
    connected_components(&mask, frame)
        .into_iter()
        .filter(|cl| {
            let excess: T = cl.pixels.iter().map(|&(u, v, x)| x - thr.get(u, v)).sum();
            cl.len() >= min_px && excess >= min_sum
        })
        .collect()
}

/// Background estimate of Sun et al.: Gaussian, erosion, dilation, 5x5 mean.
pub fn sun_background<T: Real>(frame: &Grid<T>) -> Grid<T> {
    box_mean(&dilate_3x3(&erode_3x3(&gaussian_5x5(frame))), 2)
}

pub fn detect_sun<T: Real>(frame: &Grid<T>, c: f64) -> Grid<u8> {
    let bg = sun_background(frame);
    let c = T::lit(c);
    threshold_mask(frame, |u, v| bg.get(u, v) + c)
}
