//! Small separable and morphological image filters, edge-clamped.

use crate::grid::Grid;
use crate::scalar::Real;

/// Horizontal then vertical 1-D convolution with an odd-length kernel.
pub fn separable<T: Real>(img: &Grid<T>, kernel: &[T]) -> Grid<T> {
    let r = (kernel.len() / 2) as isize;
    let (w, h) = img.dims();
    let rows = Grid::from_fn(w, h, |u, v| {
        kernel
            .iter()
            .enumerate()
            .map(|(k, &c)| c * img.get_clamped(u as isize + k as isize - r, v as isize))
            .sum()
    });
    Grid::from_fn(w, h, |u, v| {
        kernel
            .iter()
            .enumerate()
            .map(|(k, &c)| c * rows.get_clamped(u as isize, v as isize + k as isize - r))
            .sum()
    })
}

/// Normalized sampled Gaussian kernel of the given radius.
pub fn gaussian_kernel<T: Real>(sigma: f64, radius: usize) -> Vec<T> {
    let raw: Vec<f64> = (-(radius as isize)..=radius as isize)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| T::lit(x / s)).collect()
}

pub fn gaussian_5x5<T: Real>(img: &Grid<T>) -> Grid<T> {
    separable(img, &gaussian_kernel::<T>(1.0, 2))
}

pub fn box_mean<T: Real>(img: &Grid<T>, radius: usize) -> Grid<T> {
    let n = 2 * radius + 1;
    separable(img, &vec![T::one() / T::lit(n as f64); n])
}

fn rank_3x3<T: Real>(img: &Grid<T>, pick: impl Fn(T, T) -> T) -> Grid<T> {
    let (w, h) = img.dims();
    Grid::from_fn(w, h, |u, v| {
        let mut acc = img.get(u, v);
        for dv in -1..=1isize {
            for du in -1..=1isize {
                acc = pick(acc, img.get_clamped(u as isize + du, v as isize + dv));
            }
        }
        acc
    })
}

/// Grey-level erosion (3x3 minimum).
pub fn erode_3x3<T: Real>(img: &Grid<T>) -> Grid<T> {
    rank_3x3(img, T::min)
}

/// Grey-level dilation (3x3 maximum).
pub fn dilate_3x3<T: Real>(img: &Grid<T>) -> Grid<T> {
    rank_3x3(img, T::max)
}
