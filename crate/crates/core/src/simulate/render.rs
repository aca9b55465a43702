//! Photon-counting star renderer.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::camera::{project_stars, Attitude, CameraModel, ProjectedStar};
use super::catalog::CatalogStar;
use super::photometry::{pixel_rate, window_half_width};
use crate::error::Result;
use crate::grid::{Grid, PixelWindow};
use crate::labels::{SceneTruth, TruthStar};
use crate::scalar::Real;

/// A frame of digital numbers (electron-equivalent lattice values) with its exposure.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFrame<T> {
    pub pixels: Grid<T>,
    pub exposure_s: f64,
}

impl<T: Real> ImageFrame<T> {
    pub fn zeros(width: usize, height: usize, exposure_s: f64) -> Self {
        Self {
            pixels: Grid::filled(width, height, T::zero()),
            exposure_s,
        }
    }

    pub fn width(&self) -> usize {
        self.pixels.width()
    }

    pub fn height(&self) -> usize {
        self.pixels.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.pixels.dims()
    }

    pub fn get(&self, u: usize, v: usize) -> T {
        self.pixels.get(u, v)
    }

    pub fn cast<U: Real>(&self) -> ImageFrame<U> {
        ImageFrame {
            pixels: self.pixels.map(|x| U::lit(x.as_f64())),
            exposure_s: self.exposure_s,
        }
    }
}

/// How the renderer picks each star's PSF width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaSampler {
    Uniform { lo: f64, hi: f64 },
    Fixed(f64),
}

impl Default for SigmaSampler {
    fn default() -> Self {
        SigmaSampler::Uniform { lo: 0.5, hi: 1.0 }
    }
}

impl SigmaSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            SigmaSampler::Uniform { lo, hi } if hi > lo => rng.random_range(lo..=hi),
            SigmaSampler::Uniform { lo, .. } => lo,
            SigmaSampler::Fixed(s) => s,
        }
    }
}

/// Defocus window of a star on a `width x height` frame, clipped to the frame.
pub fn star_window(u_c: f64, v_c: f64, sigma_psf: f64, width: usize, height: usize) -> Option<PixelWindow> {
    let half = window_half_width(sigma_psf) as isize;
    PixelWindow::around(u_c.round() as isize, v_c.round() as isize, half, width, height)
}

/// Adds one star's photon-sampled, quantized signal to `frame`.
///
/// Returns the clipped window that was rendered, or `None` when the window
/// misses the frame entirely (frame untouched).
pub fn render_star<T: Real, R: Rng + ?Sized>(
    frame: &mut ImageFrame<T>,
    star: &ProjectedStar,
    camera: &CameraModel,
    rng: &mut R,
) -> Option<PixelWindow> {
    let (w, h) = frame.dims();
    let window = star_window(star.u_c, star.v_c, star.sigma_psf, w, h)?;
    let exposure = frame.exposure_s;
    let fwc = T::lit(camera.fwc);
    for (u, v) in window.pixels() {
        let rate = pixel_rate(
            star.photon_rate,
            star.u_c,
            star.v_c,
            star.sigma_psf,
            u as f64,
            v as f64,
        );
        let mean = rate * exposure;
        if !(mean > 0.0) {
            continue;
        }
        let photons = Poisson::new(mean).map(|p| p.sample(rng)).unwrap_or(0.0);
        let value = T::lit(camera.quantize(photons * camera.qe));
        let px = frame.pixels.get_mut(u, v);
        *px = (*px + value).min(fwc);
    }
    Some(window)
}

/// Renders every visible catalog star onto a zero frame.
pub fn render_scene<T: Real, R: Rng + ?Sized>(
    catalog: &[CatalogStar],
    attitude: &Attitude,
    camera: &CameraModel,
    exposure_s: f64,
    sigma: SigmaSampler,
    rng: &mut R,
) -> Result<(ImageFrame<T>, SceneTruth)> {
    let mut frame = ImageFrame::zeros(camera.width_px, camera.height_px, exposure_s);
    let mut truth = SceneTruth::default();
    for mut star in project_stars(catalog, attitude, camera)? {
        star.sigma_psf = sigma.sample(rng);
        if render_star(&mut frame, &star, camera, rng).is_some() {
            truth.stars.push(TruthStar {
                id: star.id,
                u: star.u_c,
                v: star.v_c,
                vmag: star.vmag,
                sigma_psf: star.sigma_psf,
            });
        }
    }
    Ok((frame, truth))
}
