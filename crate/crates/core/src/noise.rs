//! Sensor noise and stray-light synthesis, real-frame ingestion, and fusion
//! of noise frames with clean renders.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::io;
use crate::simulate::{CameraModel, ImageFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseParams {
    /// Gaussian read noise standard deviation.
    pub read_noise_dn: f64,
    pub dark_current_dn_per_s: f64,
    pub hot_pixel_frac: f64,
    pub hot_pixel_dn: f64,
    /// Amplitude of the per-row sinusoidal offset.
    pub row_banding_dn: f64,
    /// Probability that a fused frame also receives stray light.
    pub stray_prob: f64,
    /// Range of stray-light blob peak amplitudes.
    pub stray_amplitude: [f64; 2],
    /// Number of synthetic dark frames in the pool when no directory is given.
    pub pool_size: usize,
    /// Directory of captured PGM frames used instead of synthetic ones.
    pub pool_dir: Option<PathBuf>,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            read_noise_dn: 2.0,
            dark_current_dn_per_s: 5.0,
            hot_pixel_frac: 1e-4,
            hot_pixel_dn: 200.0,
            row_banding_dn: 1.0,
            stray_prob: 0.3,
            stray_amplitude: [200.0, 2000.0],
            pool_size: 50,
            pool_dir: None,
        }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("read_noise_dn", self.read_noise_dn),
            ("dark_current_dn_per_s", self.dark_current_dn_per_s),
            ("hot_pixel_dn", self.hot_pixel_dn),
            ("row_banding_dn", self.row_banding_dn),
            ("stray_amplitude[0]", self.stray_amplitude[0]),
            ("stray_amplitude[1]", self.stray_amplitude[1]),
        ];
        for (name, x) in nonneg {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::InvalidArgument(format!("noise.{name} must be nonnegative")));
            }
        }
        for (name, x) in [("hot_pixel_frac", self.hot_pixel_frac), ("stray_prob", self.stray_prob)] {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::InvalidArgument(format!("noise.{name} must lie in [0, 1]")));
            }
        }
        if self.stray_amplitude[0] > self.stray_amplitude[1] {
            return Err(Error::InvalidArgument("noise.stray_amplitude must be ordered".into()));
        }
        Ok(())
    }
}

fn quantize_dn(x: f64, camera: &CameraModel) -> f64 {
    let step = camera.lattice_step();
    ((x.max(0.0) / step).floor() * step).min(camera.fwc)
}

/// Parametric dark frame: read noise, dark shot noise, row banding and hot pixels.
pub fn synth_dark_frame<R: Rng + ?Sized>(
    camera: &CameraModel,
    exposure_s: f64,
    params: &NoiseParams,
    rng: &mut R,
) -> ImageFrame<f64> {
    let (w, h) = (camera.width_px, camera.height_px);
    let read = (params.read_noise_dn > 0.0).then(|| Normal::new(0.0, params.read_noise_dn).unwrap());
    let dark_mean = params.dark_current_dn_per_s * exposure_s;
    let dark = (dark_mean > 0.0).then(|| Poisson::new(dark_mean).unwrap());
    let band_period: f64 = rng.random_range(16.0..64.0);
    let band_phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);

    let mut pixels = Grid::filled(w, h, 0.0);
    for v in 0..h {
        let band = params.row_banding_dn * (std::f64::consts::TAU * v as f64 / band_period + band_phase).sin();
        for u in 0..w {
            let mut x = band;
            if let Some(n) = &read {
                x += n.sample(rng);
            }
            if let Some(p) = &dark {
                x += p.sample(rng);
            }
            if params.hot_pixel_frac > 0.0 && rng.random_bool(params.hot_pixel_frac) {
                x += params.hot_pixel_dn;
            }
            pixels.set(u, v, quantize_dn(x, camera));
        }
    }
    ImageFrame { pixels, exposure_s }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlareBlob {
    pub center: (f64, f64),
    pub sigma: f64,
    pub peak: f64,
}

/// Smooth stray-light field: Gaussian flare blobs plus a planar ramp.
#[derive(Debug, Clone, PartialEq)]
pub struct StrayLight {
    pub blobs: Vec<FlareBlob>,
    /// Increase across the full frame width and height respectively.
    pub ramp: (f64, f64),
}

/// Smallest blob width as a fraction of the frame diagonal.
pub const STRAY_SIGMA_MIN_FRAC: f64 = 0.2;
pub const STRAY_SIGMA_MAX_FRAC: f64 = 1.0;
/// Ramp amplitude relative to the brightest possible blob.
pub const STRAY_RAMP_FRAC: f64 = 0.3;

impl StrayLight {
    pub fn random<R: Rng + ?Sized>(width: usize, height: usize, amplitude: [f64; 2], rng: &mut R) -> Self {
        let (w, h) = (width as f64, height as f64);
        let diag = w.hypot(h);
        let draw_amp = |rng: &mut R| {
            if amplitude[1] > amplitude[0] {
                rng.random_range(amplitude[0]..=amplitude[1])
            } else {
                amplitude[0]
            }
        };
        let n = rng.random_range(1..=3);
        let blobs = (0..n)
            .map(|_| FlareBlob {
                center: (rng.random_range(-0.5 * w..1.5 * w), rng.random_range(-0.5 * h..1.5 * h)),
                sigma: rng.random_range(STRAY_SIGMA_MIN_FRAC..=STRAY_SIGMA_MAX_FRAC) * diag,
                peak: draw_amp(rng),
            })
            .collect();
        let ramp_amp = STRAY_RAMP_FRAC * amplitude[1];
        let ramp = (
            ramp_amp * rng.random::<f64>(),
            ramp_amp * rng.random::<f64>(),
        );
        Self { blobs, ramp }
    }

    pub fn render(&self, width: usize, height: usize) -> Grid<f64> {
        let su = 1.0 / (width.max(2) - 1) as f64;
        let sv = 1.0 / (height.max(2) - 1) as f64;
        Grid::from_fn(width, height, |u, v| {
            let (uf, vf) = (u as f64, v as f64);
            let flare: f64 = self
                .blobs
                .iter()
                .map(|b| {
                    let r2 = (uf - b.center.0).powi(2) + (vf - b.center.1).powi(2);
                    b.peak * (-r2 / (2.0 * b.sigma * b.sigma)).exp()
                })
                .sum();
            flare + self.ramp.0 * uf * su + self.ramp.1 * vf * sv
        })
    }
}

pub fn synth_stray_light<R: Rng + ?Sized>(
    width: usize,
    height: usize,
    amplitude: [f64; 2],
    rng: &mut R,
) -> ImageFrame<f64> {
    let light = StrayLight::random(width, height, amplitude, rng);
    ImageFrame {
        pixels: light.render(width, height),
        exposure_s: 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameSource {
    Synthetic,
    Real,
}

#[derive(Debug, Clone)]
pub struct PoolFrame {
    pub frame: ImageFrame<f64>,
    pub source: FrameSource,
}

/// Noise frames to draw from during fusion. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct FramePool {
    pub frames: Vec<PoolFrame>,
}

impl FramePool {
    /// Synthetic dark frames with exposures uniform in `exposure_range`.
    pub fn synthetic<R: Rng + ?Sized>(
        camera: &CameraModel,
        params: &NoiseParams,
        exposure_range: [f64; 2],
        rng: &mut R,
    ) -> Self {
        let frames = (0..params.pool_size.max(1))
            .map(|_| {
                let t = if exposure_range[1] > exposure_range[0] {
                    rng.random_range(exposure_range[0]..=exposure_range[1])
                } else {
                    exposure_range[0]
                };
                PoolFrame {
                    frame: synth_dark_frame(camera, t, params, rng),
                    source: FrameSource::Synthetic,
                }
            })
            .collect();
        Self { frames }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Loads every `*.pgm` in `dir` (with its sidecar JSON) as a real noise frame.
pub fn load_frame_pool(dir: &Path) -> Result<FramePool> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyDataset(format!("no PGM frames in {}", dir.display())));
    }
    let mut frames = Vec::with_capacity(paths.len());
    for p in &paths {
        frames.push(PoolFrame {
            frame: io::read_frame(p)?.0,
            source: FrameSource::Real,
        });
    }
    let dims = frames[0].frame.dims();
    let offenders: Vec<String> = paths
        .iter()
        .zip(&frames)
        .filter(|(_, f)| f.frame.dims() != dims)
        .map(|(p, f)| format!("{} ({}x{})", p.display(), f.frame.width(), f.frame.height()))
        .collect();
    if !offenders.is_empty() {
        return Err(Error::Dimension(format!(
            "expected {}x{}; offending frames: {}",
            dims.0,
            dims.1,
            offenders.join(", ")
        )));
    }
    Ok(FramePool { frames })
}

/// What fusion picked, for bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuseInfo {
    pub pool_index: usize,
    pub flip_h: bool,
    pub flip_v: bool,
    pub stray: bool,
}

/// Adds a randomly chosen, randomly flipped pool frame to `clean`, then stray
/// light with probability `stray_prob`, then clips to `[0, FWC]`.
pub fn fuse<R: Rng + ?Sized>(
    clean: &ImageFrame<f64>,
    pool: &FramePool,
    params: &NoiseParams,
    camera: &CameraModel,
    rng: &mut R,
) -> Result<(ImageFrame<f64>, FuseInfo)> {
    if pool.is_empty() {
        return Err(Error::EmptyDataset("noise frame pool".into()));
    }
    let pool_index = rng.random_range(0..pool.len());
    let noise = &pool.frames[pool_index].frame;
    if noise.dims() != clean.dims() {
        return Err(Error::Dimension(format!(
            "clean frame {}x{} vs noise frame {}x{}",
            clean.width(),
            clean.height(),
            noise.width(),
            noise.height()
        )));
    }
    let flip_h = rng.random_bool(0.5);
    let flip_v = rng.random_bool(0.5);
    let mut noise = noise.pixels.clone();
    if flip_h {
        noise = noise.flip_horizontal();
    }
    if flip_v {
        noise = noise.flip_vertical();
    }
    let stray = params.stray_prob > 0.0 && rng.random_bool(params.stray_prob);
    let light = stray.then(|| {
        let (w, h) = clean.dims();
        StrayLight::random(w, h, params.stray_amplitude, rng).render(w, h)
    });

    let mut out = clean.pixels.clone();
    for (i, px) in out.as_mut_slice().iter_mut().enumerate() {
        let mut x = *px + noise.as_slice()[i];
        if let Some(l) = &light {
            x += l.as_slice()[i];
        }
        *px = x.clamp(0.0, camera.fwc);
    }
    Ok((
        ImageFrame {
            pixels: out,
            exposure_s: clean.exposure_s,
        },
        FuseInfo {
            pool_index,
            flip_h,
            flip_v,
            stray,
        },
    ))
}
