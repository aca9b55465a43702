//! Scene synthesis: catalog ingestion, pinhole projection, V-band photometry,
//! Gaussian PSF integration, Poisson photon sampling and ADC quantization.

pub mod camera;
pub mod catalog;
pub mod photometry;
pub mod render;

pub use camera::{project_stars, Attitude, CameraModel, ProjectedStar};
pub use catalog::{parse_catalog, synthetic_catalog, write_catalog, CatalogStar};
pub use photometry::{flux_from_magnitude, photon_rate, pixel_rate, window_half_width};
pub use render::{render_scene, render_star, star_window, ImageFrame, SigmaSampler};
