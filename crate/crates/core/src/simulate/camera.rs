//! Camera model, attitude, and pinhole projection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::catalog::CatalogStar;
use super::photometry::{flux_from_magnitude, photon_rate};
use crate::error::{Error, Result};

/// Sensor and optics description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraModel {
    pub width_px: usize,
    pub height_px: usize,
    /// Focal length divided by pixel pitch.
    pub focal_len_px: f64,
    pub principal_point: [f64; 2],
    /// Aperture area in m².
    pub aperture_area: f64,
    /// Average optical efficiency over the V band.
    pub optical_eff: f64,
    /// Average extinction correction; 1 on orbit.
    pub extinction: f64,
    /// Quantum efficiency.
    pub qe: f64,
    /// Full well capacity in electrons.
    pub fwc: f64,
    pub adc_bits: u32,
}

impl Default for CameraModel {
    /// 128 x 128 desk-scale sensor behind a 16 mm f/1.2 lens, about 12° field.
    fn default() -> Self {
        Self {
            width_px: 128,
            height_px: 128,
            focal_len_px: 609.0,
            principal_point: [63.5, 63.5],
            aperture_area: 1.4e-4,
            optical_eff: 0.7,
            extinction: 1.0,
            qe: 0.6,
            fwc: 10_000.0,
            adc_bits: 12,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("camera: {m}")));
        if self.width_px == 0 || self.height_px == 0 {
            return bad("frame dimensions must be positive");
        }
        for (name, x) in [
            ("focal_len_px", self.focal_len_px),
            ("aperture_area", self.aperture_area),
            ("extinction", self.extinction),
            ("fwc", self.fwc),
        ] {
            if !(x.is_finite() && x > 0.0) {
                return bad(&format!("{name} must be positive"));
            }
        }
        for (name, x) in [("optical_eff", self.optical_eff), ("qe", self.qe)] {
            if !(x > 0.0 && x <= 1.0) {
                return bad(&format!("{name} must lie in (0, 1]"));
            }
        }
        if !(8..=16).contains(&self.adc_bits) {
            return bad("adc_bits must lie in [8, 16]");
        }
        let [u0, v0] = self.principal_point;
        if !(u0 >= 0.0 && v0 >= 0.0 && u0 <= self.width_px as f64 - 1.0 && v0 <= self.height_px as f64 - 1.0) {
            return bad("principal point outside frame");
        }
        Ok(())
    }

    /// Number of ADC levels above zero, `2^bits - 1`.
    pub fn adc_levels(&self) -> f64 {
        ((1u64 << self.adc_bits) - 1) as f64
    }

    /// Spacing of the digital-number lattice in electrons.
    pub fn lattice_step(&self) -> f64 {
        self.fwc / self.adc_levels()
    }

    /// Converts collected electrons to a lattice value, saturating at full well first.
    pub fn quantize(&self, electrons: f64) -> f64 {
        let e = electrons.clamp(0.0, self.fwc);
        (e * self.adc_levels() / self.fwc).floor() * self.lattice_step()
    }

    /// Half diagonal field of view in radians.
    pub fn half_diagonal_fov(&self) -> f64 {
        let hw = self.width_px as f64 / 2.0;
        let hh = self.height_px as f64 / 2.0;
        (hw.hypot(hh) / self.focal_len_px).atan()
    }
}

/// Unit quaternion `(w, x, y, z)`, scalar first, rotating inertial vectors into the camera frame.
///
/// Camera frame: `+z` boresight, `+x` along increasing `u` (columns), `+y` along increasing `v` (rows).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attitude {
    pub q: [f64; 4],
}

impl Attitude {
    pub const UNIT_TOLERANCE: f64 = 1e-9;

    pub fn identity() -> Self {
        Self { q: [1.0, 0.0, 0.0, 0.0] }
    }

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { q: [w, x, y, z] }
    }

    pub fn norm(&self) -> f64 {
        self.q.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= Self::UNIT_TOLERANCE
    }

    /// Uniformly distributed rotation (Shoemake's method).
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let u3: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let a = (1.0 - u1).sqrt();
        let b = u1.sqrt();
        Self {
            q: [b * u3.cos(), a * u2.sin(), a * u2.cos(), b * u3.sin()],
        }
    }

    /// Points the boresight at `(ra, dec)` with the given roll about it.
    pub fn from_boresight(ra: f64, dec: f64, roll: f64) -> Self {
        let (sd, cd) = dec.sin_cos();
        let (sr, cr) = ra.sin_cos();
        let z = [cd * cr, cd * sr, sd];
        let east = [-sr, cr, 0.0];
        let north = cross(z, east);
        let (s, c) = roll.sin_cos();
        let x = [
            c * east[0] + s * north[0],
            c * east[1] + s * north[1],
            c * east[2] + s * north[2],
        ];
        let y = cross(z, x);
        Self::from_matrix([x, y, z])
    }

    /// Rotation matrix (rows are camera axes in inertial coordinates).
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let [w, x, y, z] = self.q;
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    fn from_matrix(m: [[f64; 3]; 3]) -> Self {
        let trace = m[0][0] + m[1][1] + m[2][2];
        let q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            [
                0.25 * s,
                (m[2][1] - m[1][2]) / s,
                (m[0][2] - m[2][0]) / s,
                (m[1][0] - m[0][1]) / s,
            ]
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            [
                (m[2][1] - m[1][2]) / s,
                0.25 * s,
                (m[0][1] + m[1][0]) / s,
                (m[0][2] + m[2][0]) / s,
            ]
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            [
                (m[0][2] - m[2][0]) / s,
                (m[0][1] + m[1][0]) / s,
                0.25 * s,
                (m[1][2] + m[2][1]) / s,
            ]
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            [
                (m[1][0] - m[0][1]) / s,
                (m[0][2] + m[2][0]) / s,
                (m[1][2] + m[2][1]) / s,
                0.25 * s,
            ]
        };
        let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        Self {
            q: [q[0] / n, q[1] / n, q[2] / n, q[3] / n],
        }
    }

    pub fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        let m = self.matrix();
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Width assigned by projection before the renderer picks one.
pub const DEFAULT_SIGMA_PSF: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedStar {
    pub id: u64,
    pub u_c: f64,
    pub v_c: f64,
    pub vmag: f64,
    /// Photons per second over the V band.
    pub photon_rate: f64,
    pub sigma_psf: f64,
    /// Centroid within one pixel of the frame border.
    pub near_border: bool,
}

/// Pinhole projection of catalog stars that land inside the frame.
pub fn project_stars(
    stars: &[CatalogStar],
    attitude: &Attitude,
    camera: &CameraModel,
) -> Result<Vec<ProjectedStar>> {
    if !attitude.is_unit() {
        return Err(Error::InvalidArgument(format!(
            "attitude quaternion norm {} is not unit",
            attitude.norm()
        )));
    }
    let cos_fov = camera.half_diagonal_fov().cos();
    let [u0, v0] = camera.principal_point;
    let (w, h) = (camera.width_px as f64, camera.height_px as f64);
    let m = attitude.matrix();

    let mut out = Vec::new();
    for star in stars {
        let d = star.direction();
        let z = m[2][0] * d[0] + m[2][1] * d[1] + m[2][2] * d[2];
        // Boresight component is the cosine of the off-axis angle.
        if z <= 0.0 || z < cos_fov * 0.999 {
            continue;
        }
        let x = m[0][0] * d[0] + m[0][1] * d[1] + m[0][2] * d[2];
        let y = m[1][0] * d[0] + m[1][1] * d[1] + m[1][2] * d[2];
        let u = u0 + camera.focal_len_px * (x / z);
        let v = v0 + camera.focal_len_px * (y / z);
        if !(-0.5..=w - 0.5).contains(&u) || !(-0.5..=h - 0.5).contains(&v) {
            continue;
        }
        let near_border = u < 0.5 || v < 0.5 || u > w - 1.5 || v > h - 1.5;
        out.push(ProjectedStar {
            id: star.id,
            u_c: u,
            v_c: v,
            vmag: star.vmag,
            photon_rate: photon_rate(flux_from_magnitude(star.vmag), camera),
            sigma_psf: DEFAULT_SIGMA_PSF,
            near_border,
        });
    }
    Ok(out)
}
