//! V-band photometry and pixel-integrated Gaussian PSF.

use super::camera::CameraModel;
use crate::scalar::{normal_cdf, Real};

/// Planck constant, J·s (exact SI).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light, m/s (exact SI).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// V-band centre wavelength, µm.
pub const V_BAND_CENTER_UM: f64 = 0.55;
/// V-band FWHM bandwidth, µm.
pub const V_BAND_WIDTH_UM: f64 = 0.089;
/// Zero-magnitude spectral flux density, W·m⁻²·µm⁻¹.
pub const V_BAND_ZERO_FLUX: f64 = 3.92e-8;

/// Photon flux density of a magnitude-zero star, photons·s⁻¹·m⁻²·µm⁻¹.
pub fn zero_magnitude_photon_flux() -> f64 {
    V_BAND_ZERO_FLUX * (V_BAND_CENTER_UM * 1e-6) / (PLANCK * SPEED_OF_LIGHT)
}

/// Average V-band spectral photon flux density for magnitude `m_v`.
pub fn flux_from_magnitude<T: Real>(m_v: T) -> T {
    T::lit(zero_magnitude_photon_flux()) * T::lit(10.0).powf(-m_v / T::lit(2.5))
}

/// Photon arrival rate collected by the aperture, photons/s.
pub fn photon_rate<T: Real>(flux: T, camera: &CameraModel) -> T {
    flux * T::lit(camera.aperture_area * camera.optical_eff * camera.extinction * V_BAND_WIDTH_UM)
}

/// Fraction of a unit-mass Gaussian of width `sigma` centred at `center`
/// that falls on the unit pixel centred at integer coordinate `pixel`.
#[inline]
pub fn pixel_fraction<T: Real>(center: T, sigma: T, pixel: T) -> T {
    let half = T::lit(0.5);
    let hi = normal_cdf((pixel + half - center) / sigma);
    let lo = normal_cdf((pixel - half - center) / sigma);
    (hi - lo).max(T::zero())
}

/// Average photon rate falling on pixel `(u_i, v_i)` from a star at `(u_c, v_c)`.
pub fn pixel_rate<T: Real>(rate: T, u_c: T, v_c: T, sigma_psf: T, u_i: T, v_i: T) -> T {
    debug_assert!(sigma_psf > T::zero());
    rate * pixel_fraction(u_c, sigma_psf, u_i) * pixel_fraction(v_c, sigma_psf, v_i)
}

/// Defocus window half-width for a PSF width.
pub fn window_half_width(sigma_psf: f64) -> usize {
    (3.0 * sigma_psf + 0.5).floor().max(0.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_point_constant() {
        let k = zero_magnitude_photon_flux();
        assert!(((k - 1.085356e11) / 1.085356e11).abs() < 1e-3, "{k}");
    }

    #[test]
    fn magnitude_steps() {
        let k = zero_magnitude_photon_flux();
        let f0: f64 = flux_from_magnitude(0.0);
        assert!((f0 - k).abs() < 1e-3);
        assert!((flux_from_magnitude(2.5f64) / k - 0.1).abs() < 1e-12);
        assert!((flux_from_magnitude(5.0f64) / k - 0.01).abs() < 1e-12);
    }

    #[test]
    fn photon_rate_examples() {
        let cam = CameraModel {
            aperture_area: 1e-4,
            optical_eff: 0.7,
            extinction: 1.0,
            ..CameraModel::default()
        };
        // 1.085356e11 * 1e-4 * 0.7 * 1 * 0.089
        let n = photon_rate(1.085356e11f64, &cam);
        assert!((n - 676_176.788).abs() < 1e-2, "{n}");
        let dark = CameraModel { optical_eff: 0.0, ..cam.clone() };
        assert_eq!(photon_rate(1e11f64, &dark), 0.0);
        let big = CameraModel { aperture_area: 2e-4, ..cam.clone() };
        assert!((photon_rate(1e11f64, &big) - 2.0 * photon_rate(1e11f64, &cam)).abs() < 1e-6);
    }

    #[test]
    fn centred_pixel_fraction() {
        // erf(1/√2)^2 for a pixel-centred star with sigma 0.5.
        let f: f64 = pixel_rate(1.0, 4.0, 7.0, 0.5, 4.0, 7.0);
        let want = libm::erf(1.0 / 2f64.sqrt()).powi(2);
        assert!((f - want).abs() < 1e-14);
        assert!((f - 0.46606).abs() < 1e-5);
        let far: f64 = pixel_rate(1.0, 0.0, 0.0, 0.5, 1e3, 0.0);
        assert_eq!(far, 0.0);
    }

    #[test]
    fn window_rule() {
        assert_eq!(window_half_width(0.75), 2);
        assert_eq!(window_half_width(0.5), 2);
        assert_eq!(window_half_width(1.0), 3);
    }

    proptest! {
        #[test]
        fn psf_mass_converges_monotonically(
            sigma in 0.3f64..2.0,
            du in -0.5f64..0.5,
            dv in -0.5f64..0.5,
        ) {
            let (uc, vc) = (20.0 + du, 20.0 + dv);
            let mut prev = 0.0;
            for half in 0..12i32 {
                let mut s = 0.0;
                for v in -half..=half {
                    for u in -half..=half {
                        s += pixel_rate(1.0, uc, vc, sigma, 20.0 + u as f64, 20.0 + v as f64);
                    }
                }
                prop_assert!(s >= prev - 1e-12);
                prop_assert!(s <= 1.0 + 1e-12);
                if half as f64 >= (3.0 * sigma).floor() + 1.0 {
                    prop_assert!(s >= 0.98);
                }
                prev = s;
            }
        }
    }
}
