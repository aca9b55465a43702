//! Star catalog ingestion and synthetic sky generation.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CATALOG_HEADER: &str = "id,ra_deg,dec_deg,vmag";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatalogStar {
    pub id: u64,
    /// Right ascension in radians, `[0, 2π)`.
    pub ra: f64,
    /// Declination in radians, `[-π/2, π/2]`.
    pub dec: f64,
    /// Johnson V magnitude.
    pub vmag: f64,
}

impl CatalogStar {
    /// Inertial unit direction vector.
    pub fn direction(&self) -> [f64; 3] {
        let (sd, cd) = self.dec.sin_cos();
        let (sr, cr) = self.ra.sin_cos();
        [cd * cr, cd * sr, sd]
    }
}

/// Parses a `id,ra_deg,dec_deg,vmag` CSV, keeping stars with `vmag <= mag_limit`,
/// sorted by magnitude (brightest first).
pub fn parse_catalog(text: &str, mag_limit: f64) -> Result<Vec<CatalogStar>> {
    if !mag_limit.is_finite() {
        return Err(Error::InvalidArgument("magnitude limit must be finite".into()));
    }
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == CATALOG_HEADER => {}
        Some((_, header)) => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `{CATALOG_HEADER}`, found `{}`", header.trim()),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing header".into(),
            })
        }
    }

    let mut stars = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        // Typographic minus signs show up in hand-edited files.
        let line = line.replace('\u{2212}', "-");
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", fields.len())));
        }
        let id: u64 = fields[0]
            .parse()
            .map_err(|e| bad(format!("id `{}`: {e}", fields[0])))?;
        let num = |i: usize, name: &str| -> Result<f64> {
            let x: f64 = fields[i]
                .parse()
                .map_err(|e| bad(format!("{name} `{}`: {e}", fields[i])))?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(bad(format!("{name} is not finite")))
            }
        };
        let ra_deg = num(1, "ra_deg")?;
        let dec_deg = num(2, "dec_deg")?;
        let vmag = num(3, "vmag")?;
        if !(-90.0..=90.0).contains(&dec_deg) {
            return Err(bad(format!("dec_deg {dec_deg} outside [-90, 90]")));
        }
        if vmag > mag_limit {
            continue;
        }
        stars.push(CatalogStar {
            id,
            ra: ra_deg.to_radians().rem_euclid(TAU),
            dec: dec_deg.to_radians(),
            vmag,
        });
    }
    stars.sort_by(|a, b| a.vmag.total_cmp(&b.vmag).then(a.id.cmp(&b.id)));
    Ok(stars)
}

pub fn write_catalog(stars: &[CatalogStar]) -> String {
    let mut out = String::from(CATALOG_HEADER);
    out.push('\n');
    for s in stars {
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.id,
            s.ra.to_degrees(),
            s.dec.to_degrees(),
            s.vmag
        ));
    }
    out
}

/// Brightest magnitude produced by [`synthetic_catalog`].
pub const SYNTHETIC_MAG_MIN: f64 = -1.5;
/// Slope of `log10 N(<m)` for bright field stars.
const STAR_COUNT_SLOPE: f64 = 0.47;

/// Isotropic random sky with the bright-star cumulative count law
/// `N(<m) ∝ 10^(0.47 m)`, truncated to `[-1.5, mag_limit]`.
pub fn synthetic_catalog<R: Rng + ?Sized>(count: usize, mag_limit: f64, rng: &mut R) -> Vec<CatalogStar> {
    let lo = 10f64.powf(STAR_COUNT_SLOPE * SYNTHETIC_MAG_MIN);
    let hi = 10f64.powf(STAR_COUNT_SLOPE * mag_limit.max(SYNTHETIC_MAG_MIN));
    let mut stars: Vec<CatalogStar> = (0..count)
        .map(|i| {
            let z: f64 = rng.random_range(-1.0..=1.0);
            let ra: f64 = rng.random_range(0.0..TAU);
            let u: f64 = rng.random();
            let vmag = (lo + u * (hi - lo)).log10() / STAR_COUNT_SLOPE;
            CatalogStar {
                id: i as u64 + 1,
                ra,
                dec: z.asin().clamp(-FRAC_PI_2, FRAC_PI_2),
                vmag,
            }
        })
        .collect();
    stars.sort_by(|a, b| a.vmag.total_cmp(&b.vmag).then(a.id.cmp(&b.id)));
    debug_assert!(stars.iter().all(|s| s.ra < 2.0 * PI));
    stars
}
