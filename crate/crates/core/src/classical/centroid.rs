use crate::error::{Error, Result};
use crate::grid::{Grid, PixelWindow};
use crate::linalg::{default_rcond, lstsq};
use crate::scalar::Real;

use super::{Centroid, CentroidFlag, CentroidMethod, PixelCluster};

/// Minimum above-background pixels for the log-parabola fit.
pub const GAUSSIAN_MIN_PIXELS: usize = 6;

/// Curvature magnitude below which the log surface counts as flat.
const FLAT_CURVATURE: f64 = 1e-9;

/// Intensity-weighted mean position of the cluster.
pub fn centroid_cog<T: Real>(cluster: &PixelCluster<T>) -> Result<Centroid> {
    let (mut su, mut sv, mut s) = (0.0, 0.0, 0.0);
    for &(u, v, x) in &cluster.pixels {
        let x = x.as_f64();
        su += u as f64 * x;
        sv += v as f64 * x;
        s += x;
    }
    if !s.is_finite() || !su.is_finite() || !sv.is_finite() {
        return Err(Error::NonFinite);
    }
    if s <= 0.0 {
        return Err(Error::ZeroIntensity);
    }
    Ok(Centroid {
        u: su / s,
        v: sv / s,
        method: CentroidMethod::CenterOfGravity,
        quality: s,
        flag: None,
    })
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 { xs[n / 2] } else { 0.5 * (xs[n / 2 - 1] + xs[n / 2]) })
}

/// Median of the in-frame pixels one step outside `win`.
fn ring_background<T: Real>(frame: &Grid<T>, win: &PixelWindow) -> Option<f64> {
    let (u0, u1) = (win.u_min as isize - 1, win.u_max as isize + 1);
    let (v0, v1) = (win.v_min as isize - 1, win.v_max as isize + 1);
    let mut ring = Vec::new();
    for v in v0..=v1 {
        for u in u0..=u1 {
            let on_edge = u == u0 || u == u1 || v == v0 || v == v1;
            if on_edge && frame.contains(u, v) {
                ring.push(frame.get(u as usize, v as usize).as_f64());
            }
        }
    }
    median(ring)
}

/// Fits `log(I − bg) = a + b·du + c·dv + d·(du² + dv²)` over the window around
/// the cluster peak and returns the vertex. Falls back to [`centroid_cog`],
/// flagged, when too few pixels rise above the background or the fitted
/// surface is not concave.
pub fn centroid_gaussian_grid<T: Real>(
    frame: &Grid<T>,
    cluster: &PixelCluster<T>,
    window_half: usize,
) -> Result<Centroid> {
    let fallback = || {
        centroid_cog(cluster).map(|c| Centroid {
            flag: Some(CentroidFlag::GaussianFallback),
            ..c
        })
    };
    let Some(&(pu, pv, _)) = cluster
        .pixels
        .iter()
        .reduce(|best, p| if p.2 > best.2 { p } else { best })
    else {
        return Err(Error::ZeroIntensity);
    };
    let (w, h) = frame.dims();
    let win = PixelWindow::around(pu as isize, pv as isize, window_half as isize, w, h)
        .expect("peak lies in frame");
    let bg = ring_background(frame, &win).unwrap_or(0.0);

    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut total = 0.0;
    for (u, v) in win.pixels() {
        let x = frame.get(u, v).as_f64() - bg;
        if !(x > 0.0) {
            continue;
        }
        let (du, dv) = (u as f64 - pu as f64, v as f64 - pv as f64);
        let sw = x.sqrt();
        rows.extend_from_slice(&[sw, sw * du, sw * dv, sw * (du * du + dv * dv)]);
        rhs.push(sw * x.ln());
        total += x;
    }
    let n = rhs.len();
    if n < GAUSSIAN_MIN_PIXELS {
        return fallback();
    }
    let fit = lstsq(&rows, n, 4, &rhs, default_rcond());
    let [_, b, c, d] = [fit.x[0], fit.x[1], fit.x[2], fit.x[3]];
    if fit.rank < 4 || !(d < -FLAT_CURVATURE) {
        return fallback();
    }
    let (du, dv) = (-b / (2.0 * d), -c / (2.0 * d));
    // A vertex far outside the window means the parabola is nearly flat.
    let reach = window_half as f64 + 1.0;
    if !du.is_finite() || !dv.is_finite() || du.abs() > reach || dv.abs() > reach {
        return fallback();
    }
    Ok(Centroid {
        u: pu as f64 + du,
        v: pv as f64 + dv,
        method: CentroidMethod::GaussianGrid,
        quality: total,
        flag: None,
    })
}
