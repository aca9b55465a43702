//! Centroid extraction from segmentation and distance maps.
//!
//! Candidate pixels (star mask set, distance under a small gate) are visited
//! nearest-first. Each one opens a 5x5 window whose per-pixel distances are
//! turned into a linear least-squares trilateration for the sub-pixel centroid.

use serde::{Deserialize, Serialize};

use crate::classical::{Centroid, CentroidFlag, CentroidMethod};
use crate::error::{Error, Result};
use crate::grid::{Grid, PixelWindow};
use crate::linalg::{default_rcond, lstsq};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineParams {
    /// Distance gate for candidate pixels, in pixels.
    pub d_th: f64,
    /// Binarization threshold on the predicted star probability.
    pub seg_threshold: f64,
    pub window_half: usize,
    /// Centroids closer than this are merged, keeping the first.
    pub merge_radius: f64,
    /// Evaluation match radius between estimates and true centroids.
    pub r_match: f64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            d_th: 0.5 * std::f64::consts::SQRT_2,
            seg_threshold: 0.5,
            window_half: 2,
            merge_radius: 1.0,
            r_match: 1.5,
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_th > 0.0) || !self.d_th.is_finite() {
            return Err(Error::Config(format!("pipeline.d_th must be positive, got {}", self.d_th)));
        }
        if !(self.seg_threshold > 0.0 && self.seg_threshold < 1.0) {
            return Err(Error::Config(format!(
                "pipeline.seg_threshold must lie in (0, 1), got {}",
                self.seg_threshold
            )));
        }
        if self.window_half == 0 {
            return Err(Error::Config("pipeline.window_half must be at least 1".into()));
        }
        if !(self.merge_radius >= 0.0) {
            return Err(Error::Config("pipeline.merge_radius must be non-negative".into()));
        }
        if !(self.r_match > 0.0) || !self.r_match.is_finite() {
            return Err(Error::Config(format!("pipeline.r_match must be positive, got {}", self.r_match)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trilateration<T> {
    pub u: T,
    pub v: T,
    /// Norm of the linearized residual.
    pub residual: T,
}

/// Least-squares position from distances to known pixels.
///
/// Subtracting the squared-range equation of the farthest point from the
/// others leaves a linear system in `(u, v)`.
pub fn solve_trilateration<T: Real>(points: &[(T, T, T)]) -> Result<Trilateration<T>> {
    let n = points.len();
    if n < 3 {
        return Err(Error::Degenerate(format!("trilateration needs 3 points, got {n}")));
    }
    let r = points
        .iter()
        .enumerate()
        .fold(0, |best, (i, p)| if p.2 >= points[best].2 { i } else { best });
    let (ur, vr, dr) = points[r];
    let two = T::lit(2.0);
    let mut a = Vec::with_capacity(2 * (n - 1));
    let mut b = Vec::with_capacity(n - 1);
    for (i, &(ui, vi, di)) in points.iter().enumerate() {
        if i == r {
            continue;
        }
        a.push(two * (ui - ur));
        a.push(two * (vi - vr));
        b.push(ui * ui - ur * ur + vi * vi - vr * vr - di * di + dr * dr);
    }
    let fit = lstsq(&a, n - 1, 2, &b, default_rcond());
    if fit.rank < 2 {
        return Err(Error::Degenerate("trilateration points are collinear".into()));
    }
    Ok(Trilateration {
        u: fit.x[0],
        v: fit.x[1],
        residual: fit.residual,
    })
}

pub fn binarize<T: Real>(s_hat: &Grid<T>, threshold: T) -> Grid<u8> {
    s_hat.map(|s| u8::from(s > threshold))
}

/// Full detection record, including the visiting order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Detection {
    pub centroids: Vec<Centroid>,
    /// Candidate pixels in the order they were processed.
    pub visited_candidates: Vec<(usize, usize)>,
    /// Candidates whose clipped window held fewer than three pixels.
    pub dropped: usize,
    /// Centroids discarded as duplicates.
    pub merged: usize,
}

fn weighted_fallback<T: Real>(points: &[(T, T, T)], d_th: f64) -> Option<Centroid> {
    let (mut su, mut sv, mut sw) = (0.0, 0.0, 0.0);
    for &(u, v, d) in points {
        let w = (d_th + 2.0 - d.as_f64()).max(0.0);
        su += w * u.as_f64();
        sv += w * v.as_f64();
        sw += w;
    }
    (sw > 0.0).then(|| Centroid {
        u: su / sw,
        v: sv / sw,
        method: CentroidMethod::DistanceWeighted,
        quality: sw,
        flag: Some(CentroidFlag::DegenerateTrilateration),
    })
}

/// Runs the candidate loop on a binary star mask and a distance map in pixels.
pub fn detect_and_centroid_traced<T: Real>(
    seg: &Grid<u8>,
    dist: &Grid<T>,
    params: &PipelineParams,
) -> Result<Detection> {
    if seg.dims() != dist.dims() {
        return Err(Error::Dimension(format!(
            "mask is {:?} but distance map is {:?}",
            seg.dims(),
            dist.dims()
        )));
    }
    params.validate()?;
    let (w, h) = seg.dims();
    let d_th = T::lit(params.d_th);

    let mut candidates: Vec<(T, usize, usize)> = dist
        .iter_coords()
        .filter(|&(u, v, d)| seg.get(u, v) != 0 && d < d_th)
        .map(|(u, v, d)| (d, u, v))
        .collect();
    candidates.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then((a.2, a.1).cmp(&(b.2, b.1)))
    });

    let mut visited = vec![false; w * h];
    let mut out = Detection::default();
    let half = params.window_half as isize;
    for (_, cu, cv) in candidates {
        if visited[cv * w + cu] {
            continue;
        }
        out.visited_candidates.push((cu, cv));
        let win = PixelWindow::around(cu as isize, cv as isize, half, w, h).expect("candidate lies in frame");
        let points: Vec<(T, T, T)> = win
            .pixels()
            .map(|(u, v)| (T::lit(u as f64), T::lit(v as f64), dist.get(u, v)))
            .collect();
        for (u, v) in win.pixels() {
            visited[v * w + u] = true;
        }
        if points.len() < 3 {
            out.dropped += 1;
            continue;
        }
        let centroid = match solve_trilateration(&points) {
            Ok(t) => Some(Centroid {
                u: t.u.as_f64(),
                v: t.v.as_f64(),
                method: CentroidMethod::Trilateration,
                quality: t.residual.as_f64(),
                flag: None,
            }),
            Err(_) => weighted_fallback(&points, params.d_th),
        };
        let Some(c) = centroid else {
            out.dropped += 1;
            continue;
        };
        if !c.u.is_finite() || !c.v.is_finite() {
            out.dropped += 1;
            continue;
        }
        let duplicate = out
            .centroids
            .iter()
            .any(|k| (k.u - c.u).hypot(k.v - c.v) < params.merge_radius);
        if duplicate {
            out.merged += 1;
        } else {
            out.centroids.push(c);
        }
    }
    Ok(out)
}

pub fn detect_and_centroid<T: Real>(seg: &Grid<u8>, dist: &Grid<T>, params: &PipelineParams) -> Result<Vec<Centroid>> {
    detect_and_centroid_traced(seg, dist, params).map(|d| d.centroids)
}

/// Centroids from raw network outputs: star probability and distance scaled by `d_max`.
pub fn centroids_from_prediction<T: Real>(
    s_hat: &Grid<T>,
    d_hat_normalized: &Grid<T>,
    d_max: f64,
    params: &PipelineParams,
) -> Result<Vec<Centroid>> {
    let seg = binarize(s_hat, T::lit(params.seg_threshold));
    let scale = T::lit(d_max);
    let dist = d_hat_normalized.map(|d| d * scale);
    detect_and_centroid(&seg, &dist, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{make_distance_map, make_segmentation_map, SceneTruth, TruthStar};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn window_points(cu: f64, cv: f64, gu: i32, gv: i32) -> Vec<(f64, f64, f64)> {
        let mut p = Vec::new();
        for dv in -2..=2 {
            for du in -2..=2 {
                let (u, v) = ((gu + du) as f64, (gv + dv) as f64);
                p.push((u, v, (u - cu).hypot(v - cv)));
            }
        }
        p
    }

    fn truth(stars: &[(f64, f64)]) -> SceneTruth {
        SceneTruth {
            stars: stars
                .iter()
                .enumerate()
                .map(|(i, &(u, v))| TruthStar {
                    id: i as u64,
                    u,
                    v,
                    vmag: 3.0,
                    sigma_psf: 0.75,
                })
                .collect(),
        }
    }

    fn label_maps(stars: &[(f64, f64)], w: usize, h: usize) -> (Grid<u8>, Grid<f64>) {
        let t = truth(stars);
        (make_segmentation_map(&t, w, h), make_distance_map(&t, w, h).grid)
    }

    #[test]
    fn integer_centroid_exact() {
        let s = solve_trilateration(&window_points(10.0, 21.0, 10, 21)).unwrap();
        assert!((s.u - 10.0).abs() < 1e-9 && (s.v - 21.0).abs() < 1e-9);
    }

    #[test]
    fn subpixel_centroid_exact() {
        let s = solve_trilateration(&window_points(10.3, 20.7, 10, 21)).unwrap();
        assert!((s.u - 10.3).abs() < 1e-9 && (s.v - 20.7).abs() < 1e-9);
        assert!(s.residual < 1e-9);
    }

    #[test]
    fn works_in_f32() {
        let p: Vec<(f32, f32, f32)> = window_points(10.3, 20.7, 10, 21)
            .into_iter()
            .map(|(u, v, d)| (u as f32, v as f32, d as f32))
            .collect();
        let s = solve_trilateration(&p).unwrap();
        assert!((s.u - 10.3).abs() < 1e-3 && (s.v - 20.7).abs() < 1e-3);
    }

    #[test]
    fn degenerate_inputs() {
        let two = [(0.0, 0.0, 1.0), (1.0, 0.0, 1.0)];
        assert!(matches!(solve_trilateration(&two), Err(Error::Degenerate(_))));
        let line: Vec<(f64, f64, f64)> = (0..5).map(|i| (i as f64, 3.0, 2.0)).collect();
        assert!(matches!(solve_trilateration(&line), Err(Error::Degenerate(_))));
    }

    #[test]
    fn error_scales_linearly_with_distance_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut mean_err = Vec::new();
        for sigma in [0.01, 0.02, 0.04] {
            let noise = Normal::new(0.0, sigma).unwrap();
            let mut total = 0.0;
            let trials = 2000;
            for _ in 0..trials {
                let (cu, cv) = (10.0 + rng.random_range(-0.5..0.5), 21.0 + rng.random_range(-0.5..0.5));
                let pts: Vec<_> = window_points(cu, cv, 10, 21)
                    .into_iter()
                    .map(|(u, v, d)| (u, v, d + noise.sample(&mut rng)))
                    .collect();
                let s = solve_trilateration(&pts).unwrap();
                total += (s.u - cu).hypot(s.v - cv);
            }
            mean_err.push(total / trials as f64);
        }
        for k in 0..2 {
            let ratio = mean_err[k + 1] / mean_err[k];
            assert!((1.7..2.3).contains(&ratio), "{mean_err:?}");
        }
    }

    #[test]
    fn one_star_perfect_maps() {
        let (seg, dist) = label_maps(&[(10.3, 20.7)], 32, 32);
        let cs = detect_and_centroid(&seg, &dist, &PipelineParams::default()).unwrap();
        assert_eq!(cs.len(), 1);
        assert!((cs[0].u - 10.3).hypot(cs[0].v - 20.7) < 1e-6, "{cs:?}");
        assert_eq!(cs[0].method, CentroidMethod::Trilateration);
    }

    #[test]
    fn two_stars_perfect_maps() {
        let stars = [(12.4, 15.1), (32.4, 15.1)];
        let (seg, dist) = label_maps(&stars, 48, 32);
        let cs = detect_and_centroid(&seg, &dist, &PipelineParams::default()).unwrap();
        assert_eq!(cs.len(), 2);
        for (u, v) in stars {
            assert!(cs.iter().any(|c| (c.u - u).hypot(c.v - v) < 1e-6), "{cs:?}");
        }
    }

    #[test]
    fn empty_maps() {
        let seg = Grid::filled(16, 16, 0u8);
        let dist = Grid::filled(16, 16, 16.0f64);
        let d = detect_and_centroid_traced(&seg, &dist, &PipelineParams::default()).unwrap();
        assert!(d.centroids.is_empty() && d.visited_candidates.is_empty());
    }

    #[test]
    fn dimension_mismatch() {
        let r = detect_and_centroid(&Grid::filled(4, 4, 0u8), &Grid::filled(5, 4, 0.0f64), &PipelineParams::default());
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn degenerate_window_uses_weighted_fallback() {
        // A 1-pixel-tall frame makes every window collinear.
        let mut seg = Grid::filled(8, 1, 0u8);
        seg.set(4, 0, 1);
        let dist = Grid::from_fn(8, 1, |u, _| (u as f64 - 4.0).abs());
        let cs = detect_and_centroid(&seg, &dist, &PipelineParams::default()).unwrap();
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].flag, Some(CentroidFlag::DegenerateTrilateration));
        assert_eq!(cs[0].method, CentroidMethod::DistanceWeighted);
        assert!((cs[0].u - 4.0).abs() < 1e-12);
    }

    #[test]
    fn count_matches_well_separated_stars() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let mut stars: Vec<(f64, f64)> = Vec::new();
            while stars.len() < 6 {
                let c = (rng.random_range(2.0..62.0), rng.random_range(2.0..62.0));
                if stars.iter().all(|s| (s.0 - c.0).hypot(s.1 - c.1) > 6.0) {
                    stars.push(c);
                }
            }
            let (seg, dist) = label_maps(&stars, 64, 64);
            let cs = detect_and_centroid(&seg, &dist, &PipelineParams::default()).unwrap();
            assert_eq!(cs.len(), stars.len(), "{stars:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn loop_terminates_without_revisits(
            seed in any::<u64>(),
            density in 0.0f64..1.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let seg = Grid::from_fn(20, 20, |_, _| u8::from(rng.random_bool(density)));
            let dist = Grid::from_fn(20, 20, |_, _| rng.random_range(0.0..3.0f64));
            let d = detect_and_centroid_traced(&seg, &dist, &PipelineParams::default()).unwrap();
            let mut seen = std::collections::HashSet::new();
            for c in &d.visited_candidates {
                prop_assert!(seen.insert(*c));
            }
            prop_assert!(d.visited_candidates.len() <= 400);
            for (i, a) in d.centroids.iter().enumerate() {
                for b in &d.centroids[i + 1..] {
                    prop_assert!((a.u - b.u).hypot(a.v - b.v) >= 1.0);
                }
            }
        }
    }
}
