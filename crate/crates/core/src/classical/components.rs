use crate::grid::{Grid, PixelWindow};
use crate::scalar::Real;

use super::PixelCluster;

/// Maximal 4-connected clusters of nonzero mask pixels, in row-major order of
/// their first pixel. Intensities come from `frame`.
pub fn connected_components<T: Real>(mask: &Grid<u8>, frame: &Grid<T>) -> Vec<PixelCluster<T>> {
    assert_eq!(mask.dims(), frame.dims(), "mask and frame dimensions");
    let (w, h) = mask.dims();
    let mut seen = vec![false; w * h];
    let mut clusters = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if seen[start] || mask.as_slice()[start] == 0 {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        let (mut u0, mut u1, mut v0, mut v1) = (w, 0, h, 0);
        let mut total = T::zero();
        while let Some(i) = stack.pop() {
            let (u, v) = (i % w, i / w);
            let x = frame.get(u, v);
            pixels.push((u, v, x));
            total += x;
            u0 = u0.min(u);
            u1 = u1.max(u);
            v0 = v0.min(v);
            v1 = v1.max(v);
            let mut visit = |j: usize| {
                if !seen[j] && mask.as_slice()[j] != 0 {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if u > 0 {
                visit(i - 1);
            }
            if u + 1 < w {
                visit(i + 1);
            }
            if v > 0 {
                visit(i - w);
            }
            if v + 1 < h {
                visit(i + w);
            }
        }
        pixels.sort_by_key(|&(u, v, _)| (v, u));
        clusters.push(PixelCluster {
            pixels,
            bbox: PixelWindow {
                u_min: u0,
                u_max: u1,
                v_min: v0,
                v_max: v1,
            },
            total,
        });
    }
    clusters
}
