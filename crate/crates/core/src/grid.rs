//! Dense row-major 2-D grids.

use serde::{Deserialize, Serialize};

/// A `width x height` row-major grid. Index `(u, v)` is column `u`, row `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Wraps an existing buffer. Panics if its length disagrees with the dimensions.
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "grid buffer length");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> T {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: T) {
        self.data[v * self.width + u] = value;
    }

    #[inline]
    pub fn get_mut(&mut self, u: usize, v: usize) -> &mut T {
        &mut self.data[v * self.width + u]
    }

    /// Value at signed coordinates with edge clamping.
    #[inline]
    pub fn get_clamped(&self, u: isize, v: isize) -> T {
        let u = u.clamp(0, self.width as isize - 1) as usize;
        let v = v.clamp(0, self.height as isize - 1) as usize;
        self.get(u, v)
    }

    #[inline]
    pub fn contains(&self, u: isize, v: isize) -> bool {
        u >= 0 && v >= 0 && (u as usize) < self.width && (v as usize) < self.height
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    /// Mirror left-right.
    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.width, self.height, |u, v| {
            self.get(self.width - 1 - u, v)
        })
    }

    /// Mirror top-bottom.
    pub fn flip_vertical(&self) -> Self {
        Self::from_fn(self.width, self.height, |u, v| {
            self.get(u, self.height - 1 - v)
        })
    }

    /// Iterates `(u, v, value)` in row-major order.
    pub fn iter_coords(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, &x)| (i % w, i / w, x))
    }
}

/// Inclusive pixel rectangle, already clipped to a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelWindow {
    pub u_min: usize,
    pub u_max: usize,
    pub v_min: usize,
    pub v_max: usize,
}

impl PixelWindow {
    /// Square window of the given half-width around `(cu, cv)`, clipped to
    /// `width x height`. `None` when nothing of it lies inside.
    pub fn around(cu: isize, cv: isize, half: isize, width: usize, height: usize) -> Option<Self> {
        let u0 = (cu - half).max(0);
        let v0 = (cv - half).max(0);
        let u1 = (cu + half).min(width as isize - 1);
        let v1 = (cv + half).min(height as isize - 1);
        if u0 > u1 || v0 > v1 {
            return None;
        }
        Some(Self {
            u_min: u0 as usize,
            u_max: u1 as usize,
            v_min: v0 as usize,
            v_max: v1 as usize,
        })
    }

    pub fn area(&self) -> usize {
        (self.u_max - self.u_min + 1) * (self.v_max - self.v_min + 1)
    }

    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.v_min..=self.v_max).flat_map(move |v| (self.u_min..=self.u_max).map(move |u| (u, v)))
    }
}
