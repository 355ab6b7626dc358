//! Dense row-major 2D maps used for images, disparity maps and masks.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// An `H x W` row-major array.
#[derive(Clone, Debug, PartialEq)]
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

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "{}x{} grid needs {} values, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
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
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> T {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: T) {
        self.data[v * self.width + u] = value;
    }

    /// Edge-clamped read with signed coordinates.
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

    pub fn row(&self, v: usize) -> &[T] {
        &self.data[v * self.width..(v + 1) * self.width]
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_shape<U>(&self, other: &Grid<U>, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    /// Iterate `(u, v, value)` in row-major order.
    pub fn iter_indexed(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, &x)| (i % w, i / w, x))
    }
}

impl<T: Real> Grid<T> {
    /// Linear interpolation along the row at fractional column `x`.
    /// Returns `None` outside `[0, width - 1]`.
    pub fn sample_row_linear(&self, x: T, v: usize) -> Option<T> {
        let max = T::from_usize_lossy(self.width - 1);
        if !(x >= T::zero() && x <= max) {
            return None;
        }
        let x0 = x.floor();
        let i0 = x0.to_usize()?;
        let t = x - x0;
        if t == T::zero() || i0 + 1 >= self.width {
            return Some(self.get(i0, v));
        }
        let a = self.get(i0, v);
        let b = self.get(i0 + 1, v);
        Some(a + (b - a) * t)
    }

    pub fn cast<U: Real>(&self) -> Grid<U> {
        self.map(|x| U::from_f64(x.to_f64_lossy()).unwrap_or_else(U::nan))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_layout() {
        let g = Grid::from_fn(3, 2, |u, v| (10 * v + u) as f64);
        assert_eq!(g.as_slice(), &[0.0, 1.0, 2.0, 10.0, 11.0, 12.0]);
        assert_eq!(g.get(2, 1), 12.0);
        assert_eq!(g.get_clamped(-4, 9), 10.0);
    }

    #[test]
    fn linear_row_sampling() {
        let g = Grid::from_vec(3, 1, vec![0.0f64, 2.0, 6.0]).unwrap();
        assert_eq!(g.sample_row_linear(0.5, 0), Some(1.0));
        assert_eq!(g.sample_row_linear(1.25, 0), Some(3.0));
        assert_eq!(g.sample_row_linear(2.0, 0), Some(6.0));
        assert_eq!(g.sample_row_linear(-0.1, 0), None);
        assert_eq!(g.sample_row_linear(2.1, 0), None);
    }

    #[test]
    fn shape_is_checked() {
        assert!(Grid::from_vec(2, 2, vec![0.0f32; 3]).is_err());
    }
}
