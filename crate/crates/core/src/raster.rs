//! Dense row-major image buffers shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};

/// A `width × height` grid stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Linear RGB in `[0, 1]`.
pub type Rgb = [f64; 3];

/// Metric depth in meters; `0.0` marks a missing measurement.
pub type DepthImage = Raster<f64>;

pub type ColorImage = Raster<Rgb>;

impl<T: Clone> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Raster<T> {
    /// Wraps an existing row-major buffer.
    ///
    /// # Panics
    /// If `data.len() != width * height`.
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(
            data.len(),
            width * height,
            "raster buffer length does not match {width}x{height}"
        );
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
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index_of(&self, u: usize, v: usize) -> usize {
        debug_assert!(u < self.width && v < self.height);
        v * self.width + u
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> &T {
        &self.data[v * self.width + u]
    }

    #[inline]
    pub fn get_mut(&mut self, u: usize, v: usize) -> &mut T {
        &mut self.data[v * self.width + u]
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn same_shape<U>(&self, other: &Raster<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T: Copy> Raster<T> {
    #[inline]
    pub fn at(&self, u: usize, v: usize) -> T {
        self.data[v * self.width + u]
    }
}

impl Raster<f64> {
    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Nearest-neighbour decimation: keeps pixel `(k·u, k·v)`. Depth values are
/// never blended across discontinuities.
pub fn downsample_nearest<T: Copy>(src: &Raster<T>, factor: usize) -> Raster<T> {
    assert!(factor >= 1);
    let w = src.width.div_ceil(factor);
    let h = src.height.div_ceil(factor);
    Raster::from_fn(w, h, |u, v| src.at(u * factor, v * factor))
}

/// Box-filter decimation of a color image over each `factor × factor` block.
pub fn downsample_area(src: &ColorImage, factor: usize) -> ColorImage {
    assert!(factor >= 1);
    let w = src.width.div_ceil(factor);
    let h = src.height.div_ceil(factor);
    Raster::from_fn(w, h, |u, v| {
        let mut acc = [0.0; 3];
        let mut n = 0.0;
        for y in v * factor..((v + 1) * factor).min(src.height) {
            for x in u * factor..((u + 1) * factor).min(src.width) {
                let c = src.at(x, y);
                acc[0] += c[0];
                acc[1] += c[1];
                acc[2] += c[2];
                n += 1.0;
            }
        }
        [acc[0] / n, acc[1] / n, acc[2] / n]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_keeps_even_pixels() {
        let r = Raster::from_fn(5, 3, |u, v| (u + 10 * v) as f64);
        let d = downsample_nearest(&r, 2);
        assert_eq!((d.width(), d.height()), (3, 2));
        assert_eq!(d.at(2, 1), 24.0);
    }

    #[test]
    fn area_average() {
        let r = Raster::from_fn(2, 2, |u, _| [u as f64, 0.0, 1.0]);
        let d = downsample_area(&r, 2);
        assert_eq!(d.at(0, 0), [0.5, 0.0, 1.0]);
    }
}
