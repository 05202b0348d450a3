//! Real-valued sampled images (detector frames, intensity maps).
//!
//! Row `i` holds samples at `y = (i - ny/2) * dy` and column `j` at
//! `x = (j - nx/2) * dx`, so `y` grows with the row index. Serializers that
//! display images with `y` pointing up must flip rows.

use std::ops::{Add, Mul};

use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RealImage {
    pub data: Array2<f64>,
    pub dx: f64,
    pub dy: f64,
}

impl RealImage {
    pub fn new(data: Array2<f64>, dx: f64, dy: f64) -> Result<Self> {
        if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
            return Err(Error::InvalidImage(format!("non-positive pitch ({dx}, {dy})")));
        }
        if data.is_empty() {
            return Err(Error::InvalidImage("empty image".into()));
        }
        Ok(Self { data, dx, dy })
    }

    /// Image with square pixels.
    pub fn square(data: Array2<f64>, pitch: f64) -> Result<Self> {
        Self::new(data, pitch, pitch)
    }

    pub fn nx(&self) -> usize {
        self.data.ncols()
    }

    pub fn ny(&self) -> usize {
        self.data.nrows()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx(), self.ny())
    }

    pub fn sum(&self) -> f64 {
        self.data.sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            data: &self.data * c,
            dx: self.dx,
            dy: self.dy,
        }
    }

    /// Physical x coordinate of column `j`.
    pub fn x_of(&self, j: f64) -> f64 {
        (j - (self.nx() / 2) as f64) * self.dx
    }

    pub fn y_of(&self, i: f64) -> f64 {
        (i - (self.ny() / 2) as f64) * self.dy
    }

    /// Fractional column index of physical coordinate `x`.
    pub fn col_of(&self, x: f64) -> f64 {
        x / self.dx + (self.nx() / 2) as f64
    }

    pub fn row_of(&self, y: f64) -> f64 {
        y / self.dy + (self.ny() / 2) as f64
    }

    /// Bilinear sample at fractional (row, col); zero outside the image.
    pub fn sample(&self, row: f64, col: f64) -> f64 {
        bilinear(&self.data, row, col, 0.0)
    }

    pub(crate) fn check_values(&self) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidImage(
                "image must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Intensity-weighted centroid in fractional (row, col) indices.
    pub fn centroid_index(&self) -> Option<(f64, f64)> {
        let mut s = 0.0;
        let mut sr = 0.0;
        let mut sc = 0.0;
        for ((i, j), &v) in self.data.indexed_iter() {
            s += v;
            sr += v * i as f64;
            sc += v * j as f64;
        }
        (s > 0.0).then(|| (sr / s, sc / s))
    }
}

/// Bilinear interpolation on a row-major grid; samples outside return `outside`.
pub(crate) fn bilinear<T>(data: &Array2<T>, row: f64, col: f64, outside: T) -> T
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    let (ny, nx) = data.dim();
    if !(row >= 0.0 && col >= 0.0) || row > (ny - 1) as f64 || col > (nx - 1) as f64 {
        return outside;
    }
    let i0 = (row.floor() as usize).min(ny.saturating_sub(2));
    let j0 = (col.floor() as usize).min(nx.saturating_sub(2));
    let fr = row - i0 as f64;
    let fc = col - j0 as f64;
    let i1 = (i0 + 1).min(ny - 1);
    let j1 = (j0 + 1).min(nx - 1);
    data[(i0, j0)] * ((1.0 - fr) * (1.0 - fc))
        + data[(i0, j1)] * ((1.0 - fr) * fc)
        + data[(i1, j0)] * (fr * (1.0 - fc))
        + data[(i1, j1)] * (fr * fc)
}

/// Moving average with a centered odd window, shrinking at the edges.
pub(crate) fn moving_average(values: &[f64], width: usize) -> Vec<f64> {
    if width <= 1 || values.is_empty() {
        return values.to_vec();
    }
    let half = width / 2;
    let n = values.len();
    let mut prefix = vec![0.0; n + 1];
    for (k, v) in values.iter().enumerate() {
        prefix[k + 1] = prefix[k] + v;
    }
    (0..n)
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}
