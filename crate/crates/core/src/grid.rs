//! Uniform sample grids and half-maximum width extraction.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `x_j = start + j * step`, `j = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl UniformGrid {
    pub fn new(start: f64, step: f64, len: usize) -> Result<Self> {
        let g = UniformGrid { start, step, len };
        g.validate()?;
        Ok(g)
    }

    /// `len` points centred on zero: `x_j = (j - len/2) * step`, spanning `[-half_span, half_span)`.
    pub fn centered(len: usize, half_span: f64) -> Result<Self> {
        if len < 2 || !len.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "centered grid needs an even number of points >= 2, got {len}"
            )));
        }
        let step = 2.0 * half_span / len as f64;
        Self::new(-(len as f64 / 2.0) * step, step, len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.len < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 samples, got {}", self.len)));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "spacing must be finite and strictly positive, got {}",
                self.step
            )));
        }
        if !self.start.is_finite() {
            return Err(Error::InvalidGrid("start must be finite".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn at(&self, j: usize) -> f64 {
        self.start + j as f64 * self.step
    }

    pub fn end(&self) -> f64 {
        self.at(self.len - 1)
    }

    /// Total extent `len * step`.
    pub fn span(&self) -> f64 {
        self.len as f64 * self.step
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |j| self.at(j))
    }

    /// Index of the sample nearest to `x`, clamped to the grid.
    pub fn nearest_index(&self, x: f64) -> usize {
        let j = ((x - self.start) / self.step).round();
        j.clamp(0.0, (self.len - 1) as f64) as usize
    }

    /// The grid on the other side of a discrete Fourier transform,
    /// `step' = 2 pi / (len * step)`, centred on zero.
    pub fn conjugate(&self) -> UniformGrid {
        let step = 2.0 * PI / (self.len as f64 * self.step);
        UniformGrid {
            start: -((self.len / 2) as f64) * step,
            step,
            len: self.len,
        }
    }

    pub fn same_as(&self, other: &UniformGrid) -> bool {
        let tol = 1e-9 * self.step.abs().max(other.step.abs());
        self.len == other.len
            && (self.step - other.step).abs() <= tol
            && (self.start - other.start).abs() <= tol * self.len as f64
    }
}

/// Half-maximum crossing positions of the lobe containing the global maximum.
///
/// Crossings are located by linear interpolation between the bracketing samples.
/// Ties for the maximum resolve to the earliest sample. Returns `None` when the
/// lobe does not fall below half maximum on both sides inside the data.
pub fn half_max_crossings(grid: &UniformGrid, y: &[f64]) -> Option<(f64, f64)> {
    if y.len() != grid.len || y.is_empty() {
        return None;
    }
    let (imax, ymax) = y
        .iter()
        .copied()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    if !(ymax > 0.0) {
        return None;
    }
    crossings_around(grid, y, imax, ymax / 2.0)
}

/// Crossings of `level` on either side of sample `center`, assumed above `level`.
pub fn crossings_around(grid: &UniformGrid, y: &[f64], center: usize, level: f64) -> Option<(f64, f64)> {
    let mut l = center;
    while y[l] > level {
        if l == 0 {
            return None;
        }
        l -= 1;
    }
    let mut r = center;
    while y[r] > level {
        r += 1;
        if r == y.len() {
            return None;
        }
    }
    let left = interp_crossing(grid.at(l), grid.at(l + 1), y[l], y[l + 1], level);
    let right = interp_crossing(grid.at(r - 1), grid.at(r), y[r - 1], y[r], level);
    Some((left, right))
}

fn interp_crossing(x0: f64, x1: f64, y0: f64, y1: f64, level: f64) -> f64 {
    if y1 == y0 {
        return 0.5 * (x0 + x1);
    }
    x0 + (level - y0) / (y1 - y0) * (x1 - x0)
}

/// Full width at half maximum of the dominant lobe.
pub fn fwhm(grid: &UniformGrid, y: &[f64]) -> Option<f64> {
    half_max_crossings(grid, y).map(|(l, r)| r - l)
}
