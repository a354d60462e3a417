//! Grid types and the discrete differential operators shared by every module.
//!
//! Conventions: `x` is the column index and grows to the right, `y` is the row
//! index and grows downward (image order). Grid spacing is one cell. Derivatives
//! use central differences on interior cells and first-order one-sided
//! differences on the outermost ring.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible side length of any grid.
pub const MIN_SIDE: usize = 4;

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width < MIN_SIDE || height < MIN_SIDE {
        return Err(Error::GridTooSmall {
            width,
            height,
            min: MIN_SIDE,
        });
    }
    Ok(())
}

/// Dense row-major grid of `(u, v)` samples.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    width: usize,
    height: usize,
    data: Vec<[f64; 2]>,
}

/// Dense row-major grid of scalar samples.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl VectorField {
    pub fn new(width: usize, height: usize, data: Vec<[f64; 2]>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                actual: data.len(),
            });
        }
        if let Some(index) = data
            .iter()
            .position(|v| !v[0].is_finite() || !v[1].is_finite())
        {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            data: vec![[0.0; 2]; width * height],
        })
    }

    /// Samples `f(x, y)` at every cell.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 2],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    /// Builds from data already known to be finite and correctly sized.
    pub(crate) fn from_parts(width: usize, height: usize, data: Vec<[f64; 2]>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[[f64; 2]] {
        &self.data
    }

    pub fn into_data(self) -> Vec<[f64; 2]> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 2] {
        self.data[y * self.width + x]
    }

    /// Single channel (0 = u, 1 = v) as a scalar field.
    pub fn channel(&self, c: usize) -> ScalarField {
        ScalarField::from_parts(
            self.width,
            self.height,
            self.data.iter().map(|v| v[c]).collect(),
        )
    }

    pub fn from_channels(u: &ScalarField, v: &ScalarField) -> Result<Self> {
        ensure_same_dims(u.dims(), v.dims())?;
        Ok(Self::from_parts(
            u.width,
            u.height,
            u.data.iter().zip(&v.data).map(|(&a, &b)| [a, b]).collect(),
        ))
    }

    pub fn magnitudes(&self) -> ScalarField {
        ScalarField::from_parts(
            self.width,
            self.height,
            self.data.iter().map(|v| v[0].hypot(v[1])).collect(),
        )
    }

    pub fn max_magnitude(&self) -> f64 {
        self.data
            .iter()
            .map(|v| v[0].hypot(v[1]))
            .fold(0.0, f64::max)
    }

    pub fn add(&self, other: &VectorField) -> Result<VectorField> {
        self.zip_with(other, |a, b| [a[0] + b[0], a[1] + b[1]])
    }

    pub fn sub(&self, other: &VectorField) -> Result<VectorField> {
        self.zip_with(other, |a, b| [a[0] - b[0], a[1] - b[1]])
    }

    pub fn scale(&self, k: f64) -> VectorField {
        self.map(|v| [v[0] * k, v[1] * k])
    }

    pub fn map(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> VectorField {
        Self::from_parts(
            self.width,
            self.height,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn zip_with(
        &self,
        other: &VectorField,
        f: impl Fn([f64; 2], [f64; 2]) -> [f64; 2],
    ) -> Result<VectorField> {
        ensure_same_dims(self.dims(), other.dims())?;
        Ok(Self::from_parts(
            self.width,
            self.height,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    /// Bilinear interpolation at a sub-cell position, clamped to the grid.
    pub fn sample(&self, x: f64, y: f64) -> [f64; 2] {
        let (i, tx) = locate(x, self.width);
        let (j, ty) = locate(y, self.height);
        let at = |i: usize, j: usize| self.data[j * self.width + i];
        let (a, b, c, d) = (at(i, j), at(i + 1, j), at(i, j + 1), at(i + 1, j + 1));
        let mut out = [0.0; 2];
        for k in 0..2 {
            out[k] = lerp(lerp(a[k], b[k], tx), lerp(c[k], d[k], tx), ty);
        }
        out
    }

    /// Copies the cells covered by `rect` into a standalone field.
    pub fn extract(&self, rect: Rect) -> Result<VectorField> {
        rect.check_within(self.width, self.height)?;
        let mut data = Vec::with_capacity(rect.width() * rect.height());
        for y in rect.y0..rect.y1 {
            let row = y * self.width;
            data.extend_from_slice(&self.data[row + rect.x0..row + rect.x1]);
        }
        VectorField::new(rect.width(), rect.height(), data)
    }

    /// Overwrites the cells covered by `rect` with `patch`.
    pub fn paste(&mut self, rect: Rect, patch: &VectorField) -> Result<()> {
        rect.check_within(self.width, self.height)?;
        ensure_same_dims((rect.width(), rect.height()), patch.dims())?;
        for (py, y) in (rect.y0..rect.y1).enumerate() {
            let dst = y * self.width + rect.x0;
            let src = py * patch.width;
            self.data[dst..dst + rect.width()]
                .copy_from_slice(&patch.data[src..src + patch.width]);
        }
        Ok(())
    }
}

impl ScalarField {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                actual: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self::from_parts(width, height, vec![0.0; width * height]))
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub(crate) fn from_parts(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        Self::from_parts(
            self.width,
            self.height,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bilinear interpolation at a sub-cell position, clamped to the grid.
    /// The result never leaves the range of the four surrounding samples.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let (i, tx) = locate(x, self.width);
        let (j, ty) = locate(y, self.height);
        let at = |i: usize, j: usize| self.data[j * self.width + i];
        lerp(
            lerp(at(i, j), at(i + 1, j), tx),
            lerp(at(i, j + 1), at(i + 1, j + 1), tx),
            ty,
        )
    }

    /// Values on cells with `1 <= x < width-1` and `1 <= y < height-1`.
    pub fn interior(&self) -> impl Iterator<Item = f64> + '_ {
        (1..self.height - 1).flat_map(move |y| {
            let row = y * self.width;
            self.data[row + 1..row + self.width - 1].iter().copied()
        })
    }

    /// Root-mean-square over interior cells.
    pub fn interior_rms(&self) -> f64 {
        let n = ((self.width - 2) * (self.height - 2)) as f64;
        (self.interior().map(|v| v * v).sum::<f64>() / n).sqrt()
    }
}

pub(crate) fn ensure_same_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            a_width: a.0,
            a_height: a.1,
            b_width: b.0,
            b_height: b.1,
        });
    }
    Ok(())
}

/// Axis-aligned cell rectangle, `x0..x1` by `y0..y1` (end exclusive).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self::new(0, 0, width, height)
    }

    pub fn width(&self) -> usize {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> usize {
        self.y1.saturating_sub(self.y0)
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    /// Bounds and minimum-size check against a `width` x `height` grid.
    pub fn check_within(&self, width: usize, height: usize) -> Result<()> {
        if self.x0 >= self.x1 || self.y0 >= self.y1 || self.x1 > width || self.y1 > height {
            return Err(Error::RegionOutOfBounds(*self, width, height));
        }
        if self.width() < MIN_SIDE || self.height() < MIN_SIDE {
            return Err(Error::RegionTooSmall(*self));
        }
        Ok(())
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})x[{},{})", self.x0, self.x1, self.y0, self.y1)
    }
}

/// Cell and fraction of a coordinate clamped to `0..=n-1`.
#[inline]
fn locate(p: f64, n: usize) -> (usize, f64) {
    let p = p.clamp(0.0, (n - 1) as f64);
    let i = (p.floor() as usize).min(n - 2);
    (i, p - i as f64)
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 1.0 {
        return b;
    }
    // stays inside [min(a,b), max(a,b)] despite rounding
    (a + t * (b - a)).clamp(a.min(b), a.max(b))
}

/// Derivative along a line of `n` samples at position `i`, read through `at`.
#[inline]
fn diff(at: impl Fn(usize) -> f64, i: usize, n: usize) -> f64 {
    if i == 0 {
        at(1) - at(0)
    } else if i == n - 1 {
        at(n - 1) - at(n - 2)
    } else {
        0.5 * (at(i + 1) - at(i - 1))
    }
}

#[inline]
fn dx_vec(f: &VectorField, c: usize, x: usize, y: usize) -> f64 {
    let row = y * f.width;
    diff(|i| f.data[row + i][c], x, f.width)
}

#[inline]
fn dy_vec(f: &VectorField, c: usize, x: usize, y: usize) -> f64 {
    diff(|j| f.data[j * f.width + x][c], y, f.height)
}

#[inline]
pub(crate) fn dx_scalar(s: &ScalarField, x: usize, y: usize) -> f64 {
    let row = y * s.width;
    diff(|i| s.data[row + i], x, s.width)
}

#[inline]
pub(crate) fn dy_scalar(s: &ScalarField, x: usize, y: usize) -> f64 {
    diff(|j| s.data[j * s.width + x], y, s.height)
}

/// `du/dx + dv/dy`.
pub fn divergence(f: &VectorField) -> ScalarField {
    let (w, h) = f.dims();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            out.push(dx_vec(f, 0, x, y) + dy_vec(f, 1, x, y));
        }
    }
    ScalarField::from_parts(w, h, out)
}

/// Scalar vorticity `dv/dx - du/dy`.
pub fn curl2d(f: &VectorField) -> ScalarField {
    let (w, h) = f.dims();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            out.push(dx_vec(f, 1, x, y) - dy_vec(f, 0, x, y));
        }
    }
    ScalarField::from_parts(w, h, out)
}

/// `(ds/dx, ds/dy)`.
pub fn gradient(s: &ScalarField) -> VectorField {
    let (w, h) = s.dims();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            out.push([dx_scalar(s, x, y), dy_scalar(s, x, y)]);
        }
    }
    VectorField::from_parts(w, h, out)
}

/// `(ds/dy, -ds/dx)`, the velocity field of stream function `s`.
pub fn perp_gradient(s: &ScalarField) -> VectorField {
    let (w, h) = s.dims();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            out.push([dy_scalar(s, x, y), -dx_scalar(s, x, y)]);
        }
    }
    VectorField::from_parts(w, h, out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMode {
    /// Divide by the largest vector magnitude.
    MaxNorm,
    /// Per-channel zero mean and unit (population) standard deviation.
    ZScore,
}

pub fn normalize_field(f: &VectorField, mode: NormMode) -> Result<VectorField> {
    match mode {
        NormMode::MaxNorm => {
            let m = f.max_magnitude();
            if m == 0.0 {
                return Err(Error::DegenerateField("all vectors are zero"));
            }
            Ok(f.map(|v| [v[0] / m, v[1] / m]))
        }
        NormMode::ZScore => {
            let n = f.data.len() as f64;
            let mut mean = [0.0; 2];
            for v in &f.data {
                mean[0] += v[0];
                mean[1] += v[1];
            }
            mean[0] /= n;
            mean[1] /= n;
            let mut var = [0.0; 2];
            for v in &f.data {
                var[0] += (v[0] - mean[0]).powi(2);
                var[1] += (v[1] - mean[1]).powi(2);
            }
            let std = [(var[0] / n).sqrt(), (var[1] / n).sqrt()];
            if std[0] == 0.0 || std[1] == 0.0 {
                return Err(Error::DegenerateField("channel has zero variance"));
            }
            Ok(f.map(|v| [(v[0] - mean[0]) / std[0], (v[1] - mean[1]) / std[1]]))
        }
    }
}
