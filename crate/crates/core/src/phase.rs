//! Discrete phase model: wrapping, forward-difference gradient and its
//! adjoint, and Itoh-condition diagnostics.
//!
//! Images are stored row-major. Gradient fields are flattened as the
//! horizontal block followed by the vertical block, giving `2 * N` entries.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// Wrap a phase value into `[-pi, pi)`.
///
/// Uses the mathematical modulo, so negative inputs land in the same
/// interval as positive ones.
pub fn wrap(lambda: f64) -> Result<f64> {
    if !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("cannot wrap non-finite value {lambda}")));
    }
    Ok(wrap_unchecked(lambda))
}

#[inline]
pub(crate) fn wrap_unchecked(lambda: f64) -> f64 {
    let r = (lambda + PI).rem_euclid(TWO_PI) - PI;
    // rem_euclid may round up to exactly 2pi for tiny negative inputs.
    if r >= PI {
        r - TWO_PI
    } else {
        r
    }
}

fn check_layout(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidInput(format!("empty grid {width}x{height}")));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::InvalidInput(format!(
            "data length {len} does not match {width}x{height}"
        )));
    }
    Ok(())
}

/// A real-valued phase field in radians on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl PhaseImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_layout(width, height, data.len())?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite phase value at index {i}")));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    /// Build an image from a function of `(row, col)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self::new(width, height, data)
    }

    /// Internal constructor for buffers already known to be finite.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn same_shape(&self, other: &PhaseImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Element-wise sum, used to form `x + n` and `u + v`.
    pub fn add(&self, other: &PhaseImage) -> Result<PhaseImage> {
        if !self.same_shape(other) {
            return Err(Error::InvalidInput(format!(
                "shape mismatch {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        PhaseImage::new(self.width, self.height, data)
    }

    pub fn scale(&self, factor: f64) -> Result<PhaseImage> {
        PhaseImage::new(self.width, self.height, self.data.iter().map(|v| v * factor).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.data)
    }
}

/// Observed phase, every value in `[-pi, pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WrappedImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl WrappedImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_layout(width, height, data.len())?;
        if let Some(i) = data.iter().position(|v| !(-PI..PI).contains(v)) {
            return Err(Error::InvalidInput(format!(
                "wrapped value {} at index {i} outside [-pi, pi)",
                data[i]
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// View the wrapped values as an ordinary phase image.
    pub fn to_phase(&self) -> PhaseImage {
        PhaseImage::from_raw(self.width, self.height, self.data.clone())
    }
}

/// Horizontal and vertical forward differences of an image.
///
/// `dx` is zero on the last column and `dy` is zero on the last row.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    width: usize,
    height: usize,
    dx: Vec<f64>,
    dy: Vec<f64>,
}

impl GradientField {
    pub fn new(width: usize, height: usize, dx: Vec<f64>, dy: Vec<f64>) -> Result<Self> {
        check_layout(width, height, dx.len())?;
        check_layout(width, height, dy.len())?;
        Ok(Self { width, height, dx, dy })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        let n = width * height;
        Self { width, height, dx: vec![0.0; n], dy: vec![0.0; n] }
    }

    /// Rebuild from the stacked `(dx, dy)` layout of length `2 * N`.
    pub fn from_stacked(width: usize, height: usize, stacked: &[f64]) -> Result<Self> {
        let n = width * height;
        if stacked.len() != 2 * n {
            return Err(Error::InvalidInput(format!(
                "stacked gradient length {} does not match 2 * {n}",
                stacked.len()
            )));
        }
        Self::new(width, height, stacked[..n].to_vec(), stacked[n..].to_vec())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dx(&self) -> &[f64] {
        &self.dx
    }

    pub fn dy(&self) -> &[f64] {
        &self.dy
    }

    /// Flatten to the `(dx, dy)` stacked vector.
    pub fn to_stacked(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.dx.len());
        out.extend_from_slice(&self.dx);
        out.extend_from_slice(&self.dy);
        out
    }

    pub fn l1_distance(&self, other: &GradientField) -> f64 {
        self.dx
            .iter()
            .zip(&other.dx)
            .chain(self.dy.iter().zip(&other.dy))
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

pub fn wrap_image(x: &PhaseImage) -> WrappedImage {
    WrappedImage {
        width: x.width,
        height: x.height,
        data: x.data.iter().map(|&v| wrap_unchecked(v)).collect(),
    }
}

pub fn gradient(x: &PhaseImage) -> GradientField {
    let mut out = vec![0.0; 2 * x.len()];
    gradient_into(x.width, x.height, &x.data, &mut out);
    let dy = out.split_off(x.len());
    GradientField { width: x.width, height: x.height, dx: out, dy }
}

/// Negative divergence, the exact adjoint of [`gradient`].
pub fn gradient_adjoint(g: &GradientField) -> PhaseImage {
    let mut stacked = Vec::with_capacity(2 * g.dx.len());
    stacked.extend_from_slice(&g.dx);
    stacked.extend_from_slice(&g.dy);
    let mut out = vec![0.0; g.dx.len()];
    gradient_adjoint_into(g.width, g.height, &stacked, &mut out);
    PhaseImage::from_raw(g.width, g.height, out)
}

/// `q = W(grad y)`.
pub fn wrapped_gradient(y: &WrappedImage) -> GradientField {
    let mut g = gradient(&y.to_phase());
    for v in g.dx.iter_mut().chain(g.dy.iter_mut()) {
        *v = wrap_unchecked(*v);
    }
    g
}

/// Gradient entries (indices into the stacked `2 * N` vector) violating
/// the Itoh condition `|grad_j| <= pi`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItohReport {
    pub indices: Vec<usize>,
}

impl ItohReport {
    pub fn count(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn itoh_violations(x_plus_n: &PhaseImage) -> ItohReport {
    let g = gradient(x_plus_n);
    let indices = g
        .dx
        .iter()
        .chain(&g.dy)
        .enumerate()
        .filter(|(_, v)| v.abs() > PI)
        .map(|(i, _)| i)
        .collect();
    ItohReport { indices }
}

/// Stacked forward differences of a row-major `width x height` buffer.
pub(crate) fn gradient_into(width: usize, height: usize, x: &[f64], out: &mut [f64]) {
    let n = width * height;
    debug_assert_eq!(x.len(), n);
    debug_assert_eq!(out.len(), 2 * n);
    let (dx, dy) = out.split_at_mut(n);
    for (row, drow) in x.chunks_exact(width).zip(dx.chunks_exact_mut(width)) {
        for j in 0..width - 1 {
            drow[j] = row[j + 1] - row[j];
        }
        drow[width - 1] = 0.0;
    }
    for i in 0..height - 1 {
        let cur = &x[i * width..(i + 1) * width];
        let next = &x[(i + 1) * width..(i + 2) * width];
        for ((d, a), b) in dy[i * width..(i + 1) * width].iter_mut().zip(cur).zip(next) {
            *d = b - a;
        }
    }
    dy[(height - 1) * width..].fill(0.0);
}

/// Adjoint of [`gradient_into`] applied to a stacked `2 * N` field.
pub(crate) fn gradient_adjoint_into(width: usize, height: usize, g: &[f64], out: &mut [f64]) {
    let n = width * height;
    debug_assert_eq!(g.len(), 2 * n);
    debug_assert_eq!(out.len(), n);
    let (dx, dy) = g.split_at(n);
    for (orow, drow) in out.chunks_exact_mut(width).zip(dx.chunks_exact(width)) {
        if width == 1 {
            orow[0] = 0.0;
            continue;
        }
        orow[0] = -drow[0];
        for j in 1..width - 1 {
            orow[j] = drow[j - 1] - drow[j];
        }
        orow[width - 1] = drow[width - 2];
    }
    for i in 0..height {
        let orow = &mut out[i * width..(i + 1) * width];
        if i + 1 < height {
            for (o, d) in orow.iter_mut().zip(&dy[i * width..(i + 1) * width]) {
                *o -= d;
            }
        }
        if i > 0 {
            for (o, d) in orow.iter_mut().zip(&dy[(i - 1) * width..i * width]) {
                *o += d;
            }
        }
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
