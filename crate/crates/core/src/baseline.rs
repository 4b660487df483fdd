//! Reference unwrappers and an oracle-tuned wavelet denoiser.
//!
//! These form the two-step comparator (unwrap, then denoise). None of them
//! is a graph-cut method; they are simple path-following stand-ins.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::metrics::rsnr;
use crate::phase::{gradient_adjoint, wrap_unchecked, wrapped_gradient, GradientField, PhaseImage, WrappedImage};
use crate::prox::shrink_details;
use crate::wavelet::{analyze, synthesize, Wavelet, WaveletCoeffs};

/// Itoh integration: down the first column, then along each row.
pub fn unwrap_path(y: &WrappedImage) -> PhaseImage {
    let (w, h) = (y.width(), y.height());
    let yd = y.data();
    let mut out = vec![0.0; w * h];
    out[0] = yd[0];
    for i in 1..h {
        out[i * w] = out[(i - 1) * w] + wrap_unchecked(yd[i * w] - yd[(i - 1) * w]);
    }
    for i in 0..h {
        for j in 1..w {
            let k = i * w + j;
            out[k] = out[k - 1] + wrap_unchecked(yd[k] - yd[k - 1]);
        }
    }
    PhaseImage::from_raw(w, h, out)
}

/// Per-pixel reliability: inverse of the local 3x3 variance of wrapped
/// horizontal and vertical differences.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl QualityMap {
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }
}

const VARIANCE_FLOOR: f64 = 1e-12;

pub fn quality_map(y: &WrappedImage) -> QualityMap {
    let (w, h) = (y.width(), y.height());
    let q = wrapped_gradient(y);
    let (dx, dy) = (q.dx(), q.dy());
    let mut data = vec![0.0; w * h];
    for i in 0..h {
        for j in 0..w {
            let mut var = 0.0;
            // dx is defined for j < w - 1, dy for i < h - 1.
            for (field, valid_w, valid_h) in [(dx, w - 1, h), (dy, w, h - 1)] {
                let (mut sum, mut sum2, mut count) = (0.0, 0.0, 0usize);
                for ii in i.saturating_sub(1)..=(i + 1).min(h - 1) {
                    for jj in j.saturating_sub(1)..=(j + 1).min(w - 1) {
                        if ii < valid_h && jj < valid_w {
                            let v = field[ii * w + jj];
                            sum += v;
                            sum2 += v * v;
                            count += 1;
                        }
                    }
                }
                if count > 0 {
                    let mean = sum / count as f64;
                    var += (sum2 / count as f64 - mean * mean).max(0.0);
                }
            }
            data[i * w + j] = 1.0 / (var + VARIANCE_FLOOR);
        }
    }
    QualityMap { width: w, height: h, data }
}

#[derive(Debug, Clone, Copy)]
struct FrontierEdge {
    priority: f64,
    pixel: usize,
    from: usize,
}

impl PartialEq for FrontierEdge {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for FrontierEdge {}

impl PartialOrd for FrontierEdge {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FrontierEdge {
    /// Highest priority first; ties go to the lowest pixel index, then the
    /// lowest source index.
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.pixel.cmp(&self.pixel))
            .then_with(|| other.from.cmp(&self.from))
    }
}

/// Quality-guided flood fill: start at the most reliable pixel and always
/// grow through the most reliable frontier edge.
pub fn unwrap_quality_guided(y: &WrappedImage) -> PhaseImage {
    let qm = quality_map(y);
    unwrap_with_quality(y, &qm)
}

pub fn unwrap_with_quality(y: &WrappedImage, quality: &QualityMap) -> PhaseImage {
    let (w, h) = (y.width(), y.height());
    let yd = y.data();
    let qd = &quality.data;
    let mut out = vec![0.0; w * h];
    let mut done = vec![false; w * h];

    let start = qd
        .iter()
        .enumerate()
        .fold(0, |best, (k, &v)| if v > qd[best] { k } else { best });
    out[start] = yd[start];
    done[start] = true;

    let mut heap = BinaryHeap::new();
    let push_neighbors = |heap: &mut BinaryHeap<FrontierEdge>, done: &[bool], k: usize| {
        let (i, j) = (k / w, k % w);
        let mut visit = |nb: usize| {
            if !done[nb] {
                heap.push(FrontierEdge { priority: qd[k] + qd[nb], pixel: nb, from: k });
            }
        };
        if j > 0 {
            visit(k - 1);
        }
        if j + 1 < w {
            visit(k + 1);
        }
        if i > 0 {
            visit(k - w);
        }
        if i + 1 < h {
            visit(k + w);
        }
    };
    push_neighbors(&mut heap, &done, start);
    while let Some(edge) = heap.pop() {
        if done[edge.pixel] {
            continue;
        }
        let base = out[edge.from];
        out[edge.pixel] = base + wrap_unchecked(yd[edge.pixel] - base);
        done[edge.pixel] = true;
        push_neighbors(&mut heap, &done, edge.pixel);
    }
    PhaseImage::from_raw(w, h, out)
}

/// Orthonormal DCT-II basis, `basis[k * n + i] = s_k cos(pi (i + 1/2) k / n)`.
fn dct_basis(n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for k in 0..n {
        let s = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for i in 0..n {
            c[k * n + i] = s * (std::f64::consts::PI * (i as f64 + 0.5) * k as f64 / n as f64).cos();
        }
    }
    c
}

/// Apply `basis` (or its transpose) along rows and columns of a `w x h` image.
fn separable_transform(data: &[f64], w: usize, h: usize, cw: &[f64], ch: &[f64], transpose: bool) -> Vec<f64> {
    let pick = |c: &[f64], n: usize, k: usize, i: usize| if transpose { c[i * n + k] } else { c[k * n + i] };
    let mut rows = vec![0.0; w * h];
    for r in 0..h {
        let src = &data[r * w..(r + 1) * w];
        for k in 0..w {
            rows[r * w + k] = src.iter().enumerate().map(|(i, v)| pick(cw, w, k, i) * v).sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for k in 0..h {
        let dst = &mut out[k * w..(k + 1) * w];
        for i in 0..h {
            let c = pick(ch, h, k, i);
            if c != 0.0 {
                for (o, v) in dst.iter_mut().zip(&rows[i * w..(i + 1) * w]) {
                    *o += c * v;
                }
            }
        }
    }
    out
}

/// Least-squares integration `argmin_u ||grad u - g||_2` with zero mean,
/// solved exactly in the cosine basis that diagonalizes `grad^T grad`.
pub fn integrate_least_squares(g: &GradientField) -> PhaseImage {
    let (w, h) = (g.width(), g.height());
    let rhs = gradient_adjoint(g);
    let (cw, ch) = (dct_basis(w), dct_basis(h));
    let mut spec = separable_transform(rhs.data(), w, h, &cw, &ch, false);
    let eig = |k: usize, n: usize| 2.0 - 2.0 * (std::f64::consts::PI * k as f64 / n as f64).cos();
    for k in 0..h {
        for l in 0..w {
            let lambda = eig(k, h) + eig(l, w);
            spec[k * w + l] = if k == 0 && l == 0 { 0.0 } else { spec[k * w + l] / lambda };
        }
    }
    PhaseImage::from_raw(w, h, separable_transform(&spec, w, h, &cw, &ch, true))
}

/// Unweighted least-squares unwrapping of the wrapped gradient.
pub fn unwrap_least_squares(y: &WrappedImage) -> PhaseImage {
    integrate_least_squares(&wrapped_gradient(y))
}

pub const DENOISE_GRID_POINTS: usize = 64;
pub const DENOISE_GRID_MIN: f64 = 1e-4;
pub const DENOISE_GRID_MAX: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct DenoiseResult {
    pub image: PhaseImage,
    /// Chosen threshold; zero means the input was returned unchanged.
    pub threshold: f64,
    pub rsnr_db: f64,
}

/// Wavelet soft-threshold denoising with the threshold picked to maximize
/// RSNR against the ground truth.
///
/// Thresholds sweep a logarithmic grid over `[1e-4, 10] * median |detail|`;
/// `t = 0` (no denoising) is also a candidate.
pub fn denoise_oracle(x_hat: &PhaseImage, x_true: &PhaseImage, levels: usize, wavelet: Wavelet) -> Result<DenoiseResult> {
    if !x_hat.same_shape(x_true) {
        return Err(Error::InvalidInput("denoise_oracle: image shapes differ".into()));
    }
    let coeffs = analyze(x_hat, levels, wavelet)?;
    let mask = coeffs.scaling_mask();
    let mut details: Vec<f64> = coeffs.data().iter().zip(&mask).filter(|(_, &m)| !m).map(|(v, _)| v.abs()).collect();
    let mut best = DenoiseResult { image: x_hat.clone(), threshold: 0.0, rsnr_db: rsnr(x_true, x_hat)? };
    if details.is_empty() {
        return Ok(best);
    }
    let mid = details.len() / 2;
    let (_, median, _) = details.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let median = *median;
    if median == 0.0 {
        return Ok(best);
    }
    for t in threshold_grid(median) {
        let image = threshold_details(&coeffs, t);
        let score = rsnr(x_true, &image)?;
        if score > best.rsnr_db {
            best = DenoiseResult { image, threshold: t, rsnr_db: score };
        }
    }
    Ok(best)
}

pub fn threshold_grid(median: f64) -> Vec<f64> {
    let (lo, hi) = (DENOISE_GRID_MIN.log10(), DENOISE_GRID_MAX.log10());
    (0..DENOISE_GRID_POINTS)
        .map(|k| median * 10f64.powf(lo + (hi - lo) * k as f64 / (DENOISE_GRID_POINTS - 1) as f64))
        .collect()
}

pub(crate) fn threshold_details(coeffs: &WaveletCoeffs, t: f64) -> PhaseImage {
    let mut c = coeffs.clone();
    shrink_details(c.width(), c.height(), c.levels(), c.data_mut(), t);
    synthesize(&c)
}
