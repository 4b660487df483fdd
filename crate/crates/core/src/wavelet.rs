//! Orthonormal separable 2-D wavelet transform with periodic boundaries.
//!
//! Coefficients use the Mallat layout: after `J` levels the top-left
//! `(width >> J) x (height >> J)` block holds the scaling (approximation)
//! coefficients and everything else is detail.

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::phase::PhaseImage;

/// Orthonormal wavelet family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Wavelet {
    Haar,
    /// Four-tap Daubechies filter (two vanishing moments).
    #[default]
    Daubechies4,
}

const HAAR: [f64; 2] = [1.0 / SQRT_2, 1.0 / SQRT_2];

fn daub4() -> [f64; 4] {
    let s3 = 3f64.sqrt();
    let d = 4.0 * SQRT_2;
    [(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d, (1.0 - s3) / d]
}

impl Wavelet {
    pub fn lowpass(self) -> Vec<f64> {
        match self {
            Wavelet::Haar => HAAR.to_vec(),
            Wavelet::Daubechies4 => daub4().to_vec(),
        }
    }

    /// Quadrature mirror highpass `g[m] = (-1)^m h[L-1-m]`.
    pub fn highpass(self) -> Vec<f64> {
        let h = self.lowpass();
        let l = h.len();
        (0..l).map(|m| if m % 2 == 0 { h[l - 1 - m] } else { -h[l - 1 - m] }).collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Wavelet::Haar => "haar",
            Wavelet::Daubechies4 => "db4",
        }
    }
}

impl std::str::FromStr for Wavelet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "haar" => Ok(Wavelet::Haar),
            "db4" | "daubechies4" => Ok(Wavelet::Daubechies4),
            other => Err(Error::InvalidParameter(format!("unknown wavelet {other:?}"))),
        }
    }
}

/// `log2(min(width, height)) - 2`, clamped to at least one level.
pub fn default_levels(width: usize, height: usize) -> usize {
    let m = width.min(height).max(1);
    let log2 = usize::BITS as usize - 1 - m.leading_zeros() as usize;
    log2.saturating_sub(2).max(1).min(log2.max(1))
}

pub(crate) fn check_levels(width: usize, height: usize, levels: usize) -> Result<()> {
    let block = 1usize.checked_shl(levels as u32).unwrap_or(0);
    if block == 0 || !width.is_multiple_of(block) || !height.is_multiple_of(block) {
        return Err(Error::Dimension { width, height, levels });
    }
    Ok(())
}

/// Wavelet coefficients of an image in Mallat layout.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletCoeffs {
    width: usize,
    height: usize,
    levels: usize,
    wavelet: Wavelet,
    data: Vec<f64>,
}

impl WaveletCoeffs {
    pub fn new(width: usize, height: usize, levels: usize, wavelet: Wavelet, data: Vec<f64>) -> Result<Self> {
        check_levels(width, height, levels)?;
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "coefficient length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self { width, height, levels, wavelet, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn wavelet(&self) -> Wavelet {
        self.wavelet
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// True exactly on the coarsest approximation block.
    pub fn scaling_mask(&self) -> Vec<bool> {
        scaling_mask(self.width, self.height, self.levels)
    }

    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(self.width, self.height, self.levels, self.wavelet, data)
    }
}

pub fn scaling_mask(width: usize, height: usize, levels: usize) -> Vec<bool> {
    let (sw, sh) = (width >> levels, height >> levels);
    let mut mask = vec![false; width * height];
    for i in 0..sh {
        mask[i * width..i * width + sw].fill(true);
    }
    mask
}

pub fn analyze(x: &PhaseImage, levels: usize, wavelet: Wavelet) -> Result<WaveletCoeffs> {
    let mut dwt = Dwt2::new(x.width(), x.height(), levels, wavelet)?;
    let mut data = x.data().to_vec();
    dwt.forward(&mut data);
    Ok(WaveletCoeffs { width: x.width(), height: x.height(), levels, wavelet, data })
}

pub fn synthesize(c: &WaveletCoeffs) -> PhaseImage {
    let mut dwt = Dwt2::new(c.width, c.height, c.levels, c.wavelet)
        .expect("coefficient layout validated at construction");
    let mut data = c.data.clone();
    dwt.inverse(&mut data);
    PhaseImage::from_raw(c.width, c.height, data)
}

/// l1 norm of the detail coefficients, scaling block excluded.
pub fn detail_l1(c: &WaveletCoeffs) -> f64 {
    masked_l1(c.width, c.height, c.levels, &c.data)
}

pub(crate) fn masked_l1(width: usize, height: usize, levels: usize, data: &[f64]) -> f64 {
    let (sw, sh) = (width >> levels, height >> levels);
    data.chunks_exact(width)
        .enumerate()
        .map(|(i, row)| {
            let skip = if i < sh { sw } else { 0 };
            row[skip..].iter().map(|v| v.abs()).sum::<f64>()
        })
        .sum()
}

/// Reusable in-place transform with preallocated scratch space.
#[derive(Debug, Clone)]
pub(crate) struct Dwt2 {
    width: usize,
    height: usize,
    levels: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    line: Vec<f64>,
    block: Vec<f64>,
}

impl Dwt2 {
    pub(crate) fn new(width: usize, height: usize, levels: usize, wavelet: Wavelet) -> Result<Self> {
        check_levels(width, height, levels)?;
        Ok(Self {
            width,
            height,
            levels,
            lo: wavelet.lowpass(),
            hi: wavelet.highpass(),
            line: vec![0.0; width.max(height)],
            block: vec![0.0; width * height],
        })
    }

    pub(crate) fn levels(&self) -> usize {
        self.levels
    }

    pub(crate) fn forward(&mut self, data: &mut [f64]) {
        debug_assert_eq!(data.len(), self.width * self.height);
        let (mut w, mut h) = (self.width, self.height);
        for _ in 0..self.levels {
            for i in 0..h {
                let row = &mut data[i * self.width..i * self.width + w];
                analyze_line(&self.lo, &self.hi, row, &mut self.line[..w]);
                row.copy_from_slice(&self.line[..w]);
            }
            self.analyze_columns(data, w, h);
            w /= 2;
            h /= 2;
        }
    }

    pub(crate) fn inverse(&mut self, data: &mut [f64]) {
        debug_assert_eq!(data.len(), self.width * self.height);
        for level in (0..self.levels).rev() {
            let (w, h) = (self.width >> level, self.height >> level);
            self.synthesize_columns(data, w, h);
            for i in 0..h {
                let row = &mut data[i * self.width..i * self.width + w];
                synthesize_line(&self.lo, &self.hi, row, &mut self.line[..w]);
                row.copy_from_slice(&self.line[..w]);
            }
        }
    }

    /// Column pass over the top-left `w x h` block, done as row
    /// combinations so memory access stays contiguous.
    fn analyze_columns(&mut self, data: &mut [f64], w: usize, h: usize) {
        let stride = self.width;
        let half = h / 2;
        let block = &mut self.block[..w * h];
        block.fill(0.0);
        for k in 0..half {
            for (m, (&lo, &hi)) in self.lo.iter().zip(&self.hi).enumerate() {
                let src = (2 * k + m) % h;
                let src_row = &data[src * stride..src * stride + w];
                let (a, d) = block.split_at_mut(half * w);
                let a_row = &mut a[k * w..(k + 1) * w];
                let d_row = &mut d[k * w..(k + 1) * w];
                for ((av, dv), &s) in a_row.iter_mut().zip(d_row.iter_mut()).zip(src_row) {
                    *av += lo * s;
                    *dv += hi * s;
                }
            }
        }
        for i in 0..h {
            data[i * stride..i * stride + w].copy_from_slice(&block[i * w..(i + 1) * w]);
        }
    }

    fn synthesize_columns(&mut self, data: &mut [f64], w: usize, h: usize) {
        let stride = self.width;
        let half = h / 2;
        let block = &mut self.block[..w * h];
        block.fill(0.0);
        for k in 0..half {
            let a_row = &data[k * stride..k * stride + w];
            let d_row = &data[(k + half) * stride..(k + half) * stride + w];
            for (m, (&lo, &hi)) in self.lo.iter().zip(&self.hi).enumerate() {
                let dst = (2 * k + m) % h;
                let out = &mut block[dst * w..(dst + 1) * w];
                for ((o, &a), &d) in out.iter_mut().zip(a_row).zip(d_row) {
                    *o += lo * a + hi * d;
                }
            }
        }
        for i in 0..h {
            data[i * stride..i * stride + w].copy_from_slice(&block[i * w..(i + 1) * w]);
        }
    }
}

/// One periodic analysis step: approximation into `out[..n/2]`, detail
/// into `out[n/2..]`.
fn analyze_line(lo: &[f64], hi: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    let half = n / 2;
    for k in 0..half {
        let (mut a, mut d) = (0.0, 0.0);
        for (m, (&l, &g)) in lo.iter().zip(hi).enumerate() {
            let v = x[(2 * k + m) % n];
            a += l * v;
            d += g * v;
        }
        out[k] = a;
        out[half + k] = d;
    }
}

fn synthesize_line(lo: &[f64], hi: &[f64], c: &[f64], out: &mut [f64]) {
    let n = c.len();
    let half = n / 2;
    out.fill(0.0);
    for k in 0..half {
        let (a, d) = (c[k], c[half + k]);
        for (m, (&l, &g)) in lo.iter().zip(hi).enumerate() {
            out[(2 * k + m) % n] += l * a + g * d;
        }
    }
}
