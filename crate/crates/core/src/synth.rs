//! Synthetic phantoms and calibrated additive Gaussian noise.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::phase::{l2_norm, PhaseImage};

pub const DEFAULT_PEAK: f64 = 0.9 * PI;
pub const DEFAULT_SIGMA_X: f64 = 40.0;
pub const DEFAULT_SIGMA_Y: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PhantomKind {
    Gaussian,
    TruncatedGaussian,
}

impl PhantomKind {
    pub fn name(self) -> &'static str {
        match self {
            PhantomKind::Gaussian => "gaussian",
            PhantomKind::TruncatedGaussian => "truncated_gaussian",
        }
    }
}

impl std::str::FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(PhantomKind::Gaussian),
            "truncated_gaussian" | "truncated" => Ok(PhantomKind::TruncatedGaussian),
            other => Err(Error::InvalidParameter(format!("unknown phantom kind {other:?}"))),
        }
    }
}

/// Triangle in normalized grid coordinates: `(x, y)` with `x = col / (width - 1)`
/// and `y = row / (height - 1)`, both in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleMask {
    pub vertices: [(f64, f64); 3],
}

impl Default for TriangleMask {
    /// Mid-left edge point and the two right-hand corners.
    fn default() -> Self {
        Self { vertices: [(0.0, 0.5), (1.0, 0.0), (1.0, 1.0)] }
    }
}

impl TriangleMask {
    /// Inclusive point-in-triangle test.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let [a, b, c] = self.vertices;
        let edge = |p: (f64, f64), q: (f64, f64)| (q.0 - p.0) * (y - p.1) - (q.1 - p.1) * (x - p.0);
        let (d1, d2, d3) = (edge(a, b), edge(b, c), edge(c, a));
        let tol = 1e-12;
        let has_neg = d1 < -tol || d2 < -tol || d3 < -tol;
        let has_pos = d1 > tol || d2 > tol || d3 > tol;
        !(has_neg && has_pos)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub width: usize,
    pub height: usize,
    /// Height of the unscaled Gaussian, radians.
    pub peak: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    /// Intensity multiplier controlling the number of wraps.
    pub rho: f64,
    /// Region kept by the truncated phantom; ignored for the plain Gaussian.
    pub mask: TriangleMask,
}

impl PhantomSpec {
    pub fn new(kind: PhantomKind, width: usize, height: usize, rho: f64) -> Self {
        Self {
            kind,
            width,
            height,
            peak: DEFAULT_PEAK,
            sigma_x: DEFAULT_SIGMA_X,
            sigma_y: DEFAULT_SIGMA_Y,
            rho,
            mask: TriangleMask::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !(ok(self.peak) && ok(self.sigma_x) && ok(self.sigma_y) && ok(self.rho)) {
            return Err(Error::InvalidParameter(format!(
                "phantom peak, sigmas and rho must be positive (peak={}, sigma_x={}, sigma_y={}, rho={})",
                self.peak, self.sigma_x, self.sigma_y, self.rho
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter("phantom grid must be non-empty".into()));
        }
        Ok(())
    }
}

pub fn make_phantom(spec: &PhantomSpec) -> Result<PhaseImage> {
    spec.validate()?;
    let cx = (spec.width as f64 - 1.0) / 2.0;
    let cy = (spec.height as f64 - 1.0) / 2.0;
    let amp = spec.rho * spec.peak;
    let (ax, ay) = (2.0 * spec.sigma_x * spec.sigma_x, 2.0 * spec.sigma_y * spec.sigma_y);
    let nx = (spec.width.max(2) - 1) as f64;
    let ny = (spec.height.max(2) - 1) as f64;
    PhaseImage::from_fn(spec.width, spec.height, |i, j| {
        if spec.kind == PhantomKind::TruncatedGaussian && !spec.mask.contains(j as f64 / nx, i as f64 / ny) {
            return 0.0;
        }
        let dx = j as f64 - cx;
        let dy = i as f64 - cy;
        amp * (-(dx * dx / ax + dy * dy / ay)).exp()
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Target input SNR in dB; `f64::INFINITY` means noiseless.
    pub target_isnr_db: f64,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyPhase {
    pub noisy: PhaseImage,
    pub noise: PhaseImage,
    /// Empirical standard deviation of the realized (rescaled) noise.
    pub sigma: f64,
}

/// Add iid Gaussian noise rescaled so the realized ISNR hits the target.
pub fn add_noise(x: &PhaseImage, spec: &NoiseSpec) -> Result<NoisyPhase> {
    let isnr = spec.target_isnr_db;
    if isnr.is_nan() || isnr == f64::NEG_INFINITY {
        return Err(Error::InvalidParameter(format!("invalid target ISNR {isnr}")));
    }
    let n = x.len();
    if isnr == f64::INFINITY {
        return Ok(NoisyPhase { noisy: x.clone(), noise: PhaseImage::zeros(x.width(), x.height()), sigma: 0.0 });
    }
    let target_norm = x.norm() * 10f64.powf(-isnr / 20.0);
    let sigma0 = target_norm / (n as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut noise: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma0 * z
        })
        .collect();
    let realized = l2_norm(&noise);
    if realized > 0.0 {
        let s = target_norm / realized;
        noise.iter_mut().for_each(|v| *v *= s);
    }
    let sigma = l2_norm(&noise) / (n as f64).sqrt();
    let noise = PhaseImage::new(x.width(), x.height(), noise)?;
    Ok(NoisyPhase { noisy: x.add(&noise)?, noise, sigma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::isnr;
    use crate::phase::itoh_violations;

    #[test]
    fn gaussian_peak_and_scaling() {
        let x1 = make_phantom(&PhantomSpec::new(PhantomKind::Gaussian, 256, 256, 1.0)).unwrap();
        assert!(x1.max_abs() < PI);
        assert!((x1.max_abs() - DEFAULT_PEAK).abs() / DEFAULT_PEAK < 1e-3);
        assert!(itoh_violations(&x1).is_empty());

        let x10 = make_phantom(&PhantomSpec::new(PhantomKind::Gaussian, 256, 256, 10.0)).unwrap();
        assert!((x10.max_abs() - 9.0 * PI).abs() / (9.0 * PI) < 1e-3);
        for (a, b) in x10.data().iter().zip(x1.data()) {
            assert!((a - 10.0 * b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn odd_grid_hits_peak_exactly() {
        let x = make_phantom(&PhantomSpec::new(PhantomKind::Gaussian, 33, 17, 1.0)).unwrap();
        assert_eq!(x.get(8, 16), DEFAULT_PEAK);
    }

    #[test]
    fn gaussian_is_mirror_symmetric() {
        let x = make_phantom(&PhantomSpec::new(PhantomKind::Gaussian, 64, 32, 3.0)).unwrap();
        for i in 0..32 {
            for j in 0..64 {
                assert_eq!(x.get(i, j), x.get(i, 63 - j));
                assert_eq!(x.get(i, j), x.get(31 - i, j));
            }
        }
    }

    #[test]
    fn truncated_phantom_has_edge_violations() {
        let spec = PhantomSpec::new(PhantomKind::TruncatedGaussian, 256, 256, 10.0);
        let x = make_phantom(&spec).unwrap();
        let report = itoh_violations(&x);
        assert!(report.count() > 0);
        // Every violation touches a pixel on the mask boundary.
        let (w, n) = (256, 256 * 256);
        let inside = |k: usize| spec.mask.contains((k % w) as f64 / 255.0, (k / w) as f64 / 255.0);
        for &idx in &report.indices {
            let (a, b) = if idx < n { (idx, idx + 1) } else { (idx - n, idx - n + w) };
            assert_ne!(inside(a), inside(b), "violation {idx} not on the mask edge");
        }
    }

    #[test]
    fn triangle_contains() {
        let t = TriangleMask::default();
        assert!(t.contains(0.0, 0.5));
        assert!(t.contains(1.0, 0.0));
        assert!(t.contains(0.75, 0.5));
        assert!(!t.contains(0.1, 0.1));
        assert!(!t.contains(0.0, 0.0));
    }

    #[test]
    fn rejects_bad_spec() {
        let mut spec = PhantomSpec::new(PhantomKind::Gaussian, 8, 8, 1.0);
        spec.rho = 0.0;
        assert!(make_phantom(&spec).is_err());
    }

    #[test]
    fn noise_hits_target_isnr() {
        let x = make_phantom(&PhantomSpec::new(PhantomKind::Gaussian, 64, 64, 5.0)).unwrap();
        for target in [10.0, 25.0, 40.0] {
            for seed in 0..5 {
                let r = add_noise(&x, &NoiseSpec { target_isnr_db: target, rng_seed: seed }).unwrap();
                let realized = isnr(&x, &r.noise);
                assert!((realized - target).abs() < 0.1, "{target}: {realized}");
                assert!((r.sigma * 64.0 - r.noise.norm()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn infinite_isnr_is_noiseless() {
        let x = make_phantom(&PhantomSpec::new(PhantomKind::Gaussian, 16, 16, 5.0)).unwrap();
        let r = add_noise(&x, &NoiseSpec { target_isnr_db: f64::INFINITY, rng_seed: 3 }).unwrap();
        assert_eq!(r.noisy, x);
        assert_eq!(r.sigma, 0.0);
        assert!(add_noise(&x, &NoiseSpec { target_isnr_db: f64::NAN, rng_seed: 3 }).is_err());
    }

    #[test]
    fn same_seed_same_noise() {
        let x = make_phantom(&PhantomSpec::new(PhantomKind::Gaussian, 16, 16, 5.0)).unwrap();
        let spec = NoiseSpec { target_isnr_db: 10.0, rng_seed: 42 };
        assert_eq!(add_noise(&x, &spec).unwrap(), add_noise(&x, &spec).unwrap());
        let other = NoiseSpec { rng_seed: 43, ..spec };
        assert_ne!(add_noise(&x, &spec).unwrap().noise, add_noise(&x, &other).unwrap().noise);
    }
}
