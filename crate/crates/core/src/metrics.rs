//! Input/reconstruction SNR and the per-trial experiment report.

use std::io::Write;

use crate::error::{Error, Result};
use crate::phase::{l2_norm, PhaseImage};

/// Finite stand-in for an infinite RSNR (exact reconstruction).
pub const RSNR_CAP_DB: f64 = 300.0;

/// RSNR below this is reported as a failed reconstruction.
pub const FAIL_THRESHOLD_DB: f64 = 10.0;

/// `20 log10(||x|| / ||n||)`; infinite for zero noise.
pub fn isnr(x: &PhaseImage, n: &PhaseImage) -> f64 {
    let nn = n.norm();
    if nn == 0.0 {
        return f64::INFINITY;
    }
    20.0 * (x.norm() / nn).log10()
}

/// Reconstruction SNR after removing each image's own mean, capped at
/// [`RSNR_CAP_DB`].
pub fn rsnr(x_true: &PhaseImage, x_hat: &PhaseImage) -> Result<f64> {
    if !x_true.same_shape(x_hat) {
        return Err(Error::InvalidInput(format!(
            "rsnr shape mismatch: {}x{} vs {}x{}",
            x_true.width(),
            x_true.height(),
            x_hat.width(),
            x_hat.height()
        )));
    }
    let xt = centered(x_true.data());
    let xh = centered(x_hat.data());
    let signal = l2_norm(&xt);
    let err: Vec<f64> = xt.iter().zip(&xh).map(|(a, b)| a - b).collect();
    let residual = l2_norm(&err);
    // Residuals at the rounding level of the inputs count as exact.
    let scale = x_true.max_abs().max(x_hat.max_abs());
    let floor = 4.0 * f64::EPSILON * (xt.len() as f64).sqrt() * scale;
    if residual <= floor {
        return Ok(RSNR_CAP_DB);
    }
    Ok((20.0 * (signal / residual).log10()).min(RSNR_CAP_DB))
}

fn centered(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|a| a - mean).collect()
}

pub const CSV_HEADER: [&str; 12] = [
    "phantom",
    "kind",
    "rho",
    "isnr_target_db",
    "isnr_realized_db",
    "seed",
    "method",
    "rsnr_db",
    "residual_l1",
    "noise_l2",
    "iterations",
    "seconds",
];

/// One `(trial, method)` outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    /// Grid label, e.g. `256x256`.
    pub phantom: String,
    pub kind: String,
    pub rho: f64,
    pub isnr_target_db: f64,
    pub isnr_realized_db: f64,
    pub seed: u64,
    pub method: String,
    /// `None` when the method diverged.
    pub rsnr_db: Option<f64>,
    /// `||q - grad(u + v)||_1` (or `||q - grad x_hat||_1` for baselines).
    pub residual_l1: f64,
    /// `||v||_2`; zero for methods without a noise estimate.
    pub noise_l2: f64,
    pub iterations: usize,
    pub seconds: f64,
}

impl ExperimentReport {
    pub fn failed(&self) -> bool {
        self.rsnr_db.is_none()
    }

    fn csv_record(&self) -> [String; 12] {
        let num = |v: f64| format!("{v}");
        let (rsnr, residual, noise) = match self.rsnr_db {
            Some(r) => (num(r), num(self.residual_l1), num(self.noise_l2)),
            None => ("fail".to_string(), String::new(), String::new()),
        };
        [
            self.phantom.clone(),
            self.kind.clone(),
            num(self.rho),
            num(self.isnr_target_db),
            num(self.isnr_realized_db),
            self.seed.to_string(),
            self.method.clone(),
            rsnr,
            residual,
            noise,
            self.iterations.to_string(),
            num(self.seconds),
        ]
    }
}

/// Write reports as CSV with the fixed header. Infinite values are
/// written as `inf`.
pub fn write_csv<W: Write>(out: W, reports: &[ExperimentReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in reports {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64) -> PhaseImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PhaseImage::from_fn(16, 8, |_, _| rng.gen_range(-3.0..3.0)).unwrap()
    }

    #[test]
    fn isnr_examples() {
        let x = random_image(1);
        assert!((isnr(&x, &x.scale(0.1).unwrap()) - 20.0).abs() < 1e-12);
        assert!(isnr(&x, &x).abs() < 1e-12);
        assert_eq!(isnr(&x, &PhaseImage::zeros(16, 8)), f64::INFINITY);
    }

    #[test]
    fn rsnr_ignores_constant_offsets() {
        let x = random_image(2);
        for c in [-5.0, 0.0, 7.0, 1e3] {
            let shifted = PhaseImage::from_fn(16, 8, |i, j| x.get(i, j) + c).unwrap();
            assert_eq!(rsnr(&x, &shifted).unwrap(), RSNR_CAP_DB);
        }
    }

    #[test]
    fn rsnr_twenty_db() {
        let x = random_image(3);
        let mean = x.data().iter().sum::<f64>() / x.len() as f64;
        let xc: Vec<f64> = x.data().iter().map(|v| v - mean).collect();
        // Residual orthogonal to nothing in particular, scaled to ||x_c|| / 10.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut e: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let em = e.iter().sum::<f64>() / e.len() as f64;
        e.iter_mut().for_each(|v| *v -= em);
        let s = l2_norm(&xc) / 10.0 / l2_norm(&e);
        let hat = PhaseImage::new(16, 8, xc.iter().zip(&e).map(|(a, b)| a + s * b).collect()).unwrap();
        assert!((rsnr(&x, &hat).unwrap() - 20.0).abs() < 1e-10);
    }

    #[test]
    fn rsnr_matches_reference_and_shift_invariance() {
        let x = random_image(5);
        let y = random_image(6);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (mx, my) = (mean(x.data()), mean(y.data()));
        let num: f64 = x.data().iter().map(|a| (a - mx).powi(2)).sum::<f64>().sqrt();
        let den: f64 = x.data().iter().zip(y.data()).map(|(a, b)| (a - mx - b + my).powi(2)).sum::<f64>().sqrt();
        let reference = 20.0 * (num / den).log10();
        assert!((rsnr(&x, &y).unwrap() - reference).abs() < 1e-12);

        let xs = PhaseImage::from_fn(16, 8, |i, j| x.get(i, j) + 2.5).unwrap();
        let ys = PhaseImage::from_fn(16, 8, |i, j| y.get(i, j) + 2.5).unwrap();
        assert!((rsnr(&xs, &ys).unwrap() - reference).abs() < 1e-10);
        assert!(rsnr(&x, &PhaseImage::zeros(4, 4)).is_err());
    }

    #[test]
    fn csv_layout() {
        let r = ExperimentReport {
            phantom: "8x8".into(),
            kind: "gaussian".into(),
            rho: 10.0,
            isnr_target_db: f64::INFINITY,
            isnr_realized_db: f64::INFINITY,
            seed: 3,
            method: "cp".into(),
            rsnr_db: Some(61.5),
            residual_l1: 0.25,
            noise_l2: 0.0,
            iterations: 120,
            seconds: 0.5,
        };
        let failed = ExperimentReport { rsnr_db: None, method: "path".into(), ..r.clone() };
        let mut buf = Vec::new();
        write_csv(&mut buf, &[r, failed]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER.join(","));
        assert_eq!(lines[1], "8x8,gaussian,10,inf,inf,3,cp,61.5,0.25,0,120,0.5");
        assert_eq!(lines[2], "8x8,gaussian,10,inf,inf,3,path,fail,,,120,0.5");
    }
}
