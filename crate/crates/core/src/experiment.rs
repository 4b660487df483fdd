//! Synthetic benchmark harness: build a trial, run each method on it, and
//! aggregate RSNR over seeds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::baseline::{denoise_oracle, unwrap_path, unwrap_quality_guided};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::metrics::{isnr, rsnr, ExperimentReport, FAIL_THRESHOLD_DB};
use crate::phase::{gradient, wrap_image, wrapped_gradient, GradientField, PhaseImage, WrappedImage};
use crate::solver::{fidelity_bound_from_estimate, fidelity_bound_oracle, noise_bound, solve, SolveResult, SolverConfig};
use crate::synth::{add_noise, make_phantom, NoiseSpec, PhantomKind, PhantomSpec};
use crate::wavelet::Wavelet;

/// Reconstruction method compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Joint unwrapping and denoising with the primal-dual solver.
    Cp,
    /// Row-major Itoh integration.
    Path,
    /// Quality-guided flood fill.
    Quality,
    /// Quality-guided flood fill followed by oracle wavelet denoising.
    DenoisedQuality,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Cp => "cp",
            Method::Path => "path",
            Method::Quality => "quality",
            Method::DenoisedQuality => "dp",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cp" => Ok(Method::Cp),
            "path" => Ok(Method::Path),
            "quality" => Ok(Method::Quality),
            "dp" => Ok(Method::DenoisedQuality),
            other => Err(Error::InvalidParameter(format!("unknown method {other:?}"))),
        }
    }
}

/// How the gradient-fidelity radius is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpswMode {
    /// `||q - grad(x + n)||_1` from the ground truth.
    Oracle,
    /// `||q - grad(x_p)||_1` with `x_p` from the quality-guided unwrapper.
    Baseline,
    Manual(f64),
}

/// Solver-side knobs shared by every trial of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSettings {
    pub max_iter: usize,
    pub tol: f64,
    pub levels: usize,
    pub wavelet: Wavelet,
    pub c_chernoff: f64,
    pub check_every: usize,
    pub epsw: EpswMode,
}

impl MethodSettings {
    pub fn for_grid(width: usize, height: usize) -> Self {
        Self {
            max_iter: crate::solver::DEFAULT_MAX_ITER,
            tol: crate::solver::DEFAULT_TOL,
            levels: crate::wavelet::default_levels(width, height),
            wavelet: Wavelet::default(),
            c_chernoff: 2.0,
            check_every: crate::solver::DEFAULT_CHECK_EVERY,
            epsw: EpswMode::Oracle,
        }
    }

    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            max_iter: cfg.max_iter,
            tol: cfg.tol,
            levels: cfg.levels_for_grid(),
            wavelet: cfg.wavelet,
            c_chernoff: cfg.c_chernoff,
            check_every: cfg.check_every,
            epsw: cfg.epsw,
        }
    }
}

/// Everything a method may look at for one synthetic trial.
#[derive(Debug, Clone)]
pub struct Trial {
    pub phantom: PhantomSpec,
    pub noise_spec: NoiseSpec,
    pub truth: PhaseImage,
    pub noise: PhaseImage,
    pub sigma: f64,
    pub isnr_realized_db: f64,
    pub observed: WrappedImage,
    pub q: GradientField,
}

impl Trial {
    pub fn new(phantom: PhantomSpec, noise_spec: NoiseSpec) -> Result<Self> {
        let truth = make_phantom(&phantom)?;
        let noisy = add_noise(&truth, &noise_spec)?;
        let observed = wrap_image(&noisy.noisy);
        let q = wrapped_gradient(&observed);
        Ok(Self {
            isnr_realized_db: isnr(&truth, &noisy.noise),
            phantom,
            noise_spec,
            truth,
            noise: noisy.noise,
            sigma: noisy.sigma,
            observed,
            q,
        })
    }

    pub fn eps_n(&self, c_chernoff: f64) -> f64 {
        noise_bound(self.sigma, self.truth.len(), c_chernoff)
    }

    pub fn eps_w(&self, mode: EpswMode) -> Result<f64> {
        match mode {
            EpswMode::Oracle => fidelity_bound_oracle(&self.q, &self.truth, &self.noise),
            EpswMode::Baseline => Ok(fidelity_bound_from_estimate(&self.q, &unwrap_quality_guided(&self.observed))),
            EpswMode::Manual(v) => Ok(v),
        }
    }

    pub fn solver_config(&self, settings: &MethodSettings) -> Result<SolverConfig> {
        let mut cfg = SolverConfig::with_levels(
            self.truth.width(),
            self.truth.height(),
            settings.levels,
            settings.wavelet,
            self.eps_n(settings.c_chernoff),
            self.eps_w(settings.epsw)?,
        )?;
        cfg.max_iter = settings.max_iter;
        cfg.tol = settings.tol;
        cfg.check_every = settings.check_every;
        Ok(cfg)
    }

    pub fn solve_cp(&self, settings: &MethodSettings) -> Result<SolveResult> {
        solve(&self.q, self.solver_config(settings)?)
    }

    fn report(&self, method: Method) -> ExperimentReport {
        ExperimentReport {
            phantom: format!("{}x{}", self.phantom.width, self.phantom.height),
            kind: self.phantom.kind.name().to_string(),
            rho: self.phantom.rho,
            isnr_target_db: self.noise_spec.target_isnr_db,
            isnr_realized_db: self.isnr_realized_db,
            seed: self.noise_spec.rng_seed,
            method: method.name().to_string(),
            rsnr_db: None,
            residual_l1: 0.0,
            noise_l2: 0.0,
            iterations: 0,
            seconds: 0.0,
        }
    }

    /// Run one method. Solver divergence yields a failed report rather than
    /// an error; any other error is propagated.
    pub fn run(&self, method: Method, settings: &MethodSettings) -> Result<ExperimentReport> {
        let start = Instant::now();
        let mut report = self.report(method);
        let estimate = match method {
            Method::Cp => match self.solve_cp(settings) {
                Ok(result) => {
                    let last = result.final_record().copied().expect("history is never empty");
                    report.residual_l1 = last.residual_l1;
                    report.noise_l2 = last.noise_l2;
                    report.iterations = result.iterations;
                    Some(result.u)
                }
                Err(Error::Divergence { iteration }) => {
                    report.iterations = iteration;
                    None
                }
                Err(e) => return Err(e),
            },
            Method::Path => Some(unwrap_path(&self.observed)),
            Method::Quality => Some(unwrap_quality_guided(&self.observed)),
            Method::DenoisedQuality => {
                let unwrapped = unwrap_quality_guided(&self.observed);
                Some(denoise_oracle(&unwrapped, &self.truth, settings.levels, settings.wavelet)?.image)
            }
        };
        if let Some(x_hat) = estimate {
            if method != Method::Cp {
                report.residual_l1 = self.q.l1_distance(&gradient(&x_hat));
            }
            report.rsnr_db = Some(rsnr(&self.truth, &x_hat)?);
        }
        report.seconds = start.elapsed().as_secs_f64();
        Ok(report)
    }
}

/// Key identifying a summary cell.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct CellKey {
    pub method: Method,
    pub kind: PhantomKind,
    pub rho: f64,
    pub isnr_db: f64,
}

/// Mean RSNR over the seeds of one `(method, kind, rho, isnr)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryCell {
    pub key: CellKey,
    /// `None` if any trial in the cell diverged.
    pub mean_rsnr_db: Option<f64>,
    pub trials: usize,
}

impl SummaryCell {
    /// Divergence, or mean RSNR below [`FAIL_THRESHOLD_DB`].
    pub fn is_fail(&self) -> bool {
        self.mean_rsnr_db.is_none_or(|r| r < FAIL_THRESHOLD_DB)
    }
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub reports: Vec<ExperimentReport>,
    pub summary: Vec<SummaryCell>,
}

fn sort_key(r: &ExperimentReport) -> (String, u64, u64, u64, String) {
    // f64 bit patterns order correctly for the non-negative values used here.
    (r.kind.clone(), r.rho.to_bits(), r.isnr_target_db.to_bits(), r.seed, r.method.clone())
}

/// Full factorial sweep over kinds, rho, ISNR, seeds and methods.
/// Trials run in parallel; output order is fixed regardless of scheduling.
pub fn run_bench(cfg: &RunConfig) -> Result<BenchOutcome> {
    if cfg.seeds.is_empty() {
        return Err(Error::Config("noise.seeds is empty".into()));
    }
    let settings = MethodSettings::from_config(cfg);
    let mut specs = Vec::new();
    for &kind in &cfg.kinds {
        for &rho in &cfg.rhos {
            for &isnr_db in &cfg.isnr_db {
                for &seed in &cfg.seeds {
                    specs.push((
                        PhantomSpec::new(kind, cfg.width, cfg.height, rho),
                        NoiseSpec { target_isnr_db: isnr_db, rng_seed: seed },
                    ));
                }
            }
        }
    }
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let per_trial: Vec<Vec<ExperimentReport>> = specs
        .into_par_iter()
        .map(|(phantom, noise)| {
            let trial = Trial::new(phantom, noise)?;
            methods.iter().map(|&m| trial.run(m, &settings)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut reports: Vec<ExperimentReport> = per_trial.into_iter().flatten().collect();
    reports.sort_by_key(sort_key);
    reports.dedup_by(|a, b| sort_key(a) == sort_key(b));
    let summary = summarize(&reports)?;
    Ok(BenchOutcome { reports, summary })
}

pub fn summarize(reports: &[ExperimentReport]) -> Result<Vec<SummaryCell>> {
    let mut cells: BTreeMap<(Method, PhantomKind, u64, u64), (CellKey, Vec<Option<f64>>)> = BTreeMap::new();
    for r in reports {
        let method: Method = r.method.parse()?;
        let kind: PhantomKind = r.kind.parse()?;
        let key = CellKey { method, kind, rho: r.rho, isnr_db: r.isnr_target_db };
        cells
            .entry((method, kind, r.rho.to_bits(), r.isnr_target_db.to_bits()))
            .or_insert_with(|| (key, Vec::new()))
            .1
            .push(r.rsnr_db);
    }
    Ok(cells
        .into_values()
        .map(|(key, values)| {
            let trials = values.len();
            let mean_rsnr_db = values
                .iter()
                .copied()
                .collect::<Option<Vec<f64>>>()
                .map(|v| v.iter().sum::<f64>() / v.len() as f64);
            SummaryCell { key, mean_rsnr_db, trials }
        })
        .collect())
}

/// Plain-text table of mean RSNR: one row per `(method, kind, rho)`, one
/// column per ISNR target.
pub fn format_summary(cells: &[SummaryCell]) -> String {
    let mut isnrs: Vec<f64> = cells.iter().map(|c| c.key.isnr_db).collect();
    isnrs.sort_by(|a, b| b.total_cmp(a));
    isnrs.dedup();
    let mut out = String::new();
    let _ = write!(out, "{:<8} {:<20} {:>6}", "method", "kind", "rho");
    for v in &isnrs {
        let _ = write!(out, " {:>14}", format!("ISNR={v}dB"));
    }
    out.push('\n');
    let mut rows: BTreeMap<(Method, PhantomKind, u64), Vec<&SummaryCell>> = BTreeMap::new();
    for c in cells {
        rows.entry((c.key.method, c.key.kind, c.key.rho.to_bits())).or_default().push(c);
    }
    for ((method, kind, rho_bits), row) in rows {
        let _ = write!(out, "{:<8} {:<20} {:>6}", method.name(), kind.name(), f64::from_bits(rho_bits));
        for v in &isnrs {
            let cell = row.iter().find(|c| c.key.isnr_db == *v);
            let text = match cell {
                None => "-".to_string(),
                Some(c) => match c.mean_rsnr_db {
                    None => "fail".to_string(),
                    Some(m) if c.is_fail() => format!("{m:.2} (fail)"),
                    Some(m) => format!("{m:.2}"),
                },
            };
            let _ = write!(out, " {text:>14}");
        }
        out.push('\n');
    }
    out
}
