//! `key=value` run configuration for unwrap and bench runs.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown or repeated
//! keys are rejected, and every value is validated while parsing.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::experiment::{EpswMode, Method};
use crate::synth::PhantomKind;
use crate::wavelet::Wavelet;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub kinds: Vec<PhantomKind>,
    pub rhos: Vec<f64>,
    pub width: usize,
    pub height: usize,
    /// Target ISNR values in dB; `inf` for noiseless.
    pub isnr_db: Vec<f64>,
    pub seeds: Vec<u64>,
    pub max_iter: usize,
    pub tol: f64,
    /// `None` picks the default depth for the grid.
    pub levels: Option<usize>,
    pub wavelet: Wavelet,
    pub c_chernoff: f64,
    pub check_every: usize,
    pub epsw: EpswMode,
    pub methods: Vec<Method>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kinds: vec![PhantomKind::Gaussian],
            rhos: vec![1.0],
            width: 256,
            height: 256,
            isnr_db: vec![25.0],
            seeds: vec![0, 1, 2, 3, 4],
            max_iter: crate::solver::DEFAULT_MAX_ITER,
            tol: crate::solver::DEFAULT_TOL,
            levels: None,
            wavelet: Wavelet::default(),
            c_chernoff: 2.0,
            check_every: crate::solver::DEFAULT_CHECK_EVERY,
            epsw: EpswMode::Oracle,
            methods: vec![Method::Cp],
            output_dir: PathBuf::from("out"),
        }
    }
}

fn bad(key: &str, value: &str, why: &str) -> Error {
    Error::Config(format!("{key}={value}: {why}"))
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| bad(key, value, "cannot parse value"))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let items: Vec<&str> = value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(bad(key, value, "empty list"));
    }
    items.into_iter().map(|s| parse_one(key, s)).collect()
}

fn parse_db(key: &str, value: &str) -> Result<f64> {
    let v: f64 = match value.trim() {
        "inf" | "infinity" | "Inf" => f64::INFINITY,
        other => parse_one(key, other)?,
    };
    if v.is_nan() || v == f64::NEG_INFINITY {
        return Err(bad(key, value, "ISNR must be a number or inf"));
    }
    Ok(v)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        text.parse()
    }

    fn apply(&mut self, key: &str, value: &str, manual_value: &mut Option<f64>, mode: &mut Option<String>) -> Result<()> {
        match key {
            "phantom.kind" => self.kinds = parse_list(key, value)?,
            "phantom.rho" => {
                self.rhos = parse_list(key, value)?;
                if self.rhos.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
                    return Err(bad(key, value, "rho must be positive"));
                }
            }
            "phantom.width" => self.width = parse_one(key, value)?,
            "phantom.height" => self.height = parse_one(key, value)?,
            "noise.isnr_db" => {
                let items: Vec<&str> = value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
                if items.is_empty() {
                    return Err(bad(key, value, "empty list"));
                }
                self.isnr_db = items.into_iter().map(|s| parse_db(key, s)).collect::<Result<_>>()?;
            }
            "noise.seeds" => self.seeds = parse_list(key, value)?,
            "solver.max_iter" => self.max_iter = parse_one(key, value)?,
            "solver.tol" => self.tol = parse_one(key, value)?,
            "solver.levels" => self.levels = Some(parse_one(key, value)?),
            "solver.wavelet" => self.wavelet = parse_one(key, value)?,
            "solver.c_chernoff" => self.c_chernoff = parse_one(key, value)?,
            "solver.check_every" => self.check_every = parse_one(key, value)?,
            "epsw.mode" => *mode = Some(value.trim().to_string()),
            "epsw.value" => *manual_value = Some(parse_one(key, value)?),
            "bench.methods" => self.methods = parse_list(key, value)?,
            "output.dir" => self.output_dir = PathBuf::from(value.trim()),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("phantom.width and phantom.height must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("solver.max_iter must be positive".into()));
        }
        if self.check_every == 0 {
            return Err(Error::Config("solver.check_every must be positive".into()));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!("solver.tol must be >= 0, got {}", self.tol)));
        }
        if !(self.c_chernoff > 0.0 && self.c_chernoff.is_finite()) {
            return Err(Error::Config(format!("solver.c_chernoff must be > 0, got {}", self.c_chernoff)));
        }
        if let Some(levels) = self.levels {
            crate::wavelet::check_levels(self.width, self.height, levels).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn levels_for_grid(&self) -> usize {
        self.levels.unwrap_or_else(|| crate::wavelet::default_levels(self.width, self.height))
    }
}

impl FromStr for RunConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = HashSet::new();
        let (mut manual_value, mut mode) = (None, None);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", lineno + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", lineno + 1)));
            }
            cfg.apply(key, value, &mut manual_value, &mut mode)?;
        }
        cfg.epsw = match mode.as_deref() {
            None | Some("oracle") => {
                if manual_value.is_some() {
                    return Err(Error::Config("epsw.value is only valid with epsw.mode=manual".into()));
                }
                EpswMode::Oracle
            }
            Some("baseline") => {
                if manual_value.is_some() {
                    return Err(Error::Config("epsw.value is only valid with epsw.mode=manual".into()));
                }
                EpswMode::Baseline
            }
            Some("manual") => {
                let v = manual_value.ok_or_else(|| Error::Config("epsw.mode=manual requires epsw.value".into()))?;
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("epsw.value must be >= 0, got {v}")));
                }
                EpswMode::Manual(v)
            }
            Some(other) => return Err(Error::Config(format!("unknown epsw.mode {other:?}"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
