//! PHZ1 image files, noise sidecars and PGM previews.
//!
//! PHZ1 layout (all little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `PHZ1` |
//! | 4     | width, u32 |
//! | 4     | height, u32 |
//! | 4     | flags, u32; bit 0 set means every value lies in `[-pi, pi)` |
//! | 8·N   | row-major f64 samples |

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::phase::{PhaseImage, WrappedImage};

pub const MAGIC: &[u8; 4] = b"PHZ1";
pub const FLAG_WRAPPED: u32 = 1;
const HEADER_LEN: usize = 16;

/// Decoded PHZ1 contents.
#[derive(Debug, Clone, PartialEq)]
pub struct PhzFile {
    pub width: u32,
    pub height: u32,
    pub flags: u32,
    pub data: Vec<f64>,
}

impl PhzFile {
    pub fn is_wrapped(&self) -> bool {
        self.flags & FLAG_WRAPPED != 0
    }

    pub fn from_phase(x: &PhaseImage) -> Self {
        Self { width: x.width() as u32, height: x.height() as u32, flags: 0, data: x.data().to_vec() }
    }

    pub fn from_wrapped(y: &WrappedImage) -> Self {
        Self { width: y.width() as u32, height: y.height() as u32, flags: FLAG_WRAPPED, data: y.data().to_vec() }
    }

    pub fn to_phase(&self) -> Result<PhaseImage> {
        PhaseImage::new(self.width as usize, self.height as usize, self.data.clone())
    }

    pub fn to_wrapped(&self) -> Result<WrappedImage> {
        WrappedImage::new(self.width as usize, self.height as usize, self.data.clone())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.flags.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let fail = |reason: String| Error::Format { path: path.to_path_buf(), reason };
        if bytes.len() < HEADER_LEN {
            return Err(fail(format!("file too short ({} bytes)", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(fail("bad magic, expected PHZ1".into()));
        }
        let word = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().unwrap());
        let (width, height, flags) = (word(4), word(8), word(12));
        let n = (width as usize)
            .checked_mul(height as usize)
            .ok_or_else(|| fail("dimensions overflow".into()))?;
        let expected = n.checked_mul(8).and_then(|b| b.checked_add(HEADER_LEN));
        if expected != Some(bytes.len()) {
            return Err(fail(format!("payload is {} bytes, expected {} for {width}x{height}", bytes.len() - HEADER_LEN, 8 * n)));
        }
        let data: Vec<f64> = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let file = Self { width, height, flags, data };
        if file.is_wrapped() {
            file.to_wrapped().map_err(|e| fail(e.to_string()))?;
        }
        Ok(file)
    }
}

/// Write `bytes` to a temporary file next to `path`, then rename over it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn save_phz(path: &Path, file: &PhzFile) -> Result<()> {
    write_atomic(path, &file.encode())
}

pub fn load_phz(path: &Path) -> Result<PhzFile> {
    let bytes = fs::read(path)?;
    PhzFile::decode(&bytes, path)
}

pub fn save_phase(path: &Path, x: &PhaseImage) -> Result<()> {
    save_phz(path, &PhzFile::from_phase(x))
}

pub fn load_phase(path: &Path) -> Result<PhaseImage> {
    load_phz(path)?.to_phase()
}

/// 8-bit binary PGM with linear min-max scaling.
pub fn encode_pgm(x: &PhaseImage) -> Vec<u8> {
    let (lo, hi) = x.data().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = hi - lo;
    let mut out = format!("P5\n{} {}\n255\n", x.width(), x.height()).into_bytes();
    out.extend(x.data().iter().map(|&v| if span > 0.0 { ((v - lo) / span * 255.0).round() as u8 } else { 0 }));
    out
}

pub fn save_pgm(path: &Path, x: &PhaseImage) -> Result<()> {
    write_atomic(path, &encode_pgm(x))
}

/// Noise metadata written next to a wrapped observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSidecar {
    pub sigma: f64,
    pub isnr_target_db: f64,
    pub isnr_realized_db: f64,
    pub seed: u64,
}

impl NoiseSidecar {
    pub fn encode(&self) -> String {
        format!(
            "sigma={}\nisnr_target_db={}\nisnr_realized_db={}\nseed={}\n",
            self.sigma, self.isnr_target_db, self.isnr_realized_db, self.seed
        )
    }

    pub fn decode(text: &str, path: &Path) -> Result<Self> {
        let fail = |reason: String| Error::Format { path: path.to_path_buf(), reason };
        let (mut sigma, mut target, mut realized, mut seed) = (None, None, None, None);
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| fail(format!("malformed line {line:?}")))?;
            let num = || v.trim().parse::<f64>().map_err(|_| fail(format!("bad number for {k}: {v:?}")));
            match k.trim() {
                "sigma" => sigma = Some(num()?),
                "isnr_target_db" => target = Some(num()?),
                "isnr_realized_db" => realized = Some(num()?),
                "seed" => seed = Some(v.trim().parse::<u64>().map_err(|_| fail(format!("bad seed {v:?}")))?),
                other => return Err(fail(format!("unknown key {other:?}"))),
            }
        }
        let need = |o: Option<f64>, k: &str| o.ok_or_else(|| fail(format!("missing {k}")));
        Ok(Self {
            sigma: need(sigma, "sigma")?,
            isnr_target_db: need(target, "isnr_target_db")?,
            isnr_realized_db: need(realized, "isnr_realized_db")?,
            seed: seed.ok_or_else(|| fail("missing seed".into()))?,
        })
    }
}

/// Sidecar path for an observation file: `<file>.noise`.
pub fn sidecar_path(observation: &Path) -> std::path::PathBuf {
    let mut s = observation.as_os_str().to_owned();
    s.push(".noise");
    s.into()
}

pub fn save_sidecar(path: &Path, meta: &NoiseSidecar) -> Result<()> {
    write_atomic(path, meta.encode().as_bytes())
}

pub fn load_sidecar(path: &Path) -> Result<NoiseSidecar> {
    NoiseSidecar::decode(&fs::read_to_string(path)?, path)
}
