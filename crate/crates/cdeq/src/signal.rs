//! Dual-polarization sample blocks and their on-disk formats.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

/// Where a block sits in the processing chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Tx,
    Rx,
    Equalized,
}

/// A stream of complex samples, one vector per polarization.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBlock {
    samples: Vec<Vec<Complex64>>,
    pub sample_rate_hz: f64,
    pub role: Role,
}

impl SignalBlock {
    pub fn new(samples: Vec<Vec<Complex64>>, sample_rate_hz: f64, role: Role) -> Result<Self> {
        if samples.is_empty() || samples.len() > 2 {
            return Err(Error::invalid(format!(
                "signal blocks carry 1 or 2 polarizations, got {}",
                samples.len()
            )));
        }
        if samples.len() == 2 && samples[0].len() != samples[1].len() {
            return Err(Error::invalid(format!(
                "polarization lengths differ: {} vs {}",
                samples[0].len(),
                samples[1].len()
            )));
        }
        Ok(SignalBlock {
            samples,
            sample_rate_hz,
            role,
        })
    }

    pub fn polarizations(&self) -> usize {
        self.samples.len()
    }

    /// Samples per polarization.
    pub fn len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pol(&self, p: usize) -> &[Complex64] {
        &self.samples[p]
    }

    pub fn pols(&self) -> &[Vec<Complex64>] {
        &self.samples
    }

    pub fn pols_mut(&mut self) -> &mut [Vec<Complex64>] {
        &mut self.samples
    }

    /// Build a new block by mapping each polarization's sample vector.
    pub fn map_pols<F>(&self, role: Role, mut f: F) -> Result<SignalBlock>
    where
        F: FnMut(&[Complex64]) -> Vec<Complex64>,
    {
        let samples = self.samples.iter().map(|p| f(p)).collect();
        SignalBlock::new(samples, self.sample_rate_hz, role)
    }

    /// Mean |x|^2 of one polarization.
    pub fn mean_power(&self, p: usize) -> f64 {
        let s = &self.samples[p];
        if s.is_empty() {
            return 0.0;
        }
        s.iter().map(|x| x.norm_sqr()).sum::<f64>() / s.len() as f64
    }

    /// Write raw interleaved little-endian f64 (re, im) pairs, polarization 0
    /// first, then polarization 1, plus a `<path>.meta.json` sidecar.
    pub fn write_binary(&self, path: &Path, extra: &BTreeMap<String, String>) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for pol in &self.samples {
            for s in pol {
                w.write_all(&s.re.to_le_bytes())
                    .and_then(|_| w.write_all(&s.im.to_le_bytes()))
                    .map_err(|e| Error::io(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        let meta = SignalMeta {
            polarizations: self.polarizations(),
            samples_per_pol: self.len(),
            sample_rate_hz: self.sample_rate_hz,
            role: self.role,
            extra: extra.clone(),
        };
        let meta_path = sidecar_path(path);
        let json = serde_json::to_string_pretty(&meta)
            .expect("signal metadata always serializes");
        std::fs::write(&meta_path, json).map_err(|e| Error::io(meta_path.clone(), e))
    }

    /// Read a block written by [`SignalBlock::write_binary`].
    pub fn read_binary(path: &Path) -> Result<(SignalBlock, SignalMeta)> {
        let meta_path = sidecar_path(path);
        let meta_text =
            std::fs::read_to_string(&meta_path).map_err(|e| Error::io(meta_path.clone(), e))?;
        let meta: SignalMeta = serde_json::from_str(&meta_text).map_err(|e| Error::Format {
            what: "signal-metadata",
            path: meta_path.clone(),
            message: e.to_string(),
        })?;
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let expected = meta.polarizations * meta.samples_per_pol * 16;
        if bytes.len() != expected {
            return Err(Error::Format {
                what: "signal",
                path: path.to_path_buf(),
                message: format!("expected {expected} bytes, found {}", bytes.len()),
            });
        }
        let mut samples = Vec::with_capacity(meta.polarizations);
        let mut off = 0;
        for _ in 0..meta.polarizations {
            let mut pol = Vec::with_capacity(meta.samples_per_pol);
            for _ in 0..meta.samples_per_pol {
                let re = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
                let im = f64::from_le_bytes(bytes[off + 8..off + 16].try_into().unwrap());
                pol.push(Complex64::new(re, im));
                off += 16;
            }
            samples.push(pol);
        }
        let block = SignalBlock::new(samples, meta.sample_rate_hz, meta.role)?;
        Ok((block, meta))
    }

    /// Write as CSV with columns pol, index, real, imag.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "pol,index,real,imag")?;
        for (p, pol) in self.samples.iter().enumerate() {
            for (i, s) in pol.iter().enumerate() {
                writeln!(w, "{},{},{},{}", p, i, s.re, s.im)?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, sample_rate_hz: f64, role: Role) -> Result<SignalBlock> {
        let mut pols: Vec<Vec<Complex64>> = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<csv>", e))?;
            let line = line.trim();
            if idx == 0 && line.starts_with("pol") {
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let bad = || Error::invalid(format!("bad csv sample line '{line}'"));
            let p: usize = parts.next().and_then(|s| s.trim().parse().ok()).ok_or_else(bad)?;
            let _i: usize = parts.next().and_then(|s| s.trim().parse().ok()).ok_or_else(bad)?;
            let re: f64 = parts.next().and_then(|s| s.trim().parse().ok()).ok_or_else(bad)?;
            let im: f64 = parts.next().and_then(|s| s.trim().parse().ok()).ok_or_else(bad)?;
            while pols.len() <= p {
                pols.push(Vec::new());
            }
            pols[p].push(Complex64::new(re, im));
        }
        SignalBlock::new(pols, sample_rate_hz, role)
    }
}

/// Sidecar metadata describing a binary signal file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignalMeta {
    pub polarizations: usize,
    pub samples_per_pol: usize,
    pub sample_rate_hz: f64,
    pub role: Role,
    /// Experiment provenance (spec file, seed, launch power, ...).
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}
