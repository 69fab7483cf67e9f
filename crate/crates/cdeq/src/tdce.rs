//! Time-domain equalizer engines: direct FIR reference and the clustered
//! equalizer with pre-summation.
//!
//! Filtering is a sliding dot-product: output n pairs input window
//! x[n..n+M-1] with the taps in index order, so output n carries a group
//! delay of (M-1)/2 samples (CD taps are even-symmetric, which makes this
//! identical to linear convolution with the same taps). The clustered
//! engine first accumulates the window samples that share a cluster
//! (`presum_*`, one addition per tap) and then multiplies once per cluster,
//! so each output costs N_C complex multiplications instead of M.

use crate::clustering::ClusteredFilter;
use crate::error::{Error, Result};
use crate::fixedpoint::{block_scale_exponent, quantize_complex_block, FixedFormat};
use crate::signal::{Role, SignalBlock};
use crate::taps::TapSet;
use num_complex::Complex64;

/// Per-lane pre-summation accumulators: `presums[lane][cluster]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreSumState {
    pub presums: Vec<Vec<Complex64>>,
}

impl PreSumState {
    pub fn lanes(&self) -> usize {
        self.presums.len()
    }

    pub fn lane(&self, j: usize) -> &[Complex64] {
        &self.presums[j]
    }
}

/// Work accounting for one equalizer run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvStats {
    /// Complex multiplications spent per output sample.
    pub complex_mults_per_output: usize,
    /// Real multiplications per output sample at 4 per complex product.
    pub real_mults_per_output: usize,
    /// Total complex multiplications over all outputs and polarizations.
    pub total_complex_mults: u64,
}

fn quantized_input(
    x: &SignalBlock,
    fmt: Option<FixedFormat>,
) -> Result<(Vec<Vec<Complex64>>, f64)> {
    match fmt {
        None => Ok((x.pols().to_vec(), 1.0)),
        Some(f) => {
            // One power-of-two scale for the whole block so every
            // polarization fits the format with headroom; undone on output.
            let mut peak_exp = 0i32;
            for p in x.pols() {
                peak_exp = peak_exp.min(block_scale_exponent(p, f));
            }
            let scale = (2.0f64).powi(peak_exp);
            let mut pols = Vec::with_capacity(x.polarizations());
            for p in x.pols() {
                let scaled: Vec<Complex64> = p.iter().map(|&s| s * scale).collect();
                pols.push(quantize_complex_block(&scaled, f)?);
            }
            Ok((pols, 1.0 / scale))
        }
    }
}

/// Reference FIR equalizer: y[n] = sum_k x[n+k]·t[k], valid outputs only
/// (length len(x) - M + 1). With `fmt`, inputs and taps are quantized
/// first; products and sums stay in full precision.
pub fn direct_convolve(
    x: &SignalBlock,
    taps: &TapSet,
    fmt: Option<FixedFormat>,
) -> Result<SignalBlock> {
    let m = taps.len();
    if x.len() < m {
        return Err(Error::invalid(format!(
            "input of {} samples is shorter than the {m}-tap filter",
            x.len()
        )));
    }
    let coeffs = match fmt {
        None => taps.taps().to_vec(),
        Some(f) => quantize_complex_block(taps.taps(), f)?,
    };
    let (pols, unscale) = quantized_input(x, fmt)?;
    let out_len = x.len() - m + 1;
    let mut out = Vec::with_capacity(pols.len());
    for pol in &pols {
        let mut y = Vec::with_capacity(out_len);
        for n in 0..out_len {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &c) in coeffs.iter().enumerate() {
                acc += pol[n + k] * c;
            }
            y.push(acc * unscale);
        }
        out.push(y);
    }
    SignalBlock::new(out, x.sample_rate_hz, Role::Equalized)
}

/// Single-window pre-summation: x_S[w] = sum of window samples routed to
/// cluster w, accumulated in tap-index order.
pub fn presum_sequential(window: &[Complex64], cf: &ClusteredFilter) -> Result<Vec<Complex64>> {
    if window.len() != cf.filter_len() {
        return Err(Error::invalid(format!(
            "window length {} does not match filter length {}",
            window.len(),
            cf.filter_len()
        )));
    }
    let mut sums = vec![Complex64::new(0.0, 0.0); cf.n_clusters()];
    for (i, &w) in cf.routing().iter().enumerate() {
        sums[w] += window[i];
    }
    Ok(sums)
}

/// Blockwise pre-summation over L sliding windows at once.
///
/// Reads each cluster index once and accumulates x[i+j] into lane j, which
/// reproduces [`presum_sequential`] of window j bit-for-bit: the additions
/// into any one accumulator happen in the same tap-index order.
pub fn presum_parallel(
    x: &[Complex64],
    cf: &ClusteredFilter,
    lanes: usize,
) -> Result<PreSumState> {
    let m = cf.filter_len();
    if lanes == 0 {
        return Err(Error::invalid("lane count must be >= 1"));
    }
    if x.len() != m + lanes - 1 {
        return Err(Error::invalid(format!(
            "expected exactly M+L-1 = {} input samples, got {}",
            m + lanes - 1,
            x.len()
        )));
    }
    let mut presums = vec![vec![Complex64::new(0.0, 0.0); cf.n_clusters()]; lanes];
    for (i, &w) in cf.routing().iter().enumerate() {
        for (j, lane) in presums.iter_mut().enumerate() {
            lane[w] += x[i + j];
        }
    }
    Ok(PreSumState { presums })
}

/// Clustered equalizer: pre-sum each window, then one multiply per cluster.
///
/// Processes the signal in blocks of `lanes` outputs (partial final block
/// runs with a reduced lane count, keeping results identical to the
/// sequential path). Equals [`direct_convolve`] on the reconstructed taps
/// up to sum reassociation.
pub fn clustered_convolve(
    x: &SignalBlock,
    cf: &ClusteredFilter,
    lanes: usize,
    fmt: Option<FixedFormat>,
) -> Result<(SignalBlock, ConvStats)> {
    let m = cf.filter_len();
    let n_c = cf.n_clusters();
    if lanes == 0 {
        return Err(Error::invalid("lane count must be >= 1"));
    }
    if x.len() < m {
        return Err(Error::invalid(format!(
            "input of {} samples is shorter than the {m}-tap filter",
            x.len()
        )));
    }
    let centroids = match fmt {
        None => cf.centroids().to_vec(),
        Some(f) => quantize_complex_block(cf.centroids(), f)?,
    };
    let (pols, unscale) = quantized_input(x, fmt)?;
    let out_len = x.len() - m + 1;
    let mut out = Vec::with_capacity(pols.len());
    for pol in &pols {
        let mut y = Vec::with_capacity(out_len);
        let mut n0 = 0;
        while n0 < out_len {
            let l = lanes.min(out_len - n0);
            let state = presum_parallel(&pol[n0..n0 + m + l - 1], cf, l)?;
            for lane in &state.presums {
                let mut acc = Complex64::new(0.0, 0.0);
                for (w, &g) in centroids.iter().enumerate() {
                    acc += lane[w] * g;
                }
                y.push(acc * unscale);
            }
            n0 += l;
        }
        out.push(y);
    }
    let stats = ConvStats {
        complex_mults_per_output: n_c,
        real_mults_per_output: 4 * n_c,
        total_complex_mults: (n_c as u64) * (out_len as u64) * (pols.len() as u64),
    };
    Ok((SignalBlock::new(out, x.sample_rate_hz, Role::Equalized)?, stats))
}
