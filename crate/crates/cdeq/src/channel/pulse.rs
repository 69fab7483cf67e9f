//! Pulse shaping: upsampling plus root-raised-cosine or rectangular filters.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Transmit pulse shape. The receive side reuses the same taps as the
/// matched filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Pulse {
    /// Root-raised cosine truncated to ±span_symbols symbol periods.
    Rrc { rolloff: f64, span_symbols: usize },
    /// Sample-and-hold over one symbol period.
    Rect,
}

impl Default for Pulse {
    fn default() -> Self {
        Pulse::Rrc {
            rolloff: 0.1,
            span_symbols: 16,
        }
    }
}

impl Pulse {
    /// Real-valued shaping taps at `sps` samples per symbol.
    pub fn taps(&self, sps: usize) -> Vec<f64> {
        match *self {
            Pulse::Rect => vec![1.0; sps],
            Pulse::Rrc {
                rolloff,
                span_symbols,
            } => rrc_taps(rolloff, span_symbols, sps),
        }
    }

    /// Matched-filter taps: RRC is its own matched filter; the rectangular
    /// pulse averages over one symbol so the cascade has unit gain.
    pub fn matched_taps(&self, sps: usize) -> Vec<f64> {
        match *self {
            Pulse::Rect => vec![1.0 / sps as f64; sps],
            Pulse::Rrc { .. } => self.taps(sps),
        }
    }
}

/// Unit-energy root-raised-cosine taps: 2·span·sps + 1 taps with the usual
/// closed form, including the t = 0 and |t| = 1/(4·rolloff) special points.
pub fn rrc_taps(rolloff: f64, span_symbols: usize, sps: usize) -> Vec<f64> {
    assert!(rolloff > 0.0 && rolloff < 1.0, "rolloff must be in (0, 1)");
    assert!(span_symbols >= 1 && sps >= 1);
    let pi = std::f64::consts::PI;
    let half = (span_symbols * sps) as i64;
    let mut taps = Vec::with_capacity((2 * half + 1) as usize);
    for i in -half..=half {
        let t = i as f64 / sps as f64; // in symbol periods
        let x = 4.0 * rolloff * t;
        let v = if t == 0.0 {
            1.0 - rolloff + 4.0 * rolloff / pi
        } else if (x.abs() - 1.0).abs() < 1e-12 {
            (rolloff / (2.0f64).sqrt())
                * ((1.0 + 2.0 / pi) * (pi / (4.0 * rolloff)).sin()
                    + (1.0 - 2.0 / pi) * (pi / (4.0 * rolloff)).cos())
        } else {
            ((pi * t * (1.0 - rolloff)).sin() + x * (pi * t * (1.0 + rolloff)).cos())
                / (pi * t * (1.0 - x * x))
        };
        taps.push(v);
    }
    let energy: f64 = taps.iter().map(|v| v * v).sum();
    let norm = energy.sqrt();
    for v in &mut taps {
        *v /= norm;
    }
    taps
}

/// Insert sps-1 zeros between symbols, then run the full convolution with
/// the pulse taps (output length count·sps + taps-1).
pub fn shape(symbols: &[Complex64], sps: usize, pulse: &Pulse) -> Vec<Complex64> {
    let taps = pulse.taps(sps);
    convolve_real_full(symbols, sps, &taps)
}

/// Full convolution of a complex sequence with real taps.
pub fn filter_full(x: &[Complex64], taps: &[f64]) -> Vec<Complex64> {
    convolve_real_full(x, 1, taps)
}

fn convolve_real_full(symbols: &[Complex64], upsample: usize, taps: &[f64]) -> Vec<Complex64> {
    let n_in = symbols.len() * upsample;
    let out_len = if n_in == 0 { 0 } else { n_in + taps.len() - 1 };
    let mut out = vec![Complex64::new(0.0, 0.0); out_len];
    for (si, &s) in symbols.iter().enumerate() {
        if s.norm_sqr() == 0.0 {
            continue;
        }
        let base = si * upsample;
        for (ti, &t) in taps.iter().enumerate() {
            out[base + ti] += s * t;
        }
    }
    out
}
