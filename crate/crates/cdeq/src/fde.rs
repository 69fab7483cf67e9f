//! Frequency-domain equalizer: radix-2 FFT, overlap-save block filtering,
//! and the FFT-size complexity model.
//!
//! The complexity model counts real multiplications per uncorrupted output
//! sample, C_FFT = N_FFT·(8·beta·log2(N_FFT) + 4)/(N_FFT - M + 1), with
//! beta = 1/2 for radix-2 sizes (powers of 2) and 3/8 for radix-4 sizes
//! (powers of 4). The numerical engine always runs the radix-2 transform;
//! the radix choice only affects the accounting.

use crate::error::{Error, Result};
use crate::fixedpoint::{block_scale_exponent, quantize_complex_block, FixedFormat};
use crate::signal::{Role, SignalBlock};
use crate::taps::TapSet;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// FFT architecture selector for the complexity model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Radix {
    Radix2,
    Radix4,
}

impl Radix {
    /// Butterfly cost constant beta in the complexity model.
    pub fn beta(self) -> f64 {
        match self {
            Radix::Radix2 => 0.5,
            Radix::Radix4 => 0.375,
        }
    }

    pub fn admits_size(self, n: usize) -> bool {
        match self {
            Radix::Radix2 => n.is_power_of_two(),
            Radix::Radix4 => n.is_power_of_two() && n.trailing_zeros() % 2 == 0,
        }
    }
}

/// In-place iterative radix-2 transform. Forward uses exp(-j·2·pi·k·n/N);
/// inverse adds the 1/N scale.
pub fn fft_in_place(data: &mut [Complex64], inverse: bool) -> Result<()> {
    let n = data.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::invalid(format!(
            "FFT length must be a power of two, got {n}"
        )));
    }
    // Bit-reversal permutation.
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = (i.reverse_bits() >> (usize::BITS - bits)) as usize;
        if j > i {
            data.swap(i, j);
        }
    }
    // Twiddle table from direct sin/cos keeps round-trip error near 1 ulp.
    let sign = if inverse { 1.0 } else { -1.0 };
    let half = n / 2;
    let twiddles: Vec<Complex64> = (0..half.max(1))
        .map(|k| {
            let ang = sign * 2.0 * std::f64::consts::PI * (k as f64) / (n as f64);
            Complex64::new(ang.cos(), ang.sin())
        })
        .collect();
    let mut len = 2;
    while len <= n {
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..len / 2 {
                let w = twiddles[k * stride];
                let a = data[start + k];
                let b = data[start + k + len / 2] * w;
                data[start + k] = a + b;
                data[start + k + len / 2] = a - b;
            }
        }
        len <<= 1;
    }
    if inverse {
        let scale = 1.0 / n as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
    Ok(())
}

/// Out-of-place convenience wrapper around [`fft_in_place`].
pub fn fft(x: &[Complex64], inverse: bool) -> Result<Vec<Complex64>> {
    let mut data = x.to_vec();
    fft_in_place(&mut data, inverse)?;
    Ok(data)
}

/// Overlap-save equalizer configuration.
#[derive(Debug, Clone)]
pub struct FdeConfig {
    pub fft_size: usize,
    pub filter: TapSet,
    pub radix: Radix,
    pub fmt: Option<FixedFormat>,
}

impl FdeConfig {
    pub fn new(fft_size: usize, filter: TapSet, radix: Radix, fmt: Option<FixedFormat>) -> Result<Self> {
        if !fft_size.is_power_of_two() {
            return Err(Error::invalid(format!(
                "FFT size {fft_size} is not a power of two"
            )));
        }
        if fft_size <= filter.len() {
            return Err(Error::invalid(format!(
                "FFT size {fft_size} must exceed the filter length {}",
                filter.len()
            )));
        }
        Ok(FdeConfig {
            fft_size,
            filter,
            radix,
            fmt,
        })
    }
}

/// Overlap-save block filtering, numerically equivalent to
/// [`crate::tdce::direct_convolve`] with the same taps.
///
/// Each block takes N_FFT input samples with M-1 samples of overlap,
/// multiplies in the frequency domain, and keeps the N_FFT-M+1 samples
/// not corrupted by the circular convolution. With `fmt`, the taps and
/// input samples are quantized before the transform (the FFT arithmetic
/// itself stays in floating point).
pub fn overlap_save_equalize(x: &SignalBlock, cfg: &FdeConfig) -> Result<SignalBlock> {
    let m = cfg.filter.len();
    let n = cfg.fft_size;
    if n <= m {
        return Err(Error::invalid(format!(
            "FFT size {n} must exceed filter length {m}"
        )));
    }
    if x.len() < m {
        return Err(Error::invalid(format!(
            "input of {} samples is shorter than the {m}-tap filter",
            x.len()
        )));
    }
    let coeffs = match cfg.fmt {
        None => cfg.filter.taps().to_vec(),
        Some(f) => quantize_complex_block(cfg.filter.taps(), f)?,
    };
    // The transfer function is computed once per call and shared by every
    // block and polarization. Taps are reversed so the frequency-domain
    // product realizes the engines' sliding dot-product alignment.
    let mut h: Vec<Complex64> = coeffs.iter().rev().cloned().collect();
    h.resize(n, Complex64::new(0.0, 0.0));
    fft_in_place(&mut h, false)?;

    let (pols, unscale) = match cfg.fmt {
        None => (x.pols().to_vec(), 1.0),
        Some(f) => {
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
            (pols, 1.0 / scale)
        }
    };

    let step = n - m + 1;
    let out_len = x.len() - m + 1;
    let mut out = Vec::with_capacity(pols.len());
    let mut seg = vec![Complex64::new(0.0, 0.0); n];
    for pol in &pols {
        let mut y = Vec::with_capacity(out_len);
        let mut start = 0;
        while start < out_len {
            let take = (pol.len() - start).min(n);
            seg[..take].copy_from_slice(&pol[start..start + take]);
            for v in seg[take..].iter_mut() {
                *v = Complex64::new(0.0, 0.0);
            }
            fft_in_place(&mut seg, false)?;
            for (s, hv) in seg.iter_mut().zip(&h) {
                *s *= hv;
            }
            fft_in_place(&mut seg, true)?;
            let produce = step.min(out_len - start);
            for k in 0..produce {
                y.push(seg[m - 1 + k] * unscale);
            }
            start += step;
        }
        out.push(y);
    }
    SignalBlock::new(out, x.sample_rate_hz, Role::Equalized)
}

/// Real multiplications per uncorrupted output sample of the FDE.
pub fn fde_complexity(n_fft: usize, m: usize, radix: Radix) -> Result<f64> {
    if m < 1 || n_fft <= m {
        return Err(Error::invalid(format!(
            "need n_fft > m >= 1, got n_fft={n_fft}, m={m}"
        )));
    }
    if !radix.admits_size(n_fft) {
        return Err(Error::invalid(format!(
            "FFT size {n_fft} is not valid for {radix:?}"
        )));
    }
    let log2n = n_fft.trailing_zeros() as f64;
    Ok(n_fft as f64 * (8.0 * radix.beta() * log2n + 4.0) / (n_fft - m + 1) as f64)
}

/// Inclusive FFT-size search range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeBounds {
    pub min: usize,
    pub max: usize,
}

impl SizeBounds {
    pub fn new(min: usize, max: usize) -> Self {
        SizeBounds { min, max }
    }
}

/// FFT size minimizing [`fde_complexity`] over the valid sizes in range;
/// ties break toward the smaller size.
pub fn optimal_fft_size(m: usize, radix: Radix, bounds: SizeBounds) -> Result<usize> {
    if m < 1 {
        return Err(Error::invalid("filter length must be >= 1"));
    }
    let factor = match radix {
        Radix::Radix2 => 2usize,
        Radix::Radix4 => 4usize,
    };
    let mut size = 1usize;
    let mut best: Option<(f64, usize)> = None;
    while size <= bounds.max {
        if size >= bounds.min && size > m && radix.admits_size(size) {
            let c = fde_complexity(size, m, radix)?;
            if best.map_or(true, |(bc, _)| c < bc) {
                best = Some((c, size));
            }
        }
        if size > bounds.max / factor {
            break;
        }
        size *= factor;
    }
    best.map(|(_, s)| s).ok_or_else(|| {
        Error::invalid(format!(
            "no valid FFT size for m={m} in {}..={}",
            bounds.min, bounds.max
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tdce::direct_convolve;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_signal(rng: &mut ChaCha8Rng, len: usize) -> Vec<Complex64> {
        (0..len)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn impulse_transforms_to_all_ones() {
        let x = vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ];
        let y = fft(&x, false).unwrap();
        for v in y {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn constant_transforms_to_scaled_impulse() {
        let x = vec![Complex64::new(1.0, 0.0); 8];
        let y = fft(&x, false).unwrap();
        assert!((y[0] - Complex64::new(8.0, 0.0)).norm() < 1e-12);
        for v in &y[1..] {
            assert!(v.norm() < 1e-12);
        }
    }

    #[test]
    fn matches_naive_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let x = rand_signal(&mut rng, 64);
        let y = fft(&x, false).unwrap();
        for k in 0..64 {
            let mut acc = Complex64::new(0.0, 0.0);
            for (nn, &v) in x.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * (k * nn) as f64 / 64.0;
                acc += v * Complex64::new(ang.cos(), ang.sin());
            }
            assert!((y[k] - acc).norm() <= 1e-10, "bin {k}");
        }
    }

    #[test]
    fn round_trip_identity_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for bits in [4, 8, 12] {
            let x = rand_signal(&mut rng, 1 << bits);
            let y = fft(&x, false).unwrap();
            let back = fft(&y, true).unwrap();
            let x_norm: f64 = x.iter().map(|v| v.norm_sqr()).sum();
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).norm() <= 1e-12 * b.norm().max(1.0));
            }
            let y_norm: f64 = y.iter().map(|v| v.norm_sqr()).sum();
            let n = x.len() as f64;
            assert!(
                ((y_norm / n) - x_norm).abs() <= 1e-10 * x_norm,
                "parseval at n={n}"
            );
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        let x = vec![Complex64::new(0.0, 0.0); 12];
        assert!(fft(&x, false).is_err());
        assert!(fft(&[], false).is_err());
    }

    #[test]
    fn identity_filter_overlap_save() {
        let taps = TapSet::new(vec![Complex64::new(1.0, 0.0)]).unwrap();
        let cfg = FdeConfig::new(16, taps, Radix::Radix2, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = rand_signal(&mut rng, 100);
        let block = SignalBlock::new(vec![x.clone()], 1.0, Role::Rx).unwrap();
        let y = overlap_save_equalize(&block, &cfg).unwrap();
        for (a, b) in y.pol(0).iter().zip(&x) {
            assert!((a - b).norm() <= 1e-12);
        }
    }

    #[test]
    fn overlap_save_equals_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let taps = TapSet::new(rand_signal(&mut rng, 31)).unwrap();
        let x = SignalBlock::new(vec![rand_signal(&mut rng, 4096)], 1.0, Role::Rx).unwrap();
        let cfg = FdeConfig::new(256, taps.clone(), Radix::Radix2, None).unwrap();
        let fd = overlap_save_equalize(&x, &cfg).unwrap();
        let td = direct_convolve(&x, &taps, None).unwrap();
        assert_eq!(fd.len(), td.len());
        for (a, b) in fd.pol(0).iter().zip(td.pol(0)) {
            assert!((a - b).norm() <= 1e-9 * b.norm().max(1.0));
        }
    }

    #[test]
    fn overlap_save_random_sizes_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..12 {
            let m = 2 * rng.gen_range(1..64) + 1;
            let mut n = 1usize << rng.gen_range(8..13);
            while n <= m {
                n <<= 1;
            }
            let len = n + rng.gen_range(0..1500);
            let taps = TapSet::new(rand_signal(&mut rng, m)).unwrap();
            let x = SignalBlock::new(vec![rand_signal(&mut rng, len)], 1.0, Role::Rx).unwrap();
            let cfg = FdeConfig::new(n, taps.clone(), Radix::Radix2, None).unwrap();
            let fd = overlap_save_equalize(&x, &cfg).unwrap();
            let td = direct_convolve(&x, &taps, None).unwrap();
            assert_eq!(fd.len(), td.len());
            for (a, b) in fd.pol(0).iter().zip(td.pol(0)) {
                assert!(
                    (a - b).norm() <= 1e-9 * b.norm().max(1.0),
                    "m={m} n={n} len={len}"
                );
            }
        }
    }

    #[test]
    fn config_rejects_small_fft() {
        let taps = TapSet::new(vec![Complex64::new(1.0, 0.0); 31]).unwrap();
        assert!(FdeConfig::new(16, taps.clone(), Radix::Radix2, None).is_err());
        assert!(FdeConfig::new(100, taps, Radix::Radix2, None).is_err());
    }

    #[test]
    fn complexity_reference_points() {
        assert!((fde_complexity(1024, 103, Radix::Radix2).unwrap() - 48.87).abs() < 0.01);
        assert!((fde_complexity(1024, 103, Radix::Radix4).unwrap() - 37.76).abs() < 0.01);
        assert!((fde_complexity(256, 29, Radix::Radix4).unwrap() - 31.44).abs() < 0.01);
        // Whole radix-2 sweep for M = 103.
        for (log2n, expected) in [
            (7u32, 157.54),
            (8, 59.84),
            (9, 49.95),
            (10, 48.87),
            (11, 50.52),
            (12, 53.33),
        ] {
            let c = fde_complexity(1 << log2n, 103, Radix::Radix2).unwrap();
            assert!((c - expected).abs() < 0.01, "2^{log2n}: {c} vs {expected}");
        }
    }

    #[test]
    fn complexity_rejects_bad_pairings() {
        assert!(fde_complexity(512, 103, Radix::Radix4).is_err()); // 512 not a power of 4
        assert!(fde_complexity(100, 103, Radix::Radix2).is_err()); // n <= m
        assert!(fde_complexity(96, 31, Radix::Radix2).is_err()); // not a power of two
    }

    #[test]
    fn optimal_size_reference_points() {
        let b = SizeBounds::new(128, 4096);
        assert_eq!(optimal_fft_size(103, Radix::Radix2, b).unwrap(), 1024);
        assert_eq!(
            optimal_fft_size(103, Radix::Radix4, SizeBounds::new(256, 4096)).unwrap(),
            1024
        );
    }

    #[test]
    fn optimal_size_tiny_filter_picks_smallest() {
        let b = SizeBounds::new(8, 4096);
        // Exhaustive oracle over the same range.
        let mut best = (f64::INFINITY, 0usize);
        let mut n = 8usize;
        while n <= 4096 {
            let c = fde_complexity(n, 1, Radix::Radix2).unwrap();
            if c < best.0 {
                best = (c, n);
            }
            n <<= 1;
        }
        assert_eq!(optimal_fft_size(1, Radix::Radix2, b).unwrap(), best.1);
        assert_eq!(best.1, 8);
    }

    #[test]
    fn optimal_size_agrees_with_exhaustive_oracle() {
        let b = SizeBounds::new(2, 1 << 14);
        for m in (1..512).step_by(17) {
            let got = optimal_fft_size(m, Radix::Radix2, b).unwrap();
            let mut best = (f64::INFINITY, 0usize);
            let mut n = 2usize;
            while n <= b.max {
                if n > m {
                    let c = fde_complexity(n, m, Radix::Radix2).unwrap();
                    if c < best.0 {
                        best = (c, n);
                    }
                }
                n <<= 1;
            }
            assert_eq!(got, best.1, "m={m}");
        }
    }

    #[test]
    fn optimal_size_empty_range_errors() {
        assert!(optimal_fft_size(103, Radix::Radix2, SizeBounds::new(2, 64)).is_err());
    }
}
