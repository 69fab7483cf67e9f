//! Chromatic-dispersion compensation filter taps and their angular statistics.
//!
//! The CD equalizer is an all-pass FIR whose taps all lie on one circle in
//! the complex plane; only the phase varies with tap index. The functions
//! here generate those taps from link parameters, truncate them to a chosen
//! size, and measure how strongly the tap phases bunch into clusters.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

/// Default histogram bin count: 30 bins of 12 degrees each.
pub const DEFAULT_ANGLE_BINS: usize = 30;

/// Physical and sampling parameters of an optical link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    /// Dispersion coefficient D, ps/(nm·km).
    pub dispersion_ps_nm_km: f64,
    /// Carrier wavelength, nm.
    pub wavelength_nm: f64,
    /// Symbol rate, Hz.
    pub baud_rate_hz: f64,
    /// Samples per symbol at the equalizer input.
    pub samples_per_symbol: u32,
    /// Length of one fiber span, km.
    pub span_length_km: f64,
    /// Number of spans (one amplifier after each).
    pub span_count: u32,
    /// Kerr nonlinearity coefficient gamma, (W·km)^-1.
    pub nonlinearity_w_km: f64,
    /// Fiber attenuation, dB/km.
    pub attenuation_db_km: f64,
    /// Amplifier noise figure, dB.
    pub amp_noise_figure_db: f64,
}

impl ChannelSpec {
    /// Standard single-mode fiber link at 32 GBaud and 2 samples/symbol:
    /// D = 16.8 ps/(nm·km), lambda = 1550 nm, 80 km spans, gamma = 1.2 (W·km)^-1,
    /// 0.21 dB/km loss, EDFA noise figure 4.5 dB.
    pub fn ssmf_32gbaud() -> Self {
        ChannelSpec {
            dispersion_ps_nm_km: 16.8,
            wavelength_nm: 1550.0,
            baud_rate_hz: 32e9,
            samples_per_symbol: 2,
            span_length_km: 80.0,
            span_count: 1,
            nonlinearity_w_km: 1.2,
            attenuation_db_km: 0.21,
            amp_noise_figure_db: 4.5,
        }
    }

    pub fn with_span_count(mut self, span_count: u32) -> Self {
        self.span_count = span_count;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dispersion_ps_nm_km == 0.0 || !self.dispersion_ps_nm_km.is_finite() {
            return Err(Error::invalid("dispersion must be nonzero and finite"));
        }
        if !(self.baud_rate_hz > 0.0) {
            return Err(Error::invalid("baud_rate_hz must be positive"));
        }
        if self.samples_per_symbol < 1 {
            return Err(Error::invalid("samples_per_symbol must be >= 1"));
        }
        if self.span_count < 1 {
            return Err(Error::invalid("span_count must be >= 1"));
        }
        if !(self.wavelength_nm > 0.0) {
            return Err(Error::invalid("wavelength_nm must be positive"));
        }
        if !(self.span_length_km >= 0.0) || !self.span_length_km.is_finite() {
            return Err(Error::invalid("span_length_km must be nonnegative"));
        }
        Ok(())
    }

    /// Sampling period T = 1/(baud · samples_per_symbol), seconds.
    pub fn sampling_period_s(&self) -> f64 {
        1.0 / (self.baud_rate_hz * self.samples_per_symbol as f64)
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.baud_rate_hz * self.samples_per_symbol as f64
    }

    /// Total link length z, meters.
    pub fn total_length_m(&self) -> f64 {
        self.span_length_km * 1e3 * self.span_count as f64
    }

    /// Dispersion in SI units, s/m^2.
    pub fn dispersion_si(&self) -> f64 {
        self.dispersion_ps_nm_km * 1e-6
    }

    pub fn wavelength_m(&self) -> f64 {
        self.wavelength_nm * 1e-9
    }

    /// Group velocity dispersion beta2 = -D·lambda^2/(2·pi·c), s^2/m.
    pub fn beta2_s2_m(&self) -> f64 {
        let lambda = self.wavelength_m();
        -self.dispersion_si() * lambda * lambda
            / (2.0 * std::f64::consts::PI * SPEED_OF_LIGHT_M_S)
    }

    /// Load from a plain-text `key = value` file. Lines starting with `#`
    /// and blank lines are ignored; every other line must be one of the
    /// nine parameter keys.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_key_value(&text, path)
    }

    pub fn parse_key_value(text: &str, path: &Path) -> Result<Self> {
        let mut spec = ChannelSpec::ssmf_32gbaud();
        let mut seen = [false; 9];
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Config {
                path: path.to_path_buf(),
                line: idx + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
            let key = key.trim();
            let value = value.trim();
            let parse_f64 = || -> Result<f64> {
                value
                    .parse::<f64>()
                    .map_err(|_| err(format!("'{value}' is not a number")))
            };
            let parse_u32 = || -> Result<u32> {
                value
                    .parse::<u32>()
                    .map_err(|_| err(format!("'{value}' is not a positive integer")))
            };
            match key {
                "dispersion_ps_nm_km" => {
                    spec.dispersion_ps_nm_km = parse_f64()?;
                    seen[0] = true;
                }
                "wavelength_nm" => {
                    spec.wavelength_nm = parse_f64()?;
                    seen[1] = true;
                }
                "baud_rate_hz" => {
                    spec.baud_rate_hz = parse_f64()?;
                    seen[2] = true;
                }
                "samples_per_symbol" => {
                    spec.samples_per_symbol = parse_u32()?;
                    seen[3] = true;
                }
                "span_length_km" => {
                    spec.span_length_km = parse_f64()?;
                    seen[4] = true;
                }
                "span_count" => {
                    spec.span_count = parse_u32()?;
                    seen[5] = true;
                }
                "nonlinearity_w_km" => {
                    spec.nonlinearity_w_km = parse_f64()?;
                    seen[6] = true;
                }
                "attenuation_db_km" => {
                    spec.attenuation_db_km = parse_f64()?;
                    seen[7] = true;
                }
                "amp_noise_figure_db" => {
                    spec.amp_noise_figure_db = parse_f64()?;
                    seen[8] = true;
                }
                other => {
                    return Err(err(format!("unknown key '{other}'")));
                }
            }
        }
        let _ = seen; // partial files inherit the SSMF defaults
        spec.validate().map_err(|e| Error::Config {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        Ok(spec)
    }

    /// The `key = value` text that [`ChannelSpec::parse_key_value`] accepts.
    pub fn to_key_value(&self) -> String {
        format!(
            "dispersion_ps_nm_km = {}\n\
             wavelength_nm = {}\n\
             baud_rate_hz = {}\n\
             samples_per_symbol = {}\n\
             span_length_km = {}\n\
             span_count = {}\n\
             nonlinearity_w_km = {}\n\
             attenuation_db_km = {}\n\
             amp_noise_figure_db = {}\n",
            self.dispersion_ps_nm_km,
            self.wavelength_nm,
            self.baud_rate_hz,
            self.samples_per_symbol,
            self.span_length_km,
            self.span_count,
            self.nonlinearity_w_km,
            self.attenuation_db_km,
            self.amp_noise_figure_db,
        )
    }
}

/// A truncated complex FIR filter with an odd number of taps.
#[derive(Debug, Clone, PartialEq)]
pub struct TapSet {
    taps: Vec<Complex64>,
}

impl TapSet {
    pub fn new(taps: Vec<Complex64>) -> Result<Self> {
        if taps.is_empty() || taps.len() % 2 == 0 {
            return Err(Error::invalid(format!(
                "tap count must be odd and nonzero, got {}",
                taps.len()
            )));
        }
        Ok(TapSet { taps })
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn center_index(&self) -> usize {
        self.taps.len() / 2
    }

    /// Magnitude of the center tap. For CD taps every tap shares this
    /// radius, so it names the tap circle.
    pub fn circle_radius(&self) -> f64 {
        self.taps[self.center_index()].norm()
    }

    /// Write taps as CSV with columns index, real, imag, magnitude, phase.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "index,real,imag,magnitude,phase")?;
        for (k, t) in self.taps.iter().enumerate() {
            writeln!(w, "{},{},{},{},{}", k, t.re, t.im, t.norm(), t.arg())?;
        }
        Ok(())
    }
}

/// Maximum number of filter taps before the chirp aliases:
/// N = 2·floor(|D|·lambda^2·z / (2·c·T^2)) + 1.
pub fn max_taps(spec: &ChannelSpec) -> Result<usize> {
    spec.validate()?;
    let t = spec.sampling_period_s();
    let arg = spec.dispersion_si().abs() * spec.wavelength_m().powi(2) * spec.total_length_m()
        / (2.0 * SPEED_OF_LIGHT_M_S * t * t);
    Ok(2 * (arg.floor() as usize) + 1)
}

/// Generate the M central CD-compensation taps,
/// g[k] = sqrt(j·c·T^2/(D·lambda^2·z)) · exp(-j·pi·c·T^2/(D·lambda^2·z)·m^2)
/// with m = k - floor(M/2).
pub fn generate_taps(spec: &ChannelSpec, m: usize) -> Result<TapSet> {
    let n = max_taps(spec)?;
    if m % 2 == 0 || m == 0 {
        return Err(Error::invalid(format!("filter size must be odd, got {m}")));
    }
    if m > n {
        return Err(Error::invalid(format!(
            "filter size {m} exceeds the {n}-tap aliasing bound for this link"
        )));
    }
    let t = spec.sampling_period_s();
    // a = c·T^2/(D·lambda^2·z), signed by D.
    let a = SPEED_OF_LIGHT_M_S * t * t
        / (spec.dispersion_si() * spec.wavelength_m().powi(2) * spec.total_length_m());
    let amplitude = Complex64::new(0.0, a).sqrt();
    let center = (m / 2) as i64;
    let taps = (0..m as i64)
        .map(|k| {
            let mm = (k - center) as f64;
            amplitude * Complex64::from_polar(1.0, -std::f64::consts::PI * a * mm * mm)
        })
        .collect();
    TapSet::new(taps)
}

/// Count taps per phase bin over [0, 2·pi) split into `bin_count` equal,
/// lower-closed bins.
pub fn angle_histogram(taps: &TapSet, bin_count: usize) -> Vec<usize> {
    assert!(bin_count >= 1, "bin_count must be >= 1");
    let mut counts = vec![0usize; bin_count];
    let two_pi = 2.0 * std::f64::consts::PI;
    for t in taps.taps() {
        let mut phase = t.arg();
        if phase < 0.0 {
            phase += two_pi;
        }
        let bin = ((phase / two_pi) * bin_count as f64) as usize;
        counts[bin.min(bin_count - 1)] += 1;
    }
    counts
}

/// Uniformity metric rho = (N_M - N_L)/mu: the spread between the most and
/// least populated phase bins relative to the mean taps per bin. Zero means
/// a perfectly even angular distribution; large values mean the taps bunch
/// into a few clusters.
pub fn uniformity_rho(taps: &TapSet, bin_count: usize) -> f64 {
    let counts = angle_histogram(taps, bin_count);
    let max = *counts.iter().max().expect("bin_count >= 1") as f64;
    let min = *counts.iter().min().expect("bin_count >= 1") as f64;
    let mean = taps.len() as f64 / bin_count as f64;
    (max - min) / mean
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec_spans(spans: u32) -> ChannelSpec {
        ChannelSpec::ssmf_32gbaud().with_span_count(spans)
    }

    #[test]
    fn max_taps_standard_link() {
        assert_eq!(max_taps(&spec_spans(1)).unwrap(), 45);
        assert_eq!(max_taps(&spec_spans(2)).unwrap(), 89);
        assert_eq!(max_taps(&spec_spans(4)).unwrap(), 177);
        assert_eq!(max_taps(&spec_spans(8)).unwrap(), 353);
    }

    #[test]
    fn max_taps_short_link_is_one() {
        let mut spec = spec_spans(1);
        spec.span_length_km = 1e-3; // one meter
        assert_eq!(max_taps(&spec).unwrap(), 1);
    }

    #[test]
    fn max_taps_monotone_in_length_and_dispersion() {
        let mut prev = 0;
        for spans in 1..=40 {
            let n = max_taps(&spec_spans(spans)).unwrap();
            assert!(n % 2 == 1);
            assert!(n >= prev);
            prev = n;
        }
        let mut prev = 0;
        for i in 1..=30 {
            let mut spec = spec_spans(2);
            spec.dispersion_ps_nm_km = i as f64;
            let n = max_taps(&spec).unwrap();
            assert!(n >= prev);
            prev = n;
        }
    }

    #[test]
    fn negative_dispersion_same_tap_count() {
        let mut spec = spec_spans(1);
        spec.dispersion_ps_nm_km = -16.8;
        assert_eq!(max_taps(&spec).unwrap(), 45);
    }

    #[test]
    fn single_tap_is_the_amplitude_factor() {
        let spec = spec_spans(1);
        let ts = generate_taps(&spec, 1).unwrap();
        let t = spec.sampling_period_s();
        let a = SPEED_OF_LIGHT_M_S * t * t
            / (spec.dispersion_si() * spec.wavelength_m().powi(2) * spec.total_length_m());
        let expected = Complex64::new(0.0, a).sqrt();
        assert_eq!(ts.taps()[0], expected);
    }

    #[test]
    fn taps_share_one_magnitude() {
        for m in [1usize, 27, 45] {
            let ts = generate_taps(&spec_spans(1), m).unwrap();
            let r = ts.circle_radius();
            for t in ts.taps() {
                assert_relative_eq!(t.norm(), r, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn taps_even_symmetric_bit_exact() {
        let ts = generate_taps(&spec_spans(1), 45).unwrap();
        let c = ts.center_index();
        assert_eq!(c, 22);
        for i in 1..=c {
            assert_eq!(ts.taps()[c + i], ts.taps()[c - i]);
        }
    }

    #[test]
    fn rejects_even_or_oversized_filters() {
        let spec = spec_spans(1);
        assert!(generate_taps(&spec, 44).is_err());
        assert!(generate_taps(&spec, 47).is_err());
        assert!(generate_taps(&spec, 45).is_ok());
    }

    #[test]
    fn histogram_conserves_and_matches_phase_scan() {
        let ts = generate_taps(&spec_spans(1), 27).unwrap();
        let counts = angle_histogram(&ts, 30);
        assert_eq!(counts.iter().sum::<usize>(), 27);

        // Independent per-tap phase scan for the extreme bins.
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut brute = vec![0usize; 30];
        for t in ts.taps() {
            let mut p = t.im.atan2(t.re);
            if p < 0.0 {
                p += two_pi;
            }
            let mut b = 0;
            while ((b + 1) as f64) * two_pi / 30.0 <= p {
                b += 1;
            }
            brute[b.min(29)] += 1;
        }
        assert_eq!(counts, brute);
        assert_eq!(
            counts.iter().max().unwrap(),
            brute.iter().max().unwrap()
        );
        assert_eq!(
            counts.iter().min().unwrap(),
            brute.iter().min().unwrap()
        );
    }

    #[test]
    fn histogram_single_tap() {
        let ts = generate_taps(&spec_spans(1), 1).unwrap();
        let counts = angle_histogram(&ts, 30);
        assert_eq!(counts.iter().sum::<usize>(), 1);
        assert_eq!(counts.iter().filter(|&&c| c == 1).count(), 1);
    }

    #[test]
    fn rho_closed_forms() {
        // Five synthetic taps with one shared phase: rho = (5-0)/(5/30) = 30.
        let one_phase = TapSet::new(vec![Complex64::from_polar(1.0, 0.3); 5]).unwrap();
        assert_relative_eq!(uniformity_rho(&one_phase, 30), 30.0);

        // One tap per bin: perfectly uniform, rho = 0.
        let two_pi = 2.0 * std::f64::consts::PI;
        let uniform = TapSet::new(
            (0..31)
                .map(|b| Complex64::from_polar(1.0, (b as f64 + 0.5) * two_pi / 31.0))
                .collect(),
        )
        .unwrap();
        assert_eq!(uniformity_rho(&uniform, 31), 0.0);
    }

    #[test]
    fn rho_decreases_with_distance() {
        let short = spec_spans(1);
        let long = spec_spans(100); // 8000 km
        let ts_short = generate_taps(&short, max_taps(&short).unwrap()).unwrap();
        let ts_long = generate_taps(&long, max_taps(&long).unwrap()).unwrap();
        let rho_short = uniformity_rho(&ts_short, DEFAULT_ANGLE_BINS);
        let rho_long = uniformity_rho(&ts_long, DEFAULT_ANGLE_BINS);
        assert!(
            rho_short > rho_long,
            "rho(80km)={rho_short} should exceed rho(8000km)={rho_long}"
        );
        assert!(rho_short >= 0.0 && rho_long >= 0.0);
    }

    #[test]
    fn spec_file_round_trip() {
        let spec = spec_spans(4);
        let text = spec.to_key_value();
        let parsed = ChannelSpec::parse_key_value(&text, Path::new("inline")).unwrap();
        assert_eq!(parsed, spec);
    }

    #[test]
    fn spec_file_errors_carry_line_numbers() {
        let text = "dispersion_ps_nm_km = 16.8\nbogus_key = 1\n";
        let err = ChannelSpec::parse_key_value(text, Path::new("x.conf")).unwrap_err();
        match err {
            Error::Config { line, .. } => assert_eq!(line, 2),
            other => panic!("expected config error, got {other}"),
        }
        let text = "baud_rate_hz = fast\n";
        let err = ChannelSpec::parse_key_value(text, Path::new("x.conf")).unwrap_err();
        match err {
            Error::Config { line, .. } => assert_eq!(line, 1),
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let ts = generate_taps(&spec_spans(1), 5).unwrap();
        let mut buf = Vec::new();
        ts.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], "index,real,imag,magnitude,phase");
    }
}
