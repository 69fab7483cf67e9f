//! Desk-scale optical link simulator: 16-QAM dual-polarization transmitter,
//! split-step Manakov fiber propagation, and per-span EDFA noise loading.

pub mod pulse;
pub mod qam;

use crate::error::{Error, Result};
use crate::fde::fft_in_place;
use crate::signal::{Role, SignalBlock};
use crate::taps::{max_taps, ChannelSpec, SPEED_OF_LIGHT_M_S};
use num_complex::Complex64;
use pulse::Pulse;
use qam::SymbolStream;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Planck constant, J·s.
pub const PLANCK_J_S: f64 = 6.626_070_15e-34;

/// One simulation run over a link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkRun {
    pub spec: ChannelSpec,
    /// Total launch power across both polarizations, dBm.
    pub launch_power_dbm: f64,
    pub symbol_count: usize,
    pub seed: u64,
    /// Apply the Manakov nonlinear phase rotation.
    pub nonlinear: bool,
    /// Split-step size in nonlinear mode, meters.
    pub step_size_m: f64,
    pub dual_pol: bool,
    /// Add amplifier ASE noise (off gives a noiseless reference link).
    pub amp_noise: bool,
    pub pulse: Pulse,
}

impl LinkRun {
    /// 0 dBm launch, 2^16 symbols, dual polarization, linear mode with
    /// amplifier noise, RRC 0.1 shaping.
    pub fn standard(spec: ChannelSpec) -> Self {
        LinkRun {
            spec,
            launch_power_dbm: 0.0,
            symbol_count: 1 << 16,
            seed: 1,
            nonlinear: false,
            step_size_m: 100.0,
            dual_pol: true,
            amp_noise: true,
            pulse: Pulse::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.symbol_count < 1 {
            return Err(Error::invalid("symbol_count must be >= 1"));
        }
        if !(self.step_size_m > 0.0) {
            return Err(Error::invalid("step_size_m must be positive"));
        }
        let span_m = self.spec.span_length_km * 1e3;
        if span_m > 0.0 && self.step_size_m > span_m {
            return Err(Error::invalid(format!(
                "step size {} m exceeds the {span_m} m span",
                self.step_size_m
            )));
        }
        Ok(())
    }
}

/// ASE variance per polarization added by one amplifier, W, over a
/// simulation bandwidth `fs`: n_sp·h·nu·(G-1)·fs with n_sp = F/2.
pub fn ase_variance_per_pol(spec: &ChannelSpec, fs: f64) -> f64 {
    let gain_db = spec.attenuation_db_km * spec.span_length_km;
    let g = 10f64.powf(gain_db / 10.0);
    if g <= 1.0 {
        return 0.0;
    }
    let f = 10f64.powf(spec.amp_noise_figure_db / 10.0);
    let nu = SPEED_OF_LIGHT_M_S / spec.wavelength_m();
    (f / 2.0) * PLANCK_J_S * nu * (g - 1.0) * fs
}

/// Map bits to symbols and shape the transmit waveform for a run.
pub fn transmit(run: &LinkRun) -> Result<(SymbolStream, SignalBlock)> {
    run.validate()?;
    let stream = qam::generate_symbols(run.symbol_count, run.seed, run.dual_pol);
    let sps = run.spec.samples_per_symbol as usize;
    let samples = stream
        .symbols
        .iter()
        .map(|syms| pulse::shape(syms, sps, &run.pulse))
        .collect();
    let block = SignalBlock::new(samples, run.spec.sample_rate_hz(), Role::Tx)?;
    Ok((stream, block))
}

/// Propagate a transmit block over the link.
///
/// Per span: symmetric split steps (CD phase exp(j·(beta2/2)·omega^2·h) plus
/// loss in each half, Manakov 8/9 nonlinear rotation in between when
/// enabled; linear mode runs one step per span), then an EDFA whose gain
/// exactly compensates the span loss, adding circular Gaussian ASE sized by
/// the noise figure. The output is zero-padded beyond the input length so
/// dispersed tails are kept; sample n of the output stays aligned with
/// sample n of the input.
pub fn propagate(tx: &SignalBlock, run: &LinkRun) -> Result<SignalBlock> {
    run.validate()?;
    let fs = run.spec.sample_rate_hz();
    if (tx.sample_rate_hz - fs).abs() > 1e-6 * fs {
        return Err(Error::invalid(format!(
            "block sample rate {} does not match the channel spec rate {fs}",
            tx.sample_rate_hz
        )));
    }

    // Scale each polarization to its share of the launch power.
    let pols = tx.polarizations();
    let target_w = 1e-3 * 10f64.powf(run.launch_power_dbm / 10.0) / pols as f64;
    let mut fields: Vec<Vec<Complex64>> = Vec::with_capacity(pols);
    for p in 0..pols {
        let mean = tx.mean_power(p);
        let scale = if mean > 0.0 {
            (target_w / mean).sqrt()
        } else {
            1.0
        };
        fields.push(tx.pol(p).iter().map(|&s| s * scale).collect());
    }

    // Pad so dispersion tails never wrap back into the signal.
    let guard = 2 * max_taps(&run.spec)? + 64;
    let padded = (tx.len() + guard).next_power_of_two();
    for f in &mut fields {
        f.resize(padded, Complex64::new(0.0, 0.0));
    }

    let omega2: Vec<f64> = (0..padded)
        .map(|k| {
            let f_hz = if k <= padded / 2 {
                k as f64 / padded as f64 * fs
            } else {
                (k as f64 - padded as f64) / padded as f64 * fs
            };
            let w = 2.0 * std::f64::consts::PI * f_hz;
            w * w
        })
        .collect();

    let beta2 = run.spec.beta2_s2_m();
    let span_m = run.spec.span_length_km * 1e3;
    let gamma_per_w_m = run.spec.nonlinearity_w_km * 1e-3;
    let alpha_np_per_m = run.spec.attenuation_db_km * (10f64).ln() / 10.0 / 1e3; // power
    let sigma2 = if run.amp_noise {
        ase_variance_per_pol(&run.spec, fs)
    } else {
        0.0
    };
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed.wrapping_add(0x5a5e_0001));

    for _span in 0..run.spec.span_count {
        if span_m > 0.0 {
            if run.nonlinear {
                let steps = (span_m / run.step_size_m).ceil() as usize;
                let h = span_m / steps as f64;
                let h_eff = if alpha_np_per_m > 0.0 {
                    (1.0 - (-alpha_np_per_m * h).exp()) / alpha_np_per_m
                } else {
                    h
                };
                for _ in 0..steps {
                    linear_step(&mut fields, &omega2, beta2, run.spec.attenuation_db_km, h / 2.0)?;
                    nonlinear_step(&mut fields, gamma_per_w_m, h_eff);
                    linear_step(&mut fields, &omega2, beta2, run.spec.attenuation_db_km, h / 2.0)?;
                }
            } else {
                linear_step(&mut fields, &omega2, beta2, run.spec.attenuation_db_km, span_m)?;
            }
        }
        // EDFA: exact loss compensation plus ASE.
        let gain_field = 10f64.powf(run.spec.attenuation_db_km * run.spec.span_length_km / 20.0);
        let noise_amp = (sigma2 / 2.0).sqrt();
        for field in &mut fields {
            for v in field.iter_mut() {
                *v *= gain_field;
                if noise_amp > 0.0 {
                    let nr: f64 = StandardNormal.sample(&mut rng);
                    let ni: f64 = StandardNormal.sample(&mut rng);
                    *v += Complex64::new(nr * noise_amp, ni * noise_amp);
                }
            }
        }
    }

    SignalBlock::new(fields, fs, Role::Rx)
}

/// CD phase and loss over `h` meters, applied in the frequency domain.
fn linear_step(
    fields: &mut [Vec<Complex64>],
    omega2: &[f64],
    beta2: f64,
    attenuation_db_km: f64,
    h_m: f64,
) -> Result<()> {
    let loss_field = 10f64.powf(-attenuation_db_km * (h_m / 1e3) / 20.0);
    for field in fields.iter_mut() {
        fft_in_place(field, false)?;
        for (v, &w2) in field.iter_mut().zip(omega2) {
            let phase = 0.5 * beta2 * w2 * h_m;
            *v *= Complex64::from_polar(loss_field, phase);
        }
        fft_in_place(field, true)?;
    }
    Ok(())
}

/// Manakov nonlinear phase rotation with the 8/9 polarization-averaging
/// factor, driven by the instantaneous total power of both polarizations.
fn nonlinear_step(fields: &mut [Vec<Complex64>], gamma_per_w_m: f64, h_eff_m: f64) {
    if gamma_per_w_m == 0.0 {
        return;
    }
    let coef = gamma_per_w_m * (8.0 / 9.0) * h_eff_m;
    let len = fields[0].len();
    for i in 0..len {
        let power: f64 = fields.iter().map(|f| f[i].norm_sqr()).sum();
        let rot = Complex64::from_polar(1.0, coef * power);
        for f in fields.iter_mut() {
            f[i] *= rot;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lossless_spec() -> ChannelSpec {
        let mut spec = ChannelSpec::ssmf_32gbaud();
        spec.attenuation_db_km = 0.0;
        spec.amp_noise_figure_db = 0.0;
        spec
    }

    fn quiet_run(spec: ChannelSpec) -> LinkRun {
        let mut run = LinkRun::standard(spec);
        run.symbol_count = 512;
        run.amp_noise = false;
        run
    }

    /// Launch power that leaves the waveform unscaled.
    fn matched_power_dbm(block: &SignalBlock) -> f64 {
        let total: f64 = (0..block.polarizations())
            .map(|p| block.mean_power(p))
            .sum();
        10.0 * (total * 1e3).log10()
    }

    #[test]
    fn zero_length_link_is_identity() {
        let mut spec = lossless_spec();
        spec.span_length_km = 0.0;
        let mut run = quiet_run(spec);
        let (_, tx) = transmit(&run).unwrap();
        run.launch_power_dbm = matched_power_dbm(&tx);
        let rx = propagate(&tx, &run).unwrap();
        for p in 0..2 {
            for (a, b) in rx.pol(p).iter().zip(tx.pol(p)) {
                assert_eq!(a, b);
            }
            // Padding is zero-filled.
            for v in &rx.pol(p)[tx.len()..] {
                assert_eq!(*v, Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn lossless_linear_propagation_conserves_energy() {
        let mut run = quiet_run(lossless_spec());
        let (_, tx) = transmit(&run).unwrap();
        run.launch_power_dbm = matched_power_dbm(&tx);
        let rx = propagate(&tx, &run).unwrap();
        for p in 0..2 {
            let e_in: f64 = tx.pol(p).iter().map(|v| v.norm_sqr()).sum();
            let e_out: f64 = rx.pol(p).iter().map(|v| v.norm_sqr()).sum();
            assert_relative_eq!(e_in, e_out, max_relative = 1e-9);
        }
    }

    #[test]
    fn analytic_inverse_recovers_waveform() {
        // Propagating with -D over the same length is the exact inverse of
        // the linear channel.
        let mut run = quiet_run(lossless_spec());
        let (_, tx) = transmit(&run).unwrap();
        run.launch_power_dbm = matched_power_dbm(&tx);
        let rx = propagate(&tx, &run).unwrap();

        let mut back_run = run.clone();
        back_run.spec.dispersion_ps_nm_km = -run.spec.dispersion_ps_nm_km;
        back_run.launch_power_dbm = matched_power_dbm(&rx);
        let back = propagate(&rx, &back_run).unwrap();
        let peak = tx
            .pol(0)
            .iter()
            .map(|v| v.norm())
            .fold(0.0f64, f64::max);
        for p in 0..2 {
            for (a, b) in back.pol(p).iter().zip(tx.pol(p)) {
                assert!((a - b).norm() <= 1e-6 * peak, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn cd_filter_inverts_the_channel() {
        // The generated tap filter compensates propagation: a propagated
        // impulse regains its concentration after the full-size filter.
        use crate::taps::generate_taps;
        let spec = lossless_spec();
        let n = max_taps(&spec).unwrap();
        let mut x = vec![Complex64::new(0.0, 0.0); 1024];
        x[512] = Complex64::new(1.0, 0.0);
        let tx = SignalBlock::new(vec![x], spec.sample_rate_hz(), Role::Tx).unwrap();
        let mut run = quiet_run(spec.clone());
        run.launch_power_dbm = matched_power_dbm(&tx);
        let rx = propagate(&tx, &run).unwrap();

        let spread_peak = rx.pol(0).iter().map(|v| v.norm()).fold(0.0f64, f64::max);
        let taps = generate_taps(&spec, n).unwrap();
        let eq = crate::tdce::direct_convolve(&rx, &taps, None).unwrap();
        let (peak_idx, peak) = eq
            .pol(0)
            .iter()
            .enumerate()
            .map(|(i, v)| (i, v.norm()))
            .fold((0, 0.0f64), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        assert!(
            peak > 3.0 * spread_peak,
            "compensation should re-concentrate the impulse: {peak} vs {spread_peak}"
        );
        // Group delay (M-1)/2 puts the impulse back at its original index.
        assert_eq!(peak_idx + (n - 1) / 2, 512);
    }

    #[test]
    fn ase_variance_matches_target() {
        let spec = ChannelSpec::ssmf_32gbaud();
        let mut run = LinkRun::standard(spec.clone());
        run.symbol_count = 1 << 15;
        run.seed = 33;
        // Zero input isolates the additive noise.
        let tx = SignalBlock::new(
            vec![vec![Complex64::new(0.0, 0.0); run.symbol_count * 2]; 2],
            spec.sample_rate_hz(),
            Role::Tx,
        )
        .unwrap();
        let rx = propagate(&tx, &run).unwrap();
        let target = ase_variance_per_pol(&spec, spec.sample_rate_hz());
        for p in 0..2 {
            let measured = rx.mean_power(p);
            assert!(
                (measured - target).abs() < 0.05 * target,
                "pol {p}: measured {measured}, target {target}"
            );
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let mut run = LinkRun::standard(ChannelSpec::ssmf_32gbaud());
        run.symbol_count = 256;
        let (_, tx) = transmit(&run).unwrap();
        let a = propagate(&tx, &run).unwrap();
        let b = propagate(&tx, &run).unwrap();
        assert_eq!(a, b);
        run.seed += 1;
        let (_, tx2) = transmit(&run).unwrap();
        let c = propagate(&tx2, &run).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn step_size_must_fit_span() {
        let mut run = LinkRun::standard(ChannelSpec::ssmf_32gbaud());
        run.nonlinear = true;
        run.step_size_m = 100e3;
        assert!(run.validate().is_err());
        run.step_size_m = 100.0;
        assert!(run.validate().is_ok());
    }

    #[test]
    fn nonlinear_rotation_preserves_power_and_runs() {
        let mut spec = lossless_spec();
        spec.span_length_km = 1.0; // short span keeps the test fast
        let mut run = quiet_run(spec);
        run.nonlinear = true;
        run.step_size_m = 100.0;
        run.symbol_count = 128;
        run.launch_power_dbm = 10.0; // strong power to exercise the rotation
        let (_, tx) = transmit(&run).unwrap();
        let rx = propagate(&tx, &run).unwrap();
        let e_in: f64 = (0..2).map(|p| rx.mean_power(p)).sum::<f64>();
        assert!(e_in > 0.0);
        // Phase rotation alone cannot change total energy (lossless fiber).
        let run_lin = LinkRun {
            nonlinear: false,
            ..run.clone()
        };
        let rx_lin = propagate(&tx, &run_lin).unwrap();
        let e_nl: f64 = (0..2)
            .map(|p| rx.pol(p).iter().map(|v| v.norm_sqr()).sum::<f64>())
            .sum();
        let e_l: f64 = (0..2)
            .map(|p| rx_lin.pol(p).iter().map(|v| v.norm_sqr()).sum::<f64>())
            .sum();
        assert_relative_eq!(e_nl, e_l, max_relative = 1e-9);
        // And the rotated waveform must differ from the linear one.
        assert!(rx.pol(0).iter().zip(rx_lin.pol(0)).any(|(a, b)| (a - b).norm() > 1e-9));
    }
}
