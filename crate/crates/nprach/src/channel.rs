//! Impaired channel: round-trip delay, per-antenna fading, residual CFO
//! with linear drift, and AWGN at a target per-sample SNR.
//!
//! Impairments are applied in that order. All randomness flows through
//! RNG streams derived from `(seed, antenna, role)` so that trials are
//! reproducible and antennas are independent.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::numerology::{DerivedNumerology, NprachConfig};
use crate::waveform::ComplexBuffer;
use crate::{Error, Result};

/// Number of equal-power scatterers in the sum-of-sinusoids Jakes model.
const JAKES_SCATTERERS: usize = 64;

/// Typical Urban 12-tap power/delay profile, shipped as a data file so
/// alternatives can be dropped in. Tap delays are unresolvable within
/// the 45 kHz hopping span, so the taps collapse to one composite gain.
pub const TU12_PROFILE: &str = include_str!("../data/tu12.txt");

/// Role bytes of the per-trial RNG stream split.
pub const ROLE_DRAWS: u8 = 0;
pub const ROLE_FADING: u8 = 1;
pub const ROLE_NOISE: u8 = 2;

/// Deterministic RNG stream for `(seed, antenna, role)`.
///
/// The 32-byte ChaCha seed is the little-endian trial seed in bytes
/// 0..8, the antenna index in bytes 8..12, and the role byte at 12.
pub fn stream_rng(seed: u64, antenna: u32, role: u8) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..12].copy_from_slice(&antenna.to_le_bytes());
    key[12] = role;
    ChaCha8Rng::from_seed(key)
}

/// Fading process selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingKind {
    None,
    FlatRayleigh,
    TypicalUrban,
}

/// Channel impairment configuration for one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    /// Round-trip delay D in samples; may be fractional.
    pub delay_samples: f64,
    /// Residual carrier frequency offset in Hz.
    pub cfo_hz: f64,
    /// Linear CFO drift in Hz/s.
    pub drift_hz_per_s: f64,
    /// Per-antenna, per-sample SNR in dB (E_rx/N0 with unit-mean fading).
    pub snr_db: f64,
    pub fading: FadingKind,
    /// Maximum Doppler spread in Hz.
    pub doppler_hz: f64,
    /// Number of receive antennas.
    pub n_rx: usize,
    /// Trial RNG seed; fading and noise streams are split from it.
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            delay_samples: 0.0,
            cfo_hz: 0.0,
            drift_hz_per_s: 0.0,
            snr_db: f64::INFINITY,
            fading: FadingKind::None,
            doppler_hz: 0.0,
            n_rx: 1,
            seed: 0,
        }
    }
}

/// Per-antenna received buffers plus the realized fading traces for
/// diagnostics.
#[derive(Debug, Clone)]
pub struct RxBuffers {
    pub antennas: Vec<ComplexBuffer>,
    pub fading: Vec<Vec<Complex64>>,
}

/// Delay a buffer by `d` samples. Integer delays shift with zero-fill at
/// the head; fractional delays use a full-buffer frequency-domain shift,
/// which is exact band-limited delay for the preamble's tone content
/// (circular at the buffer edges).
pub fn apply_delay(buf: &ComplexBuffer, d: f64) -> Result<ComplexBuffer> {
    if !(0.0..buf.len() as f64).contains(&d) {
        return Err(Error::Validation(format!(
            "delay {d} outside [0, {})",
            buf.len()
        )));
    }
    if d == 0.0 {
        return Ok(buf.clone());
    }
    let len = buf.len();
    if d.fract() == 0.0 {
        let di = d as usize;
        let mut samples = vec![Complex64::new(0.0, 0.0); len];
        samples[di..].copy_from_slice(&buf.samples[..len - di]);
        return Ok(ComplexBuffer {
            samples,
            sample_rate_hz: buf.sample_rate_hz,
        });
    }
    let mut planner = FftPlanner::new();
    let mut spec = buf.samples.clone();
    planner.plan_fft_forward(len).process(&mut spec);
    for (k, s) in spec.iter_mut().enumerate() {
        // conjugate-symmetric bin mapping: upper half counts as negative
        let f = if k <= len / 2 {
            k as f64
        } else {
            k as f64 - len as f64
        };
        *s *= Complex64::from_polar(1.0, -TAU * f * d / len as f64);
    }
    planner.plan_fft_inverse(len).process(&mut spec);
    let scale = 1.0 / len as f64;
    for s in &mut spec {
        *s *= scale;
    }
    Ok(ComplexBuffer {
        samples: spec,
        sample_rate_hz: buf.sample_rate_hz,
    })
}

/// Sum-of-sinusoids Jakes fading: equal-power scatterers at uniformly
/// random angles and phases, advanced by one phasor rotation per sample.
fn jakes_sinusoids(
    doppler_hz: f64,
    sample_rate_hz: f64,
    amplitude: f64,
    rng: &mut impl Rng,
    states: &mut Vec<Complex64>,
    steps: &mut Vec<Complex64>,
) {
    let amp = amplitude / (JAKES_SCATTERERS as f64).sqrt();
    for _ in 0..JAKES_SCATTERERS {
        let angle: f64 = rng.gen_range(0.0..TAU);
        let phase: f64 = rng.gen_range(0.0..TAU);
        let freq = doppler_hz * angle.cos();
        states.push(Complex64::from_polar(amp, phase));
        steps.push(Complex64::from_polar(1.0, TAU * freq / sample_rate_hz));
    }
}

/// One complex gain per sample for a single antenna.
///
/// `FlatRayleigh` is a unit-average-power Jakes process. `TypicalUrban`
/// sums 12 independently Jakes-faded taps with the TU power profile,
/// collapsed to one composite gain per sample. `None` is all-ones.
pub fn fading_trace(
    fading: FadingKind,
    doppler_hz: f64,
    n_samples: usize,
    sample_rate_hz: f64,
    rng: &mut impl Rng,
) -> Vec<Complex64> {
    let mut states = Vec::new();
    let mut steps = Vec::new();
    match fading {
        FadingKind::None => return vec![Complex64::new(1.0, 0.0); n_samples],
        FadingKind::FlatRayleigh => {
            jakes_sinusoids(doppler_hz, sample_rate_hz, 1.0, rng, &mut states, &mut steps);
        }
        FadingKind::TypicalUrban => {
            let profile = parse_tap_profile(TU12_PROFILE).expect("built-in TU profile");
            let total: f64 = profile.iter().map(|t| t.1).sum();
            for (_, p) in profile {
                jakes_sinusoids(
                    doppler_hz,
                    sample_rate_hz,
                    (p / total).sqrt(),
                    rng,
                    &mut states,
                    &mut steps,
                );
            }
        }
    }
    let mut trace = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let g: Complex64 = states.iter().sum();
        trace.push(g);
        for (s, st) in states.iter_mut().zip(steps.iter()) {
            *s *= *st;
        }
    }
    trace
}

/// Parse a tap table: one "delay_us, relative_power_db" pair per line,
/// '#' comments allowed. Returns (delay_us, linear_power) pairs.
pub fn parse_tap_profile(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut taps = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let parse = |s: Option<&str>| -> Result<f64> {
            s.map(str::trim)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::Parse(format!("tap profile line {}: {line:?}", i + 1)))
        };
        let delay_us = parse(parts.next())?;
        let power_db = parse(parts.next())?;
        taps.push((delay_us, 10f64.powf(power_db / 10.0)));
    }
    if taps.is_empty() {
        return Err(Error::Parse("tap profile has no taps".into()));
    }
    Ok(taps)
}

/// Multiply each sample by exp(j 2 pi (cfo t + drift t^2 / 2)) with
/// t = n / sample_rate; the phase is continuous across group boundaries.
pub fn apply_cfo(buf: &ComplexBuffer, cfo_hz: f64, drift_hz_per_s: f64) -> ComplexBuffer {
    if cfo_hz == 0.0 && drift_hz_per_s == 0.0 {
        return buf.clone();
    }
    let fs = buf.sample_rate_hz;
    let samples = buf
        .samples
        .iter()
        .enumerate()
        .map(|(n, s)| {
            let t = n as f64 / fs;
            s * Complex64::from_polar(1.0, TAU * (cfo_hz * t + 0.5 * drift_hz_per_s * t * t))
        })
        .collect();
    ComplexBuffer {
        samples,
        sample_rate_hz: fs,
    }
}

/// Per-sample noise variance N0 for a target SNR. Infinite SNR means
/// no noise.
pub fn noise_variance(tx_power_per_sample: f64, snr_db: f64) -> f64 {
    if snr_db.is_infinite() && snr_db > 0.0 {
        0.0
    } else {
        tx_power_per_sample / 10f64.powf(snr_db / 10.0)
    }
}

/// Add circular complex Gaussian noise with per-sample variance `n0`.
pub fn add_awgn(buf: &ComplexBuffer, n0: f64, rng: &mut impl Rng) -> ComplexBuffer {
    if n0 <= 0.0 {
        return buf.clone();
    }
    let sigma = (n0 / 2.0).sqrt();
    let samples = buf
        .samples
        .iter()
        .map(|s| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            s + Complex64::new(sigma * re, sigma * im)
        })
        .collect();
    ComplexBuffer {
        samples,
        sample_rate_hz: buf.sample_rate_hz,
    }
}

/// Run the full impairment chain for every receive antenna:
/// delay, fading, CFO, AWGN. Pure function of `(tx, ch)` including the
/// seed.
pub fn propagate(
    tx: &ComplexBuffer,
    ch: &ChannelConfig,
    cfg: &NprachConfig,
    der: &DerivedNumerology,
) -> Result<RxBuffers> {
    if ch.n_rx < 1 {
        return Err(Error::Validation("n_rx must be >= 1".into()));
    }
    if !(0.0..der.cp_samples as f64).contains(&ch.delay_samples) {
        return Err(Error::Validation(format!(
            "delay {} outside [0, N_cp = {})",
            ch.delay_samples, der.cp_samples
        )));
    }
    let n = cfg.fft_size as f64;
    let tx_power = cfg.tx_energy_per_sample / (n * n);
    let n0 = noise_variance(tx_power, ch.snr_db);
    let delayed = apply_delay(tx, ch.delay_samples)?;

    let mut antennas = Vec::with_capacity(ch.n_rx);
    let mut fading = Vec::with_capacity(ch.n_rx);
    for ant in 0..ch.n_rx {
        let mut frng = stream_rng(ch.seed, ant as u32, ROLE_FADING);
        let mut nrng = stream_rng(ch.seed, ant as u32, ROLE_NOISE);
        let trace = fading_trace(
            ch.fading,
            ch.doppler_hz,
            delayed.len(),
            delayed.sample_rate_hz,
            &mut frng,
        );
        let mut faded = delayed.clone();
        if ch.fading != FadingKind::None {
            for (s, g) in faded.samples.iter_mut().zip(trace.iter()) {
                *s *= *g;
            }
        }
        let shifted = apply_cfo(&faded, ch.cfo_hz, ch.drift_hz_per_s);
        antennas.push(add_awgn(&shifted, n0, &mut nrng));
        fading.push(trace);
    }
    Ok(RxBuffers { antennas, fading })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hopping::full_pattern;
    use crate::numerology::derive;
    use crate::waveform::{default_sequence, generate, group_samples, window_spectrum};

    fn tone_buffer(bin: usize) -> (NprachConfig, DerivedNumerology, ComplexBuffer) {
        let cfg = NprachConfig::default();
        let der = derive(&cfg);
        let buf = group_samples(bin, Complex64::new(1.0, 0.0), &cfg, &der).unwrap();
        (cfg, der, buf)
    }

    #[test]
    fn delay_zero_is_identity() {
        let (_, _, buf) = tone_buffer(1);
        assert_eq!(apply_delay(&buf, 0.0).unwrap(), buf);
    }

    #[test]
    fn integer_delay_rotates_tone_phase() {
        let (_, _, buf) = tone_buffer(1);
        let d = 7usize;
        let delayed = apply_delay(&buf, d as f64).unwrap();
        let rot = Complex64::from_polar(1.0, -TAU * 1.0 * d as f64 / 64.0);
        for n in d..buf.len() {
            assert!((delayed.samples[n] - buf.samples[n] * rot).norm() < 1e-12);
        }
    }

    #[test]
    fn fractional_delay_matches_analytic_tone_shift() {
        // a bin-1 tone over 384 samples is an exact full-buffer FFT bin,
        // so the circular fractional shift equals the analytic shift
        let (cfg, der, buf) = tone_buffer(1);
        let d = 2.5;
        let delayed = apply_delay(&buf, d).unwrap();
        let amp = cfg.tx_energy_per_sample.sqrt() / 64.0;
        for (i, s) in delayed.samples.iter().enumerate() {
            let t = i as f64 - der.cp_samples as f64 - d;
            let expect = Complex64::from_polar(amp, TAU * t / 64.0);
            assert!((s - expect).norm() < 1e-9, "sample {i}");
        }
        // demodulated phase relative to the undelayed tone
        let spec_d = window_spectrum(&delayed.samples[64..128]);
        let spec_0 = window_spectrum(&buf.samples[64..128]);
        let phase = (spec_d[1] / spec_0[1]).arg();
        assert!((phase - (-TAU * 2.5 / 64.0)).abs() < 1e-6);
    }

    #[test]
    fn delay_out_of_range_rejected() {
        let (_, _, buf) = tone_buffer(1);
        assert!(apply_delay(&buf, -1.0).is_err());
        assert!(apply_delay(&buf, buf.len() as f64).is_err());
    }

    #[test]
    fn fading_none_is_ones() {
        let mut rng = stream_rng(1, 0, ROLE_FADING);
        let trace = fading_trace(FadingKind::None, 1.0, 100, 240_000.0, &mut rng);
        assert!(trace.iter().all(|g| *g == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn rayleigh_mean_power_and_envelope_distribution() {
        // ensemble over independent realizations (a single time average
        // converges slowly because scatterer frequencies can be nearly
        // degenerate); the ensemble mean power is exactly 1
        let n = 20_000;
        let mut rng = stream_rng(7, 0, ROLE_FADING);
        let gains: Vec<Complex64> = (0..n)
            .map(|_| fading_trace(FadingKind::FlatRayleigh, 200.0, 1, 240_000.0, &mut rng)[0])
            .collect();
        let power: f64 = gains.iter().map(|g| g.norm_sqr()).sum::<f64>() / n as f64;
        assert!((power - 1.0).abs() < 0.02, "mean power {power}");

        // KS-test the envelope against the unit-mean-power Rayleigh CDF
        let env: Vec<f64> = gains.iter().take(2000).map(|g| g.norm()).collect();
        let p = ks_p_value(&env, |r| 1.0 - (-r * r).exp());
        assert!(p > 0.01, "KS p-value {p}");
    }

    #[test]
    fn typical_urban_has_unit_mean_power() {
        let n = 20_000;
        let mut rng = stream_rng(9, 0, ROLE_FADING);
        let power: f64 = (0..n)
            .map(|_| {
                fading_trace(FadingKind::TypicalUrban, 200.0, 1, 240_000.0, &mut rng)[0].norm_sqr()
            })
            .sum::<f64>()
            / n as f64;
        assert!((power - 1.0).abs() < 0.02, "mean power {power}");
    }

    fn ks_p_value(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
        let mut s = samples.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = s.len() as f64;
        let mut d: f64 = 0.0;
        for (i, x) in s.iter().enumerate() {
            let f = cdf(*x);
            d = d.max((f - i as f64 / n).abs());
            d = d.max(((i as f64 + 1.0) / n - f).abs());
        }
        let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
        let mut p = 0.0;
        for k in 1..=100 {
            let k = k as f64;
            p += 2.0 * (-1f64).powi(k as i32 + 1) * (-2.0 * k * k * lambda * lambda).exp();
        }
        p.clamp(0.0, 1.0)
    }

    #[test]
    fn slow_fading_is_coherent_over_10ms() {
        // J0(2 pi * 1 Hz * 10 ms) ~ 0.999
        let fs = 240_000.0;
        let n = 100_000;
        let lag = 2400; // 10 ms
        let mut rng = stream_rng(3, 0, ROLE_FADING);
        let trace = fading_trace(FadingKind::FlatRayleigh, 1.0, n, fs, &mut rng);
        let mut num = Complex64::new(0.0, 0.0);
        let mut den = 0.0;
        for i in 0..n - lag {
            num += trace[i + lag] * trace[i].conj();
            den += trace[i].norm_sqr();
        }
        assert!(num.norm() / den >= 0.99);
    }

    #[test]
    fn cfo_identity_and_phase_advance() {
        let (_, _, buf) = tone_buffer(2);
        assert_eq!(apply_cfo(&buf, 0.0, 0.0), buf);
        let shifted = apply_cfo(&buf, 50.0, 0.0);
        let step = TAU * 50.0 / 240_000.0;
        for n in 0..buf.len() {
            let expect = buf.samples[n] * Complex64::from_polar(1.0, step * n as f64);
            assert!((shifted.samples[n] - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn drift_shifts_instantaneous_frequency() {
        // after 0.2048 s a 22.5 Hz/s drift has moved the offset 4.608 Hz
        let fs = 240_000.0;
        let n = 49_152; // 0.2048 s
        let buf = ComplexBuffer {
            samples: vec![Complex64::new(1.0, 0.0); n + 1],
            sample_rate_hz: fs,
        };
        let shifted = apply_cfo(&buf, 0.0, 22.5);
        let inst = (shifted.samples[n] * shifted.samples[n - 1].conj()).arg() * fs / TAU;
        let expect = 22.5 * (n as f64 - 0.5) / fs;
        assert!((inst - expect).abs() < 1e-6);
        assert!((expect - 4.608).abs() < 1e-3);
    }

    #[test]
    fn awgn_hits_target_snr() {
        let n = 1_000_000;
        let buf = ComplexBuffer {
            samples: vec![Complex64::new(1.0, 0.0); n],
            sample_rate_hz: 1.0,
        };
        let mut rng = stream_rng(5, 0, ROLE_NOISE);
        let noisy = add_awgn(&buf, noise_variance(1.0, 0.0), &mut rng);
        let noise_power: f64 = noisy
            .samples
            .iter()
            .zip(buf.samples.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / n as f64;
        let snr_db = 10.0 * (1.0 / noise_power).log10();
        assert!(snr_db.abs() < 0.05, "measured {snr_db} dB");
    }

    #[test]
    fn noise_only_power_matches_n0() {
        let n = 1_000_000;
        let buf = ComplexBuffer {
            samples: vec![Complex64::new(0.0, 0.0); n],
            sample_rate_hz: 1.0,
        };
        let n0 = 2.5;
        let mut rng = stream_rng(6, 0, ROLE_NOISE);
        let noisy = add_awgn(&buf, n0, &mut rng);
        let p: f64 = noisy.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / n as f64;
        assert!((p - n0).abs() < 0.02 * n0);
    }

    #[test]
    fn infinite_snr_means_no_noise() {
        assert_eq!(noise_variance(1.0, f64::INFINITY), 0.0);
    }

    fn clean_chain(cfg: &NprachConfig) -> ComplexBuffer {
        let pattern = full_pattern(cfg, 2).unwrap();
        let seq = default_sequence(cfg.preamble_groups);
        generate(cfg, &pattern, &seq).unwrap()
    }

    #[test]
    fn propagate_without_impairments_is_identity() {
        let cfg = NprachConfig::default();
        let der = derive(&cfg);
        let tx = clean_chain(&cfg);
        let rx = propagate(&tx, &ChannelConfig::default(), &cfg, &der).unwrap();
        assert_eq!(rx.antennas.len(), 1);
        assert_eq!(rx.antennas[0], tx);
    }

    #[test]
    fn propagate_is_deterministic() {
        let cfg = NprachConfig::default();
        let der = derive(&cfg);
        let tx = clean_chain(&cfg);
        let ch = ChannelConfig {
            delay_samples: 12.5,
            cfo_hz: 50.0,
            drift_hz_per_s: 22.5,
            snr_db: 0.0,
            fading: FadingKind::FlatRayleigh,
            doppler_hz: 1.0,
            n_rx: 2,
            seed: 99,
        };
        let a = propagate(&tx, &ch, &cfg, &der).unwrap();
        let b = propagate(&tx, &ch, &cfg, &der).unwrap();
        for (x, y) in a.antennas.iter().zip(b.antennas.iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn propagate_rejects_delay_beyond_cp() {
        let cfg = NprachConfig::default();
        let der = derive(&cfg);
        let tx = clean_chain(&cfg);
        let ch = ChannelConfig {
            delay_samples: 64.0,
            ..ChannelConfig::default()
        };
        assert!(propagate(&tx, &ch, &cfg, &der).is_err());
    }

    #[test]
    fn propagate_matches_analytic_composition() {
        // integer delay, CFO on, fading and noise off: the chain must
        // equal the closed-form delayed-and-rotated tone samples
        let cfg = NprachConfig::default();
        let der = derive(&cfg);
        let pattern = full_pattern(&cfg, 4).unwrap();
        let seq = default_sequence(cfg.preamble_groups);
        let tx = generate(&cfg, &pattern, &seq).unwrap();
        let d = 17usize;
        let cfo = 50.0;
        let ch = ChannelConfig {
            delay_samples: d as f64,
            cfo_hz: cfo,
            ..ChannelConfig::default()
        };
        let rx = propagate(&tx, &ch, &cfg, &der).unwrap();
        let amp = cfg.tx_energy_per_sample.sqrt() / 64.0;
        let dfn = cfo / der.sample_rate_hz;
        for n in d..tx.len() {
            let m = (n - d) / der.group_samples;
            let p = (n - d) % der.group_samples;
            let bin = (cfg.band_offset + pattern.indices[m]) as f64;
            let tone = Complex64::from_polar(
                amp,
                TAU * bin * (p as f64 - der.cp_samples as f64) / 64.0,
            );
            let expect = tone * Complex64::from_polar(1.0, TAU * dfn * n as f64);
            let got = rx.antennas[0].samples[n];
            assert!((got - expect).norm() <= 1e-9 * expect.norm(), "sample {n}");
        }
    }

    #[test]
    fn tap_profile_parses() {
        let taps = parse_tap_profile(TU12_PROFILE).unwrap();
        assert_eq!(taps.len(), 12);
        assert!(parse_tap_profile("not a profile").is_err());
    }
}
