//! Time-domain preamble synthesis.
//!
//! Each symbol group is a single complex tone: one cyclic prefix followed
//! by xi identical N-sample symbols. For an integer-bin tone the CP is the
//! natural continuation of the tone at negative sample indices, so the
//! whole group is one constant-modulus exponential and the preamble PAPR
//! is exactly 0 dB.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::TAU;

use crate::hopping::HoppingPattern;
use crate::numerology::{DerivedNumerology, NprachConfig};
use crate::{Error, Result};

/// Per-symbol-group preamble symbols u[m], unit modulus.
#[derive(Debug, Clone, PartialEq)]
pub struct PreambleSequence {
    pub symbols: Vec<Complex64>,
}

impl PreambleSequence {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// The identity sequence u[m] = 1. Detection statistics depend only on
/// |u[m]|, so this is the default; it is kept explicit as a parameter for
/// multi-sequence experiments.
pub fn default_sequence(l: usize) -> PreambleSequence {
    PreambleSequence {
        symbols: vec![Complex64::new(1.0, 0.0); l],
    }
}

/// Contiguous complex baseband samples at a known sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexBuffer {
    pub samples: Vec<Complex64>,
    pub sample_rate_hz: f64,
}

impl ComplexBuffer {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Samples of one symbol group on in-band subcarrier `k`:
/// s[n] = (sqrt(E)/N) * u * exp(j 2 pi (band_offset + k) n / N) for
/// n = -N_cp .. xi*N - 1.
pub fn group_samples(
    k: usize,
    u: Complex64,
    cfg: &NprachConfig,
    der: &DerivedNumerology,
) -> Result<ComplexBuffer> {
    let n = cfg.fft_size;
    let bin = cfg.band_offset + k;
    if bin >= n {
        return Err(Error::Validation(format!(
            "subcarrier {k} with band_offset {} exceeds the {n}-bin grid",
            cfg.band_offset
        )));
    }
    let amp = cfg.tx_energy_per_sample.sqrt() / n as f64;
    let samples = (0..der.group_samples)
        .map(|i| {
            let t = i as i64 - der.cp_samples as i64;
            let phase = TAU * bin as f64 * t as f64 / n as f64;
            u * Complex64::from_polar(amp, phase)
        })
        .collect();
    Ok(ComplexBuffer {
        samples,
        sample_rate_hz: der.sample_rate_hz,
    })
}

/// Concatenate the L symbol groups of a preamble following its hopping
/// pattern and symbol sequence.
pub fn generate(
    cfg: &NprachConfig,
    pattern: &HoppingPattern,
    seq: &PreambleSequence,
) -> Result<ComplexBuffer> {
    if pattern.indices.len() != cfg.preamble_groups || seq.len() != cfg.preamble_groups {
        return Err(Error::Validation(format!(
            "length mismatch: pattern {} / sequence {} / preamble_groups {}",
            pattern.indices.len(),
            seq.len(),
            cfg.preamble_groups
        )));
    }
    let der = crate::numerology::derive(cfg);
    let mut samples = Vec::with_capacity(der.preamble_samples);
    for (m, &k) in pattern.indices.iter().enumerate() {
        let group = group_samples(k, seq.symbols[m], cfg, &der)?;
        samples.extend_from_slice(&group.samples);
    }
    Ok(ComplexBuffer {
        samples,
        sample_rate_hz: der.sample_rate_hz,
    })
}

/// Peak-to-average power ratio in dB.
pub fn papr_db(buf: &ComplexBuffer) -> Result<f64> {
    if buf.is_empty() {
        return Err(Error::Validation("papr of an empty buffer".into()));
    }
    let powers: Vec<f64> = buf.samples.iter().map(|s| s.norm_sqr()).collect();
    let peak = powers.iter().cloned().fold(0.0, f64::max);
    let mean = powers.iter().sum::<f64>() / powers.len() as f64;
    Ok(10.0 * (peak / mean).log10())
}

/// Spectrum of one N-sample window (unnormalized FFT). Test helper for
/// checking that each symbol's energy sits in a single bin.
pub fn window_spectrum(window: &[Complex64]) -> Vec<Complex64> {
    let mut buf = window.to_vec();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}
