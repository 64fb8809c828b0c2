//! Configuration and derived timing constants.
//!
//! Everything downstream (waveform lengths, demodulation offsets, search
//! grids) is computed from [`NprachConfig`] through [`derive`]. CP lengths
//! are held as exact fractions of the symbol duration (long CP = N samples,
//! short CP = N/4 samples) so that all sample counts are integers by
//! construction.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

use crate::{Error, Result};

/// Cyclic prefix length selector. Long is 266.7 us at the default
/// numerology (one full symbol), Short is 66.7 us (a quarter symbol).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CpKind {
    Long,
    Short,
}

/// NPRACH numerology and preamble configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NprachConfig {
    /// FFT size N (samples per OFDM symbol).
    pub fft_size: usize,
    /// Subcarrier spacing B in Hz.
    pub subcarrier_spacing_hz: f64,
    /// System bandwidth W in Hz.
    pub system_bandwidth_hz: f64,
    /// Cyclic prefix selection.
    pub cp_kind: CpKind,
    /// Number of identical symbols per symbol group (xi).
    pub repeats_per_group: usize,
    /// Number of symbol groups per preamble (L).
    pub preamble_groups: usize,
    /// Width of the NPRACH band in subcarriers.
    pub band_subcarriers: usize,
    /// Index of the first NPRACH band subcarrier within the N-bin grid.
    pub band_offset: usize,
    /// Cell identity; seeds the pseudo-random outer hopping.
    pub cell_id: u32,
    /// Transmit energy per sample E (linear).
    pub tx_energy_per_sample: f64,
}

impl Default for NprachConfig {
    fn default() -> Self {
        NprachConfig {
            fft_size: 64,
            subcarrier_spacing_hz: 3750.0,
            system_bandwidth_hz: 180_000.0,
            cp_kind: CpKind::Long,
            repeats_per_group: 5,
            preamble_groups: 8,
            band_subcarriers: 12,
            band_offset: 0,
            cell_id: 0,
            tx_energy_per_sample: 1.0,
        }
    }
}

impl NprachConfig {
    /// Read a config from a flat key/value TOML file. Unknown keys are a
    /// hard error so typos in campaign sweeps do not pass silently.
    pub fn from_file(path: &Path) -> Result<NprachConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: NprachConfig = toml::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let violations = validate(&cfg);
        if violations.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Validation(violations.join("; ")))
        }
    }
}

/// Sample counts and timings derived from a validated config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedNumerology {
    /// Baseband sampling rate N*B in Hz.
    pub sample_rate_hz: f64,
    /// Cyclic prefix length in samples.
    pub cp_samples: usize,
    /// Samples per symbol group: cp_samples + xi*N.
    pub group_samples: usize,
    /// Samples per full preamble: L * group_samples.
    pub preamble_samples: usize,
    /// Preamble duration in seconds.
    pub preamble_duration_s: f64,
}

/// Check every config invariant; returns the full list of violations
/// (empty iff the config is valid). Violations are data, not faults.
pub fn validate(cfg: &NprachConfig) -> Vec<String> {
    let mut v = Vec::new();
    let n = cfg.fft_size;
    if n == 0 || !n.is_power_of_two() {
        v.push(format!("fft_size {n} is not a power of two"));
    }
    if cfg.subcarrier_spacing_hz <= 0.0 {
        v.push("subcarrier_spacing_hz must be positive".into());
    } else if (n as f64) < cfg.system_bandwidth_hz / cfg.subcarrier_spacing_hz {
        v.push(format!(
            "fft_size {n} is smaller than W/B = {}",
            cfg.system_bandwidth_hz / cfg.subcarrier_spacing_hz
        ));
    }
    if cfg.fft_size >= 4 && cfg.fft_size % 4 != 0 {
        // unreachable for powers of two >= 4; short CP needs N/4 integral
        v.push(format!("fft_size {n} must be divisible by 4"));
    }
    if cfg.preamble_groups == 0 || cfg.preamble_groups % 4 != 0 {
        v.push(format!("L mod 4 != 0 (preamble_groups = {})", cfg.preamble_groups));
    }
    if cfg.repeats_per_group < 1 {
        v.push("repeats_per_group must be >= 1".into());
    }
    if cfg.band_offset + cfg.band_subcarriers > n {
        v.push(format!(
            "band exceeds grid: band_offset {} + band_subcarriers {} > fft_size {n}",
            cfg.band_offset, cfg.band_subcarriers
        ));
    }
    if cfg.tx_energy_per_sample <= 0.0 {
        v.push("tx_energy_per_sample must be positive".into());
    }
    v
}

/// Derive all sample counts and timings. Total and pure for any config
/// that passes [`validate`].
pub fn derive(cfg: &NprachConfig) -> DerivedNumerology {
    let n = cfg.fft_size;
    let sample_rate_hz = n as f64 * cfg.subcarrier_spacing_hz;
    let cp_samples = match cfg.cp_kind {
        CpKind::Long => n,
        CpKind::Short => n / 4,
    };
    let group_samples = cp_samples + cfg.repeats_per_group * n;
    let preamble_samples = cfg.preamble_groups * group_samples;
    DerivedNumerology {
        sample_rate_hz,
        cp_samples,
        group_samples,
        preamble_samples,
        preamble_duration_s: preamble_samples as f64 / sample_rate_hz,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        assert!(validate(&NprachConfig::default()).is_empty());
    }

    #[test]
    fn derive_defaults_long_cp() {
        let cfg = NprachConfig::default();
        let der = derive(&cfg);
        assert_eq!(der.sample_rate_hz, 240_000.0);
        assert_eq!(der.cp_samples, 64);
        assert_eq!(der.group_samples, 384);
    }

    #[test]
    fn derive_short_cp() {
        let cfg = NprachConfig {
            cp_kind: CpKind::Short,
            ..NprachConfig::default()
        };
        let der = derive(&cfg);
        assert_eq!(der.cp_samples, 16);
        assert_eq!(der.group_samples, 336);
    }

    #[test]
    fn preamble_duration_l128() {
        let cfg = NprachConfig {
            preamble_groups: 128,
            ..NprachConfig::default()
        };
        let der = derive(&cfg);
        assert_eq!(der.preamble_samples, 128 * 384);
        assert!((der.preamble_duration_s - 0.2048).abs() < 1e-12);
    }

    #[test]
    fn validate_reports_bad_l() {
        let cfg = NprachConfig {
            preamble_groups: 6,
            ..NprachConfig::default()
        };
        let v = validate(&cfg);
        assert!(v.iter().any(|s| s.contains("L mod 4")), "{v:?}");
    }

    #[test]
    fn validate_reports_band_out_of_grid() {
        let cfg = NprachConfig {
            band_offset: 60,
            ..NprachConfig::default()
        };
        let v = validate(&cfg);
        assert!(v.iter().any(|s| s.contains("band exceeds grid")), "{v:?}");
    }

    #[test]
    fn derive_is_deterministic() {
        let cfg = NprachConfig::default();
        assert_eq!(derive(&cfg), derive(&cfg));
    }

    #[test]
    fn config_file_roundtrip_and_unknown_key() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, "preamble_groups = 32\ncell_id = 7\n").unwrap();
        let cfg = NprachConfig::from_file(&path).unwrap();
        assert_eq!(cfg.preamble_groups, 32);
        assert_eq!(cfg.cell_id, 7);

        std::fs::write(&path, "preamble_grups = 32\n").unwrap();
        assert!(NprachConfig::from_file(&path).is_err());
    }
}
