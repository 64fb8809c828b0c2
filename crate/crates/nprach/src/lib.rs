//! Link-level simulator for the NB-IoT random access channel (NPRACH).
//!
//! The crate covers the full transmit/receive chain: single-tone
//! frequency-hopping preamble synthesis, a configurable impaired channel
//! (delay, fading, CFO with drift, AWGN), a joint time-of-arrival /
//! carrier-frequency-offset grid-search estimator with threshold
//! detection, and a Monte Carlo harness that produces detection,
//! false-alarm, and ToA-accuracy statistics.

pub mod channel;
pub mod harness;
pub mod hopping;
pub mod iq;
pub mod numerology;
pub mod receiver;
pub mod waveform;

use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration or argument failed validation.
    #[error("validation error: {0}")]
    Validation(String),
    /// An I/O operation failed; the offending path is carried along.
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// A structured text file could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Derive an independent per-trial seed from a master seed and a trial
/// index (splitmix64-style mixing). Used everywhere a campaign fans out
/// into numbered trials, so results are independent of execution order.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        ^ index
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
