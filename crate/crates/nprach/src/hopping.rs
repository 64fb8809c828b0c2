//! Multi-level subcarrier hopping pattern.
//!
//! Each 4-group unit applies the fixed inner pattern: a single-subcarrier
//! hop, a 6-subcarrier hop, then the mirror of the first hop. Between
//! units, a cell-common pseudo-random offset (driven by a Gold sequence
//! seeded with the cell identity) shifts the whole unit within the
//! 12-subcarrier band. Preambles of the same cell with distinct start
//! subcarriers never collide.

use crate::numerology::NprachConfig;
use crate::{Error, Result};

/// Symbol groups per inner hopping unit.
pub const UNIT_GROUPS: usize = 4;

/// Band width the inner 6-subcarrier hop is defined for.
pub const BAND_SUBCARRIERS: usize = 12;

const GOLD_WARMUP: usize = 1600;

/// Per-symbol-group subcarrier indices for one preamble.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoppingPattern {
    /// Omega(m) for m in [0, L), each in [0, 12).
    pub indices: Vec<usize>,
    /// Start subcarrier n0 of the first symbol group.
    pub start_subcarrier: usize,
    /// Cell identity that seeded the outer hopping.
    pub cell_id: u32,
}

impl HoppingPattern {
    /// Text export, one "m, Omega(m)" line per symbol group. Used for
    /// conformance diffing between implementations.
    pub fn export_text(&self) -> String {
        let mut out = String::new();
        for (m, w) in self.indices.iter().enumerate() {
            out.push_str(&format!("{m}, {w}\n"));
        }
        out
    }
}

/// Deterministic pseudo-random bits from a length-31 Gold sequence.
///
/// Two 31-bit LFSRs with feedback taps {31, 3} and {31, 3, 2, 1}; the
/// first register starts at 1, the second at the 31 low bits of
/// `cell_id`. The output is the XOR of the two register outputs after
/// discarding the first 1600.
pub fn gold_bits(cell_id: u32, count: usize) -> Vec<u8> {
    let total = GOLD_WARMUP + count;
    let mut x1 = vec![0u8; total + 31];
    let mut x2 = vec![0u8; total + 31];
    x1[0] = 1;
    for (i, b) in x2.iter_mut().take(31).enumerate() {
        *b = ((cell_id >> i) & 1) as u8;
    }
    for n in 0..total {
        x1[n + 31] = x1[n + 3] ^ x1[n];
        x2[n + 31] = x2[n + 3] ^ x2[n + 2] ^ x2[n + 1] ^ x2[n];
    }
    (0..count).map(|n| x1[n + GOLD_WARMUP] ^ x2[n + GOLD_WARMUP]).collect()
}

/// Cell-common outer hopping offsets for units 0..count.
///
/// f_0 = 0; f_t = (f_{t-1} + 1 + (sum_k bits[4t+k] 2^k) mod 11) mod 12,
/// so consecutive units always land on a different offset.
fn block_offsets(count: usize, cell_id: u32) -> Vec<usize> {
    if count == 0 {
        return Vec::new();
    }
    let bits = gold_bits(cell_id, 4 * count);
    let mut f = vec![0usize; count];
    for t in 1..count {
        let nibble: usize = (0..4).map(|k| (bits[4 * t + k] as usize) << k).sum();
        f[t] = (f[t - 1] + 1 + nibble % 11) % 12;
    }
    f
}

/// Outer hopping offset of unit `t` for the given cell.
pub fn block_offset(t: usize, cell_id: u32) -> usize {
    block_offsets(t + 1, cell_id)[t]
}

/// Inner fixed-size hopping within one unit, starting from `base`.
///
/// p=0 holds the base; p=1 hops one subcarrier up from an even base and
/// down from an odd one; p=2 hops six subcarriers toward the other band
/// half; p=3 mirrors the first hop.
fn inner_index(base: usize, p: usize) -> usize {
    debug_assert!(base < BAND_SUBCARRIERS);
    let first = if base % 2 == 0 { base + 1 } else { base - 1 };
    match p {
        0 => base,
        1 => first,
        2 | 3 => {
            let second = if first < 6 { first + 6 } else { first - 6 };
            if p == 2 {
                second
            } else {
                // mirror: undo the first hop's direction
                (second as isize - (first as isize - base as isize)) as usize
            }
        }
        _ => unreachable!("p must be in 0..4"),
    }
}

/// Subcarrier index Omega(m) for a preamble starting at `n0`.
pub fn subcarrier_index(m: usize, n0: usize, cell_id: u32) -> usize {
    let t = m / UNIT_GROUPS;
    let base = (n0 + block_offset(t, cell_id)) % BAND_SUBCARRIERS;
    inner_index(base, m % UNIT_GROUPS)
}

/// Build the complete pattern for `cfg.preamble_groups` symbol groups.
pub fn full_pattern(cfg: &NprachConfig, n0: usize) -> Result<HoppingPattern> {
    if cfg.band_subcarriers != BAND_SUBCARRIERS {
        return Err(Error::Validation(format!(
            "hopping requires a {BAND_SUBCARRIERS}-subcarrier band, got {}",
            cfg.band_subcarriers
        )));
    }
    if n0 >= BAND_SUBCARRIERS {
        return Err(Error::Validation(format!(
            "start subcarrier {n0} outside [0, {BAND_SUBCARRIERS})"
        )));
    }
    let l = cfg.preamble_groups;
    let units = l.div_ceil(UNIT_GROUPS);
    let offsets = block_offsets(units, cfg.cell_id);
    let indices = (0..l)
        .map(|m| {
            let base = (n0 + offsets[m / UNIT_GROUPS]) % BAND_SUBCARRIERS;
            inner_index(base, m % UNIT_GROUPS)
        })
        .collect();
    Ok(HoppingPattern {
        indices,
        start_subcarrier: n0,
        cell_id: cfg.cell_id,
    })
}
