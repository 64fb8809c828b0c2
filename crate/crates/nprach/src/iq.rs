//! IQ dump file format.
//!
//! Samples are stored as interleaved 32-bit IEEE-754 little-endian floats
//! (I then Q), with a sidecar text header `<path>.hdr` carrying the
//! sampling rate, the sample count, and free-form lines echoing the
//! generating config. The pair round-trips bit-exactly through
//! dump/load.

use num_complex::Complex64;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::waveform::ComplexBuffer;
use crate::{Error, Result};

fn header_path(iq_path: &Path) -> PathBuf {
    let mut p = iq_path.as_os_str().to_owned();
    p.push(".hdr");
    PathBuf::from(p)
}

/// Write `buf` to `iq_path` plus its sidecar header. `config_echo` lines
/// are appended to the header verbatim.
pub fn dump(buf: &ComplexBuffer, iq_path: &Path, config_echo: &str) -> Result<()> {
    let mut bytes = Vec::with_capacity(buf.len() * 8);
    for s in &buf.samples {
        bytes.extend_from_slice(&(s.re as f32).to_le_bytes());
        bytes.extend_from_slice(&(s.im as f32).to_le_bytes());
    }
    fs::write(iq_path, &bytes).map_err(|e| Error::io(iq_path, e))?;

    let hdr = header_path(iq_path);
    let mut f = fs::File::create(&hdr).map_err(|e| Error::io(&hdr, e))?;
    let mut text = format!(
        "sample_rate_hz = {}\nlength = {}\n",
        buf.sample_rate_hz,
        buf.len()
    );
    if !config_echo.is_empty() {
        text.push_str(config_echo);
        if !config_echo.ends_with('\n') {
            text.push('\n');
        }
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(&hdr, e))
}

/// Read an IQ dump written by [`dump`].
pub fn load(iq_path: &Path) -> Result<ComplexBuffer> {
    let bytes = fs::read(iq_path).map_err(|e| Error::io(iq_path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Parse(format!(
            "{}: length {} is not a whole number of IQ pairs",
            iq_path.display(),
            bytes.len()
        )));
    }
    let samples = bytes
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]) as f64;
            Complex64::new(re, im)
        })
        .collect();

    let hdr = header_path(iq_path);
    let text = fs::read_to_string(&hdr).map_err(|e| Error::io(&hdr, e))?;
    let mut sample_rate_hz = None;
    for line in text.lines() {
        if let Some(v) = line.strip_prefix("sample_rate_hz = ") {
            sample_rate_hz = v.trim().parse::<f64>().ok();
        }
    }
    let sample_rate_hz = sample_rate_hz.ok_or_else(|| {
        Error::Parse(format!("{}: missing sample_rate_hz", hdr.display()))
    })?;
    Ok(ComplexBuffer {
        samples,
        sample_rate_hz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hopping::full_pattern;
    use crate::numerology::NprachConfig;
    use crate::waveform::{default_sequence, generate};

    #[test]
    fn dump_load_dump_is_bit_exact() {
        let cfg = NprachConfig::default();
        let pattern = full_pattern(&cfg, 4).unwrap();
        let seq = default_sequence(cfg.preamble_groups);
        let buf = generate(&cfg, &pattern, &seq).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.iq");
        let p2 = dir.path().join("b.iq");
        dump(&buf, &p1, "cell_id = 0\n").unwrap();
        let loaded = load(&p1).unwrap();
        assert_eq!(loaded.len(), buf.len());
        assert_eq!(loaded.sample_rate_hz, buf.sample_rate_hz);
        dump(&loaded, &p2, "cell_id = 0\n").unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn load_missing_file_reports_path() {
        let err = load(Path::new("/nonexistent/x.iq")).unwrap_err();
        assert!(err.to_string().contains("x.iq"));
    }
}
