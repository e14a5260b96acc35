//! Minimal EDF reader/writer: 256-byte fixed header, 256 bytes per signal,
//! then data records of 16-bit little-endian samples.

use std::fs;
use std::path::Path;

use super::{Channel, Recording, SignalIoError};

const FIXED_HEADER: usize = 256;
const SIGNAL_HEADER: usize = 256;

struct SignalHeader {
    label: String,
    phys_min: f64,
    phys_max: f64,
    dig_min: f64,
    dig_max: f64,
    samples_per_record: usize,
}

impl SignalHeader {
    fn scale(&self) -> f64 {
        (self.phys_max - self.phys_min) / (self.dig_max - self.dig_min)
    }

    fn to_physical(&self, digital: i16) -> f64 {
        self.phys_min + (f64::from(digital) - self.dig_min) * self.scale()
    }
}

fn ascii_field(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).trim().to_string()
}

pub fn read_edf(path: &Path) -> Result<Recording, SignalIoError> {
    let bytes = fs::read(path).map_err(|e| SignalIoError::io(path, e))?;
    parse_edf(path, &bytes)
}

pub(super) fn parse_edf(path: &Path, bytes: &[u8]) -> Result<Recording, SignalIoError> {
    let bad = |r: String| SignalIoError::malformed(path, r);
    if bytes.len() < FIXED_HEADER {
        return Err(bad("header shorter than 256 bytes".into()));
    }
    let num = |range: std::ops::Range<usize>, what: &str| -> Result<f64, SignalIoError> {
        let s = ascii_field(&bytes[range]);
        s.parse::<f64>().map_err(|_| bad(format!("bad {what} field {s:?}")))
    };
    let header_bytes = num(184..192, "header size")? as usize;
    let declared_records = num(236..244, "record count")? as i64;
    let record_duration = num(244..252, "record duration")?;
    let ns = num(252..256, "signal count")? as usize;
    if ns == 0 || header_bytes != FIXED_HEADER + ns * SIGNAL_HEADER {
        return Err(bad(format!("header size {header_bytes} inconsistent with {ns} signals")));
    }
    if bytes.len() < header_bytes {
        return Err(bad("signal headers truncated".into()));
    }
    if !(record_duration > 0.0) {
        return Err(bad(format!("record duration {record_duration} must be positive")));
    }

    // Per-signal fields are stored field-major: all labels, then all transducers, ...
    let field = |offset: usize, width: usize, i: usize| {
        let start = FIXED_HEADER + offset * ns + i * width;
        &bytes[start..start + width]
    };
    let mut signals = Vec::with_capacity(ns);
    for i in 0..ns {
        let parse = |offset: usize, width: usize, what: &str| -> Result<f64, SignalIoError> {
            let s = ascii_field(field(offset, width, i));
            s.parse::<f64>().map_err(|_| bad(format!("signal {i}: bad {what} {s:?}")))
        };
        let h = SignalHeader {
            label: ascii_field(field(0, 16, i)),
            phys_min: parse(104, 8, "physical minimum")?,
            phys_max: parse(112, 8, "physical maximum")?,
            dig_min: parse(120, 8, "digital minimum")?,
            dig_max: parse(128, 8, "digital maximum")?,
            samples_per_record: parse(216, 8, "samples per record")? as usize,
        };
        if h.dig_max <= h.dig_min {
            return Err(bad(format!("signal {i}: digital range is empty")));
        }
        signals.push(h);
    }

    let record_samples: usize = signals.iter().map(|s| s.samples_per_record).sum();
    let record_bytes = record_samples * 2;
    if record_bytes == 0 {
        return Err(bad("data records are empty".into()));
    }
    let data = &bytes[header_bytes..];
    let n_records = if declared_records < 0 {
        if !data.len().is_multiple_of(record_bytes) {
            return Err(bad("data section is not a whole number of records".into()));
        }
        data.len() / record_bytes
    } else {
        let n = declared_records as usize;
        if data.len() < n * record_bytes {
            return Err(bad(format!(
                "data truncated: {} bytes for {n} records of {record_bytes} bytes",
                data.len()
            )));
        }
        n
    };

    let mut columns: Vec<Vec<f64>> = signals
        .iter()
        .map(|s| Vec::with_capacity(s.samples_per_record * n_records))
        .collect();
    for r in 0..n_records {
        let mut offset = r * record_bytes;
        for (sig, col) in signals.iter().zip(columns.iter_mut()) {
            for k in 0..sig.samples_per_record {
                let at = offset + 2 * k;
                let d = i16::from_le_bytes([data[at], data[at + 1]]);
                col.push(sig.to_physical(d));
            }
            offset += sig.samples_per_record * 2;
        }
    }

    let mut rate = None;
    let mut channels = Vec::new();
    for (sig, samples) in signals.into_iter().zip(columns) {
        // EDF+ annotation signals carry text, not samples.
        if sig.label == "EDF Annotations" {
            continue;
        }
        let r = sig.samples_per_record as f64 / record_duration;
        match rate {
            None => rate = Some(r),
            Some(prev) if (prev - r).abs() > 1e-9 => {
                return Err(SignalIoError::InconsistentRates(prev, r))
            }
            _ => {}
        }
        channels.push(Channel { label: sig.label, samples });
    }
    let rate = rate.ok_or_else(|| bad("no sample signals".into()))?;
    Recording::new(channels, rate).map_err(|e| bad(e.to_string()))
}

fn put(buf: &mut Vec<u8>, text: &str, width: usize) {
    let mut b: Vec<u8> = text.bytes().take(width).collect();
    b.resize(width, b' ');
    buf.extend_from_slice(&b);
}

/// Writes a recording as EDF with one-second data records. The rate must be a
/// whole number of samples per second. Each channel's physical range is taken
/// from its own min/max, so values round-trip within half a quantisation step.
pub fn write_edf(rec: &Recording, path: &Path) -> Result<(), SignalIoError> {
    let rate = rec.rate();
    if rate.fract() != 0.0 {
        return Err(SignalIoError::InvalidRecording(format!(
            "EDF writer needs an integral rate, got {rate}"
        )));
    }
    let spr = rate as usize;
    let n_records = rec.len().div_ceil(spr);
    let ns = rec.channels().len();
    let (dig_min, dig_max) = (-32768.0_f64, 32767.0_f64);

    let ranges: Vec<(f64, f64)> = rec
        .channels()
        .iter()
        .map(|c| {
            let lo = c.samples.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = c.samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo { (lo, hi) } else { (lo - 1.0, lo + 1.0) }
        })
        .collect();

    let mut buf = Vec::new();
    put(&mut buf, "0", 8);
    put(&mut buf, "X X X X", 80);
    put(&mut buf, "Startdate X X X X", 80);
    put(&mut buf, "01.01.00", 8);
    put(&mut buf, "00.00.00", 8);
    put(&mut buf, &(FIXED_HEADER + ns * SIGNAL_HEADER).to_string(), 8);
    put(&mut buf, "", 44);
    put(&mut buf, &n_records.to_string(), 8);
    put(&mut buf, "1", 8);
    put(&mut buf, &ns.to_string(), 4);
    for c in rec.channels() {
        put(&mut buf, &c.label, 16);
    }
    for _ in 0..ns {
        put(&mut buf, "AgAgCl electrode", 80);
    }
    for _ in 0..ns {
        put(&mut buf, "uV", 8);
    }
    for &(lo, _) in &ranges {
        put(&mut buf, &format_edf_number(lo), 8);
    }
    for &(_, hi) in &ranges {
        put(&mut buf, &format_edf_number(hi), 8);
    }
    for _ in 0..ns {
        put(&mut buf, "-32768", 8);
    }
    for _ in 0..ns {
        put(&mut buf, "32767", 8);
    }
    for _ in 0..ns {
        put(&mut buf, "", 80);
    }
    for _ in 0..ns {
        put(&mut buf, &spr.to_string(), 8);
    }
    for _ in 0..ns {
        put(&mut buf, "", 32);
    }

    // Re-read the header ranges as written so quantisation uses the stored
    // (8-character) values.
    let stored: Vec<(f64, f64)> = ranges
        .iter()
        .map(|&(lo, hi)| {
            (
                format_edf_number(lo).parse().unwrap_or(lo),
                format_edf_number(hi).parse().unwrap_or(hi),
            )
        })
        .collect();
    for r in 0..n_records {
        for (c, &(lo, hi)) in rec.channels().iter().zip(&stored) {
            let scale = (dig_max - dig_min) / (hi - lo);
            for k in 0..spr {
                let v = c.samples.get(r * spr + k).copied().unwrap_or(lo);
                let d = (dig_min + (v - lo) * scale).round().clamp(dig_min, dig_max) as i16;
                buf.extend_from_slice(&d.to_le_bytes());
            }
        }
    }
    fs::write(path, buf).map_err(|e| SignalIoError::io(path, e))
}

/// Formats a physical extreme into at most 8 characters, rounding outward is
/// not needed because samples are clamped to the digital range.
fn format_edf_number(v: f64) -> String {
    for prec in (0..=6).rev() {
        let s = format!("{v:.prec$}");
        if s.len() <= 8 {
            return s;
        }
    }
    format!("{:.0}", v)
}
