//! Multichannel recordings, seizure annotations, montage selection and the
//! synthetic recording generator used in place of clinical data.

mod edf;
mod synth;

use std::cmp::Ordering;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use edf::{read_edf, write_edf};
pub use synth::{synth_components, synth_recording, SynthError};

#[derive(Debug, Error)]
pub enum SignalIoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },
    #[error("channels disagree on sampling rate ({0} Hz vs {1} Hz)")]
    InconsistentRates(f64, f64),
    #[error("invalid recording: {0}")]
    InvalidRecording(String),
    #[error("montage channel {0} not found")]
    MissingChannel(String),
    #[error("montage channel {0} matches more than one recorded channel")]
    AmbiguousChannel(String),
    #[error("unknown seizure label {0:?}")]
    UnknownLabel(String),
    #[error("annotation interval is inverted: start {start} s, stop {stop} s")]
    InvertedInterval { start: f64, stop: f64 },
}

impl SignalIoError {
    pub(crate) fn malformed(path: &Path, reason: impl Into<String>) -> Self {
        Self::MalformedFile {
            path: path.display().to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Seizure classes. `Focal` only appears once the merged label scheme has
/// been applied (simple partial + complex partial).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum SeizureType {
    Absence,
    ComplexPartial,
    Myoclonic,
    SimplePartial,
    Tonic,
    TonicClonic,
    Focal,
}

impl SeizureType {
    /// The six labels present in raw annotations, in canonical order.
    pub const RAW: [SeizureType; 6] = [
        SeizureType::Absence,
        SeizureType::ComplexPartial,
        SeizureType::Myoclonic,
        SeizureType::SimplePartial,
        SeizureType::Tonic,
        SeizureType::TonicClonic,
    ];

    pub fn code(self) -> &'static str {
        match self {
            SeizureType::Absence => "absz",
            SeizureType::ComplexPartial => "cpsz",
            SeizureType::Myoclonic => "mysz",
            SeizureType::SimplePartial => "spsz",
            SeizureType::Tonic => "tnsz",
            SeizureType::TonicClonic => "tcsz",
            SeizureType::Focal => "fnsz",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            SeizureType::Absence => "Absence",
            SeizureType::ComplexPartial => "Complex partial",
            SeizureType::Myoclonic => "Myoclonic",
            SeizureType::SimplePartial => "Simple partial",
            SeizureType::Tonic => "Tonic",
            SeizureType::TonicClonic => "Tonic-clonic",
            SeizureType::Focal => "Focal",
        }
    }
}

impl fmt::Display for SeizureType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for SeizureType {
    type Err = SignalIoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        let found = match t.as_str() {
            "absz" | "absence" => SeizureType::Absence,
            "cpsz" | "complexpartial" => SeizureType::ComplexPartial,
            "mysz" | "myoclonic" => SeizureType::Myoclonic,
            "spsz" | "simplepartial" => SeizureType::SimplePartial,
            "tnsz" | "tonic" => SeizureType::Tonic,
            "tcsz" | "tonicclonic" => SeizureType::TonicClonic,
            "fnsz" | "focal" => SeizureType::Focal,
            _ => return Err(SignalIoError::UnknownLabel(s.trim().to_string())),
        };
        Ok(found)
    }
}

impl From<SeizureType> for String {
    fn from(t: SeizureType) -> String {
        t.code().to_string()
    }
}

impl TryFrom<String> for SeizureType {
    type Error = SignalIoError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub label: String,
    /// Microvolts.
    pub samples: Vec<f64>,
}

/// A multichannel recording. All channels share one sampling rate and length.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    channels: Vec<Channel>,
    rate: f64,
}

impl Recording {
    pub fn new(channels: Vec<Channel>, rate: f64) -> Result<Self, SignalIoError> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(SignalIoError::InvalidRecording(format!("rate must be positive, got {rate}")));
        }
        let len = channels.first().map(|c| c.samples.len()).unwrap_or(0);
        if channels.is_empty() || len == 0 {
            return Err(SignalIoError::InvalidRecording("recording has no samples".into()));
        }
        if let Some(c) = channels.iter().find(|c| c.samples.len() != len) {
            return Err(SignalIoError::InvalidRecording(format!(
                "channel {} has {} samples, expected {len}",
                c.label,
                c.samples.len()
            )));
        }
        Ok(Self { channels, rate })
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn len(&self) -> usize {
        self.channels[0].samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.rate
    }

    pub fn channel(&self, label: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.label == label)
    }

    /// Applies `f` to every channel's samples, producing a recording at `rate`.
    pub fn map_channels<F>(&self, rate: f64, f: F) -> Result<Recording, SignalIoError>
    where
        F: Fn(&[f64]) -> Vec<f64> + Sync,
    {
        use rayon::prelude::*;
        let channels = self
            .channels
            .par_iter()
            .map(|c| Channel {
                label: c.label.clone(),
                samples: f(&c.samples),
            })
            .collect();
        Recording::new(channels, rate)
    }

    pub fn into_channels(self) -> Vec<Channel> {
        self.channels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeizureAnnotation {
    pub start_s: f64,
    pub stop_s: f64,
    pub label: SeizureType,
}

impl SeizureAnnotation {
    pub fn duration_s(&self) -> f64 {
        self.stop_s - self.start_s
    }
}

/// The 19 electrodes of the 10-20 system shared by every recording.
pub const STANDARD_MONTAGE: [&str; 19] = [
    "Fp1", "Fp2", "F3", "F4", "C3", "C4", "P3", "P4", "O1", "O2", "F7", "F8", "T3", "T4", "T5",
    "T6", "Fz", "Cz", "Pz",
];

const REFERENCE_SUFFIXES: [&str; 8] = ["-REF", "-LE", "-AR", "-AVG", "-A1", "-A2", "-M1", "-M2"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MontageSpec {
    names: Vec<String>,
}

impl Default for MontageSpec {
    fn default() -> Self {
        Self {
            names: STANDARD_MONTAGE.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl MontageSpec {
    pub fn new(names: Vec<String>) -> Result<Self, SignalIoError> {
        let mut seen = std::collections::HashSet::new();
        for n in &names {
            if !seen.insert(n.to_ascii_uppercase()) {
                return Err(SignalIoError::InvalidRecording(format!("duplicate montage name {n}")));
            }
        }
        Ok(Self { names })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn matches(&self, name: &str, channel_label: &str) -> bool {
        normalize_channel_name(channel_label).contains(&name.to_ascii_uppercase())
    }
}

fn normalize_channel_name(label: &str) -> String {
    let mut s = label.trim().to_ascii_uppercase();
    for suffix in REFERENCE_SUFFIXES {
        if let Some(stripped) = s.strip_suffix(suffix) {
            s = stripped.to_string();
            break;
        }
    }
    s
}

/// Reduces a recording to the montage channels, in montage order. Channels are
/// relabelled with the montage name.
pub fn select_montage(rec: &Recording, spec: &MontageSpec) -> Result<Recording, SignalIoError> {
    let mut out = Vec::with_capacity(spec.names().len());
    for name in spec.names() {
        let mut hits = rec.channels().iter().filter(|c| spec.matches(name, &c.label));
        let first = hits.next().ok_or_else(|| SignalIoError::MissingChannel(name.clone()))?;
        if hits.next().is_some() {
            return Err(SignalIoError::AmbiguousChannel(name.clone()));
        }
        out.push(Channel {
            label: name.clone(),
            samples: first.samples.clone(),
        });
    }
    Recording::new(out, rec.rate())
}

/// Reads an EDF file or a toolkit CSV signal file. The format is chosen by
/// content: EDF headers begin with the version field `0` padded to 8 bytes.
pub fn read_recording(path: &Path) -> Result<Recording, SignalIoError> {
    let bytes = fs::read(path).map_err(|e| SignalIoError::io(path, e))?;
    if bytes.starts_with(b"0       ") {
        edf::parse_edf(path, &bytes)
    } else {
        parse_csv_recording(path, &bytes)
    }
}

fn parse_csv_recording(path: &Path, bytes: &[u8]) -> Result<Recording, SignalIoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    let mut records = reader.records();
    let bad = |r: String| SignalIoError::malformed(path, r);

    let names: Vec<String> = match records.next() {
        Some(Ok(r)) => r.iter().map(|s| s.trim().to_string()).collect(),
        Some(Err(e)) => return Err(bad(e.to_string())),
        None => return Err(bad("empty file".into())),
    };
    if names.is_empty() || names.iter().any(String::is_empty) {
        return Err(bad("header row must name every channel".into()));
    }
    let rate = match records.next() {
        Some(Ok(r)) if r.len() >= 2 && r[0].trim() == "rate" => r[1]
            .trim()
            .parse::<f64>()
            .map_err(|_| bad(format!("bad rate {:?}", &r[1])))?,
        Some(Err(e)) => return Err(bad(e.to_string())),
        _ => return Err(bad("second row must be `rate,<Hz>`".into())),
    };

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (row, rec) in records.enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != names.len() {
            return Err(bad(format!(
                "sample row {} has {} fields, expected {}",
                row + 1,
                rec.len(),
                names.len()
            )));
        }
        for (col, field) in columns.iter_mut().zip(rec.iter()) {
            let v = field
                .trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("bad sample {field:?} in row {}", row + 1)))?;
            col.push(v);
        }
    }
    let channels = names
        .into_iter()
        .zip(columns)
        .map(|(label, samples)| Channel { label, samples })
        .collect();
    Recording::new(channels, rate).map_err(|e| bad(e.to_string()))
}

/// Writes a recording in the toolkit CSV signal format. Samples are written in
/// shortest round-trip decimal form so reading back is exact.
pub fn write_recording(rec: &Recording, path: &Path) -> Result<(), SignalIoError> {
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| SignalIoError::malformed(path, e.to_string()))?;
    let err = |e: csv::Error| SignalIoError::malformed(path, e.to_string());
    w.write_record(rec.channels().iter().map(|c| c.label.as_str())).map_err(err)?;
    w.write_record(["rate".to_string(), rec.rate().to_string()]).map_err(err)?;
    let mut row = Vec::with_capacity(rec.channels().len());
    for i in 0..rec.len() {
        row.clear();
        row.extend(rec.channels().iter().map(|c| c.samples[i].to_string()));
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| SignalIoError::io(path, e))
}

/// Parses `start_s,stop_s,label` lines. Blank lines and `#` comments are
/// skipped. Result is sorted by start time.
pub fn parse_annotations(text: &str) -> Result<Vec<SeizureAnnotation>, SignalIoError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let malformed = || SignalIoError::MalformedFile {
            path: "<annotations>".into(),
            reason: format!("line {}: expected start_s,stop_s,label", lineno + 1),
        };
        if fields.len() != 3 {
            return Err(malformed());
        }
        let (Ok(start_s), Ok(stop_s)) = (fields[0].parse::<f64>(), fields[1].parse::<f64>()) else {
            if lineno == 0 && fields[0] == "start_s" {
                continue;
            }
            return Err(malformed());
        };
        let label: SeizureType = fields[2].parse()?;
        if label == SeizureType::Focal {
            return Err(SignalIoError::UnknownLabel(fields[2].to_string()));
        }
        if !(stop_s > start_s) || start_s < 0.0 {
            return Err(SignalIoError::InvertedInterval { start: start_s, stop: stop_s });
        }
        out.push(SeizureAnnotation { start_s, stop_s, label });
    }
    out.sort_by(|a, b| a.start_s.partial_cmp(&b.start_s).unwrap_or(Ordering::Equal));
    Ok(out)
}

pub fn read_annotations(path: &Path) -> Result<Vec<SeizureAnnotation>, SignalIoError> {
    let text = fs::read_to_string(path).map_err(|e| SignalIoError::io(path, e))?;
    parse_annotations(&text).map_err(|e| match e {
        SignalIoError::MalformedFile { reason, .. } => SignalIoError::malformed(path, reason),
        other => other,
    })
}

pub fn write_annotations(anns: &[SeizureAnnotation], path: &Path) -> Result<(), SignalIoError> {
    let mut text = String::new();
    for a in anns {
        text.push_str(&format!("{},{},{}\n", a.start_s, a.stop_s, a.label.code()));
    }
    fs::write(path, text).map_err(|e| SignalIoError::io(path, e))
}

/// Checks that every annotation lies within the recording.
pub fn check_annotations(rec: &Recording, anns: &[SeizureAnnotation]) -> Result<(), SignalIoError> {
    let dur = rec.duration_s();
    for a in anns {
        if a.start_s < 0.0 || a.stop_s > dur + 1e-9 {
            return Err(SignalIoError::InvalidRecording(format!(
                "annotation {}..{} s lies outside the {dur} s recording",
                a.start_s, a.stop_s
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec_with(labels: &[&str]) -> Recording {
        let channels = labels
            .iter()
            .enumerate()
            .map(|(i, l)| Channel {
                label: l.to_string(),
                samples: vec![i as f64; 4],
            })
            .collect();
        Recording::new(channels, 250.0).unwrap()
    }

    fn tuh_labels() -> Vec<String> {
        let mut v: Vec<String> = STANDARD_MONTAGE
            .iter()
            .rev()
            .map(|n| format!("EEG {}-REF", n.to_uppercase()))
            .collect();
        v.insert(3, "ECG EKG-REF".into());
        v.push("PHOTIC-REF".into());
        v
    }

    #[test]
    fn montage_drops_extra_channels_and_orders() {
        let labels = tuh_labels();
        let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
        let rec = rec_with(&refs);
        assert_eq!(rec.channels().len(), 21);
        let out = select_montage(&rec, &MontageSpec::default()).unwrap();
        let names: Vec<&str> = out.channels().iter().map(|c| c.label.as_str()).collect();
        assert_eq!(names, STANDARD_MONTAGE.to_vec());
        assert!(out.channels().iter().all(|c| !c.label.contains("EKG")));
        // Fp1 was the last EEG channel in reversed input order.
        let fp1 = &rec.channels().iter().find(|c| c.label == "EEG FP1-REF").unwrap().samples;
        assert_eq!(&out.channels()[0].samples, fp1);
    }

    #[test]
    fn montage_missing_channel() {
        let labels: Vec<String> = tuh_labels().into_iter().filter(|l| !l.contains("PZ")).collect();
        let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
        let err = select_montage(&rec_with(&refs), &MontageSpec::default()).unwrap_err();
        assert!(matches!(err, SignalIoError::MissingChannel(ref n) if n == "Pz"));
    }

    #[test]
    fn montage_ambiguous_channel() {
        let mut labels = tuh_labels();
        labels.push("T3-alt".into());
        let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
        let err = select_montage(&rec_with(&refs), &MontageSpec::default()).unwrap_err();
        assert!(matches!(err, SignalIoError::AmbiguousChannel(ref n) if n == "T3"));
    }

    #[test]
    fn annotation_lines() {
        let anns = parse_annotations("12.0,19.2,cpsz\n").unwrap();
        assert_eq!(anns.len(), 1);
        assert_eq!(anns[0].label, SeizureType::ComplexPartial);
        assert!((anns[0].duration_s() - 7.2).abs() < 1e-12);

        assert!(matches!(
            parse_annotations("5.0,4.0,absz").unwrap_err(),
            SignalIoError::InvertedInterval { .. }
        ));
        assert!(matches!(
            parse_annotations("1.0,2.0,xyz").unwrap_err(),
            SignalIoError::UnknownLabel(ref l) if l == "xyz"
        ));
    }

    #[test]
    fn annotations_sorted_by_start() {
        let anns = parse_annotations("30,40,tnsz\n# comment\n\n2,5,absz\n").unwrap();
        assert_eq!(anns[0].label, SeizureType::Absence);
        assert_eq!(anns[1].start_s, 30.0);
    }

    #[test]
    fn recording_rejects_ragged_channels() {
        let channels = vec![
            Channel { label: "a".into(), samples: vec![0.0; 4] },
            Channel { label: "b".into(), samples: vec![0.0; 3] },
        ];
        assert!(Recording::new(channels, 250.0).is_err());
        assert!(Recording::new(vec![Channel { label: "a".into(), samples: vec![1.0] }], 0.0).is_err());
    }

    #[test]
    fn labels_round_trip() {
        for t in SeizureType::RAW {
            assert_eq!(t.code().parse::<SeizureType>().unwrap(), t);
        }
    }
}
