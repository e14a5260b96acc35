//! 19-channel recording -> labelled 1.8 s ictal windows of IMF1 at 250 Hz.
//!
//! Stage order is fixed: resample, notch, first IMF, window.

mod emd;
mod notch;
mod resample;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal_io::{Recording, SeizureAnnotation, SeizureType, SignalIoError};

pub use emd::{first_imf, Imf};
pub use notch::{notch_60, Biquad};
pub use resample::{design_prototype, rational_factors, resample_250, resample_channel};

pub const TARGET_RATE: f64 = 250.0;
pub const WINDOW_SAMPLES: usize = 450;
pub const WINDOW_SECONDS: f64 = 1.8;
pub const MONTAGE_CHANNELS: usize = 19;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("sampling rate {0} Hz is below 100 Hz")]
    RateTooLow(f64),
    #[error("expected a 250 Hz recording, got {0} Hz")]
    WrongRate(f64),
    #[error("signal of {0} samples is too short")]
    TooShort(usize),
    #[error("expected {MONTAGE_CHANNELS} channels, got {0}")]
    ChannelCount(usize),
    #[error("invalid filter settings: {0}")]
    BadSpec(String),
    #[error("malformed windows file: {0}")]
    MalformedWindows(String),
    #[error(transparent)]
    Signal(#[from] SignalIoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSpec {
    pub resample_target: f64,
    pub notch_center: f64,
    pub notch_bandwidth: f64,
    /// Taps per polyphase branch of the resampling low-pass; odd.
    pub fir_taps: usize,
    pub emd_max_sift: usize,
    pub emd_sd_threshold: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            resample_target: TARGET_RATE,
            notch_center: 60.0,
            notch_bandwidth: 2.0,
            fir_taps: 21,
            emd_max_sift: 50,
            emd_sd_threshold: 0.3,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        let bad = |m: &str| Err(PreprocessError::BadSpec(m.to_string()));
        if self.resample_target != TARGET_RATE {
            return bad("resample_target is fixed at 250 Hz");
        }
        if !(self.notch_center > 0.0 && self.notch_center < self.resample_target / 2.0) {
            return bad("notch_center must lie below the Nyquist frequency");
        }
        if !(self.notch_bandwidth > 0.0) {
            return bad("notch_bandwidth must be positive");
        }
        if self.fir_taps.is_multiple_of(2) || self.fir_taps < 3 {
            return bad("fir_taps must be odd and at least 3");
        }
        if self.emd_max_sift == 0 || !(self.emd_sd_threshold > 0.0) {
            return bad("emd_max_sift and emd_sd_threshold must be positive");
        }
        Ok(())
    }
}

/// One 19 x 450 ictal segment.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochWindow {
    pub channels: Vec<String>,
    pub samples: Vec<Vec<f64>>,
    pub label: SeizureType,
    pub source_id: String,
    pub window_index: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SkipReport {
    /// Annotations shorter than one window: (start_s, stop_s, label).
    pub skipped: Vec<SeizureAnnotation>,
}

/// Cut each annotated span into non-overlapping 450-sample windows. Spans
/// that hold one window but not two yield a single centred window; shorter
/// spans are skipped and reported.
pub fn window_ictal(
    rec: &Recording,
    anns: &[SeizureAnnotation],
    source_id: &str,
) -> Result<(Vec<EpochWindow>, SkipReport), PreprocessError> {
    if rec.rate() != TARGET_RATE {
        return Err(PreprocessError::WrongRate(rec.rate()));
    }
    let mut windows = Vec::new();
    let mut report = SkipReport::default();
    let names: Vec<String> = rec.channels().iter().map(|c| c.label.clone()).collect();
    let mut index = 0;
    for ann in anns {
        let start = ((ann.start_s * TARGET_RATE).round().max(0.0) as usize).min(rec.len());
        let stop = ((ann.stop_s * TARGET_RATE).round().max(0.0) as usize).min(rec.len());
        let span = stop.saturating_sub(start);
        let starts: Vec<usize> = if span >= 2 * WINDOW_SAMPLES {
            (0..span / WINDOW_SAMPLES).map(|w| start + w * WINDOW_SAMPLES).collect()
        } else if span >= WINDOW_SAMPLES {
            vec![start + (span - WINDOW_SAMPLES) / 2]
        } else {
            report.skipped.push(*ann);
            continue;
        };
        for s in starts {
            windows.push(EpochWindow {
                channels: names.clone(),
                samples: rec
                    .channels()
                    .iter()
                    .map(|c| c.samples[s..s + WINDOW_SAMPLES].to_vec())
                    .collect(),
                label: ann.label,
                source_id: source_id.to_string(),
                window_index: index,
            });
            index += 1;
        }
    }
    Ok((windows, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Resample,
    Notch,
    FirstImf,
    Window,
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub windows: Vec<EpochWindow>,
    pub skipped: SkipReport,
    /// Stages in the order they ran.
    pub stages: Vec<Stage>,
    /// Channels for which sifting found no extrema.
    pub monotone_channels: Vec<String>,
}

/// Full chain for one montage-reduced recording.
pub fn preprocess_recording(
    rec: &Recording,
    anns: &[SeizureAnnotation],
    source_id: &str,
    spec: &FilterSpec,
) -> Result<Preprocessed, PreprocessError> {
    spec.validate()?;
    if rec.channels().len() != MONTAGE_CHANNELS {
        return Err(PreprocessError::ChannelCount(rec.channels().len()));
    }
    let mut stages = Vec::with_capacity(4);

    let rec = resample_250(rec, spec)?;
    stages.push(Stage::Resample);
    let rec = notch_60(&rec, spec)?;
    stages.push(Stage::Notch);

    let imfs: Vec<Imf> = {
        use rayon::prelude::*;
        rec.channels()
            .par_iter()
            .map(|c| first_imf(&c.samples, spec.emd_max_sift, spec.emd_sd_threshold))
            .collect::<Result<_, _>>()?
    };
    let monotone_channels = rec
        .channels()
        .iter()
        .zip(&imfs)
        .filter(|(_, imf)| imf.no_extrema)
        .map(|(c, _)| c.label.clone())
        .collect();
    let channels = rec
        .channels()
        .iter()
        .zip(imfs)
        .map(|(c, imf)| crate::signal_io::Channel {
            label: c.label.clone(),
            samples: imf.samples,
        })
        .collect();
    let rec = Recording::new(channels, TARGET_RATE)?;
    stages.push(Stage::FirstImf);

    let (windows, skipped) = window_ictal(&rec, anns, source_id)?;
    stages.push(Stage::Window);
    Ok(Preprocessed {
        windows,
        skipped,
        stages,
        monotone_channels,
    })
}

/// Windows CSV: header `source_id,window_index,label,channel,s0..s449`, one
/// row per (window, channel).
pub fn write_windows(windows: &[EpochWindow], path: &Path) -> Result<(), PreprocessError> {
    let err = |e: csv::Error| PreprocessError::MalformedWindows(format!("{}: {e}", path.display()));
    let file = fs::File::create(path).map_err(|e| SignalIoError::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let mut header = vec!["source_id".to_string(), "window_index".into(), "label".into(), "channel".into()];
    header.extend((0..WINDOW_SAMPLES).map(|i| format!("s{i}")));
    w.write_record(&header).map_err(err)?;
    for win in windows {
        for (name, samples) in win.channels.iter().zip(&win.samples) {
            let mut row = vec![
                win.source_id.clone(),
                win.window_index.to_string(),
                win.label.code().to_string(),
                name.clone(),
            ];
            row.extend(samples.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(err)?;
        }
    }
    w.flush().map_err(|e| SignalIoError::io(path, e).into())
}

pub fn read_windows(path: &Path) -> Result<Vec<EpochWindow>, PreprocessError> {
    let text = fs::read(path).map_err(|e| SignalIoError::io(path, e))?;
    let bad = |m: String| PreprocessError::MalformedWindows(format!("{}: {m}", path.display()));
    let mut reader = csv::Reader::from_reader(text.as_slice());
    let mut windows: Vec<EpochWindow> = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 4 + WINDOW_SAMPLES {
            return Err(bad(format!("row {} has {} fields", row + 1, rec.len())));
        }
        let source_id = rec[0].to_string();
        let window_index: usize = rec[1].parse().map_err(|_| bad(format!("bad window index {:?}", &rec[1])))?;
        let label: SeizureType = rec[2].parse()?;
        let samples = rec
            .iter()
            .skip(4)
            .map(|f| f.parse::<f64>().map_err(|_| bad(format!("bad sample {f:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let same = windows
            .last()
            .is_some_and(|w| w.source_id == source_id && w.window_index == window_index);
        if !same {
            windows.push(EpochWindow {
                channels: Vec::new(),
                samples: Vec::new(),
                label,
                source_id,
                window_index,
            });
        }
        let w = windows.last_mut().expect("pushed above");
        if w.label != label {
            return Err(bad(format!("window {} has mixed labels", w.window_index)));
        }
        w.channels.push(rec[3].to_string());
        w.samples.push(samples);
    }
    if let Some(w) = windows.iter().find(|w| w.samples.len() != MONTAGE_CHANNELS) {
        return Err(bad(format!(
            "window {}/{} has {} channels",
            w.source_id,
            w.window_index,
            w.samples.len()
        )));
    }
    Ok(windows)
}
