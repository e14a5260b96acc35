//! Corpus manifests: which recordings feed a run, their annotations, and
//! their train/test split.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::dataset::{check_disjoint_sources, FeatureMatrix, LabelScheme};
use crate::features::{extract_many, FeatureParams, FeatureSet, FeatureVector};
use crate::preprocess::{preprocess_recording, FilterSpec};
use crate::signal_io::{
    read_annotations, read_recording, select_montage, synth_recording, write_annotations, write_recording,
    MontageSpec, Recording, SeizureAnnotation, SeizureType, STANDARD_MONTAGE,
};

/// Manifest text of the bundled synthetic corpus.
pub const BUNDLED_CORPUS: &str = include_str!("../../fixtures/corpus.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One recording: either synthetic (`class`, `seed`, `duration_s`, `rate`,
/// `ictal`) or a file (`path`, `annotations`) relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub id: String,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<SeizureType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ictal: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corpus {
    #[serde(rename = "recording")]
    pub recordings: Vec<CorpusEntry>,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub root: PathBuf,
}

impl Corpus {
    pub fn parse(text: &str, root: &Path) -> Result<Self, PipelineError> {
        let mut c: Corpus = toml::from_str(text).map_err(|e| PipelineError::Corpus(e.to_string()))?;
        c.root = root.to_path_buf();
        c.validate()?;
        Ok(c)
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_CORPUS, Path::new(".")).expect("bundled corpus manifest is valid")
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::parse(&text, &root)
    }

    fn validate(&self) -> Result<(), PipelineError> {
        let bad = |id: &str, m: &str| Err(PipelineError::Corpus(format!("recording `{id}`: {m}")));
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.recordings {
            if !seen.insert(e.id.as_str()) {
                return bad(&e.id, "duplicate id");
            }
            match (&e.path, e.class) {
                (Some(_), _) if e.annotations.is_none() => return bad(&e.id, "file entries need `annotations`"),
                (Some(_), _) => {}
                (None, Some(_)) if e.seed.is_none() || e.duration_s.is_none() || e.rate.is_none() => {
                    return bad(&e.id, "synthetic entries need `seed`, `duration_s` and `rate`")
                }
                (None, Some(SeizureType::Focal)) => return bad(&e.id, "`fnsz` is not a raw seizure type"),
                (None, Some(_)) => {}
                (None, None) => return bad(&e.id, "needs either `path` or `class`"),
            }
        }
        Ok(())
    }

    /// Recording (montage-reduced) and annotations for one entry.
    pub fn load_entry(&self, e: &CorpusEntry) -> Result<(Recording, Vec<SeizureAnnotation>), PipelineError> {
        if let (Some(path), Some(ann)) = (&e.path, &e.annotations) {
            let rec = read_recording(&self.root.join(path))?;
            let rec = select_montage(&rec, &MontageSpec::default())?;
            let anns = read_annotations(&self.root.join(ann))?;
            return Ok((rec, anns));
        }
        let class = e.class.expect("validated");
        let duration = e.duration_s.expect("validated");
        let rec = synth_recording(class, duration, e.rate.expect("validated"), e.seed.expect("validated"))?;
        let spans = if e.ictal.is_empty() { vec![[0.0, duration]] } else { e.ictal.clone() };
        let anns = spans
            .iter()
            .map(|&[start_s, stop_s]| SeizureAnnotation { start_s, stop_s, label: class })
            .collect();
        Ok((rec, anns))
    }

    /// Writes every synthetic recording as CSV plus annotation file under
    /// `dir`, and a manifest pointing at them.
    pub fn materialize(&self, dir: &Path) -> Result<PathBuf, PipelineError> {
        std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io { path: dir.to_path_buf(), source })?;
        let entries = self
            .recordings
            .par_iter()
            .map(|e| {
                let (rec, anns) = self.load_entry(e)?;
                let rec_name = PathBuf::from(format!("{}.csv", e.id));
                let ann_name = PathBuf::from(format!("{}.ann.csv", e.id));
                write_recording(&rec, &dir.join(&rec_name))?;
                write_annotations(&anns, &dir.join(&ann_name))?;
                Ok(CorpusEntry {
                    id: e.id.clone(),
                    split: e.split,
                    class: None,
                    seed: None,
                    duration_s: None,
                    rate: None,
                    ictal: Vec::new(),
                    path: Some(rec_name),
                    annotations: Some(ann_name),
                })
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        let manifest = Corpus { recordings: entries, root: dir.to_path_buf() };
        let path = dir.join("corpus.toml");
        let text = toml::to_string(&manifest).map_err(|e| PipelineError::Corpus(e.to_string()))?;
        std::fs::write(&path, text).map_err(|source| PipelineError::Io { path: path.clone(), source })?;
        Ok(path)
    }
}

/// Train and test feature matrices (raw labels) built from a corpus.
#[derive(Debug, Clone)]
pub struct CorpusFeatures {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
    /// Annotations too short for a window, per recording id.
    pub skipped: Vec<(String, SeizureAnnotation)>,
}

pub fn feature_names() -> Vec<String> {
    let channels: Vec<String> = STANDARD_MONTAGE.iter().map(|s| s.to_string()).collect();
    FeatureSet::standard().names(&channels)
}

/// Preprocess and featurise every recording; rows keep manifest order.
pub fn build_features(corpus: &Corpus, filter: &FilterSpec, params: &FeatureParams) -> Result<CorpusFeatures, PipelineError> {
    params.validate()?;
    let per_recording = corpus
        .recordings
        .par_iter()
        .map(|e| {
            let (rec, anns) = corpus.load_entry(e)?;
            let pre = preprocess_recording(&rec, &anns, &e.id, filter)?;
            let rows = extract_many(&pre.windows, params);
            let skipped: Vec<_> = pre.skipped.skipped.into_iter().map(|a| (e.id.clone(), a)).collect();
            Ok((e.split, rows, skipped))
        })
        .collect::<Result<Vec<(Split, Vec<FeatureVector>, Vec<_>)>, PipelineError>>()?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut skipped = Vec::new();
    for (split, rows, s) in per_recording {
        match split {
            Split::Train => train.extend(rows),
            Split::Test => test.extend(rows),
        }
        skipped.extend(s);
    }
    let train = FeatureMatrix::new(feature_names(), train, LabelScheme::SixClass)?;
    let test = FeatureMatrix::new(feature_names(), test, LabelScheme::SixClass)?;
    check_disjoint_sources(&train, &test)?;
    Ok(CorpusFeatures { train, test, skipped })
}
