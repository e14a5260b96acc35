//! Feature matrices, label schemes, upsampling balance and split reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::{DegenerateFlags, FeatureVector};
use crate::preprocess::WINDOW_SECONDS;
use crate::signal_io::{SeizureType, SignalIoError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("balancing needs at least two non-empty classes, found {0}")]
    EmptyClass(usize),
    #[error("class {0} has no rows")]
    MissingClass(SeizureType),
    #[error("feature registries differ between matrices")]
    RegistryMismatch,
    #[error("row {row} has {got} values, registry has {expected}")]
    RowWidth { row: usize, got: usize, expected: usize },
    #[error("source {0} appears in both training and test data")]
    Leakage(String),
    #[error("malformed features file {path}: {reason}")]
    Malformed { path: String, reason: String },
    #[error(transparent)]
    Signal(#[from] SignalIoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LabelScheme {
    #[default]
    SixClass,
    /// Simple and complex partial merged into `Focal`.
    FiveClassFocal,
}

impl LabelScheme {
    pub fn map(self, label: SeizureType) -> SeizureType {
        match (self, label) {
            (LabelScheme::FiveClassFocal, SeizureType::ComplexPartial | SeizureType::SimplePartial) => {
                SeizureType::Focal
            }
            (_, l) => l,
        }
    }

    /// Effective labels, in declaration order.
    pub fn classes(self) -> Vec<SeizureType> {
        match self {
            LabelScheme::SixClass => SeizureType::RAW.to_vec(),
            LabelScheme::FiveClassFocal => vec![
                SeizureType::Absence,
                SeizureType::Focal,
                SeizureType::Myoclonic,
                SeizureType::Tonic,
                SeizureType::TonicClonic,
            ],
        }
    }
}

/// Rows of feature vectors sharing one column registry.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    names: Arc<Vec<String>>,
    rows: Vec<FeatureVector>,
    scheme: LabelScheme,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, rows: Vec<FeatureVector>, scheme: LabelScheme) -> Result<Self, DatasetError> {
        Self::with_shared(Arc::new(names), rows, scheme)
    }

    fn with_shared(names: Arc<Vec<String>>, rows: Vec<FeatureVector>, scheme: LabelScheme) -> Result<Self, DatasetError> {
        if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.values.len() != names.len()) {
            return Err(DatasetError::RowWidth {
                row,
                got: r.values.len(),
                expected: names.len(),
            });
        }
        Ok(Self { names, rows, scheme })
    }

    /// Same registry, different rows.
    pub fn derive(&self, rows: Vec<FeatureVector>) -> Self {
        Self {
            names: Arc::clone(&self.names),
            rows,
            scheme: self.scheme,
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> &[FeatureVector] {
        &self.rows
    }

    pub fn scheme(&self) -> LabelScheme {
        self.scheme
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> Vec<SeizureType> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn class_counts(&self) -> BTreeMap<SeizureType, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.rows {
            *counts.entry(r.label).or_insert(0) += 1;
        }
        counts
    }

    pub fn same_registry(&self, other: &FeatureMatrix) -> bool {
        Arc::ptr_eq(&self.names, &other.names) || self.names == other.names
    }

    /// Every class of the scheme must have at least one row.
    pub fn require_classes(&self) -> Result<(), DatasetError> {
        let counts = self.class_counts();
        match self.scheme.classes().into_iter().find(|c| !counts.contains_key(c)) {
            Some(c) => Err(DatasetError::MissingClass(c)),
            None => Ok(()),
        }
    }
}

/// Relabel rows under `scheme`; row order is preserved.
pub fn apply_scheme(m: &FeatureMatrix, scheme: LabelScheme) -> FeatureMatrix {
    let rows = m
        .rows
        .iter()
        .map(|r| FeatureVector {
            label: scheme.map(r.label),
            ..r.clone()
        })
        .collect();
    FeatureMatrix {
        names: Arc::clone(&m.names),
        rows,
        scheme,
    }
}

/// Integer repetition factor: `round(largest / count)`, halves away from
/// zero, never below one.
pub fn upsample_factor(largest: usize, count: usize) -> usize {
    ((largest as f64 / count as f64).round() as usize).max(1)
}

/// Repeat each minority class's rows so the class holds `f` copies in total.
/// Original rows keep their order; copies are appended class by class.
pub fn balance_upsample(m: &FeatureMatrix) -> Result<FeatureMatrix, DatasetError> {
    let counts = m.class_counts();
    if counts.len() < 2 {
        return Err(DatasetError::EmptyClass(counts.len()));
    }
    let largest = *counts.values().max().expect("non-empty");
    let mut rows = m.rows.clone();
    for (&class, &count) in &counts {
        let f = upsample_factor(largest, count);
        if f == 1 {
            continue;
        }
        let members: Vec<&FeatureVector> = m.rows.iter().filter(|r| r.label == class).collect();
        for _ in 1..f {
            rows.extend(members.iter().map(|r| (*r).clone()));
        }
    }
    Ok(m.derive(rows))
}

/// Content hash of a row (values, label and provenance).
pub fn row_hash(r: &FeatureVector) -> [u8; 32] {
    let mut h = Sha256::new();
    for v in &r.values {
        h.update(v.to_bits().to_le_bytes());
    }
    h.update(r.label.code().as_bytes());
    h.update(r.source_id.as_bytes());
    h.update((r.window_index as u64).to_le_bytes());
    h.finalize().into()
}

/// Deterministic split by row hash: a row lands in the first part when its
/// hash bucket (of 100) is below `first_percent`. Duplicated rows always land
/// together.
pub fn hash_split(m: &FeatureMatrix, first_percent: u64) -> (FeatureMatrix, FeatureMatrix) {
    let (a, b): (Vec<_>, Vec<_>) = m.rows.iter().cloned().partition(|r| {
        let h = row_hash(r);
        let bucket = u64::from_le_bytes(h[..8].try_into().expect("8 bytes")) % 100;
        bucket < first_percent
    });
    (m.derive(a), m.derive(b))
}

pub fn check_disjoint_sources(train: &FeatureMatrix, test: &FeatureMatrix) -> Result<(), DatasetError> {
    let train_ids: BTreeSet<&str> = train.rows.iter().map(|r| r.source_id.as_str()).collect();
    match test.rows.iter().find(|r| train_ids.contains(r.source_id.as_str())) {
        Some(r) => Err(DatasetError::Leakage(r.source_id.clone())),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitRow {
    pub label: String,
    pub train_windows: usize,
    pub test_windows: usize,
}

impl SplitRow {
    pub fn train_duration_s(&self) -> f64 {
        self.train_windows as f64 * WINDOW_SECONDS
    }

    pub fn test_duration_s(&self) -> f64 {
        self.test_windows as f64 * WINDOW_SECONDS
    }
}

/// Per-class window counts and windowed durations.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitReport {
    pub rows: Vec<SplitRow>,
    pub total: SplitRow,
}

impl SplitReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:>8} {:>8} {:>16} {:>16}",
            "Seizure type", "wTrain", "wTest", "wDuration_Tr (s)", "wDuration_Tt (s)"
        );
        for r in self.rows.iter().chain(std::iter::once(&self.total)) {
            let _ = writeln!(
                out,
                "{:<16} {:>8} {:>8} {:>16.1} {:>16.1}",
                r.label,
                r.train_windows,
                r.test_windows,
                r.train_duration_s(),
                r.test_duration_s()
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,train_windows,test_windows,train_duration_s,test_duration_s\n");
        for r in self.rows.iter().chain(std::iter::once(&self.total)) {
            let _ = writeln!(
                out,
                "{},{},{},{:.1},{:.1}",
                r.label,
                r.train_windows,
                r.test_windows,
                r.train_duration_s(),
                r.test_duration_s()
            );
        }
        out
    }
}

pub fn split_report(train: &FeatureMatrix, test: &FeatureMatrix) -> Result<SplitReport, DatasetError> {
    if !train.same_registry(test) {
        return Err(DatasetError::RegistryMismatch);
    }
    let (tr, te) = (train.class_counts(), test.class_counts());
    let mut classes: Vec<SeizureType> = train.scheme.classes();
    for c in tr.keys().chain(te.keys()) {
        if !classes.contains(c) {
            classes.push(*c);
        }
    }
    let rows: Vec<SplitRow> = classes
        .into_iter()
        .map(|c| SplitRow {
            label: c.display_name().to_string(),
            train_windows: tr.get(&c).copied().unwrap_or(0),
            test_windows: te.get(&c).copied().unwrap_or(0),
        })
        .collect();
    let total = SplitRow {
        label: "TOTAL".into(),
        train_windows: rows.iter().map(|r| r.train_windows).sum(),
        test_windows: rows.iter().map(|r| r.test_windows).sum(),
    };
    Ok(SplitReport { rows, total })
}

/// Features CSV: header of registry names then `label,source_id,window_index`.
pub fn write_matrix(m: &FeatureMatrix, path: &Path) -> Result<(), DatasetError> {
    fs::write(path, matrix_to_csv(m)).map_err(|e| SignalIoError::io(path, e).into())
}

pub fn matrix_to_csv(m: &FeatureMatrix) -> String {
    let mut out = String::new();
    for n in m.names.iter() {
        out.push_str(n);
        out.push(',');
    }
    out.push_str("label,source_id,window_index\n");
    for r in &m.rows {
        for v in &r.values {
            let _ = write!(out, "{v},");
        }
        let _ = writeln!(out, "{},{},{}", r.label.code(), r.source_id, r.window_index);
    }
    out
}

/// Reads a features CSV. The scheme is five-class when any row is labelled
/// focal, six-class otherwise.
pub fn read_matrix(path: &Path) -> Result<FeatureMatrix, DatasetError> {
    let bytes = fs::read(path).map_err(|e| SignalIoError::io(path, e))?;
    let bad = |reason: String| DatasetError::Malformed {
        path: path.display().to_string(),
        reason,
    };
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let n = header.len();
    if n < 4 || &header[n - 3] != "label" || &header[n - 2] != "source_id" || &header[n - 1] != "window_index" {
        return Err(bad("header must end with label,source_id,window_index".into()));
    }
    let names: Vec<String> = header.iter().take(n - 3).map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
        let values = rec
            .iter()
            .take(n - 3)
            .map(|f| f.parse::<f64>().map_err(|_| bad(format!("row {}: bad value {f:?}", i + 1))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(FeatureVector {
            values,
            label: rec[n - 3].parse()?,
            source_id: rec[n - 2].to_string(),
            window_index: rec[n - 1]
                .parse()
                .map_err(|_| bad(format!("row {}: bad window index", i + 1)))?,
            flags: DegenerateFlags::default(),
        });
    }
    let scheme = if rows.iter().any(|r| r.label == SeizureType::Focal) {
        LabelScheme::FiveClassFocal
    } else {
        LabelScheme::SixClass
    };
    FeatureMatrix::new(names, rows, scheme)
}

#[cfg(test)]
mod tests {
    use super::*;
    use SeizureType::*;

    pub(crate) fn matrix(counts: &[(SeizureType, usize)]) -> FeatureMatrix {
        let mut rows = Vec::new();
        for &(label, n) in counts {
            for i in 0..n {
                rows.push(FeatureVector {
                    values: vec![i as f64, label as u8 as f64],
                    label,
                    source_id: format!("{}-{}", label.code(), i / 5),
                    window_index: i,
                    flags: DegenerateFlags::default(),
                });
            }
        }
        FeatureMatrix::new(vec!["a".into(), "b".into()], rows, LabelScheme::SixClass).unwrap()
    }

    #[test]
    fn six_class_is_identity() {
        let m = matrix(&[(Absence, 3), (ComplexPartial, 2), (SimplePartial, 1)]);
        assert_eq!(apply_scheme(&m, LabelScheme::SixClass), m);
    }

    #[test]
    fn focal_merge_adds_counts() {
        let m = matrix(&[(ComplexPartial, 100), (SimplePartial, 20), (Tonic, 7)]);
        let f = apply_scheme(&m, LabelScheme::FiveClassFocal);
        assert_eq!(f.class_counts()[&Focal], 120);
        assert_eq!(f.class_counts()[&Tonic], 7);
        assert_eq!(apply_scheme(&f, LabelScheme::FiveClassFocal), f);
        // row order preserved
        assert!(f.rows().iter().zip(m.rows()).all(|(a, b)| a.values == b.values));
    }

    #[test]
    fn five_class_has_five_labels() {
        let all: Vec<(SeizureType, usize)> = SeizureType::RAW.iter().map(|&t| (t, 4)).collect();
        let f = apply_scheme(&matrix(&all), LabelScheme::FiveClassFocal);
        assert_eq!(f.class_counts().len(), 5);
        assert!(f.require_classes().is_ok());
    }

    #[test]
    fn balance_rounds_to_nearest_factor() {
        let b = balance_upsample(&matrix(&[(Absence, 100), (Tonic, 30)])).unwrap();
        assert_eq!(b.class_counts()[&Absence], 100);
        assert_eq!(b.class_counts()[&Tonic], 90);

        let same = matrix(&[(Absence, 100), (Tonic, 100)]);
        assert_eq!(balance_upsample(&same).unwrap(), same);
        let near = matrix(&[(Absence, 100), (Tonic, 70)]);
        assert_eq!(balance_upsample(&near).unwrap(), near);
        assert_eq!(upsample_factor(5, 2), 3, "2.5 rounds away from zero");
    }

    #[test]
    fn balance_copies_are_identical() {
        let m = matrix(&[(Absence, 60), (Tonic, 9), (Myoclonic, 25)]);
        let b = balance_upsample(&m).unwrap();
        let originals: BTreeSet<[u8; 32]> = m.rows().iter().map(row_hash).collect();
        assert!(b.rows().iter().all(|r| originals.contains(&row_hash(r))));
        for (class, count) in m.class_counts() {
            assert_eq!(b.class_counts()[&class], count * upsample_factor(60, count));
        }
        assert!(matches!(
            balance_upsample(&matrix(&[(Absence, 3)])),
            Err(DatasetError::EmptyClass(1))
        ));
    }

    #[test]
    fn split_report_durations() {
        let train = matrix(&[(Absence, 253), (Tonic, 10)]);
        let test = train.derive(Vec::new());
        let report = split_report(&train, &test).unwrap();
        let absence = report.rows.iter().find(|r| r.label == "Absence").unwrap();
        assert!((absence.train_duration_s() - 455.4).abs() < 1e-9);
        assert_eq!(report.total.train_windows, 263);
        assert_eq!(report.total.test_windows, 0);
        assert!(report.to_text().contains("455.4"));
        assert!(report.to_csv().lines().last().unwrap().starts_with("TOTAL,263,0"));
    }

    #[test]
    fn hash_split_keeps_duplicates_together() {
        let m = balance_upsample(&matrix(&[(Absence, 50), (Tonic, 10)])).unwrap();
        let (a, b) = hash_split(&m, 70);
        assert_eq!(a.len() + b.len(), m.len());
        let ha: BTreeSet<_> = a.rows().iter().map(row_hash).collect();
        assert!(b.rows().iter().all(|r| !ha.contains(&row_hash(r))));
        assert_eq!(hash_split(&m, 70), (a, b));
    }

    #[test]
    fn leakage_detected() {
        let m = matrix(&[(Absence, 10)]);
        assert!(matches!(check_disjoint_sources(&m, &m), Err(DatasetError::Leakage(_))));
        let other = m.derive(vec![FeatureVector { source_id: "fresh".into(), ..m.rows()[0].clone() }]);
        assert!(check_disjoint_sources(&m, &other).is_ok());
    }

    #[test]
    fn csv_round_trip() {
        let m = matrix(&[(Absence, 3), (Tonic, 2)]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        write_matrix(&m, &p).unwrap();
        assert_eq!(read_matrix(&p).unwrap(), m);
    }
}
