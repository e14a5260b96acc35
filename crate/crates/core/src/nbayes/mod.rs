//! Naive Bayes with kernel-density likelihoods and uniform priors, as a
//! single multiclass model or a one-vs-all ensemble.

mod density;

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::FeatureMatrix;
use crate::signal_io::{SeizureType, SignalIoError};

pub use density::{densities, silverman_bandwidth, ColumnDensity, DensityStrategy, DENSITY_FLOOR};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NbError {
    #[error("class {0} has no training rows")]
    EmptyClass(ClassLabel),
    #[error("feature mask selects no features")]
    EmptyMask,
    #[error("expected {expected} values, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("{0}")]
    UnknownDensity(#[from] crate::registry::UnknownStrategy),
    #[error("model file: {0}")]
    ModelFile(String),
    #[error(transparent)]
    Signal(#[from] SignalIoError),
}

/// A class as seen by one classifier: a seizure type or "everything else".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ClassLabel {
    Seizure(SeizureType),
    Rest,
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassLabel::Seizure(t) => f.write_str(t.code()),
            ClassLabel::Rest => f.write_str("rest"),
        }
    }
}

impl From<ClassLabel> for String {
    fn from(c: ClassLabel) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for ClassLabel {
    type Error = SignalIoError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        if s == "rest" {
            Ok(ClassLabel::Rest)
        } else {
            s.parse().map(ClassLabel::Seizure)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbClassifier {
    density: String,
    classes: Vec<ClassLabel>,
    mask: Vec<bool>,
    /// `models[class][k]` for the k-th selected feature.
    models: Vec<Vec<ColumnDensity>>,
}

fn selected(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
}

impl NbClassifier {
    /// Fit on full-width `rows` with `targets[i]` indexing into `classes`.
    pub fn fit(
        rows: &[&[f64]],
        targets: &[usize],
        classes: Vec<ClassLabel>,
        mask: &[bool],
        density: &str,
    ) -> Result<Self, NbError> {
        let strategy = densities().lookup(density)?;
        let columns = selected(mask);
        if columns.is_empty() {
            return Err(NbError::EmptyMask);
        }
        if let Some(r) = rows.iter().find(|r| r.len() != mask.len()) {
            return Err(NbError::WidthMismatch { expected: mask.len(), got: r.len() });
        }
        let mut models = Vec::with_capacity(classes.len());
        for (ci, class) in classes.iter().enumerate() {
            let members: Vec<&[f64]> = rows
                .iter()
                .zip(targets)
                .filter(|(_, &t)| t == ci)
                .map(|(r, _)| *r)
                .collect();
            if members.is_empty() {
                return Err(NbError::EmptyClass(*class));
            }
            models.push(
                columns
                    .iter()
                    .map(|&j| {
                        let values: Vec<f64> = members.iter().map(|r| r[j]).collect();
                        strategy.fit(&values)
                    })
                    .collect(),
            );
        }
        Ok(Self {
            density: density.to_string(),
            classes,
            mask: mask.to_vec(),
            models,
        })
    }

    pub fn classes(&self) -> &[ClassLabel] {
        &self.classes
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn density(&self) -> &str {
        &self.density
    }

    pub fn priors(&self) -> Vec<f64> {
        vec![1.0 / self.classes.len() as f64; self.classes.len()]
    }

    pub fn bandwidth(&self, class: usize, selected_feature: usize) -> f64 {
        self.models[class][selected_feature].bandwidth
    }

    /// Selected columns of a full-width row.
    pub fn project(&self, row: &[f64]) -> Result<Vec<f64>, NbError> {
        if row.len() != self.mask.len() {
            return Err(NbError::WidthMismatch { expected: self.mask.len(), got: row.len() });
        }
        Ok(row.iter().zip(&self.mask).filter(|(_, &m)| m).map(|(v, _)| *v).collect())
    }

    /// Per-class log prior plus summed log likelihoods of the selected values.
    pub fn log_posterior(&self, x: &[f64]) -> Result<Vec<f64>, NbError> {
        let width = self.models[0].len();
        if x.len() != width {
            return Err(NbError::WidthMismatch { expected: width, got: x.len() });
        }
        let strategy = densities().lookup(&self.density)?;
        let log_prior = -(self.classes.len() as f64).ln();
        Ok(self
            .models
            .iter()
            .map(|cols| {
                log_prior
                    + cols
                        .iter()
                        .zip(x)
                        .map(|(m, &v)| strategy.log_density(m, v))
                        .sum::<f64>()
            })
            .collect())
    }

    /// Index of the best class; the first declared class wins ties.
    pub fn predict_index(&self, x: &[f64]) -> Result<usize, NbError> {
        Ok(argmax(&self.log_posterior(x)?))
    }

    pub fn predict(&self, x: &[f64]) -> Result<ClassLabel, NbError> {
        Ok(self.classes[self.predict_index(x)?])
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<ClassLabel, NbError> {
        self.predict(&self.project(row)?)
    }
}

/// First index of the maximum.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// Multiclass model over `classes` (declaration order is tie-break order).
pub fn train(m: &FeatureMatrix, mask: &[bool], classes: &[SeizureType], density: &str) -> Result<NbClassifier, NbError> {
    if mask.len() != m.width() {
        return Err(NbError::WidthMismatch { expected: m.width(), got: mask.len() });
    }
    let mut rows = Vec::with_capacity(m.len());
    let mut targets = Vec::with_capacity(m.len());
    for r in m.rows() {
        if let Some(t) = classes.iter().position(|c| *c == r.label) {
            rows.push(r.values.as_slice());
            targets.push(t);
        }
    }
    let labels = classes.iter().map(|&c| ClassLabel::Seizure(c)).collect();
    NbClassifier::fit(&rows, &targets, labels, mask, density)
}

/// Two-class `positive` vs rest model.
pub fn train_one_vs_rest(
    m: &FeatureMatrix,
    mask: &[bool],
    positive: SeizureType,
    density: &str,
) -> Result<NbClassifier, NbError> {
    if mask.len() != m.width() {
        return Err(NbError::WidthMismatch { expected: m.width(), got: mask.len() });
    }
    let rows: Vec<&[f64]> = m.rows().iter().map(|r| r.values.as_slice()).collect();
    let targets: Vec<usize> = m.rows().iter().map(|r| usize::from(r.label != positive)).collect();
    NbClassifier::fit(
        &rows,
        &targets,
        vec![ClassLabel::Seizure(positive), ClassLabel::Rest],
        mask,
        density,
    )
}

/// One-vs-all classifiers, one per effective label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbEnsemble {
    pub members: Vec<(SeizureType, NbClassifier)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vote {
    pub class: SeizureType,
    pub positive: bool,
    /// log P(class | x) - log P(rest | x) under the member's own mask.
    pub log_odds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleDecision {
    pub votes: Vec<Vote>,
    pub label: SeizureType,
    /// No member voted positive; the label is the highest log-odds member.
    pub forced: bool,
}

impl NbEnsemble {
    pub fn classes(&self) -> Vec<SeizureType> {
        self.members.iter().map(|(c, _)| *c).collect()
    }

    pub fn width(&self) -> usize {
        self.members.first().map(|(_, m)| m.mask().len()).unwrap_or(0)
    }
}

/// Each member votes with its own mask; among positive voters the largest
/// log-odds wins, otherwise the largest log-odds overall.
pub fn predict_ensemble(e: &NbEnsemble, row: &[f64]) -> Result<EnsembleDecision, NbError> {
    let votes = e
        .members
        .iter()
        .map(|(class, member)| {
            let scores = member.log_posterior(&member.project(row)?)?;
            Ok(Vote {
                class: *class,
                positive: argmax(&scores) == 0,
                log_odds: scores[0] - scores[1],
            })
        })
        .collect::<Result<Vec<_>, NbError>>()?;
    let pick = |filter: &dyn Fn(&Vote) -> bool| {
        votes
            .iter()
            .filter(|v| filter(v))
            .fold(None::<&Vote>, |best, v| match best {
                Some(b) if b.log_odds >= v.log_odds => Some(b),
                _ => Some(v),
            })
            .map(|v| v.class)
    };
    let (label, forced) = match pick(&|v: &Vote| v.positive) {
        Some(l) => (l, false),
        None => (pick(&|_: &Vote| true).expect("ensemble has members"), true),
    };
    Ok(EnsembleDecision { votes, label, forced })
}

/// Cached per-row log likelihoods for fixed train/eval data, so a feature
/// subset can be scored without refitting. Exact: the per-column models do
/// not depend on which other columns are selected.
pub struct DensityTable {
    n_classes: usize,
    n_rows: usize,
    /// `table[(feature * n_classes + class) * n_rows + row]`
    table: Vec<f64>,
}

impl DensityTable {
    pub fn build(
        train_rows: &[&[f64]],
        targets: &[usize],
        n_classes: usize,
        eval_rows: &[&[f64]],
        density: &str,
    ) -> Result<Self, NbError> {
        use rayon::prelude::*;
        let strategy = densities().lookup(density)?;
        let width = train_rows.first().map(|r| r.len()).unwrap_or(0);
        for c in 0..n_classes {
            if !targets.contains(&c) {
                return Err(NbError::ModelFile(format!("class index {c} has no training rows")));
            }
        }
        let per_feature: Vec<Vec<f64>> = (0..width)
            .into_par_iter()
            .map(|j| {
                let mut out = Vec::with_capacity(n_classes * eval_rows.len());
                for c in 0..n_classes {
                    let values: Vec<f64> = train_rows
                        .iter()
                        .zip(targets)
                        .filter(|(_, &t)| t == c)
                        .map(|(r, _)| r[j])
                        .collect();
                    let model = strategy.fit(&values);
                    out.extend(eval_rows.iter().map(|r| strategy.log_density(&model, r[j])));
                }
                out
            })
            .collect();
        Ok(Self {
            n_classes,
            n_rows: eval_rows.len(),
            table: per_feature.concat(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// Predicted class index per eval row under `mask`, uniform priors.
    pub fn predict(&self, mask: &[bool]) -> Vec<usize> {
        let log_prior = -(self.n_classes as f64).ln();
        let mut scores = vec![0.0; self.n_classes * self.n_rows];
        for j in selected(mask) {
            let block = &self.table[j * self.n_classes * self.n_rows..(j + 1) * self.n_classes * self.n_rows];
            for (s, v) in scores.iter_mut().zip(block) {
                *s += v;
            }
        }
        (0..self.n_rows)
            .map(|r| {
                // same association as `log_posterior`: prior + (sum of terms)
                let row_scores: Vec<f64> = (0..self.n_classes)
                    .map(|c| log_prior + scores[c * self.n_rows + r])
                    .collect();
                argmax(&row_scores)
            })
            .collect()
    }
}

/// Serialised trained model: a single multiclass classifier or an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Single { classifier: NbClassifier },
    Ensemble { ensemble: NbEnsemble },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub model: TrainedModel,
}

impl TrainedModel {
    pub fn classes(&self) -> Vec<SeizureType> {
        match self {
            TrainedModel::Single { classifier } => classifier
                .classes()
                .iter()
                .filter_map(|c| match c {
                    ClassLabel::Seizure(t) => Some(*t),
                    ClassLabel::Rest => None,
                })
                .collect(),
            TrainedModel::Ensemble { ensemble } => ensemble.classes(),
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<SeizureType, NbError> {
        match self {
            TrainedModel::Single { classifier } => match classifier.predict_row(row)? {
                ClassLabel::Seizure(t) => Ok(t),
                ClassLabel::Rest => Err(NbError::ModelFile("multiclass model predicted `rest`".into())),
            },
            TrainedModel::Ensemble { ensemble } => Ok(predict_ensemble(ensemble, row)?.label),
        }
    }
}

pub fn model_to_json(file: &ModelFile) -> String {
    serde_json::to_string_pretty(file).expect("model serialises")
}

pub fn save_model(file: &ModelFile, path: &Path) -> Result<(), NbError> {
    fs::write(path, model_to_json(file)).map_err(|e| SignalIoError::io(path, e).into())
}

pub fn load_model(path: &Path) -> Result<ModelFile, NbError> {
    let text = fs::read_to_string(path).map_err(|e| SignalIoError::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| NbError::ModelFile(format!("{}: {e}", path.display())))?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(NbError::ModelFile(format!(
            "unsupported model format version {}",
            file.format_version
        )));
    }
    Ok(file)
}
