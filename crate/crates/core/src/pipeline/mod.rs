//! The three model variants end to end: configuration, training with or
//! without feature selection, evaluation, and the run manifest.

pub mod corpus;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bgwo::{select_features, BgwoConfig, BgwoError, Selection};
use crate::dataset::{apply_scheme, balance_upsample, hash_split, matrix_to_csv, DatasetError, FeatureMatrix, LabelScheme};
use crate::evalreport::{evaluate, EvalError, EvalReport};
use crate::features::{FeatureError, FeatureParams};
use crate::nbayes::{self, NbEnsemble, NbError, ModelFile, TrainedModel, MODEL_FORMAT_VERSION};
use crate::preprocess::{FilterSpec, PreprocessError};
use crate::registry::{Registry, UnknownStrategy};
use crate::signal_io::{SeizureType, SignalIoError, SynthError};

pub const TOOLKIT_VERSION: &str = concat!("pgnbsc ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Unknown(#[from] UnknownStrategy),
    #[error("corpus manifest: {0}")]
    Corpus(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Signal(#[from] SignalIoError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Bgwo(#[from] BgwoError),
    #[error(transparent)]
    Nb(#[from] NbError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl PipelineError {
    /// Errors caused by how the tool was invoked rather than by the data.
    pub fn is_usage(&self) -> bool {
        matches!(self, PipelineError::Config(_) | PipelineError::Unknown(_))
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

/// Declarative run configuration. Every field has a default; `scheme` and
/// `use_bgwo` are implied by `model` and, if given, must agree with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// `model1` (multiclass, all features), `model2` (six one-vs-all with
    /// selection) or `model3` (five one-vs-all, partial types merged).
    pub model: String,
    pub seed: u64,
    /// Likelihood model for every classifier: `kde` or `gaussian`.
    pub density: String,
    /// Share of the balanced training rows used to fit during selection; the
    /// rest scores the masks.
    pub fitness_split_percent: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<LabelScheme>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub use_bgwo: Option<bool>,
    pub bgwo: BgwoConfig,
    pub features: FeatureParams,
    pub filter: FilterSpec,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            model: "model3".into(),
            seed: 42,
            density: "kde".into(),
            fitness_split_percent: 70,
            scheme: None,
            use_bgwo: None,
            bgwo: BgwoConfig::default(),
            features: FeatureParams::default(),
            filter: FilterSpec::default(),
        }
    }
}

impl ModelConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn strategy(&self) -> Result<&'static dyn ModelStrategy, PipelineError> {
        Ok(models().lookup(&self.model)?)
    }

    /// Checks every section and fills in `scheme` and `use_bgwo`.
    pub fn resolved(&self) -> Result<Self, PipelineError> {
        let strategy = self.strategy()?;
        let config = |m: String| PipelineError::Config(m);
        if self.scheme.is_some_and(|s| s != strategy.scheme()) {
            return Err(config(format!("{} requires scheme {:?}", self.model, strategy.scheme())));
        }
        if self.use_bgwo.is_some_and(|b| b != strategy.uses_bgwo()) {
            return Err(config(format!("{} requires use_bgwo = {}", self.model, strategy.uses_bgwo())));
        }
        if !(1..100).contains(&self.fitness_split_percent) {
            return Err(config("fitness_split_percent must lie in 1..=99".into()));
        }
        nbayes::densities().lookup(&self.density)?;
        self.bgwo.validate().map_err(|e| config(e.to_string()))?;
        self.features.validate().map_err(|e| config(e.to_string()))?;
        self.filter.validate().map_err(|e| config(e.to_string()))?;
        Ok(Self {
            scheme: Some(strategy.scheme()),
            use_bgwo: Some(strategy.uses_bgwo()),
            ..self.clone()
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

/// Accepts `3`, `model3` or `Model3`.
pub fn model_name(arg: &str) -> String {
    let lower = arg.to_ascii_lowercase();
    if lower.chars().all(|c| c.is_ascii_digit()) {
        format!("model{lower}")
    } else {
        lower
    }
}

/// Mask chosen for one class of a one-vs-all model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSelection {
    pub class: SeizureType,
    pub seed: u64,
    pub selected: Vec<String>,
    pub fitness: f64,
    pub iterations: usize,
    pub stopped_early: bool,
    pub trace: Vec<f64>,
}

impl ClassSelection {
    pub fn new(class: SeizureType, seed: u64, names: &[String], s: &Selection) -> Self {
        Self {
            class,
            seed,
            selected: names.iter().zip(&s.mask).filter(|(_, &m)| m).map(|(n, _)| n.clone()).collect(),
            fitness: s.fitness,
            iterations: s.iterations,
            stopped_early: s.stopped_early,
            trace: s.trace.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fitted {
    pub model: TrainedModel,
    pub selections: Vec<ClassSelection>,
}

/// A model variant: its label scheme and how it turns a balanced training
/// matrix into a classifier.
pub trait ModelStrategy: Send + Sync {
    fn scheme(&self) -> LabelScheme;
    fn uses_bgwo(&self) -> bool;
    fn describe(&self) -> &'static str;
    fn fit(&self, balanced: &FeatureMatrix, cfg: &ModelConfig) -> Result<Fitted, PipelineError>;
}

/// One multiclass classifier on every feature.
pub struct Multiclass;

impl ModelStrategy for Multiclass {
    fn scheme(&self) -> LabelScheme {
        LabelScheme::SixClass
    }

    fn uses_bgwo(&self) -> bool {
        false
    }

    fn describe(&self) -> &'static str {
        "single multiclass classifier on all features"
    }

    fn fit(&self, balanced: &FeatureMatrix, cfg: &ModelConfig) -> Result<Fitted, PipelineError> {
        let mask = vec![true; balanced.width()];
        let classifier = nbayes::train(balanced, &mask, &self.scheme().classes(), &cfg.density)?;
        Ok(Fitted {
            model: TrainedModel::Single { classifier },
            selections: Vec::new(),
        })
    }
}

/// One classifier per class, each on its own selected features.
pub struct OneVsAll(pub LabelScheme);

/// Selects a mask for `class` and trains its one-vs-rest member. The seed is
/// the base seed plus the class index.
pub fn fit_member(
    balanced: &FeatureMatrix,
    class: SeizureType,
    index: usize,
    cfg: &ModelConfig,
) -> Result<(nbayes::NbClassifier, ClassSelection), PipelineError> {
    let seed = cfg.seed.wrapping_add(index as u64);
    let (fit, score) = hash_split(balanced, cfg.fitness_split_percent);
    let s = select_features(&fit, &score, class, &cfg.bgwo, &cfg.density, seed)?;
    let member = nbayes::train_one_vs_rest(balanced, &s.mask, class, &cfg.density)?;
    Ok((member, ClassSelection::new(class, seed, balanced.names(), &s)))
}

impl ModelStrategy for OneVsAll {
    fn scheme(&self) -> LabelScheme {
        self.0
    }

    fn uses_bgwo(&self) -> bool {
        true
    }

    fn describe(&self) -> &'static str {
        match self.0 {
            LabelScheme::SixClass => "six one-vs-all classifiers with per-class feature selection",
            LabelScheme::FiveClassFocal => "five one-vs-all classifiers, partial types merged into focal",
        }
    }

    fn fit(&self, balanced: &FeatureMatrix, cfg: &ModelConfig) -> Result<Fitted, PipelineError> {
        let classes = self.0.classes();
        let fitted = classes
            .par_iter()
            .enumerate()
            .map(|(i, &c)| fit_member(balanced, c, i, cfg).map(|(m, s)| ((c, m), s)))
            .collect::<Result<Vec<_>, _>>()?;
        let (members, selections) = fitted.into_iter().unzip();
        Ok(Fitted {
            model: TrainedModel::Ensemble { ensemble: NbEnsemble { members } },
            selections,
        })
    }
}

pub fn models() -> &'static Registry<dyn ModelStrategy> {
    static REGISTRY: OnceLock<Registry<dyn ModelStrategy>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut r: Registry<dyn ModelStrategy> = Registry::new("model");
        r.register("model1", Box::new(Multiclass))
            .register("model2", Box::new(OneVsAll(LabelScheme::SixClass)))
            .register("model3", Box::new(OneVsAll(LabelScheme::FiveClassFocal)));
        r
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashedItem {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit: String,
    pub config: ModelConfig,
    pub inputs: Vec<HashedItem>,
    pub outputs: Vec<HashedItem>,
    pub timings: Vec<StageTiming>,
    pub micro_accuracy: f64,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialises")
    }

    /// Copy with timings cleared, for comparing runs.
    pub fn without_timings(&self) -> Self {
        Self { timings: Vec::new(), ..self.clone() }
    }

    pub(crate) fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(StageTiming {
            stage: stage.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

#[derive(Debug, Clone)]
pub struct ModelRun {
    pub model: ModelFile,
    pub selections: Vec<ClassSelection>,
    pub report: EvalReport,
    pub manifest: RunManifest,
    /// Training rows after scheme and balancing.
    pub balanced: FeatureMatrix,
}

/// Scheme, balance, train per the configured variant.
pub fn train_model(cfg: &ModelConfig, train: &FeatureMatrix) -> Result<(ModelFile, Vec<ClassSelection>, FeatureMatrix), PipelineError> {
    let cfg = cfg.resolved()?;
    let strategy = cfg.strategy()?;
    let train = apply_scheme(train, strategy.scheme());
    train.require_classes()?;
    let balanced = balance_upsample(&train)?;
    let fitted = strategy.fit(&balanced, &cfg)?;
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        feature_names: train.names().to_vec(),
        model: fitted.model,
    };
    Ok((file, fitted.selections, balanced))
}

/// Scores `model` on `test` (raw or already-schemed labels).
pub fn evaluate_model(model: &ModelFile, test: &FeatureMatrix, title: &str) -> Result<EvalReport, PipelineError> {
    if model.feature_names != test.names() {
        return Err(DatasetError::RegistryMismatch.into());
    }
    let classes = model.model.classes();
    let scheme = if classes.contains(&SeizureType::Focal) {
        LabelScheme::FiveClassFocal
    } else {
        LabelScheme::SixClass
    };
    let test = apply_scheme(test, scheme);
    let truths = test.labels();
    let preds = test
        .rows()
        .par_iter()
        .map(|r| model.model.predict_row(&r.values))
        .collect::<Result<Vec<_>, NbError>>()?;
    Ok(evaluate(title, &classes, &truths, &preds)?)
}

/// Train on `train`, evaluate on `test`, and record what was done.
pub fn run_model(cfg: &ModelConfig, train: &FeatureMatrix, test: &FeatureMatrix) -> Result<ModelRun, PipelineError> {
    let cfg = cfg.resolved()?;
    if !train.same_registry(test) {
        return Err(DatasetError::RegistryMismatch.into());
    }
    crate::dataset::check_disjoint_sources(train, test)?;
    let mut manifest = RunManifest {
        toolkit: TOOLKIT_VERSION.into(),
        config: cfg.clone(),
        inputs: vec![
            HashedItem { name: "train_features".into(), sha256: sha256_hex(matrix_to_csv(train).as_bytes()) },
            HashedItem { name: "test_features".into(), sha256: sha256_hex(matrix_to_csv(test).as_bytes()) },
        ],
        outputs: Vec::new(),
        timings: Vec::new(),
        micro_accuracy: 0.0,
    };
    let (model, selections, balanced) = manifest.time("train", || train_model(&cfg, train))?;
    let title = format!("{} seed {}: {}", cfg.model, cfg.seed, cfg.strategy()?.describe());
    let report = manifest.time("evaluate", || evaluate_model(&model, test, &title))?;
    manifest.micro_accuracy = report.micro_accuracy;
    Ok(ModelRun { model, selections, report, manifest, balanced })
}

pub fn selections_json(selections: &[ClassSelection]) -> String {
    serde_json::to_string_pretty(selections).expect("selections serialise")
}

/// Writes model, masks and report files under `dir`, listing each with its
/// hash in the manifest, then the manifest itself.
pub fn write_run(run: &mut ModelRun, dir: &Path, extra: &[(&str, String)]) -> Result<PathBuf, PipelineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut files: Vec<(String, Vec<u8>)> = extra.iter().map(|(n, body)| (n.to_string(), body.clone().into_bytes())).collect();
    files.push(("model.json".into(), nbayes::model_to_json(&run.model).into_bytes()));
    if !run.selections.is_empty() {
        files.push(("masks.json".into(), selections_json(&run.selections).into_bytes()));
    }
    for (name, body) in &files {
        let p = dir.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(&p, body).map_err(io_err(&p))?;
    }
    let report_dir = dir.join("report");
    run.report.render(&report_dir)?;
    let mut outputs: Vec<HashedItem> = files
        .iter()
        .map(|(n, b)| HashedItem { name: n.clone(), sha256: sha256_hex(b) })
        .collect();
    for name in ["heatmap.csv", "heatmap.svg", "metrics.csv", "summary.txt"] {
        let p = report_dir.join(name);
        let bytes = fs::read(&p).map_err(io_err(&p))?;
        outputs.push(HashedItem { name: format!("report/{name}"), sha256: sha256_hex(&bytes) });
    }
    run.manifest.outputs = outputs;
    let path = dir.join("manifest.json");
    fs::write(&path, run.manifest.to_json()).map_err(io_err(&path))?;
    Ok(path)
}
