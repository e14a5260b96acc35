//! Thirteen per-channel features, 19 x 13 = 247 values per window.
//!
//! Each feature family is a [`FeatureFamily`] registered by name in a
//! [`FeatureSet`]; the registration order fixes the column layout.

mod fractal;
mod spectral;
mod stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::EpochWindow;
use crate::registry::Registry;
use crate::signal_io::SeizureType;

pub use fractal::{higuchi_fd, katz_fd};
pub use spectral::spectral_entropy_stats;
pub use stats::{energy, hjorth, kurtosis, nonlinear_energy, shannon_entropy, skewness, std_dev};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("need at least {need} samples, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("zero variance")]
    ZeroVariance,
    #[error("curve has no amplitude variation")]
    DegeneratePath,
    #[error("signal has no power outside DC")]
    DegenerateSpectrum,
    #[error("bad feature parameters: {0}")]
    BadParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureParams {
    pub entropy_bins: usize,
    pub higuchi_kmax: usize,
    pub spectral_subwin: usize,
    pub spectral_hop: usize,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            entropy_bins: 64,
            higuchi_kmax: 8,
            spectral_subwin: 128,
            spectral_hop: 64,
        }
    }
}

impl FeatureParams {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.entropy_bins < 2 {
            return Err(FeatureError::BadParams("entropy_bins must be at least 2".into()));
        }
        if self.higuchi_kmax < 2 {
            return Err(FeatureError::BadParams("higuchi_kmax must be at least 2".into()));
        }
        if self.spectral_subwin < 4 || self.spectral_subwin > crate::preprocess::WINDOW_SAMPLES {
            return Err(FeatureError::BadParams("spectral_subwin must lie in 4..=450".into()));
        }
        if self.spectral_hop == 0 {
            return Err(FeatureError::BadParams("spectral_hop must be positive".into()));
        }
        Ok(())
    }
}

/// A group of per-channel feature columns computed together.
pub trait FeatureFamily: Send + Sync {
    fn columns(&self) -> &'static [&'static str];
    /// Values substituted when `compute` fails on a degenerate channel.
    fn sentinels(&self) -> &'static [f64];
    fn compute(&self, x: &[f64], params: &FeatureParams) -> Result<Vec<f64>, FeatureError>;
}

macro_rules! family {
    ($ty:ident, [$($col:literal),+], [$($sentinel:literal),+], |$x:ident, $p:ident| $body:expr) => {
        struct $ty;
        impl FeatureFamily for $ty {
            fn columns(&self) -> &'static [&'static str] {
                &[$($col),+]
            }
            fn sentinels(&self) -> &'static [f64] {
                &[$($sentinel),+]
            }
            #[allow(unused_variables)]
            fn compute(&self, $x: &[f64], $p: &FeatureParams) -> Result<Vec<f64>, FeatureError> {
                $body
            }
        }
    };
}

family!(StdDev, ["std"], [0.0], |x, p| Ok(vec![std_dev(x)?]));
family!(Shannon, ["shannon_entropy"], [0.0], |x, p| Ok(vec![shannon_entropy(x, p.entropy_bins)?]));
family!(Kurtosis, ["kurtosis"], [0.0], |x, p| Ok(vec![kurtosis(x)?]));
family!(Hjorth, ["hjorth_mobility", "hjorth_complexity"], [0.0, 0.0], |x, p| {
    let (m, c) = hjorth(x)?;
    Ok(vec![m, c])
});
family!(Skewness, ["skewness"], [0.0], |x, p| Ok(vec![skewness(x)?]));
family!(Energy, ["energy"], [0.0], |x, p| Ok(vec![energy(x)]));
family!(NonlinearEnergy, ["nonlinear_energy"], [0.0], |x, p| Ok(vec![nonlinear_energy(x)?]));
family!(Higuchi, ["higuchi_fd"], [1.0], |x, p| Ok(vec![higuchi_fd(x, p.higuchi_kmax)?]));
family!(Katz, ["katz_fd"], [1.0], |x, p| Ok(vec![katz_fd(x)?]));
family!(
    SpectralEntropy,
    ["spectral_entropy_mean", "spectral_entropy_max", "spectral_entropy_min"],
    [0.0, 0.0, 0.0],
    |x, p| {
        let (mean, max, min) = spectral_entropy_stats(x, p)?;
        Ok(vec![mean, max, min])
    }
);

/// Ordered registry of feature families.
pub struct FeatureSet {
    families: Registry<dyn FeatureFamily>,
}

impl FeatureSet {
    /// The standard 13-column set.
    pub fn standard() -> Self {
        let mut families: Registry<dyn FeatureFamily> = Registry::new("feature family");
        families
            .register("std", Box::new(StdDev))
            .register("shannon_entropy", Box::new(Shannon))
            .register("kurtosis", Box::new(Kurtosis))
            .register("hjorth", Box::new(Hjorth))
            .register("skewness", Box::new(Skewness))
            .register("energy", Box::new(Energy))
            .register("nonlinear_energy", Box::new(NonlinearEnergy))
            .register("higuchi_fd", Box::new(Higuchi))
            .register("katz_fd", Box::new(Katz))
            .register("spectral_entropy", Box::new(SpectralEntropy));
        Self { families }
    }

    pub fn family_names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.families.names()
    }

    pub fn columns(&self) -> Vec<&'static str> {
        self.families.iter().flat_map(|(_, f)| f.columns().iter().copied()).collect()
    }

    pub fn columns_per_channel(&self) -> usize {
        self.families.iter().map(|(_, f)| f.columns().len()).sum()
    }

    /// Registry names `<channel>.<feature>`, channel-major.
    pub fn names(&self, channels: &[String]) -> Vec<String> {
        let cols = self.columns();
        channels
            .iter()
            .flat_map(|ch| cols.iter().map(move |c| format!("{ch}.{c}")))
            .collect()
    }

    /// Feature values for one channel. Families that fail or produce a
    /// non-finite value contribute their sentinels and are named in the
    /// returned flag list.
    pub fn channel_features(&self, x: &[f64], params: &FeatureParams) -> (Vec<f64>, Vec<&'static str>) {
        let mut values = Vec::with_capacity(self.columns_per_channel());
        let mut flagged = Vec::new();
        for (name, family) in self.families.iter() {
            match family.compute(x, params) {
                Ok(v) if v.iter().all(|x| x.is_finite()) => values.extend(v),
                _ => {
                    values.extend_from_slice(family.sentinels());
                    flagged.push(name);
                }
            }
        }
        (values, flagged)
    }
}

/// Flagged (channel, feature family) pairs that fell back to sentinels.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DegenerateFlags(pub Vec<(String, String)>);

impl DegenerateFlags {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: SeizureType,
    pub source_id: String,
    pub window_index: usize,
    pub flags: DegenerateFlags,
}

/// All features for every channel of a window, in registry order.
pub fn extract_all(w: &EpochWindow, params: &FeatureParams) -> FeatureVector {
    extract_with(&FeatureSet::standard(), w, params)
}

pub fn extract_with(set: &FeatureSet, w: &EpochWindow, params: &FeatureParams) -> FeatureVector {
    let mut values = Vec::with_capacity(w.samples.len() * set.columns_per_channel());
    let mut flags = Vec::new();
    for (ch, x) in w.channels.iter().zip(&w.samples) {
        let (v, flagged) = set.channel_features(x, params);
        values.extend(v);
        flags.extend(flagged.into_iter().map(|f| (ch.clone(), f.to_string())));
    }
    FeatureVector {
        values,
        label: w.label,
        source_id: w.source_id.clone(),
        window_index: w.window_index,
        flags: DegenerateFlags(flags),
    }
}

/// Parallel extraction over many windows, preserving order.
pub fn extract_many(windows: &[EpochWindow], params: &FeatureParams) -> Vec<FeatureVector> {
    use rayon::prelude::*;
    let set = FeatureSet::standard();
    windows.par_iter().map(|w| extract_with(&set, w, params)).collect()
}
