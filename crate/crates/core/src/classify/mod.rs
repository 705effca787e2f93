//! Troll classifiers: boosted trees and an SVM, plus feature ranking and
//! recursive feature elimination.

mod boost;
mod rfe;
mod svm;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{EvalError, Predictor, Trainer};
use crate::features::{labeled_matrix, FeatureError, FeatureVector, FEATURE_NAMES};
use crate::util::sigmoid;

pub use boost::{train_boosted, BoostConfig, BoostedEnsemble, Node, Tree};
pub use rfe::{best_step, recursive_feature_elimination, write_rfe_csv, RfeStep};
pub use svm::{train_svm, Kernel, SvmConfig, SvmModel};

const MODEL_FORMAT: &str = "trollwatch-troll-model";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("training data is empty")]
    Empty,
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("rows have inconsistent lengths or contain non-finite values")]
    Shape,
    #[error("features and labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("SMO did not converge (KKT gap {gap:.3e}); best-so-far model attached")]
    NotConverged { gap: f64, model: Box<SvmModel> },
    #[error("input has {len} features but the model needs feature F{index}")]
    MissingFeature { index: usize, len: usize },
    #[error("invalid model file: {0}")]
    Format(String),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_training_data(x: &[Vec<f64>], y: &[bool]) -> Result<(), ClassifyError> {
    if x.len() != y.len() {
        return Err(ClassifyError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(ClassifyError::Empty);
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d || r.iter().any(|v| !v.is_finite())) {
        return Err(ClassifyError::Shape);
    }
    if !(y.iter().any(|&t| t) && y.iter().any(|&t| !t)) {
        return Err(ClassifyError::SingleClass);
    }
    Ok(())
}

/// Features ordered by split count, highest first; ties go to the lower
/// index. Features never split on are included with weight 0.
pub fn rank_features(model: &BoostedEnsemble) -> Vec<(usize, u32)> {
    let mut ranked: Vec<(usize, u32)> = model.importance().iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "params")]
pub enum ClassifierConfig {
    Boosted(BoostConfig),
    Svm(SvmConfig),
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig::Boosted(BoostConfig::default())
    }
}

impl ClassifierConfig {
    pub fn seed(&self) -> u64 {
        match self {
            ClassifierConfig::Boosted(c) => c.seed,
            ClassifierConfig::Svm(c) => c.seed,
        }
    }

    pub fn train(&self, x: &[Vec<f64>], y: &[bool]) -> Result<Classifier, ClassifyError> {
        match self {
            ClassifierConfig::Boosted(c) => train_boosted(x, y, c).map(Classifier::Boosted),
            ClassifierConfig::Svm(c) => match train_svm(x, y, c) {
                Ok(m) => Ok(Classifier::Svm(m)),
                Err(ClassifyError::NotConverged { gap, model }) => {
                    log::warn!("SVM stopped at KKT gap {gap:.3e}; using the best-so-far model");
                    Ok(Classifier::Svm(*model))
                }
                Err(e) => Err(e),
            },
        }
    }
}

impl Trainer for ClassifierConfig {
    fn name(&self) -> String {
        match self {
            ClassifierConfig::Boosted(_) => "boosted".into(),
            ClassifierConfig::Svm(c) => match c.kernel {
                Kernel::Linear => "svm-linear".into(),
                Kernel::Rbf { .. } => "svm-rbf".into(),
            },
        }
    }

    fn fit(&self, x: &[Vec<f64>], y: &[bool]) -> Result<Box<dyn Predictor>, String> {
        self.train(x, y)
            .map(|c| Box::new(c) as Box<dyn Predictor>)
            .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "model")]
pub enum Classifier {
    Boosted(BoostedEnsemble),
    Svm(SvmModel),
}

impl Classifier {
    /// Raw margin: log-odds for the ensemble, decision value for the SVM.
    pub fn margin(&self, x: &[f64]) -> f64 {
        match self {
            Classifier::Boosted(m) => m.margin(x),
            Classifier::Svm(m) => m.margin(x),
        }
    }
}

impl Predictor for Classifier {
    fn predict(&self, x: &[f64]) -> bool {
        match self {
            Classifier::Boosted(m) => m.probability(x) >= 0.5,
            Classifier::Svm(m) => m.margin(x) > 0.0,
        }
    }
}

impl Predictor for BoostedEnsemble {
    fn predict(&self, x: &[f64]) -> bool {
        self.probability(x) >= 0.5
    }
}

impl Predictor for SvmModel {
    fn predict(&self, x: &[f64]) -> bool {
        self.margin(x) > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub config: ClassifierConfig,
    pub training_samples: usize,
    pub feature_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrollModel {
    pub classifier: Classifier,
    /// Indices into the full F0..F18 vector, in classifier input order.
    pub active_features: Vec<usize>,
    /// Probability cut-off for the boosted model. The SVM flags `margin > 0`.
    pub threshold: f64,
    pub metadata: ModelMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prediction {
    /// Logistic of the margin. For the SVM this is a monotone squashing of
    /// the decision value, not a calibrated probability.
    pub probability: f64,
    pub margin: f64,
    pub troll: bool,
}

/// Flag rule for probabilistic models.
pub fn probability_flag(probability: f64, threshold: f64) -> bool {
    probability >= threshold
}

/// Flag rule for margin models: strictly positive.
pub fn margin_flag(margin: f64) -> bool {
    margin > 0.0
}

pub fn train_troll_model(
    vectors: &[FeatureVector],
    active_features: &[usize],
    config: &ClassifierConfig,
) -> Result<TrollModel, ClassifyError> {
    if active_features.is_empty() {
        return Err(ClassifyError::Config("no active features".into()));
    }
    if let Some(&bad) = active_features.iter().find(|&&f| f >= FEATURE_NAMES.len()) {
        return Err(ClassifyError::Config(format!("unknown feature F{bad}")));
    }
    let (x, y) = labeled_matrix(vectors, active_features)?;
    let classifier = config.train(&x, &y)?;
    Ok(TrollModel {
        classifier,
        active_features: active_features.to_vec(),
        threshold: 0.5,
        metadata: ModelMetadata {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            seed: config.seed(),
            config: config.clone(),
            training_samples: x.len(),
            feature_names: active_features
                .iter()
                .map(|&f| FEATURE_NAMES[f].to_string())
                .collect(),
        },
    })
}

impl TrollModel {
    /// Score a full feature vector (`values[i]` is feature Fi).
    pub fn predict(&self, values: &[f64]) -> Result<Prediction, ClassifyError> {
        let x: Vec<f64> = self
            .active_features
            .iter()
            .map(|&f| {
                values.get(f).copied().ok_or(ClassifyError::MissingFeature {
                    index: f,
                    len: values.len(),
                })
            })
            .collect::<Result<_, _>>()?;
        let margin = self.classifier.margin(&x);
        let probability = sigmoid(margin);
        let troll = match self.classifier {
            Classifier::Boosted(_) => probability_flag(probability, self.threshold),
            Classifier::Svm(_) => margin_flag(margin),
        };
        Ok(Prediction {
            probability,
            margin,
            troll,
        })
    }

    /// Split-count ranking in terms of F-indices; empty for the SVM.
    pub fn feature_ranking(&self) -> Vec<(usize, u32)> {
        match &self.classifier {
            Classifier::Boosted(m) => rank_features(m)
                .into_iter()
                .map(|(local, w)| (self.active_features[local], w))
                .collect(),
            Classifier::Svm(_) => Vec::new(),
        }
    }

    pub fn version_string(&self) -> String {
        format!("{}/v{}", self.metadata.format, self.metadata.version)
    }

    pub fn save_json<W: Write>(&self, w: W) -> Result<(), ClassifyError> {
        serde_json::to_writer(w, self).map_err(|e| ClassifyError::Format(e.to_string()))
    }

    pub fn load_json(bytes: &[u8]) -> Result<Self, ClassifyError> {
        let m: Self =
            serde_json::from_slice(bytes).map_err(|e| ClassifyError::Format(e.to_string()))?;
        if m.metadata.format != MODEL_FORMAT || m.metadata.version != MODEL_VERSION {
            return Err(ClassifyError::Format(format!(
                "expected {MODEL_FORMAT} v{MODEL_VERSION}, found {} v{}",
                m.metadata.format, m.metadata.version
            )));
        }
        if m.active_features.iter().any(|&f| f >= FEATURE_NAMES.len()) {
            return Err(ClassifyError::Format("active feature out of range".into()));
        }
        Ok(m)
    }

    pub fn save_to_path(&self, path: impl AsRef<Path>) -> Result<(), ClassifyError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.save_json(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_path(path: impl AsRef<Path>) -> Result<Self, ClassifyError> {
        Self::load_json(&std::fs::read(path)?)
    }
}
