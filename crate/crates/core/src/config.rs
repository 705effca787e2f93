//! Key-value run configuration shared by every CLI subcommand.
//!
//! ```text
//! # comment
//! seed = 7
//! classifier = svm-rbf
//! features = 9,10,11
//! troll.model = models/troll.json
//! ```
//!
//! Unknown keys are errors so typos do not silently fall back to defaults.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::classify::{BoostConfig, ClassifierConfig, Kernel, SvmConfig};
use crate::embedding::EmbeddingConfig;
use crate::features::FEATURE_COUNT;

pub const DEFAULT_BIND: &str = "127.0.0.1:8650";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("`{key}`: cannot parse `{value}`")]
    Value { key: String, value: String },
    #[error("`{0}` is not set")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Every file the pipeline reads or writes. Unset paths must come from a
/// command-line flag.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub seg_corpus: Option<PathBuf>,
    pub seg_model: Option<PathBuf>,
    pub w2v_corpus: Option<PathBuf>,
    pub w2v_model: Option<PathBuf>,
    pub sentiment_corpus: Option<PathBuf>,
    pub sentiment_model: Option<PathBuf>,
    pub emotion_corpus: Option<PathBuf>,
    pub emotion_model: Option<PathBuf>,
    pub emotion_table: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub comments: Vec<PathBuf>,
    pub originals: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub troll_model: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub rfe_curve: Option<PathBuf>,
    pub histogram: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub embedding: EmbeddingConfig,
    pub smoothing: f64,
    /// `boosted`, `svm-linear` or `svm-rbf`.
    pub classifier: String,
    pub boost: BoostConfig,
    pub svm: SvmConfig,
    pub folds: usize,
    pub features: Vec<usize>,
    pub histogram_width: f64,
    pub bind: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            paths: Paths::default(),
            embedding: EmbeddingConfig::default(),
            smoothing: 1.0,
            classifier: "boosted".into(),
            boost: BoostConfig::default(),
            svm: SvmConfig::default(),
            folds: 5,
            features: (0..FEATURE_COUNT).collect(),
            histogram_width: 0.05,
            bind: DEFAULT_BIND.into(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Value {
        key: key.into(),
        value: value.into(),
    })
}

fn path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl PipelineConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        config.apply_str(text)?;
        Ok(config)
    }

    /// Apply every `key = value` line of `text` on top of the current values.
    pub fn apply_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(key.trim(), value.trim())?;
        }
        self.validate()
    }

    /// Apply a `key=value` override as given on the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or(ConfigError::Syntax { line: 0 })?;
        self.set(key.trim(), value.trim())?;
        self.validate()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let p = &mut self.paths;
        match key {
            "seed" => self.seed = parse(key, value)?,
            "seg.corpus" => p.seg_corpus = path(value),
            "seg.model" => p.seg_model = path(value),
            "w2v.corpus" => p.w2v_corpus = path(value),
            "w2v.model" => p.w2v_model = path(value),
            "sentiment.corpus" => p.sentiment_corpus = path(value),
            "sentiment.model" => p.sentiment_model = path(value),
            "emotion.corpus" => p.emotion_corpus = path(value),
            "emotion.model" => p.emotion_model = path(value),
            "emotion.table" => p.emotion_table = path(value),
            "stopwords" => p.stopwords = path(value),
            "comments" => {
                p.comments = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(PathBuf::from)
                    .collect()
            }
            "originals" => p.originals = path(value),
            "features.csv" => p.features = path(value),
            "troll.model" => p.troll_model = path(value),
            "report" => p.report = path(value),
            "rfe.curve" => p.rfe_curve = path(value),
            "histogram" => p.histogram = path(value),
            "histogram.width" => self.histogram_width = parse(key, value)?,
            "w2v.dim" => self.embedding.dim = parse(key, value)?,
            "w2v.window" => self.embedding.window = parse(key, value)?,
            "w2v.epochs" => self.embedding.epochs = parse(key, value)?,
            "w2v.negative" => self.embedding.negative = parse(key, value)?,
            "w2v.learning_rate" => self.embedding.learning_rate = parse(key, value)?,
            "w2v.min_count" => self.embedding.min_count = parse(key, value)?,
            "sentiment.smoothing" => self.smoothing = parse(key, value)?,
            "classifier" => self.classifier = value.to_string(),
            "boost.rounds" => self.boost.rounds = parse(key, value)?,
            "boost.max_depth" => self.boost.max_depth = parse(key, value)?,
            "boost.learning_rate" => self.boost.learning_rate = parse(key, value)?,
            "boost.min_child_weight" => self.boost.min_child_weight = parse(key, value)?,
            "boost.lambda" => self.boost.lambda = parse(key, value)?,
            "boost.subsample" => self.boost.subsample = parse(key, value)?,
            "svm.c" => self.svm.c = parse(key, value)?,
            "svm.tolerance" => self.svm.tolerance = parse(key, value)?,
            "svm.max_iterations" => self.svm.max_iterations = parse(key, value)?,
            "svm.gamma" => {
                self.svm.kernel = Kernel::Rbf {
                    gamma: if value == "auto" { None } else { Some(parse(key, value)?) },
                }
            }
            "eval.folds" => self.folds = parse(key, value)?,
            "features" => {
                self.features = value
                    .split(',')
                    .map(|f| parse::<usize>(key, f.trim().trim_start_matches('F')))
                    .collect::<Result<_, _>>()?
            }
            "service.bind" => self.bind = value.to_string(),
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !matches!(self.classifier.as_str(), "boosted" | "svm-linear" | "svm-rbf") {
            return Err(ConfigError::Invalid(format!(
                "classifier must be boosted, svm-linear or svm-rbf, not `{}`",
                self.classifier
            )));
        }
        if self.features.is_empty() || self.features.iter().any(|&f| f >= FEATURE_COUNT) {
            return Err(ConfigError::Invalid(format!(
                "features must be a nonempty list of indices below {FEATURE_COUNT}"
            )));
        }
        if self.folds < 2 {
            return Err(ConfigError::Invalid("eval.folds must be at least 2".into()));
        }
        if self.smoothing.is_nan() || self.smoothing <= 0.0 {
            return Err(ConfigError::Invalid("sentiment.smoothing must be positive".into()));
        }
        Ok(())
    }

    pub fn embedding_config(&self) -> EmbeddingConfig {
        EmbeddingConfig {
            seed: self.seed,
            ..self.embedding.clone()
        }
    }

    pub fn classifier_config(&self) -> ClassifierConfig {
        match self.classifier.as_str() {
            "svm-linear" => ClassifierConfig::Svm(SvmConfig {
                kernel: Kernel::Linear,
                seed: self.seed,
                ..self.svm.clone()
            }),
            "svm-rbf" => ClassifierConfig::Svm(SvmConfig {
                kernel: match self.svm.kernel {
                    Kernel::Linear => Kernel::Rbf { gamma: None },
                    k => k,
                },
                seed: self.seed,
                ..self.svm.clone()
            }),
            _ => ClassifierConfig::Boosted(self.boost_config()),
        }
    }

    pub fn boost_config(&self) -> BoostConfig {
        BoostConfig {
            seed: self.seed,
            ..self.boost.clone()
        }
    }

    /// Render the hyperparameters back as config text (paths excluded).
    pub fn describe(&self) -> String {
        let mut s = String::new();
        let e = &self.embedding;
        let b = &self.boost;
        let features: Vec<String> = self.features.iter().map(usize::to_string).collect();
        let gamma = match self.svm.kernel {
            Kernel::Rbf { gamma: Some(g) } => g.to_string(),
            _ => "auto".into(),
        };
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "w2v.dim = {}\nw2v.window = {}\nw2v.epochs = {}", e.dim, e.window, e.epochs);
        let _ = writeln!(s, "w2v.negative = {}\nw2v.learning_rate = {}", e.negative, e.learning_rate);
        let _ = writeln!(s, "w2v.min_count = {}", e.min_count);
        let _ = writeln!(s, "sentiment.smoothing = {}", self.smoothing);
        let _ = writeln!(s, "classifier = {}", self.classifier);
        let _ = writeln!(s, "boost.rounds = {}\nboost.max_depth = {}", b.rounds, b.max_depth);
        let _ = writeln!(s, "boost.learning_rate = {}\nboost.lambda = {}", b.learning_rate, b.lambda);
        let _ = writeln!(s, "boost.min_child_weight = {}\nboost.subsample = {}", b.min_child_weight, b.subsample);
        let _ = writeln!(s, "svm.c = {}\nsvm.gamma = {gamma}", self.svm.c);
        let _ = writeln!(s, "svm.tolerance = {}\nsvm.max_iterations = {}", self.svm.tolerance, self.svm.max_iterations);
        let _ = writeln!(s, "eval.folds = {}\nfeatures = {}", self.folds, features.join(","));
        let _ = writeln!(s, "histogram.width = {}\nservice.bind = {}", self.histogram_width, self.bind);
        s
    }
}

/// Resolve a path from a flag, falling back to the config value.
pub fn require(
    flag: Option<PathBuf>,
    config: &Option<PathBuf>,
    key: &'static str,
) -> Result<PathBuf, ConfigError> {
    flag.or_else(|| config.clone()).ok_or(ConfigError::Missing(key))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let c = PipelineConfig::parse_str(
            "# run\nseed = 9\nclassifier = svm-linear\nfeatures = F9, 10,11\n\ntroll.model = m.json\ncomments = a.csv, b.csv\n",
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.features, vec![9, 10, 11]);
        assert_eq!(c.paths.troll_model, Some(PathBuf::from("m.json")));
        assert_eq!(c.paths.comments.len(), 2);
        match c.classifier_config() {
            ClassifierConfig::Svm(s) => {
                assert_eq!(s.kernel, Kernel::Linear);
                assert_eq!(s.seed, 9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_error() {
        assert!(matches!(
            PipelineConfig::parse_str("sed = 1"),
            Err(ConfigError::UnknownKey(_))
        ));
    }

    #[test]
    fn bad_values_are_errors() {
        assert!(PipelineConfig::parse_str("seed = x").is_err());
        assert!(PipelineConfig::parse_str("just a line").is_err());
        assert!(PipelineConfig::parse_str("features = 19").is_err());
        assert!(PipelineConfig::parse_str("classifier = forest").is_err());
        assert!(PipelineConfig::parse_str("eval.folds = 1").is_err());
    }

    #[test]
    fn overrides_apply_on_top() {
        let mut c = PipelineConfig::parse_str("seed = 3").unwrap();
        c.apply_override("boost.rounds=7").unwrap();
        assert_eq!(c.boost_config().rounds, 7);
        assert_eq!(c.boost_config().seed, 3);
        assert!(c.apply_override("nonsense").is_err());
    }

    #[test]
    fn describe_round_trips() {
        let mut c = PipelineConfig::default();
        c.apply_str("seed = 4\nsvm.gamma = 0.25\nfeatures = 1,2").unwrap();
        let back = PipelineConfig::parse_str(&c.describe()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn flag_beats_config() {
        let cfg = Some(PathBuf::from("cfg"));
        assert_eq!(require(Some("flag".into()), &cfg, "k").unwrap(), PathBuf::from("flag"));
        assert_eq!(require(None, &cfg, "k").unwrap(), PathBuf::from("cfg"));
        assert!(require(None, &None, "k").is_err());
    }
}
