//! The scoring chain: preprocess, segment, sentiment, emotion, features,
//! troll prediction.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::classify::{Prediction, TrollModel};
use crate::corpus::{
    CommentRecord, Emotion, EmotionDocument, Passthrough, Polarity, Preprocessor, RejectReason,
    SentimentDocument, StopWords, Translator,
};
use crate::embedding::{train_embeddings, EmbeddingConfig, EmbeddingModel};
use crate::emotion::{train_emotion_models, EmotionModels};
use crate::eval::Trainer;
use crate::features::{
    feature_vector, freq_comment_flags, CommentScorer, CommentScores, FeatureVector, NEUTRAL_SENTIMENT,
};
use crate::seg_hmm::{segment, SegmentationHmm};
use crate::sentiment::{train_polarity, PolarityModel};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot train {what}: {message}")]
    Train { what: &'static str, message: String },
    #[error("cannot load {what} from {path}: {message}")]
    Load {
        what: &'static str,
        path: PathBuf,
        message: String,
    },
}

fn train_err(what: &'static str, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Train {
        what,
        message: e.to_string(),
    }
}

fn load_err(what: &'static str, path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Load {
        what,
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Cleans text and splits it into words. Chinese runs go through the HMM;
/// other whitespace-separated tokens are kept as they are.
pub struct Tokenizer {
    preprocessor: Preprocessor,
    segmenter: SegmentationHmm,
    translator: Box<dyn Translator>,
}

impl Tokenizer {
    pub fn new(segmenter: SegmentationHmm, preprocessor: Preprocessor) -> Self {
        Self {
            preprocessor,
            segmenter,
            translator: Box::new(Passthrough),
        }
    }

    pub fn with_translator(mut self, translator: Box<dyn Translator>) -> Self {
        self.translator = translator;
        self
    }

    pub fn segmenter(&self) -> &SegmentationHmm {
        &self.segmenter
    }

    pub fn tokens(&self, text: &str) -> Result<Vec<String>, RejectReason> {
        let cleaned = self.preprocessor.process(text, Some(self.translator.as_ref()))?;
        let mut words = Vec::new();
        for chunk in cleaned.split_whitespace() {
            if chunk.chars().any(is_cjk) {
                words.extend(segment(&self.segmenter, chunk));
            } else {
                words.push(chunk.to_string());
            }
        }
        let words = self.preprocessor.stop_words().filter_tokens(&words);
        if words.is_empty() {
            return Err(RejectReason::Empty);
        }
        Ok(words)
    }
}

fn is_cjk(c: char) -> bool {
    matches!(c, '\u{3400}'..='\u{4DBF}' | '\u{4E00}'..='\u{9FFF}' | '\u{F900}'..='\u{FAFF}')
}

/// Model files needed to assemble a [`Pipeline`].
#[derive(Debug, Clone, Default)]
pub struct PipelinePaths {
    pub seg_model: PathBuf,
    /// Without an embedding the similarity factor is 1.
    pub w2v_model: Option<PathBuf>,
    pub sentiment_model: PathBuf,
    pub emotion_model: PathBuf,
    pub troll_model: PathBuf,
    pub stopwords: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelVersions {
    pub troll_model: String,
    pub classifier: String,
    pub active_features: Vec<String>,
    pub seed: u64,
    pub training_samples: usize,
    pub embedding: bool,
}

/// One scored comment.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredComment {
    pub scores: CommentScores,
    pub features: FeatureVector,
    pub prediction: Prediction,
}

/// Text-level models: everything needed for F11..F18.
pub struct TextScorer {
    tokenizer: Tokenizer,
    sentiment: PolarityModel,
    emotions: EmotionModels,
}

impl TextScorer {
    pub fn new(tokenizer: Tokenizer, sentiment: PolarityModel, emotions: EmotionModels) -> Self {
        Self {
            tokenizer,
            sentiment,
            emotions,
        }
    }

    /// Train the sentiment and emotion models from raw labeled text. With an
    /// embedding config, vectors are trained on the tokens of both corpora.
    pub fn train(
        tokenizer: Tokenizer,
        sentiment_docs: &[SentimentDocument],
        emotion_docs: &[EmotionDocument],
        smoothing: f64,
        embedding: Option<&EmbeddingConfig>,
    ) -> Result<Self, PipelineError> {
        let polar: Vec<(Vec<String>, Polarity)> = sentiment_docs
            .iter()
            .filter_map(|d| tokenizer.tokens(&d.text).ok().map(|w| (w, d.label)))
            .collect();
        let emo: Vec<(Vec<String>, Emotion)> = emotion_docs
            .iter()
            .filter_map(|d| tokenizer.tokens(&d.text).ok().map(|w| (w, d.emotion)))
            .collect();
        let mut sentiment =
            train_polarity(&polar, smoothing).map_err(|e| train_err("sentiment model", e))?;
        if let Some(cfg) = embedding {
            let sentences: Vec<Vec<String>> = polar
                .iter()
                .map(|(w, _)| w.clone())
                .chain(emo.iter().map(|(w, _)| w.clone()))
                .collect();
            let model = train_embeddings(&sentences, cfg).map_err(|e| train_err("embedding", e))?;
            sentiment = sentiment.with_embedding(Arc::new(model));
        }
        let emotions =
            train_emotion_models(&emo).map_err(|e| train_err("emotion models", e))?;
        Ok(Self::new(tokenizer, sentiment, emotions))
    }

    pub fn load(paths: &PipelinePaths) -> Result<Self, PipelineError> {
        let segmenter = SegmentationHmm::load_path(&paths.seg_model)
            .map_err(|e| load_err("segmentation model", &paths.seg_model, e))?;
        let stop_words = match &paths.stopwords {
            Some(p) => StopWords::from_file(p).map_err(|e| load_err("stop words", p, e))?,
            None => StopWords::builtin(),
        };
        let mut sentiment = PolarityModel::load_path(&paths.sentiment_model)
            .map_err(|e| load_err("sentiment model", &paths.sentiment_model, e))?;
        if let Some(p) = &paths.w2v_model {
            let embedding =
                EmbeddingModel::load_path(p).map_err(|e| load_err("embedding", p, e))?;
            sentiment = sentiment.with_embedding(Arc::new(embedding));
        }
        let emotions = EmotionModels::load_path(&paths.emotion_model)
            .map_err(|e| load_err("emotion models", &paths.emotion_model, e))?;
        Ok(Self::new(
            Tokenizer::new(segmenter, Preprocessor::new(stop_words)),
            sentiment,
            emotions,
        ))
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn sentiment(&self) -> &PolarityModel {
        &self.sentiment
    }

    pub fn emotions(&self) -> &EmotionModels {
        &self.emotions
    }
}

impl CommentScorer for TextScorer {
    fn score_text(&self, text: &str) -> Result<CommentScores, RejectReason> {
        let words = self.tokenizer.tokens(text)?;
        let sentiment = self
            .sentiment
            .sentiment_score(&words)
            .map_err(|_| RejectReason::Empty)?;
        let emotion = self.emotions.classify(&words).map_err(|_| RejectReason::Empty)?;
        Ok(CommentScores {
            sentiment,
            emotions: emotion.probabilities,
            emotion: emotion.emotion,
        })
    }
}

/// All trained models. Immutable once built, so it can be shared across
/// threads behind an `Arc`.
pub struct Pipeline {
    text: TextScorer,
    troll: TrollModel,
}

impl Pipeline {
    pub fn new(text: TextScorer, troll: TrollModel) -> Self {
        Self { text, troll }
    }

    pub fn load(paths: &PipelinePaths) -> Result<Self, PipelineError> {
        let text = TextScorer::load(paths)?;
        let troll = TrollModel::load_path(&paths.troll_model)
            .map_err(|e| load_err("troll model", &paths.troll_model, e))?;
        Ok(Self::new(text, troll))
    }

    pub fn text(&self) -> &TextScorer {
        &self.text
    }

    pub fn troll_model(&self) -> &TrollModel {
        &self.troll
    }

    pub fn versions(&self) -> ModelVersions {
        let m = &self.troll.metadata;
        ModelVersions {
            troll_model: self.troll.version_string(),
            classifier: m.config.name(),
            active_features: m.feature_names.clone(),
            seed: m.seed,
            training_samples: m.training_samples,
            embedding: self.text.sentiment.embedding().is_some(),
        }
    }

    /// Score a batch of comments under one original tweet. The frequent
    /// comment flag is computed over the whole batch; output order follows
    /// the input.
    pub fn score_batch(
        &self,
        records: &[CommentRecord],
        original: Option<&str>,
    ) -> Vec<Result<ScoredComment, RejectReason>> {
        let flags = freq_comment_flags(records);
        let original_sentiment = original
            .and_then(|t| self.text.score_text(t).ok())
            .map_or(NEUTRAL_SENTIMENT, |s| s.sentiment);
        records
            .iter()
            .zip(flags)
            .map(|(record, freq)| {
                let scores = self.text.score_text(&record.text)?;
                let features = feature_vector(record, freq, &scores, original_sentiment);
                // Loading rejects models whose active features exceed F18.
                let prediction = self
                    .troll
                    .predict(&features.values)
                    .expect("full feature vector covers every active feature");
                Ok(ScoredComment {
                    scores,
                    features,
                    prediction,
                })
            })
            .collect()
    }
}

impl CommentScorer for Pipeline {
    fn score_text(&self, text: &str) -> Result<CommentScores, RejectReason> {
        self.text.score_text(text)
    }
}

/// Emotion label used in reports; `unknown` when no model fired.
pub fn emotion_label(e: Option<Emotion>) -> &'static str {
    e.map_or("unknown", Emotion::name)
}
