//! Comment polarity scoring.
//!
//! A multinomial naive-Bayes model gives `P(positive | words)`. The comment
//! score multiplies that posterior by a similarity factor computed from word
//! embeddings; see [`SimilarityFactor`] for the default definition.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Polarity;
use crate::embedding::EmbeddingModel;
use crate::util::{cosine, sigmoid};

#[derive(Debug, Error)]
pub enum SentimentError {
    #[error("training corpus has no {0} documents")]
    MissingClass(&'static str),
    #[error("smoothing constant must be positive and finite, got {0}")]
    Smoothing(f64),
    #[error("cannot score an empty word list")]
    EmptyInput,
    #[error("histogram width must lie in (0, 1], got {0}")]
    Width(f64),
    #[error("score {0} lies outside [0, 1]")]
    ScoreRange(f64),
    #[error("invalid model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const POS: usize = 0;
const NEG: usize = 1;

/// Naive-Bayes polarity model. Index 0 of every pair is the positive class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolarityModel {
    smoothing: f64,
    priors: [f64; 2],
    log_priors: [f64; 2],
    log_likelihoods: BTreeMap<String, [f64; 2]>,
    unseen: [f64; 2],
    #[serde(skip)]
    embedding: Option<Arc<EmbeddingModel>>,
}

/// Fit priors and add-`smoothing` word likelihoods. The vocabulary gets one
/// extra bucket shared by all unseen words.
pub fn train_polarity<S: AsRef<str>>(
    corpus: &[(Vec<S>, Polarity)],
    smoothing: f64,
) -> Result<PolarityModel, SentimentError> {
    if !(smoothing > 0.0 && smoothing.is_finite()) {
        return Err(SentimentError::Smoothing(smoothing));
    }
    let mut docs = [0usize; 2];
    let mut totals = [0u64; 2];
    let mut counts: BTreeMap<&str, [u64; 2]> = BTreeMap::new();
    for (words, label) in corpus {
        let c = class_index(*label);
        docs[c] += 1;
        for w in words {
            counts.entry(w.as_ref()).or_default()[c] += 1;
            totals[c] += 1;
        }
    }
    if docs[POS] == 0 {
        return Err(SentimentError::MissingClass("positive"));
    }
    if docs[NEG] == 0 {
        return Err(SentimentError::MissingClass("negative"));
    }

    let n = (docs[POS] + docs[NEG]) as f64;
    let priors = [docs[POS] as f64 / n, docs[NEG] as f64 / n];
    let v = counts.len() as f64 + 1.0;
    let denom = [
        totals[POS] as f64 + smoothing * v,
        totals[NEG] as f64 + smoothing * v,
    ];
    let log_likelihoods = counts
        .into_iter()
        .map(|(w, c)| {
            let ll = [
                ((c[POS] as f64 + smoothing) / denom[POS]).ln(),
                ((c[NEG] as f64 + smoothing) / denom[NEG]).ln(),
            ];
            (w.to_string(), ll)
        })
        .collect();
    Ok(PolarityModel {
        smoothing,
        priors,
        log_priors: [priors[POS].ln(), priors[NEG].ln()],
        log_likelihoods,
        unseen: [(smoothing / denom[POS]).ln(), (smoothing / denom[NEG]).ln()],
        embedding: None,
    })
}

fn class_index(p: Polarity) -> usize {
    match p {
        Polarity::Positive => POS,
        Polarity::Negative => NEG,
    }
}

impl PolarityModel {
    pub fn with_embedding(mut self, embedding: Arc<EmbeddingModel>) -> Self {
        self.embedding = Some(embedding);
        self
    }

    pub fn embedding(&self) -> Option<&Arc<EmbeddingModel>> {
        self.embedding.as_ref()
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn prior(&self, polarity: Polarity) -> f64 {
        self.priors[class_index(polarity)]
    }

    /// `ln P(word | class)`, using the unseen bucket for unknown words.
    pub fn log_likelihood(&self, word: &str, polarity: Polarity) -> f64 {
        let c = class_index(polarity);
        self.log_likelihoods
            .get(word)
            .map_or(self.unseen[c], |ll| ll[c])
    }

    pub fn vocabulary_len(&self) -> usize {
        self.log_likelihoods.len()
    }

    fn log_joint<S: AsRef<str>>(&self, words: &[S]) -> Result<[f64; 2], SentimentError> {
        if words.is_empty() {
            return Err(SentimentError::EmptyInput);
        }
        let mut joint = self.log_priors;
        for w in words {
            let ll = self
                .log_likelihoods
                .get(w.as_ref())
                .unwrap_or(&self.unseen);
            joint[POS] += ll[POS];
            joint[NEG] += ll[NEG];
        }
        Ok(joint)
    }

    pub fn posterior_positive<S: AsRef<str>>(&self, words: &[S]) -> Result<f64, SentimentError> {
        let j = self.log_joint(words)?;
        Ok(sigmoid(j[POS] - j[NEG]))
    }

    pub fn posterior_negative<S: AsRef<str>>(&self, words: &[S]) -> Result<f64, SentimentError> {
        let j = self.log_joint(words)?;
        Ok(sigmoid(j[NEG] - j[POS]))
    }

    /// Posterior times the attached embedding's similarity factor (1 when no
    /// embedding is attached), clamped to `[0, 1]`.
    pub fn sentiment_score<S: AsRef<str>>(&self, words: &[S]) -> Result<f64, SentimentError> {
        match &self.embedding {
            Some(e) => self.sentiment_score_with(words, e.as_ref()),
            None => self.posterior_positive(words),
        }
    }

    pub fn sentiment_score_with<S: AsRef<str>>(
        &self,
        words: &[S],
        factor: &dyn SimilarityFactor,
    ) -> Result<f64, SentimentError> {
        let posterior = self.posterior_positive(words)?;
        let words: Vec<&str> = words.iter().map(AsRef::as_ref).collect();
        Ok((posterior * factor.factor(&words)).clamp(0.0, 1.0))
    }

    pub fn save_json<W: Write>(&self, w: W) -> Result<(), SentimentError> {
        serde_json::to_writer_pretty(w, self).map_err(|e| SentimentError::Format(e.to_string()))
    }

    pub fn load_json(bytes: &[u8]) -> Result<Self, SentimentError> {
        let model: Self =
            serde_json::from_slice(bytes).map_err(|e| SentimentError::Format(e.to_string()))?;
        let sum = model.priors[POS] + model.priors[NEG];
        let finite = model
            .log_likelihoods
            .values()
            .chain(std::iter::once(&model.unseen))
            .flatten()
            .all(|x| x.is_finite());
        if (sum - 1.0).abs() > 1e-9 || !finite {
            return Err(SentimentError::Format(
                "priors must sum to 1 and likelihoods must be finite".into(),
            ));
        }
        Ok(model)
    }

    pub fn save_to_path(&self, path: impl AsRef<Path>) -> Result<(), SentimentError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.save_json(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_path(path: impl AsRef<Path>) -> Result<Self, SentimentError> {
        Self::load_json(&std::fs::read(path)?)
    }
}

/// Multiplier applied to the posterior. Implementations must return a value
/// in `[0, 1]`.
pub trait SimilarityFactor: Send + Sync {
    fn factor(&self, words: &[&str]) -> f64;
}

/// Mean of `(cos + 1) / 2` between each in-vocabulary word and the centroid of
/// the comment's in-vocabulary vectors. Repeated words count once per
/// occurrence. With no word in vocabulary the factor is 1.
impl SimilarityFactor for EmbeddingModel {
    fn factor(&self, words: &[&str]) -> f64 {
        let vectors: Vec<&[f64]> = words.iter().filter_map(|w| self.vector(w)).collect();
        if vectors.is_empty() {
            return 1.0;
        }
        let mut centroid = vec![0.0; self.dim()];
        for v in &vectors {
            for (c, x) in centroid.iter_mut().zip(v.iter()) {
                *c += x;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= vectors.len() as f64);
        let total: f64 = vectors
            .iter()
            .map(|v| (cosine(v, &centroid) + 1.0) / 2.0)
            .sum();
        total / vectors.len() as f64
    }
}

/// A factor that is always 1, leaving the posterior unchanged.
pub struct NoSimilarity;

impl SimilarityFactor for NoSimilarity {
    fn factor(&self, _words: &[&str]) -> f64 {
        1.0
    }
}

/// Bin scores into `[0, w), [w, 2w), ...`; the last bin also holds 1.0.
/// Returns `(lower edge, count)` for every bin.
pub fn score_histogram(scores: &[f64], width: f64) -> Result<Vec<(f64, usize)>, SentimentError> {
    if !(width > 0.0 && width <= 1.0) {
        return Err(SentimentError::Width(width));
    }
    // The epsilon keeps widths like 0.02 from producing a spurious extra bin.
    let bins = ((1.0 / width) - 1e-9).ceil() as usize;
    let mut counts = vec![0usize; bins];
    for &s in scores {
        if !(0.0..=1.0).contains(&s) {
            return Err(SentimentError::ScoreRange(s));
        }
        let i = ((s / width + 1e-9).floor() as usize).min(bins - 1);
        counts[i] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (i as f64 * width, c))
        .collect())
}

pub fn write_histogram_csv<W: Write>(w: W, bins: &[(f64, usize)]) -> Result<(), SentimentError> {
    let mut wtr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| SentimentError::Io(e.into());
    wtr.write_record(["bin_lower", "count"]).map_err(io)?;
    for (lower, count) in bins {
        wtr.write_record([format!("{lower:.6}"), count.to_string()])
            .map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(words: &str, p: Polarity) -> (Vec<String>, Polarity) {
        (words.split_whitespace().map(String::from).collect(), p)
    }

    fn small() -> PolarityModel {
        train_polarity(
            &[
                doc("好 开心 好", Polarity::Positive),
                doc("开心 棒", Polarity::Positive),
                doc("差 失望", Polarity::Negative),
            ],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn priors_from_frequencies() {
        let m = small();
        assert!((m.prior(Polarity::Positive) - 2.0 / 3.0).abs() < 1e-15);
        let balanced = train_polarity(
            &[doc("a", Polarity::Positive), doc("b", Polarity::Negative)],
            1.0,
        )
        .unwrap();
        assert_eq!(balanced.prior(Polarity::Positive), 0.5);
    }

    #[test]
    fn single_class_is_error() {
        assert!(matches!(
            train_polarity(&[doc("a", Polarity::Positive)], 1.0),
            Err(SentimentError::MissingClass("negative"))
        ));
    }

    #[test]
    fn hand_computed_likelihoods() {
        let m = small();
        // Vocabulary {好, 开心, 棒, 差, 失望} plus the unseen bucket: V+1 = 6.
        // Positive tokens: 5, negative tokens: 2.
        let l = m.log_likelihood("好", Polarity::Positive);
        assert!((l - (3.0f64 / 11.0).ln()).abs() < 1e-12);
        let l = m.log_likelihood("好", Polarity::Negative);
        assert!((l - (1.0f64 / 8.0).ln()).abs() < 1e-12);
        let u = m.log_likelihood("没见过", Polarity::Negative);
        assert!((u - (1.0f64 / 8.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn positive_only_word_favours_positive() {
        let m = small();
        assert!(m.posterior_positive(&["棒"]).unwrap() > 0.5);
        assert!(m.posterior_positive(&["失望"]).unwrap() < 0.5);
    }

    #[test]
    fn tiny_smoothing_drives_posterior_to_one() {
        let m = train_polarity(
            &[doc("棒", Polarity::Positive), doc("差", Polarity::Negative)],
            1e-9,
        )
        .unwrap();
        assert!(m.posterior_positive(&["棒"]).unwrap() > 1.0 - 1e-6);
    }

    #[test]
    fn symmetric_evidence_is_half() {
        let m = train_polarity(
            &[doc("a x", Polarity::Positive), doc("b x", Polarity::Negative)],
            1.0,
        )
        .unwrap();
        assert!((m.posterior_positive(&["x"]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_input_is_error() {
        let empty: [&str; 0] = [];
        assert!(matches!(small().posterior_positive(&empty), Err(SentimentError::EmptyInput)));
        assert!(matches!(small().sentiment_score(&empty), Err(SentimentError::EmptyInput)));
    }

    fn embed(entries: &[(&str, &[f64])]) -> Arc<EmbeddingModel> {
        Arc::new(
            EmbeddingModel::from_vectors(
                entries[0].1.len(),
                entries.iter().map(|(w, v)| (w.to_string(), v.to_vec())).collect(),
            )
            .unwrap(),
        )
    }

    #[test]
    fn factor_defaults() {
        let e = embed(&[("好", &[1.0, 0.0])]);
        let m = small().with_embedding(e);
        let p = m.posterior_positive(&["失望", "棒"]).unwrap();
        assert_eq!(m.sentiment_score(&["失望", "棒"]).unwrap(), p);
        let p = m.posterior_positive(&["好"]).unwrap();
        assert!((m.sentiment_score(&["好"]).unwrap() - p).abs() < 1e-15);
    }

    #[test]
    fn two_word_factor_by_hand() {
        // Vectors (1,0) and (0,1): centroid (0.5,0.5), each cosine is 1/sqrt(2).
        let e = embed(&[("好", &[1.0, 0.0]), ("棒", &[0.0, 1.0])]);
        let m = small().with_embedding(e);
        let words = ["好", "棒"];
        let factor = (1.0 / 2f64.sqrt() + 1.0) / 2.0;
        let expected = m.posterior_positive(&words).unwrap() * factor;
        assert!((m.sentiment_score(&words).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn histogram_examples() {
        let h = score_histogram(&[0.01, 0.03, 0.99], 0.02).unwrap();
        assert_eq!(h.len(), 50);
        assert_eq!(h[0].1, 1);
        assert_eq!(h[1].1, 1);
        assert_eq!(h[49].1, 1);
        assert_eq!(h.iter().map(|b| b.1).sum::<usize>(), 3);
        assert!(score_histogram(&[], 0.02).unwrap().iter().all(|b| b.1 == 0));
        assert_eq!(score_histogram(&[1.0], 0.1).unwrap()[9].1, 1);
        assert!(score_histogram(&[1.5], 0.1).is_err());
        assert!(score_histogram(&[0.5], 0.0).is_err());
    }

    #[test]
    fn histogram_csv_layout() {
        let mut buf = Vec::new();
        write_histogram_csv(&mut buf, &score_histogram(&[0.3], 0.5).unwrap()).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "bin_lower,count\n0.000000,1\n0.500000,0\n");
    }

    #[test]
    fn json_round_trip() {
        let m = small();
        let mut buf = Vec::new();
        m.save_json(&mut buf).unwrap();
        let back = PolarityModel::load_json(&buf).unwrap();
        assert_eq!(
            back.posterior_positive(&["好", "差"]).unwrap(),
            m.posterior_positive(&["好", "差"]).unwrap()
        );
    }

    proptest! {
        #[test]
        fn posteriors_sum_to_one(idx in prop::collection::vec(0usize..7, 1..12)) {
            let vocab = ["好", "开心", "棒", "差", "失望", "未知", "x"];
            let words: Vec<&str> = idx.iter().map(|&i| vocab[i]).collect();
            let m = small();
            let s = m.posterior_positive(&words).unwrap() + m.posterior_negative(&words).unwrap();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }

        #[test]
        fn histogram_counts_sum(scores in prop::collection::vec(0.0f64..=1.0, 0..200), w in 0.001f64..=1.0) {
            let h = score_histogram(&scores, w).unwrap();
            prop_assert_eq!(h.iter().map(|b| b.1).sum::<usize>(), scores.len());
        }

        #[test]
        fn score_monotone_in_posterior(
            a in prop::collection::vec(0usize..6, 1..6),
            b in prop::collection::vec(0usize..6, 1..6),
            f in 0.0f64..=1.0,
        ) {
            struct Fixed(f64);
            impl SimilarityFactor for Fixed {
                fn factor(&self, _: &[&str]) -> f64 { self.0 }
            }
            let vocab = ["好", "开心", "棒", "差", "失望", "未知"];
            let wa: Vec<&str> = a.iter().map(|&i| vocab[i]).collect();
            let wb: Vec<&str> = b.iter().map(|&i| vocab[i]).collect();
            let m = small();
            let (pa, pb) = (m.posterior_positive(&wa).unwrap(), m.posterior_positive(&wb).unwrap());
            let (sa, sb) = (
                m.sentiment_score_with(&wa, &Fixed(f)).unwrap(),
                m.sentiment_score_with(&wb, &Fixed(f)).unwrap(),
            );
            if pa <= pb {
                prop_assert!(sa <= sb);
            } else {
                prop_assert!(sa >= sb);
            }
        }
    }
}
