//! Word-emotion features and per-emotion chain HMMs.
//!
//! Each training word gets three scores per emotion, all with natural logs:
//!
//! ```text
//! MI(t,e)     = ln(P(t|e) / P(e))                    P(t|e) = (df_e(t)+1)/(n_e+2), P(e) = n_e/N
//! CHI(t,e)    = N(AD-BC)^2 / ((A+B)(C+D)(A+C)(B+D))  A,B,C,D from document presence
//! TFIDF(t,e)  = N_{e,t} / sum_k N_{k,t} * ln(N/n_e + 0.01)
//! ```
//!
//! `N` counts documents, `n_e` documents labeled `e`, `df_e(t)` documents of
//! `e` containing `t` and `N_{e,t}` occurrences of `t` in documents of `e`.
//!
//! One HMM per emotion walks the fixed chain MI -> CHI -> TF-IDF. Its emissions
//! are Jaccard ratios `M11 / (M11 + M10 + M01)` over documents, where feature
//! values are matched after rounding to two decimals.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Emotion;

#[derive(Debug, Error)]
pub enum EmotionError {
    #[error("no training documents for emotion `{0}`")]
    MissingEmotion(Emotion),
    #[error("every training document for emotion `{0}` is empty")]
    EmptyEmotion(Emotion),
    #[error("{0}")]
    Contract(String),
    #[error("cannot classify an empty word list")]
    EmptyInput,
    #[error("invalid model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-word scores indexed by `[emotion.index()][feature]`, with features in
/// the order MI, CHI, TF-IDF.
pub type WordFeatures = [[f64; 3]; 6];

pub const FEATURE_NAMES: [&str; 3] = ["mi", "chi", "tfidf"];

/// Log-score added for every zero emission when ranking models.
const ZERO_EMISSION_PENALTY: f64 = -1e9;

pub fn mutual_information(p_t_given_e: f64, p_e: f64) -> Result<f64, EmotionError> {
    if !(p_t_given_e > 0.0 && p_e > 0.0) {
        return Err(EmotionError::Contract(format!(
            "mutual information needs positive probabilities, got P(t|e)={p_t_given_e}, P(e)={p_e}"
        )));
    }
    Ok((p_t_given_e / p_e).ln())
}

pub fn chi_square(a: f64, b: f64, c: f64, d: f64, n: f64) -> Result<f64, EmotionError> {
    let marginals = (a + b) * (c + d) * (a + c) * (b + d);
    if [a + b, c + d, a + c, b + d].iter().any(|&m| m <= 0.0) {
        return Err(EmotionError::Contract(format!(
            "chi-square needs positive marginals, got A={a} B={b} C={c} D={d}"
        )));
    }
    let diff = a * d - b * c;
    Ok(n * diff * diff / marginals)
}

pub fn tf_idf(n_et: f64, total_t: f64, n: f64, n_e: f64) -> Result<f64, EmotionError> {
    if !(total_t > 0.0 && n_e > 0.0) {
        return Err(EmotionError::Contract(format!(
            "tf-idf needs an observed word and a nonempty class, got sum={total_t}, n_e={n_e}"
        )));
    }
    Ok(n_et / total_t * (n / n_e + 0.01).ln())
}

pub fn jaccard_emission(m11: f64, m10: f64, m01: f64) -> Result<f64, EmotionError> {
    let total = m11 + m10 + m01;
    if total <= 0.0 {
        return Err(EmotionError::Contract("Jaccard counts are all zero".into()));
    }
    Ok(m11 / total)
}

fn quantize(v: f64) -> i64 {
    (v * 100.0).round() as i64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionFeatureTable {
    n_docs: usize,
    class_docs: [usize; 6],
    rows: BTreeMap<String, WordFeatures>,
}

impl EmotionFeatureTable {
    pub fn build<S: AsRef<str>>(corpus: &[(Vec<S>, Emotion)]) -> Result<Self, EmotionError> {
        let mut class_docs = [0usize; 6];
        let mut df: BTreeMap<&str, [usize; 6]> = BTreeMap::new();
        let mut tf: BTreeMap<&str, [usize; 6]> = BTreeMap::new();
        for (words, e) in corpus {
            let e = e.index();
            class_docs[e] += 1;
            let mut seen = BTreeSet::new();
            for w in words {
                let w = w.as_ref();
                tf.entry(w).or_default()[e] += 1;
                if seen.insert(w) {
                    df.entry(w).or_default()[e] += 1;
                }
            }
        }
        if let Some(e) = Emotion::ALL.into_iter().find(|e| class_docs[e.index()] == 0) {
            return Err(EmotionError::MissingEmotion(e));
        }

        let n = corpus.len() as f64;
        let mut rows = BTreeMap::new();
        for (word, dfs) in &df {
            let tfs = &tf[word];
            let df_total: usize = dfs.iter().sum();
            let tf_total: usize = tfs.iter().sum();
            let mut row = [[0.0; 3]; 6];
            for e in 0..6 {
                let n_e = class_docs[e] as f64;
                let p_te = (dfs[e] as f64 + 1.0) / (n_e + 2.0);
                row[e][0] = mutual_information(p_te, n_e / n)?;
                let a = dfs[e] as f64;
                let b = (df_total - dfs[e]) as f64;
                let c = n_e - a;
                let d = n - n_e - b;
                // A word present in every document has an empty C+D margin.
                row[e][1] = chi_square(a, b, c, d, n).unwrap_or(0.0);
                row[e][2] = tf_idf(tfs[e] as f64, tf_total as f64, n, n_e)?;
            }
            rows.insert(word.to_string(), row);
        }
        Ok(Self {
            n_docs: corpus.len(),
            class_docs,
            rows,
        })
    }

    pub fn get(&self, word: &str) -> Option<&WordFeatures> {
        self.rows.get(word)
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn class_docs(&self, e: Emotion) -> usize {
        self.class_docs[e.index()]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(String::as_str)
    }

    /// CSV with columns `word,emotion,mi,chi,tfidf`, six rows per word.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EmotionError> {
        let mut wtr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| EmotionError::Io(e.into());
        wtr.write_record(["word", "emotion", "mi", "chi", "tfidf"])
            .map_err(io)?;
        for (word, row) in &self.rows {
            for e in Emotion::ALL {
                let f = row[e.index()];
                wtr.write_record([
                    word.clone(),
                    e.name().to_string(),
                    f[0].to_string(),
                    f[1].to_string(),
                    f[2].to_string(),
                ])
                .map_err(io)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Three-state chain model for one emotion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionHmm {
    emotion: Emotion,
    means: [f64; 3],
    docs: usize,
    /// Per state: quantized value -> (in-class docs, out-of-class docs).
    counts: [BTreeMap<i64, (u32, u32)>; 3],
}

/// Result of scoring one word sequence against one chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainScore {
    /// Sum of log emissions; `-inf` as soon as one emission is zero.
    pub log_score: f64,
    pub zero_emissions: usize,
    pub emissions: usize,
    /// `log_score` with every zero emission replaced by a fixed large penalty.
    pub ranking_score: f64,
}

impl EmotionHmm {
    pub fn emotion(&self) -> Emotion {
        self.emotion
    }

    /// Per-state mean of the per-document mean feature values.
    pub fn means(&self) -> [f64; 3] {
        self.means
    }

    /// Nonempty training documents of this emotion.
    pub fn documents(&self) -> usize {
        self.docs
    }

    pub fn initial(state: usize) -> f64 {
        if state == 0 {
            1.0
        } else {
            0.0
        }
    }

    /// `P(S_k = p | S_{k-1} = q)`: 1 when `p = q + 1`, else 0.
    pub fn transition(q: usize, p: usize) -> f64 {
        if p == q + 1 {
            1.0
        } else {
            0.0
        }
    }

    /// Jaccard emission of value `y` in state `k`.
    pub fn emission(&self, k: usize, y: f64) -> f64 {
        let (m11, out) = self.counts[k].get(&quantize(y)).copied().unwrap_or((0, 0));
        let m10 = self.docs as u32 - m11;
        jaccard_emission(m11 as f64, m10 as f64, out as f64)
            .expect("a trained model has at least one document")
    }

    /// Walk the chain once per word; each word contributes its three emissions
    /// under this emotion's column.
    pub fn score(&self, rows: &[WordFeatures]) -> ChainScore {
        let e = self.emotion.index();
        let (mut finite, mut zeros) = (0.0, 0);
        for row in rows {
            for (k, &v) in row[e].iter().enumerate() {
                let j = self.emission(k, v);
                if j > 0.0 {
                    finite += j.ln();
                } else {
                    zeros += 1;
                }
            }
        }
        ChainScore {
            log_score: if zeros > 0 { f64::NEG_INFINITY } else { finite },
            zero_emissions: zeros,
            emissions: rows.len() * 3,
            ranking_score: finite + ZERO_EMISSION_PENALTY * zeros as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionModels {
    table: EmotionFeatureTable,
    hmms: Vec<EmotionHmm>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmotionResult {
    /// `None` when no model produced a single nonzero emission.
    pub emotion: Option<Emotion>,
    /// Per-emotion log-scores in [`Emotion::ALL`] order.
    pub scores: [f64; 6],
    /// Softmax of the ranking scores; all zero when the emotion is unknown.
    pub probabilities: [f64; 6],
}

impl EmotionResult {
    pub fn label(&self) -> &'static str {
        self.emotion.map_or("unknown", Emotion::name)
    }

    fn unknown() -> Self {
        Self {
            emotion: None,
            scores: [f64::NEG_INFINITY; 6],
            probabilities: [0.0; 6],
        }
    }
}

pub fn train_emotion_models<S: AsRef<str>>(
    corpus: &[(Vec<S>, Emotion)],
) -> Result<EmotionModels, EmotionError> {
    let table = EmotionFeatureTable::build(corpus)?;
    EmotionModels::from_table(table, corpus)
}

impl EmotionModels {
    /// Fit the six chains on `corpus` using a prebuilt feature table. Words
    /// missing from the table are ignored.
    pub fn from_table<S: AsRef<str>>(
        table: EmotionFeatureTable,
        corpus: &[(Vec<S>, Emotion)],
    ) -> Result<Self, EmotionError> {
        let docs: Vec<(Vec<&WordFeatures>, Emotion)> = corpus
            .iter()
            .map(|(words, e)| (words.iter().filter_map(|w| table.get(w.as_ref())).collect(), *e))
            .collect();

        let mut hmms = Vec::with_capacity(6);
        for emotion in Emotion::ALL {
            if !corpus.iter().any(|(_, e)| *e == emotion) {
                return Err(EmotionError::MissingEmotion(emotion));
            }
            let col = emotion.index();
            let mut sums = [0.0; 3];
            let mut n_in = 0usize;
            let mut counts: [BTreeMap<i64, (u32, u32)>; 3] = Default::default();
            for (rows, e) in &docs {
                if rows.is_empty() {
                    continue;
                }
                let in_class = *e == emotion;
                for (k, state_counts) in counts.iter_mut().enumerate() {
                    let values: BTreeSet<i64> = rows.iter().map(|r| quantize(r[col][k])).collect();
                    for q in values {
                        let entry = state_counts.entry(q).or_default();
                        if in_class {
                            entry.0 += 1;
                        } else {
                            entry.1 += 1;
                        }
                    }
                    if in_class {
                        sums[k] += rows.iter().map(|r| r[col][k]).sum::<f64>() / rows.len() as f64;
                    }
                }
                n_in += in_class as usize;
            }
            if n_in == 0 {
                return Err(EmotionError::EmptyEmotion(emotion));
            }
            hmms.push(EmotionHmm {
                emotion,
                means: sums.map(|s| s / n_in as f64),
                docs: n_in,
                counts,
            });
        }
        Ok(Self { table, hmms })
    }

    pub fn table(&self) -> &EmotionFeatureTable {
        &self.table
    }

    pub fn model(&self, e: Emotion) -> &EmotionHmm {
        &self.hmms[e.index()]
    }

    /// Classify a segmented comment. Words outside the training vocabulary
    /// are skipped; with none left the emotion is unknown.
    pub fn classify<S: AsRef<str>>(&self, words: &[S]) -> Result<EmotionResult, EmotionError> {
        if words.is_empty() {
            return Err(EmotionError::EmptyInput);
        }
        let rows: Vec<WordFeatures> = words
            .iter()
            .filter_map(|w| self.table.get(w.as_ref()).copied())
            .collect();
        Ok(self.classify_feature_rows(&rows))
    }

    /// Classify from per-word feature rows directly.
    pub fn classify_feature_rows(&self, rows: &[WordFeatures]) -> EmotionResult {
        if rows.is_empty() {
            return EmotionResult::unknown();
        }
        let chains: Vec<ChainScore> = self.hmms.iter().map(|h| h.score(rows)).collect();
        if chains.iter().all(|c| c.zero_emissions == c.emissions) {
            return EmotionResult::unknown();
        }
        let ranking: Vec<f64> = chains.iter().map(|c| c.ranking_score).collect();
        let winner = argmax_first(&ranking);
        let top = ranking[winner];
        let weights: Vec<f64> = ranking.iter().map(|r| (r - top).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut probabilities = [0.0; 6];
        let mut scores = [0.0; 6];
        for i in 0..6 {
            probabilities[i] = weights[i] / total;
            scores[i] = chains[i].log_score;
        }
        EmotionResult {
            emotion: Some(Emotion::ALL[winner]),
            scores,
            probabilities,
        }
    }

    pub fn save_json<W: Write>(&self, w: W) -> Result<(), EmotionError> {
        serde_json::to_writer(w, self).map_err(|e| EmotionError::Format(e.to_string()))
    }

    pub fn load_json(bytes: &[u8]) -> Result<Self, EmotionError> {
        let m: Self =
            serde_json::from_slice(bytes).map_err(|e| EmotionError::Format(e.to_string()))?;
        let ordered = m.hmms.len() == 6
            && m.hmms.iter().zip(Emotion::ALL).all(|(h, e)| h.emotion == e && h.docs > 0);
        if !ordered {
            return Err(EmotionError::Format("expected six trained emotion chains".into()));
        }
        Ok(m)
    }

    pub fn save_to_path(&self, path: impl AsRef<Path>) -> Result<(), EmotionError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.save_json(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_path(path: impl AsRef<Path>) -> Result<Self, EmotionError> {
        Self::load_json(&std::fs::read(path)?)
    }
}

/// Index of the largest value; the earliest index wins ties.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(words: &str, e: Emotion) -> (Vec<String>, Emotion) {
        (words.split_whitespace().map(String::from).collect(), e)
    }

    fn one_word_each() -> Vec<(Vec<String>, Emotion)> {
        ["喜", "惊", "怕", "怒", "恶", "悲"]
            .iter()
            .zip(Emotion::ALL)
            .map(|(w, e)| doc(w, e))
            .collect()
    }

    #[test]
    fn formula_examples() {
        assert_eq!(mutual_information(0.5, 0.5).unwrap(), 0.0);
        assert!((mutual_information(0.2, 0.5).unwrap() - 0.4f64.ln()).abs() < 1e-12);
        assert!(mutual_information(0.0, 0.5).is_err());

        assert_eq!(chi_square(2.0, 4.0, 3.0, 6.0, 15.0).unwrap(), 0.0);
        let v = chi_square(10.0, 20.0, 30.0, 40.0, 100.0).unwrap();
        assert!((v - 100.0 * 200.0f64.powi(2) / (30.0 * 70.0 * 40.0 * 60.0)).abs() < 1e-12);
        assert!((v - 0.7937).abs() < 1e-4);
        assert_eq!(v, chi_square(30.0, 40.0, 10.0, 20.0, 100.0).unwrap());
        assert!(chi_square(0.0, 0.0, 3.0, 4.0, 7.0).is_err());

        assert_eq!(tf_idf(0.0, 10.0, 100.0, 10.0).unwrap(), 0.0);
        // 0.3 * ln(10.01) = 0.69108; quoted elsewhere as about 0.6909.
        let v = tf_idf(3.0, 10.0, 100.0, 10.0).unwrap();
        assert!((v - 0.3 * 10.01f64.ln()).abs() < 1e-12);
        assert!((v - 0.6911).abs() < 1e-4);
        let small = tf_idf(1.0, 1.0, 5.0, 5.0).unwrap();
        assert!(small > 0.0 && (small - 1.01f64.ln()).abs() < 1e-15);
        assert!(tf_idf(1.0, 0.0, 5.0, 5.0).is_err());

        assert_eq!(jaccard_emission(2.0, 1.0, 1.0).unwrap(), 0.5);
        assert_eq!(jaccard_emission(3.0, 0.0, 0.0).unwrap(), 1.0);
        assert_eq!(jaccard_emission(0.0, 2.0, 1.0).unwrap(), 0.0);
        assert!(jaccard_emission(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn missing_emotion_is_named() {
        let mut corpus = one_word_each();
        corpus.retain(|(_, e)| *e != Emotion::Fear);
        match train_emotion_models(&corpus) {
            Err(EmotionError::MissingEmotion(e)) => assert_eq!(e, Emotion::Fear),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_document_means_equal_its_features() {
        let corpus = one_word_each();
        let models = train_emotion_models(&corpus).unwrap();
        for ((words, e), _) in corpus.iter().zip(0..) {
            let row = models.table().get(&words[0]).unwrap();
            assert_eq!(models.model(*e).means(), row[e.index()]);
        }
    }

    #[test]
    fn duplicating_documents_keeps_means() {
        let corpus = vec![
            doc("好 开心", Emotion::Happiness),
            doc("开心 快乐 好", Emotion::Happiness),
            doc("哇", Emotion::Surprise),
            doc("怕 怕", Emotion::Fear),
            doc("怒 气", Emotion::Anger),
            doc("恶心", Emotion::Disgust),
            doc("哭 难过", Emotion::Sadness),
        ];
        let table = EmotionFeatureTable::build(&corpus).unwrap();
        let once = EmotionModels::from_table(table.clone(), &corpus).unwrap();
        let doubled: Vec<_> = corpus.iter().chain(corpus.iter()).cloned().collect();
        let twice = EmotionModels::from_table(table, &doubled).unwrap();
        for e in Emotion::ALL {
            let (a, b) = (once.model(e).means(), twice.model(e).means());
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn own_vocabulary_wins() {
        let models = train_emotion_models(&one_word_each()).unwrap();
        let r = models.classify(&["怒"]).unwrap();
        assert_eq!(r.emotion, Some(Emotion::Anger));
        assert!(r.scores[Emotion::Anger.index()].is_finite());
        assert!((r.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_words_give_unknown() {
        let models = train_emotion_models(&one_word_each()).unwrap();
        let r = models.classify(&["没见过"]).unwrap();
        assert_eq!(r.emotion, None);
        assert_eq!(r.label(), "unknown");
        assert!(models.classify::<&str>(&[]).is_err());
    }

    #[test]
    fn identical_models_tie_to_happiness() {
        // A corpus symmetric across emotions gives six identical chains.
        let corpus: Vec<_> = Emotion::ALL.iter().map(|&e| doc("同 样", e)).collect();
        let models = train_emotion_models(&corpus).unwrap();
        let r = models.classify(&["同"]).unwrap();
        assert_eq!(r.emotion, Some(Emotion::Happiness));
    }

    #[test]
    fn table_shaped_rows_are_accepted() {
        let models = train_emotion_models(&one_word_each()).unwrap();
        // Three words x six emotions x three features, values in the style of
        // the printed example including negatives.
        let rows: Vec<WordFeatures> = (0..3)
            .map(|w| {
                let mut r = [[0.0; 3]; 6];
                for (e, row) in r.iter_mut().enumerate() {
                    *row = [0.0012 * (w + 1) as f64, -0.0247 + e as f64 * 0.01, 0.0009];
                }
                r
            })
            .collect();
        let result = models.classify_feature_rows(&rows);
        assert!(result.probabilities.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn csv_has_six_rows_per_word() {
        let models = train_emotion_models(&one_word_each()).unwrap();
        let mut buf = Vec::new();
        models.table().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("word,emotion,mi,chi,tfidf\n"));
        assert_eq!(text.lines().count(), 1 + 6 * 6);
    }

    #[test]
    fn json_round_trip() {
        let models = train_emotion_models(&one_word_each()).unwrap();
        let mut buf = Vec::new();
        models.save_json(&mut buf).unwrap();
        assert_eq!(EmotionModels::load_json(&buf).unwrap(), models);
    }

    proptest! {
        #[test]
        fn chi_nonnegative_and_zero_iff_independent(a in 0u32..50, b in 0u32..50, c in 0u32..50, d in 0u32..50) {
            let (a, b, c, d) = (a as f64, b as f64, c as f64, d as f64);
            if let Ok(v) = chi_square(a, b, c, d, a + b + c + d) {
                prop_assert!(v >= 0.0);
                prop_assert_eq!(v == 0.0, a * d == b * c);
            }
        }

        #[test]
        fn jaccard_in_unit_interval(m11 in 0u32..100, m10 in 0u32..100, m01 in 0u32..100) {
            if let Ok(j) = jaccard_emission(m11 as f64, m10 as f64, m01 as f64) {
                prop_assert!((0.0..=1.0).contains(&j));
            }
        }

        #[test]
        fn argmax_invariant_under_positive_scaling(
            scores in prop::array::uniform6(-1e3f64..0.0),
            exp in -10i32..10,
            mantissa in 1u32..4,
        ) {
            // Products by powers of two (times small odd integers) stay exact
            // enough here that no new ties appear.
            let scale = mantissa as f64 * 2f64.powi(exp);
            let scaled: Vec<f64> = scores.iter().map(|s| s * scale).collect();
            prop_assert_eq!(argmax_first(&scores), argmax_first(&scaled));
        }
    }
}
