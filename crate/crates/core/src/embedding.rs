//! Skip-gram word embeddings trained with negative sampling.
//!
//! For a (center, context) pair with center input vector `v`, context output
//! vector `u_o` and sampled negative output vectors `u_k`, the per-pair loss is
//!
//! ```text
//! L = -ln σ(u_o·v) - Σ_k ln σ(-u_k·v)
//! ```
//!
//! Negatives are drawn from the unigram distribution raised to the 3/4 power.
//! The learning rate decays linearly towards zero over all training steps.
//!
//! # Text format
//!
//! A header line `N vocab_size`, then one line per word: the word followed by
//! its `N` vector components, space separated. Frequency counts are not
//! persisted.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::util::{cosine, dot, log_sigmoid, sigmoid};

const MIN_LR_FRACTION: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("no word survives the min-count filter")]
    EmptyVocabulary,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("word `{0}` is not in the vocabulary")]
    OutOfVocabulary(String),
    #[error("embedding file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub negative: usize,
    pub learning_rate: f64,
    pub min_count: u64,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            window: 5,
            epochs: 5,
            negative: 5,
            learning_rate: 0.025,
            min_count: 2,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    dim: usize,
    window: usize,
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
    loss_history: Vec<f64>,
}

/// Per-pair negative-sampling loss.
pub fn sgns_loss(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> f64 {
    -log_sigmoid(dot(context, center))
        - negatives
            .iter()
            .map(|u| log_sigmoid(-dot(u, center)))
            .sum::<f64>()
}

/// Analytic gradient of [`sgns_loss`] with respect to each argument.
#[derive(Debug, Clone, PartialEq)]
pub struct SgnsGradient {
    pub center: Vec<f64>,
    pub context: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

pub fn sgns_gradient(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> SgnsGradient {
    let g_pos = sigmoid(dot(context, center)) - 1.0;
    let mut grad_center: Vec<f64> = context.iter().map(|u| g_pos * u).collect();
    let grad_context = center.iter().map(|v| g_pos * v).collect();
    let mut grad_negs = Vec::with_capacity(negatives.len());
    for u in negatives {
        let g = sigmoid(dot(u, center));
        for (gc, x) in grad_center.iter_mut().zip(u.iter()) {
            *gc += g * x;
        }
        grad_negs.push(center.iter().map(|v| g * v).collect());
    }
    SgnsGradient {
        center: grad_center,
        context: grad_context,
        negatives: grad_negs,
    }
}

/// Train skip-gram vectors over pre-segmented sentences.
pub fn train_embeddings<S: AsRef<str>>(
    corpus: &[Vec<S>],
    config: &EmbeddingConfig,
) -> Result<EmbeddingModel, EmbeddingError> {
    if config.dim == 0 || config.window == 0 || config.learning_rate <= 0.0 {
        return Err(EmbeddingError::Config(
            "dim, window and learning_rate must be positive".into(),
        ));
    }

    let mut freq: HashMap<&str, u64> = HashMap::new();
    for sentence in corpus {
        for w in sentence {
            *freq.entry(w.as_ref()).or_default() += 1;
        }
    }
    let mut vocab: Vec<(&str, u64)> = freq
        .into_iter()
        .filter(|&(_, n)| n >= config.min_count.max(1))
        .collect();
    if vocab.is_empty() {
        return Err(EmbeddingError::EmptyVocabulary);
    }
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));

    let words: Vec<String> = vocab.iter().map(|(w, _)| w.to_string()).collect();
    let counts: Vec<u64> = vocab.iter().map(|&(_, n)| n).collect();
    let index: HashMap<String, usize> = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i))
        .collect();
    let sentences: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| s.iter().filter_map(|w| index.get(w.as_ref()).copied()).collect())
        .collect();

    let dim = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut input: Vec<f64> = (0..words.len() * dim)
        .map(|_| (rng.gen::<f64>() - 0.5) / dim as f64)
        .collect();
    let mut output = vec![0.0; words.len() * dim];
    let noise = WeightedIndex::new(counts.iter().map(|&n| (n as f64).powf(0.75)))
        .expect("counts are positive");

    let tokens: usize = sentences.iter().map(Vec::len).sum();
    let total_steps = (tokens * config.epochs).max(1) as f64;
    let mut step = 0usize;
    let mut loss_history = Vec::with_capacity(config.epochs);
    let mut grad = vec![0.0; dim];
    let mut negatives = Vec::with_capacity(config.negative);

    for _ in 0..config.epochs {
        let (mut epoch_loss, mut pairs) = (0.0, 0usize);
        for sentence in &sentences {
            for (i, &center) in sentence.iter().enumerate() {
                let lr = config.learning_rate
                    * (1.0 - step as f64 / total_steps).max(MIN_LR_FRACTION);
                step += 1;
                let reach = config.window - rng.gen_range(0..config.window);
                let lo = i.saturating_sub(reach);
                let hi = (i + reach).min(sentence.len() - 1);
                for (j, &context) in sentence.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    negatives.clear();
                    for _ in 0..config.negative {
                        let k = noise.sample(&mut rng);
                        if k != context {
                            negatives.push(k);
                        }
                    }
                    epoch_loss += sgd_pair(
                        &mut input[center * dim..(center + 1) * dim],
                        &mut output,
                        dim,
                        context,
                        &negatives,
                        lr,
                        &mut grad,
                    );
                    pairs += 1;
                }
            }
        }
        loss_history.push(if pairs > 0 {
            epoch_loss / pairs as f64
        } else {
            0.0
        });
    }

    Ok(EmbeddingModel {
        dim,
        window: config.window,
        words,
        counts,
        index,
        vectors: input,
        loss_history,
    })
}

/// One SGD step on a (center, context, negatives) group; returns the loss
/// evaluated before the update.
fn sgd_pair(
    center: &mut [f64],
    output: &mut [f64],
    dim: usize,
    context: usize,
    negatives: &[usize],
    lr: f64,
    grad: &mut [f64],
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    let targets = std::iter::once((context, 1.0)).chain(negatives.iter().map(|&k| (k, 0.0)));
    for (target, label) in targets {
        let u = &mut output[target * dim..(target + 1) * dim];
        let score = dot(u, center);
        loss -= if label > 0.0 {
            log_sigmoid(score)
        } else {
            log_sigmoid(-score)
        };
        let g = sigmoid(score) - label;
        for d in 0..dim {
            grad[d] += g * u[d];
            u[d] -= lr * g * center[d];
        }
    }
    for (v, g) in center.iter_mut().zip(grad.iter()) {
        *v -= lr * g;
    }
    loss
}

impl EmbeddingModel {
    /// Build a model from explicit vectors; every vector must have `dim`
    /// finite components.
    pub fn from_vectors(
        dim: usize,
        entries: Vec<(String, Vec<f64>)>,
    ) -> Result<Self, EmbeddingError> {
        let mut model = Self {
            dim,
            window: 0,
            words: Vec::with_capacity(entries.len()),
            counts: vec![0; entries.len()],
            index: HashMap::with_capacity(entries.len()),
            vectors: Vec::with_capacity(entries.len() * dim),
            loss_history: Vec::new(),
        };
        for (word, vector) in entries {
            if vector.len() != dim || vector.iter().any(|x| !x.is_finite()) {
                return Err(EmbeddingError::Config(format!(
                    "vector for `{word}` must have {dim} finite components"
                )));
            }
            if model.index.insert(word.clone(), model.words.len()).is_some() {
                return Err(EmbeddingError::Config(format!("duplicate word `{word}`")));
            }
            model.words.push(word);
            model.vectors.extend(vector);
        }
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn count(&self, word: &str) -> Option<u64> {
        self.index.get(word).map(|&i| self.counts[i])
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// Mean loss per training pair, one entry per epoch.
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    pub fn vector(&self, word: &str) -> Option<&[f64]> {
        self.index.get(word).map(|&i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    fn require(&self, word: &str) -> Result<&[f64], EmbeddingError> {
        self.vector(word)
            .ok_or_else(|| EmbeddingError::OutOfVocabulary(word.to_string()))
    }

    /// Cosine similarity of two vocabulary words.
    pub fn similarity(&self, w1: &str, w2: &str) -> Result<f64, EmbeddingError> {
        Ok(cosine(self.require(w1)?, self.require(w2)?))
    }

    /// Vocabulary ranked by cosine similarity to `V(a) - V(b) + V(c)`, with
    /// the three query words left out. Ties are ordered by word.
    pub fn analogy(&self, a: &str, b: &str, c: &str) -> Result<Vec<(String, f64)>, EmbeddingError> {
        let (va, vb, vc) = (self.require(a)?, self.require(b)?, self.require(c)?);
        let target: Vec<f64> = (0..self.dim).map(|d| va[d] - vb[d] + vc[d]).collect();
        Ok(self.rank_against(&target, &[a, b, c]))
    }

    /// The `n` words closest to `word`, excluding itself.
    pub fn most_similar(&self, word: &str, n: usize) -> Result<Vec<(String, f64)>, EmbeddingError> {
        let v = self.require(word)?.to_vec();
        let mut ranked = self.rank_against(&v, &[word]);
        ranked.truncate(n);
        Ok(ranked)
    }

    fn rank_against(&self, target: &[f64], exclude: &[&str]) -> Vec<(String, f64)> {
        let mut ranked: Vec<(String, f64)> = self
            .words
            .iter()
            .enumerate()
            .filter(|(_, w)| !exclude.contains(&w.as_str()))
            .map(|(i, w)| (w.clone(), cosine(self.row(i), target)))
            .collect();
        ranked.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
        ranked
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<(), EmbeddingError> {
        writeln!(w, "{} {}", self.dim, self.words.len())?;
        for (i, word) in self.words.iter().enumerate() {
            write!(w, "{word}")?;
            for x in self.row(i) {
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn load<R: Read>(r: R) -> Result<Self, EmbeddingError> {
        let mut lines = BufReader::new(r).lines();
        let bad = |line: usize, message: &str| EmbeddingError::Format {
            line,
            message: message.to_string(),
        };
        let header = lines.next().ok_or_else(|| bad(1, "missing header"))??;
        let (dim, n) = match header.split_whitespace().collect::<Vec<_>>()[..] {
            [d, n] => (
                d.parse::<usize>().map_err(|_| bad(1, "bad dimension"))?,
                n.parse::<usize>().map_err(|_| bad(1, "bad vocabulary size"))?,
            ),
            _ => return Err(bad(1, "expected `N vocab_size`")),
        };
        let mut entries = Vec::with_capacity(n);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let word = fields.next().unwrap_or_default().to_string();
            let vector = crate::util::parse_floats(fields)
                .map_err(|_| bad(i + 2, "bad vector component"))?;
            entries.push((word, vector));
        }
        if entries.len() != n {
            return Err(bad(0, &format!("header says {n} words, found {}", entries.len())));
        }
        Self::from_vectors(dim, entries)
    }

    pub fn save_to_path(&self, path: impl AsRef<Path>) -> Result<(), EmbeddingError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.save(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_path(path: impl AsRef<Path>) -> Result<Self, EmbeddingError> {
        Self::load(std::fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(entries: &[(&str, &[f64])]) -> EmbeddingModel {
        EmbeddingModel::from_vectors(
            entries[0].1.len(),
            entries.iter().map(|(w, v)| (w.to_string(), v.to_vec())).collect(),
        )
        .unwrap()
    }

    #[test]
    fn cosine_cases() {
        let m = toy(&[("x", &[1.0, 0.0]), ("y", &[0.0, 1.0]), ("p", &[1.0, 1.0]), ("q", &[2.0, 2.0])]);
        assert!(m.similarity("x", "y").unwrap().abs() < 1e-15);
        assert!((m.similarity("p", "q").unwrap() - 1.0).abs() < 1e-12);
        assert!((m.similarity("x", "x").unwrap() - 1.0).abs() < 1e-12);
        match m.similarity("x", "nope") {
            Err(EmbeddingError::OutOfVocabulary(w)) => assert_eq!(w, "nope"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn analogy_with_equal_a_b_ranks_by_c() {
        let m = toy(&[
            ("a", &[1.0, 0.2, 0.0]),
            ("c", &[0.0, 1.0, 0.3]),
            ("d", &[0.1, 0.9, 0.4]),
            ("e", &[1.0, 0.0, 0.0]),
            ("f", &[-0.5, 0.5, 1.0]),
        ]);
        let via_analogy: Vec<String> = m.analogy("a", "a", "c").unwrap().into_iter().map(|x| x.0).collect();
        let mut direct: Vec<(String, f64)> = ["d", "e", "f"]
            .iter()
            .map(|w| (w.to_string(), m.similarity(w, "c").unwrap()))
            .collect();
        direct.sort_by(|x, y| y.1.total_cmp(&x.1));
        let direct: Vec<String> = direct.into_iter().map(|x| x.0).collect();
        assert_eq!(via_analogy, direct);
    }

    #[test]
    fn analogy_excludes_query_words() {
        let m = toy(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0]), ("c", &[1.0, 1.0])]);
        assert!(m.analogy("a", "b", "c").unwrap().is_empty());
        assert!(m.analogy("a", "b", "zzz").is_err());
    }

    #[test]
    fn min_count_filters_rare_words() {
        let corpus = vec![vec!["a", "b", "a", "b", "q"]];
        let cfg = EmbeddingConfig { dim: 4, epochs: 1, ..Default::default() };
        let m = train_embeddings(&corpus, &cfg).unwrap();
        assert!(!m.contains("q"));
        assert_eq!(m.count("a"), Some(2));
    }

    #[test]
    fn all_filtered_is_error() {
        let corpus = vec![vec!["a", "b"]];
        assert!(matches!(
            train_embeddings(&corpus, &EmbeddingConfig::default()),
            Err(EmbeddingError::EmptyVocabulary)
        ));
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let corpus: Vec<Vec<&str>> = (0..50).map(|i| vec!["x", "y", if i % 2 == 0 { "z" } else { "w" }]).collect();
        let cfg = EmbeddingConfig { dim: 8, epochs: 2, ..Default::default() };
        let a = train_embeddings(&corpus, &cfg).unwrap();
        let b = train_embeddings(&corpus, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shared_contexts_give_similar_vectors() {
        let mut corpus: Vec<Vec<&str>> = Vec::new();
        for i in 0..400 {
            let animal = ["cat", "dog"][i % 2];
            let machine = ["car", "truck"][i % 2];
            corpus.push(vec![animal, ["eats", "sleeps"][i / 2 % 2]]);
            corpus.push(vec![machine, ["drives", "parks"][i / 2 % 2]]);
        }
        let cfg = EmbeddingConfig { dim: 16, epochs: 5, window: 2, ..Default::default() };
        let m = train_embeddings(&corpus, &cfg).unwrap();
        let near = m.similarity("cat", "dog").unwrap();
        let far = m.similarity("cat", "car").unwrap();
        assert!(near > far, "near {near} far {far}");
        let h = m.loss_history();
        assert!(h.last().unwrap() < h.first().unwrap());
    }

    #[test]
    fn sgd_step_follows_analytic_gradient() {
        let dim = 3;
        let center = vec![0.1, -0.2, 0.3];
        let mut output = vec![0.2, 0.1, -0.1, -0.3, 0.4, 0.05, 0.0, 0.2, 0.2];
        let lr = 0.05;
        let negs = [&output[3..6], &output[6..9]];
        let g = sgns_gradient(&center, &output[0..3], &negs);
        let loss = sgns_loss(&center, &output[0..3], &negs);

        let mut c = center.clone();
        let mut scratch = vec![0.0; dim];
        let step_loss = sgd_pair(&mut c, &mut output.clone(), dim, 0, &[1, 2], lr, &mut scratch);
        assert!((step_loss - loss).abs() < 1e-12);
        for d in 0..dim {
            assert!((c[d] - (center[d] - lr * g.center[d])).abs() < 1e-12);
        }
        let before = output.clone();
        sgd_pair(&mut center.clone(), &mut output, dim, 0, &[1, 2], lr, &mut scratch);
        for d in 0..dim {
            assert!((output[d] - (before[d] - lr * g.context[d])).abs() < 1e-12);
            assert!((output[3 + d] - (before[3 + d] - lr * g.negatives[0][d])).abs() < 1e-12);
        }
    }

    #[test]
    fn text_format_round_trip() {
        let corpus: Vec<Vec<&str>> = (0..30).map(|_| vec!["你好", "世界", "和平"]).collect();
        let cfg = EmbeddingConfig { dim: 5, epochs: 1, ..Default::default() };
        let m = train_embeddings(&corpus, &cfg).unwrap();
        let mut buf = Vec::new();
        m.save(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("5 3\n"));
        let loaded = EmbeddingModel::load(buf.as_slice()).unwrap();
        assert_eq!(loaded.words(), m.words());
        for w in m.words() {
            assert_eq!(loaded.vector(w), m.vector(w));
        }
    }

    proptest::proptest! {
        #[test]
        fn gradient_matches_finite_differences(
            center in proptest::collection::vec(-1.0f64..1.0, 4),
            context in proptest::collection::vec(-1.0f64..1.0, 4),
            negatives in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 4), 1..4),
        ) {
            let refs: Vec<&[f64]> = negatives.iter().map(Vec::as_slice).collect();
            let g = sgns_gradient(&center, &context, &refs);
            let h = 1e-5;
            for j in 0..4 {
                let mut up = center.clone();
                let mut down = center.clone();
                up[j] += h;
                down[j] -= h;
                let numeric = (sgns_loss(&up, &context, &refs) - sgns_loss(&down, &context, &refs)) / (2.0 * h);
                proptest::prop_assert!((numeric - g.center[j]).abs() < 1e-6);
            }
            proptest::prop_assert!(sgns_loss(&center, &context, &refs) >= 0.0);
        }
    }
}
