//! Supervised 4-state (B, M, E, S) HMM word segmenter.
//!
//! Parameters are plain relative frequencies over a tagged corpus. Emissions
//! use add-one smoothing over the training character set plus one shared
//! bucket for characters never seen in training, so every character has a
//! nonzero emission under every state.
//!
//! Decoding is Viterbi in log space. Structurally impossible transitions
//! (for example B→S, or a sentence ending in M) are hard constraints; ties
//! between equally likely paths go to the lower state in B < M < E < S order.
//!
//! # Model file
//!
//! ```text
//! seg-hmm v1
//! pi <B> <M> <E> <S>
//! trans B <B> <M> <E> <S>      (one line per source state, B M E S order)
//! unseen <B> <M> <E> <S>       (probability reserved for unknown characters)
//! vocab <n>
//! U+XXXX <B> <M> <E> <S>       (n lines, sorted by code point)
//! ```

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::corpus::{Tag, TaggedSentence};

const HEADER: &str = "seg-hmm v1";
const ADD_K: f64 = 1.0;
const SUM_TOLERANCE: f64 = 1e-9;
/// Log-probability used for model zeros when no strictly positive path exists.
const RELAXED_LOG_FLOOR: f64 = -1e9;

#[derive(Debug, Error)]
pub enum SegError {
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("model file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationHmm {
    pi: [f64; 4],
    trans: [[f64; 4]; 4],
    vocab: Vec<char>,
    emit: Vec<[f64; 4]>,
    unseen: [f64; 4],
    index: HashMap<char, usize>,
}

impl SegmentationHmm {
    /// Assemble a model from explicit parameters, checking that `pi`, each
    /// row of `trans`, and each state's emissions plus its unseen mass sum
    /// to one.
    pub fn from_parts(
        pi: [f64; 4],
        trans: [[f64; 4]; 4],
        emissions: Vec<(char, [f64; 4])>,
        unseen: [f64; 4],
    ) -> Result<Self, SegError> {
        let mut sorted: BTreeMap<char, [f64; 4]> = BTreeMap::new();
        for (c, e) in emissions {
            if sorted.insert(c, e).is_some() {
                return Err(SegError::InvalidModel(format!("duplicate character {c:?}")));
            }
        }
        let vocab: Vec<char> = sorted.keys().copied().collect();
        let emit: Vec<[f64; 4]> = sorted.into_values().collect();
        let index = vocab.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let model = Self {
            pi,
            trans,
            vocab,
            emit,
            unseen,
            index,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), SegError> {
        let check = |what: &str, values: &mut dyn Iterator<Item = f64>| {
            let mut sum = 0.0;
            for v in values {
                if !v.is_finite() || v < 0.0 {
                    return Err(SegError::InvalidModel(format!("{what} has entry {v}")));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(SegError::InvalidModel(format!("{what} sums to {sum}")));
            }
            Ok(())
        };
        check("pi", &mut self.pi.iter().copied())?;
        for tag in Tag::ALL {
            let s = tag.index();
            check(&format!("trans row {tag}"), &mut self.trans[s].iter().copied())?;
            check(
                &format!("emissions of {tag}"),
                &mut self
                    .emit
                    .iter()
                    .map(|e| e[s])
                    .chain(std::iter::once(self.unseen[s])),
            )?;
        }
        Ok(())
    }

    pub fn pi(&self) -> &[f64; 4] {
        &self.pi
    }

    pub fn trans(&self) -> &[[f64; 4]; 4] {
        &self.trans
    }

    pub fn transition(&self, from: Tag, to: Tag) -> f64 {
        self.trans[from.index()][to.index()]
    }

    /// Emission probability, using the reserved unseen mass for characters
    /// outside the training vocabulary.
    pub fn emission(&self, state: Tag, c: char) -> f64 {
        match self.index.get(&c) {
            Some(&i) => self.emit[i][state.index()],
            None => self.unseen[state.index()],
        }
    }

    pub fn unseen_mass(&self, state: Tag) -> f64 {
        self.unseen[state.index()]
    }

    pub fn vocab(&self) -> &[char] {
        &self.vocab
    }

    pub fn knows(&self, c: char) -> bool {
        self.index.contains_key(&c)
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<(), SegError> {
        let row = |v: &[f64; 4]| {
            v.iter()
                .map(|x| format!("{x:e}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        writeln!(w, "{HEADER}")?;
        writeln!(w, "pi {}", row(&self.pi))?;
        for tag in Tag::ALL {
            writeln!(w, "trans {tag} {}", row(&self.trans[tag.index()]))?;
        }
        writeln!(w, "unseen {}", row(&self.unseen))?;
        writeln!(w, "vocab {}", self.vocab.len())?;
        for (c, e) in self.vocab.iter().zip(&self.emit) {
            writeln!(w, "U+{:04X} {}", *c as u32, row(e))?;
        }
        Ok(())
    }

    pub fn load<R: Read>(r: R) -> Result<Self, SegError> {
        let mut lines = BufReader::new(r).lines().enumerate();
        let mut next = |expect: &str| -> Result<(usize, Vec<String>), SegError> {
            let (i, line) = lines.next().ok_or_else(|| SegError::Format {
                line: 0,
                message: format!("unexpected end of file, expected {expect}"),
            })?;
            Ok((i + 1, line?.split_whitespace().map(str::to_string).collect()))
        };
        let bad = |line: usize, message: String| SegError::Format { line, message };

        let (line, header) = next("header")?;
        if header.join(" ") != HEADER {
            return Err(bad(line, format!("expected `{HEADER}`")));
        }
        let four = |line: usize, fields: &[String]| -> Result<[f64; 4], SegError> {
            if fields.len() != 4 {
                return Err(bad(line, format!("expected 4 numbers, found {}", fields.len())));
            }
            let mut out = [0.0; 4];
            for (o, f) in out.iter_mut().zip(fields) {
                *o = f
                    .parse()
                    .map_err(|_| bad(line, format!("bad number `{f}`")))?;
            }
            Ok(out)
        };
        let keyed = |line: usize, fields: &[String], key: &str, skip: usize| {
            if fields.first().map(String::as_str) != Some(key) {
                return Err(bad(line, format!("expected `{key}`")));
            }
            four(line, &fields[skip..])
        };

        let (line, f) = next("pi")?;
        let pi = keyed(line, &f, "pi", 1)?;
        let mut trans = [[0.0; 4]; 4];
        for tag in Tag::ALL {
            let (line, f) = next("trans")?;
            if f.get(1).map(String::as_str) != Some(&tag.to_string()) {
                return Err(bad(line, format!("expected transition row for {tag}")));
            }
            trans[tag.index()] = keyed(line, &f, "trans", 2)?;
        }
        let (line, f) = next("unseen")?;
        let unseen = keyed(line, &f, "unseen", 1)?;
        let (line, f) = next("vocab")?;
        let n: usize = match f.as_slice() {
            [k, n] if k == "vocab" => n
                .parse()
                .map_err(|_| bad(line, format!("bad vocabulary size `{n}`")))?,
            _ => return Err(bad(line, "expected `vocab <n>`".into())),
        };
        let mut emissions = Vec::with_capacity(n);
        for _ in 0..n {
            let (line, f) = next("vocabulary entry")?;
            let code = f
                .first()
                .and_then(|s| s.strip_prefix("U+"))
                .and_then(|h| u32::from_str_radix(h, 16).ok())
                .and_then(char::from_u32)
                .ok_or_else(|| bad(line, "expected `U+XXXX` code point".into()))?;
            emissions.push((code, four(line, &f[1..])?));
        }
        Self::from_parts(pi, trans, emissions, unseen)
    }

    pub fn save_to_path(&self, path: impl AsRef<Path>) -> Result<(), SegError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.save(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_path(path: impl AsRef<Path>) -> Result<Self, SegError> {
        Self::load(std::fs::File::open(path)?)
    }
}

/// Estimate the model from a tagged corpus by counting.
pub fn train_segmenter(corpus: &[TaggedSentence]) -> Result<SegmentationHmm, SegError> {
    let mut initial = [0u64; 4];
    let mut bigrams = [[0u64; 4]; 4];
    let mut per_state = [0u64; 4];
    let mut char_counts: BTreeMap<char, [u64; 4]> = BTreeMap::new();

    for sentence in corpus.iter().filter(|s| !s.is_empty()) {
        let tags = sentence.tags();
        initial[tags[0].index()] += 1;
        for w in tags.windows(2) {
            bigrams[w[0].index()][w[1].index()] += 1;
        }
        for (&c, &t) in sentence.chars().iter().zip(tags) {
            char_counts.entry(c).or_default()[t.index()] += 1;
            per_state[t.index()] += 1;
        }
    }
    let sentences: u64 = initial.iter().sum();
    if sentences == 0 {
        return Err(SegError::EmptyCorpus);
    }

    let pi = initial.map(|n| n as f64 / sentences as f64);

    let mut trans = [[0.0; 4]; 4];
    for from in Tag::ALL {
        let row = &bigrams[from.index()];
        let total: u64 = row.iter().sum();
        trans[from.index()] = if total > 0 {
            row.map(|n| n as f64 / total as f64)
        } else {
            unobserved_row(from)
        };
    }

    let v = char_counts.len() as f64;
    let denom = per_state.map(|n| n as f64 + ADD_K * (v + 1.0));
    let emissions = char_counts
        .into_iter()
        .map(|(c, counts)| {
            let mut e = [0.0; 4];
            for s in 0..4 {
                e[s] = (counts[s] as f64 + ADD_K) / denom[s];
            }
            (c, e)
        })
        .collect();
    let unseen = denom.map(|d| ADD_K / d);
    SegmentationHmm::from_parts(pi, trans, emissions, unseen)
}

/// Row for a state never seen as a transition source: the shortest legal
/// continuation (B/M close the word with E; E/S split evenly over B and S).
fn unobserved_row(from: Tag) -> [f64; 4] {
    match from {
        Tag::B | Tag::M => [0.0, 0.0, 1.0, 0.0],
        Tag::E | Tag::S => [0.5, 0.0, 0.0, 0.5],
    }
}

/// Most likely legal tag sequence for `chars`.
///
/// Paths through zero-probability parameters are excluded. If that leaves no
/// path at all (for example a one-character input under a model that never
/// saw a sentence start with S), the decode is repeated with model zeros
/// replaced by a large finite penalty, so only structural legality remains a
/// hard constraint.
pub fn viterbi_decode(model: &SegmentationHmm, chars: &[char]) -> Vec<Tag> {
    if chars.is_empty() {
        return Vec::new();
    }
    decode_pass(model, chars, true)
        .or_else(|| decode_pass(model, chars, false))
        .expect("a structurally legal path always exists")
}

fn log_param(p: f64, legal: bool, strict: bool) -> f64 {
    if !legal {
        f64::NEG_INFINITY
    } else if p > 0.0 {
        p.ln()
    } else if strict {
        f64::NEG_INFINITY
    } else {
        RELAXED_LOG_FLOOR
    }
}

fn decode_pass(model: &SegmentationHmm, chars: &[char], strict: bool) -> Option<Vec<Tag>> {
    let log_pi: [f64; 4] = Tag::ALL.map(|s| log_param(model.pi[s.index()], s.can_start(), strict));
    let mut log_trans = [[0.0; 4]; 4];
    for p in Tag::ALL {
        for s in Tag::ALL {
            log_trans[p.index()][s.index()] =
                log_param(model.trans[p.index()][s.index()], p.can_precede(s), strict);
        }
    }
    let log_emit = |c: char| Tag::ALL.map(|s| log_param(model.emission(s, c), true, strict));

    let n = chars.len();
    let mut back = vec![[0u8; 4]; n];
    let first = log_emit(chars[0]);
    let mut delta: [f64; 4] = std::array::from_fn(|s| log_pi[s] + first[s]);

    for (t, &c) in chars.iter().enumerate().skip(1) {
        let emit = log_emit(c);
        let mut next = [f64::NEG_INFINITY; 4];
        for s in 0..4 {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0u8;
            for p in 0..4 {
                let cand = delta[p] + log_trans[p][s];
                if cand > best {
                    best = cand;
                    arg = p as u8;
                }
            }
            next[s] = best + emit[s];
            back[t][s] = arg;
        }
        delta = next;
    }

    let mut best = f64::NEG_INFINITY;
    let mut last = None;
    for s in Tag::ALL.into_iter().filter(|s| s.can_end()) {
        if delta[s.index()] > best {
            best = delta[s.index()];
            last = Some(s.index());
        }
    }
    let mut state = last?;
    let mut path = vec![Tag::S; n];
    for t in (0..n).rev() {
        path[t] = Tag::from_index(state).expect("state index < 4");
        state = back[t][state] as usize;
    }
    Some(path)
}

/// Split `chars` into words at E and S tags. Characters left open at the end
/// of an ill-formed sequence form a final word.
pub fn words_from_tags(chars: &[char], tags: &[Tag]) -> Vec<String> {
    let mut words = Vec::new();
    let mut current = String::new();
    for (&c, &t) in chars.iter().zip(tags) {
        if matches!(t, Tag::B | Tag::S) && !current.is_empty() {
            words.push(std::mem::take(&mut current));
        }
        current.push(c);
        if t.can_end() {
            words.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
}

/// Segment a sentence into words; the words concatenate back to the input.
pub fn segment(model: &SegmentationHmm, sentence: &str) -> Vec<String> {
    let chars: Vec<char> = sentence.chars().collect();
    let tags = viterbi_decode(model, &chars);
    words_from_tags(&chars, &tags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{is_legal_sequence, parse_sighan_str};
    use Tag::*;

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn single_two_char_sentence() {
        let model = train_segmenter(&parse_sighan_str("AB").unwrap()).unwrap();
        assert_eq!(model.pi(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(model.transition(B, E), 1.0);
        assert!(model.emission(B, 'A') > model.emission(B, 'B'));
        assert!(model.emission(B, 'A') > model.emission(E, 'A'));
        // vocab {A, B}: (1 + 1) / (1 + 3)
        assert!(approx(model.emission(B, 'A'), 0.5));
        assert!(approx(model.unseen_mass(B), 0.25));
    }

    #[test]
    fn all_single_character_words() {
        let model = train_segmenter(&parse_sighan_str("a b c\nd e").unwrap()).unwrap();
        assert_eq!(model.pi()[S.index()], 1.0);
        assert_eq!(model.transition(S, S), 1.0);
    }

    #[test]
    fn no_middle_tags_means_no_transitions_into_m() {
        let model = train_segmenter(&parse_sighan_str("ab c de\nf gh").unwrap()).unwrap();
        for from in Tag::ALL {
            assert_eq!(model.transition(from, M), 0.0, "{from}->M");
        }
    }

    #[test]
    fn trained_model_satisfies_invariants() {
        let corpus = parse_sighan_str("马克 硕士 毕业于 加州 理工 学院 呀\n我 爱 北京 天安门").unwrap();
        let model = train_segmenter(&corpus).unwrap();
        for from in Tag::ALL {
            let row: f64 = model.trans()[from.index()].iter().sum();
            assert!((row - 1.0).abs() < 1e-9);
            for to in Tag::ALL {
                if !from.can_precede(to) {
                    assert_eq!(model.transition(from, to), 0.0);
                }
            }
            let mass: f64 = model.vocab().iter().map(|&c| model.emission(from, c)).sum::<f64>()
                + model.unseen_mass(from);
            assert!((mass - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_corpus_fails() {
        assert!(matches!(train_segmenter(&[]), Err(SegError::EmptyCorpus)));
    }

    #[test]
    fn length_one_decodes_to_s() {
        let model = train_segmenter(&parse_sighan_str("AB").unwrap()).unwrap();
        assert_eq!(viterbi_decode(&model, &['A']), vec![S]);
        assert_eq!(viterbi_decode(&model, &['z']), vec![S]);
    }

    #[test]
    fn decodes_reference_sentence() {
        let corpus = parse_sighan_str("马克 硕士 毕业于 加州 理工 学院 呀").unwrap();
        let model = train_segmenter(&corpus).unwrap();
        let chars: Vec<char> = "马克硕士毕业于加州理工学院呀".chars().collect();
        assert_eq!(
            viterbi_decode(&model, &chars),
            vec![B, E, B, E, B, M, E, B, E, B, E, B, E, S]
        );
        assert_eq!(
            segment(&model, "马克硕士毕业于加州理工学院呀"),
            vec!["马克", "硕士", "毕业于", "加州", "理工", "学院", "呀"]
        );
    }

    #[test]
    fn tags_to_words() {
        let chars: Vec<char> = "xyz".chars().collect();
        assert_eq!(words_from_tags(&chars, &[B, E, S]), vec!["xy", "z"]);
        assert_eq!(words_from_tags(&chars, &[B, M, M]), vec!["xyz"]);
        assert!(segment(&train_segmenter(&parse_sighan_str("a").unwrap()).unwrap(), "").is_empty());
    }

    #[test]
    fn decoding_is_legal_on_unseen_text() {
        let corpus = parse_sighan_str("我们 喜欢 电影\n这个 演员 很 好").unwrap();
        let model = train_segmenter(&corpus).unwrap();
        let tags = viterbi_decode(&model, &"完全没见过的字符组合xyz".chars().collect::<Vec<_>>());
        assert!(is_legal_sequence(&tags));
    }

    #[test]
    fn save_load_round_trip() {
        let corpus = parse_sighan_str("马克 硕士 毕业于 加州 理工 学院 呀\n a  b").unwrap();
        let model = train_segmenter(&corpus).unwrap();
        let mut buf = Vec::new();
        model.save(&mut buf).unwrap();
        let loaded = SegmentationHmm::load(buf.as_slice()).unwrap();
        assert_eq!(loaded, model);
    }

    #[test]
    fn load_rejects_corrupt_files() {
        assert!(SegmentationHmm::load("nope".as_bytes()).is_err());
        let text = "seg-hmm v1\npi 0.5 0 0 0.6\n";
        assert!(SegmentationHmm::load(text.as_bytes()).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = parse_sighan_str("我们 喜欢 电影\n这个 演员 很 好\n他 说 好").unwrap();
        let a = train_segmenter(&corpus).unwrap();
        let b = train_segmenter(&corpus).unwrap();
        let (mut sa, mut sb) = (Vec::new(), Vec::new());
        a.save(&mut sa).unwrap();
        b.save(&mut sb).unwrap();
        assert_eq!(sa, sb);
    }

    proptest::proptest! {
        // Any text, seen or not, decodes to a legal sequence that rejoins.
        #[test]
        fn decode_is_legal_and_lossless(
            training in proptest::collection::vec("[甲乙丙丁]{1,4}( [甲乙丙丁]{1,4}){0,5}", 1..12),
            input in "[甲乙丙丁戊a ]{1,16}",
        ) {
            let corpus = parse_sighan_str(&training.join("\n")).unwrap();
            let model = train_segmenter(&corpus).unwrap();
            let chars: Vec<char> = input.chars().filter(|c| !c.is_whitespace()).collect();
            if !chars.is_empty() {
                let tags = viterbi_decode(&model, &chars);
                proptest::prop_assert!(is_legal_sequence(&tags));
                proptest::prop_assert_eq!(tags.len(), chars.len());
            }
            let text: String = chars.iter().collect();
            proptest::prop_assert_eq!(segment(&model, &text).concat(), text);
        }
    }
}
