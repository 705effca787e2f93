//! Per-comment troll-detection features F0..F18.
//!
//! | index | name | source |
//! |---|---|---|
//! | F0..F3 | follower, following, original_post, urank | profile counts |
//! | F4 | verified | 0/1 |
//! | F5, F6 | like_count, floor_number | comment |
//! | F7 | description | 1 iff nonempty after trimming |
//! | F8 | freqComment | see [`freq_comment_flags`] |
//! | F9, F10 | ffRatio, foRatio | see [`ff_ratio`] |
//! | F11 | sentiment | comment score in `[0, 1]` |
//! | F12 | diffOriginalSenti | F11 minus the original tweet's score |
//! | F13..F18 | happy, sad, anger, disgust, fear, surprise | emotion probabilities |

use std::collections::HashMap;
use std::io::{Read, Write};

use thiserror::Error;

use crate::corpus::{CommentRecord, Emotion, RejectReason, TrollLabel};

pub const FEATURE_COUNT: usize = 19;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "follower",
    "following",
    "original_post",
    "urank",
    "verified",
    "like_count",
    "floor_number",
    "description",
    "freqComment",
    "ffRatio",
    "foRatio",
    "sentiment",
    "diffOriginalSenti",
    "happy",
    "sad",
    "anger",
    "disgust",
    "fear",
    "surprise",
];

pub const F_FREQ_COMMENT: usize = 8;
pub const F_FF_RATIO: usize = 9;
pub const F_FO_RATIO: usize = 10;
pub const F_SENTIMENT: usize = 11;
pub const F_DIFF_ORIGINAL: usize = 12;
pub const F_EMOTIONS: usize = 13;

/// Emotion behind each of F13..F18.
pub const EMOTION_FEATURE_ORDER: [Emotion; 6] = [
    Emotion::Happiness,
    Emotion::Sadness,
    Emotion::Anger,
    Emotion::Disgust,
    Emotion::Fear,
    Emotion::Surprise,
];

/// Ratio value used when the follower count is zero and the numerator is not.
pub const RATIO_CAP: f64 = 1e6;

/// Sentiment assumed for an original tweet that is missing or unscoreable.
pub const NEUTRAL_SENTIMENT: f64 = 0.5;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("feature CSV row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("feature CSV header must be F0..F18,label")]
    Header,
    #[error("row {0} has no label")]
    Unlabeled(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: [f64; FEATURE_COUNT],
    pub label: Option<TrollLabel>,
}

impl FeatureVector {
    pub fn get(&self, index: usize) -> f64 {
        self.values[index]
    }

    /// Values of the given feature indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Vec<f64> {
        indices.iter().map(|&i| self.values[i]).collect()
    }
}

/// Text-level scores needed for F11..F18.
#[derive(Debug, Clone, PartialEq)]
pub struct CommentScores {
    pub sentiment: f64,
    /// Probabilities in [`Emotion::ALL`] order.
    pub emotions: [f64; 6],
    pub emotion: Option<Emotion>,
}

/// Anything that can turn raw comment text into scores, or reject it.
pub trait CommentScorer {
    fn score_text(&self, text: &str) -> Result<CommentScores, RejectReason>;
}

pub fn ff_ratio(following: u64, follower: u64) -> f64 {
    ratio(following, follower)
}

pub fn fo_ratio(original_post: u64, follower: u64) -> f64 {
    ratio(original_post, follower)
}

fn ratio(numerator: u64, follower: u64) -> f64 {
    match (numerator, follower) {
        (0, _) => 0.0,
        (_, 0) => RATIO_CAP,
        (n, f) => n as f64 / f as f64,
    }
}

pub fn diff_original_senti(comment_score: f64, original_score: f64) -> f64 {
    comment_score - original_score
}

/// Frequent-comment flag per record. Within each tweet, users with more than
/// one comment are collected; a user is flagged when their count exceeds the
/// median of those counts.
pub fn freq_comment_flags(records: &[CommentRecord]) -> Vec<bool> {
    let mut per_user: HashMap<(&str, &str), usize> = HashMap::new();
    for r in records {
        *per_user.entry((&r.tweet_id, &r.uid)).or_default() += 1;
    }
    let mut repeat_counts: HashMap<&str, Vec<usize>> = HashMap::new();
    for (&(tweet, _), &n) in &per_user {
        if n > 1 {
            repeat_counts.entry(tweet).or_default().push(n);
        }
    }
    let medians: HashMap<&str, f64> = repeat_counts
        .into_iter()
        .filter_map(|(tweet, counts)| repeat_median(&counts).map(|m| (tweet, m)))
        .collect();
    records
        .iter()
        .map(|r| {
            let n = per_user[&(r.tweet_id.as_str(), r.uid.as_str())];
            n > 1 && medians.get(r.tweet_id.as_str()).is_some_and(|&m| is_frequent(n, m))
        })
        .collect()
}

/// Median of the per-user counts above one; `None` when there are none.
pub fn repeat_median(counts: &[usize]) -> Option<f64> {
    let mut counts: Vec<usize> = counts.iter().copied().filter(|&n| n > 1).collect();
    if counts.is_empty() {
        return None;
    }
    counts.sort_unstable();
    let m = counts.len();
    Some(if m % 2 == 1 {
        counts[m / 2] as f64
    } else {
        (counts[m / 2 - 1] + counts[m / 2]) as f64 / 2.0
    })
}

/// "More comments than the median" is strict.
pub fn is_frequent(count: usize, median: f64) -> bool {
    count > 1 && count as f64 > median
}

/// Features for one record given its precomputed parts.
pub fn feature_vector(
    record: &CommentRecord,
    freq_comment: bool,
    scores: &CommentScores,
    original_sentiment: f64,
) -> FeatureVector {
    let mut v = [0.0; FEATURE_COUNT];
    v[0] = record.followers_count as f64;
    v[1] = record.follow_count as f64;
    v[2] = record.status_count as f64;
    v[3] = record.urank as f64;
    v[4] = flag(record.verified);
    v[5] = record.like_count as f64;
    v[6] = record.floor_number as f64;
    v[7] = flag(!record.description.trim().is_empty());
    v[F_FREQ_COMMENT] = flag(freq_comment);
    v[F_FF_RATIO] = ff_ratio(record.follow_count, record.followers_count);
    v[F_FO_RATIO] = fo_ratio(record.status_count, record.followers_count);
    v[F_SENTIMENT] = scores.sentiment;
    v[F_DIFF_ORIGINAL] = diff_original_senti(scores.sentiment, original_sentiment);
    for (i, e) in EMOTION_FEATURE_ORDER.iter().enumerate() {
        v[F_EMOTIONS + i] = scores.emotions[e.index()];
    }
    FeatureVector {
        values: v,
        label: record.label,
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureMatrix {
    pub vectors: Vec<FeatureVector>,
    /// Input index of each kept vector.
    pub kept: Vec<usize>,
    /// Input index and reason of each dropped record.
    pub dropped: Vec<(usize, RejectReason)>,
}

/// Build one vector per scoreable record. `originals` maps a tweet id to the
/// original tweet text; a missing or rejected original counts as neutral.
pub fn build_feature_matrix(
    records: &[CommentRecord],
    scorer: &dyn CommentScorer,
    originals: &HashMap<String, String>,
) -> FeatureMatrix {
    let flags = freq_comment_flags(records);
    let mut original_scores: HashMap<&str, f64> = HashMap::new();
    let mut out = FeatureMatrix::default();
    for (i, (record, &freq)) in records.iter().zip(&flags).enumerate() {
        let original = *original_scores
            .entry(record.tweet_id.as_str())
            .or_insert_with(|| {
                originals
                    .get(&record.tweet_id)
                    .and_then(|t| scorer.score_text(t).ok())
                    .map_or(NEUTRAL_SENTIMENT, |s| s.sentiment)
            });
        match scorer.score_text(&record.text) {
            Ok(scores) => {
                out.vectors.push(feature_vector(record, freq, &scores, original));
                out.kept.push(i);
            }
            Err(reason) => out.dropped.push((i, reason)),
        }
    }
    out
}

/// Write vectors as CSV with header `F0..F18,label`; labels are 1, 0 or empty.
pub fn write_feature_csv<W: Write>(w: W, vectors: &[FeatureVector]) -> Result<(), FeatureError> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (0..FEATURE_COUNT).map(|i| format!("F{i}")).collect();
    header.push("label".into());
    wtr.write_record(&header)?;
    for v in vectors {
        let mut row: Vec<String> = v.values.iter().map(f64::to_string).collect();
        row.push(match v.label {
            Some(TrollLabel::Troll) => "1".into(),
            Some(TrollLabel::NonTroll) => "0".into(),
            None => String::new(),
        });
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_feature_csv<R: Read>(r: R) -> Result<Vec<FeatureVector>, FeatureError> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    let expected = (0..FEATURE_COUNT)
        .map(|i| format!("F{i}"))
        .chain(std::iter::once("label".to_string()));
    if header.len() != FEATURE_COUNT + 1 || !header.iter().zip(expected).all(|(h, e)| h.trim() == e) {
        return Err(FeatureError::Header);
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut values = [0.0; FEATURE_COUNT];
        for (i, v) in values.iter_mut().enumerate() {
            *v = rec[i]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| FeatureError::Row {
                    row,
                    message: format!("F{i} is not a finite number: `{}`", &rec[i]),
                })?;
        }
        let label = match rec[FEATURE_COUNT].trim() {
            "" => None,
            s => Some(s.parse().map_err(|message| FeatureError::Row { row, message })?),
        };
        out.push(FeatureVector { values, label });
    }
    Ok(out)
}

/// Rows restricted to `active` features, with labels as `true` for trolls.
pub fn labeled_matrix(
    vectors: &[FeatureVector],
    active: &[usize],
) -> Result<(Vec<Vec<f64>>, Vec<bool>), FeatureError> {
    let mut x = Vec::with_capacity(vectors.len());
    let mut y = Vec::with_capacity(vectors.len());
    for (i, v) in vectors.iter().enumerate() {
        y.push(v.label.ok_or(FeatureError::Unlabeled(i))?.is_troll());
        x.push(v.select(active));
    }
    Ok((x, y))
}
