//! Seeded synthetic data.
//!
//! The demo corpora exercise the full text pipeline on a small closed
//! vocabulary. The labeled matrices back the detection and feature-selection
//! experiments; troll profiles follow the qualitative picture of hired
//! commenters: few followers, many followings and posts, and strongly
//! polarized text.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::classify::{train_troll_model, BoostConfig, ClassifierConfig};
use crate::corpus::{
    CommentRecord, Emotion, EmotionDocument, Polarity, Preprocessor, SentimentDocument, TaggedSentence,
    TrollLabel, write_comment_csv,
};
use crate::embedding::EmbeddingConfig;
use crate::features::{
    build_feature_matrix, feature_vector, CommentScores, FeatureVector, FEATURE_COUNT, NEUTRAL_SENTIMENT,
};
use crate::pipeline::{Pipeline, PipelineError, TextScorer, Tokenizer};
use crate::seg_hmm::train_segmenter;
use crate::service::ScoreRequest;

/// A segmented sentence whose BMES tags are B E B E B M E B E B E B E S.
pub const REFERENCE_SENTENCE: &str = "马克 硕士 毕业于 加州 理工 学院 呀";

const POSITIVE: [&str; 8] = ["喜欢", "支持", "精彩", "感谢", "优秀", "漂亮", "厉害", "点赞"];
const NEGATIVE: [&str; 8] = ["垃圾", "骗子", "无耻", "差劲", "虚伪", "炒作", "割韭菜", "坑人"];
const NEUTRAL: [&str; 12] = [
    "手机", "发布", "公司", "电影", "汽车", "城市", "新闻", "朋友", "今天", "产品", "价格", "老板",
];
/// Single-character words, so the S state sees real traffic.
const PARTICLES: [&str; 10] = ["的", "了", "很", "也", "都", "吗", "啊", "就", "在", "是"];
/// Lexicon per emotion, in [`Emotion::ALL`] order.
const EMOTION_WORDS: [[&str; 4]; 6] = [
    ["开心", "快乐", "幸福", "高兴"],
    ["惊讶", "震惊", "意外", "没想到"],
    ["害怕", "恐惧", "担心", "可怕"],
    ["愤怒", "生气", "气愤", "火大"],
    ["恶心", "反感", "厌恶", "鄙视"],
    ["难过", "伤心", "失望", "心痛"],
];

fn polarity_of(e: Emotion) -> Polarity {
    match e {
        Emotion::Happiness | Emotion::Surprise => Polarity::Positive,
        _ => Polarity::Negative,
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, words: &[&'a str]) -> &'a str {
    words[rng.gen_range(0..words.len())]
}

fn emotion_word(rng: &mut ChaCha8Rng, polarity: Polarity) -> &'static str {
    let candidates: Vec<Emotion> = Emotion::ALL
        .into_iter()
        .filter(|&e| polarity_of(e) == polarity)
        .collect();
    let e = candidates[rng.gen_range(0..candidates.len())];
    pick(rng, &EMOTION_WORDS[e.index()])
}

fn polar_words(polarity: Polarity) -> &'static [&'static str] {
    match polarity {
        Polarity::Positive => &POSITIVE,
        Polarity::Negative => &NEGATIVE,
    }
}

/// Words of a polarized comment, shuffled.
fn opinion(rng: &mut ChaCha8Rng, polarity: Polarity, strength: usize) -> Vec<&'static str> {
    let mut words: Vec<&str> = (0..strength).map(|_| pick(rng, polar_words(polarity))).collect();
    words.push(emotion_word(rng, polarity));
    for _ in 0..rng.gen_range(1..=2) {
        words.push(pick(rng, &NEUTRAL));
    }
    words.shuffle(rng);
    words
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> u64 {
    (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp().round() as u64
}

#[derive(Debug, Clone)]
pub struct DemoCorpora {
    pub segmentation: Vec<TaggedSentence>,
    pub sentiment: Vec<SentimentDocument>,
    pub emotion: Vec<EmotionDocument>,
    /// Labeled comments under one tweet.
    pub comments: Vec<CommentRecord>,
    pub tweet_id: String,
    pub original: String,
}

impl DemoCorpora {
    pub fn originals(&self) -> HashMap<String, String> {
        HashMap::from([(self.tweet_id.clone(), self.original.clone())])
    }
}

pub fn demo_corpora(seed: u64) -> DemoCorpora {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocabulary: Vec<&str> = POSITIVE
        .iter()
        .chain(&NEGATIVE)
        .chain(&NEUTRAL)
        .chain(EMOTION_WORDS.iter().flatten())
        .copied()
        .collect();

    let mut segmentation = vec![TaggedSentence::from_words(
        &REFERENCE_SENTENCE.split(' ').collect::<Vec<_>>(),
    )];
    for _ in 0..400 {
        let n = rng.gen_range(3..=6);
        let words: Vec<&str> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.3) {
                    pick(&mut rng, &PARTICLES)
                } else {
                    pick(&mut rng, &vocabulary)
                }
            })
            .collect();
        segmentation.push(TaggedSentence::from_words(&words));
    }

    let sentiment = (0..400)
        .map(|_| {
            let label = if rng.gen_bool(0.5) { Polarity::Positive } else { Polarity::Negative };
            SentimentDocument {
                text: opinion(&mut rng, label, 2).concat(),
                label,
            }
        })
        .collect();

    let emotion = (0..360)
        .map(|i| {
            let e = Emotion::ALL[i % 6];
            let mut words = vec![pick(&mut rng, &EMOTION_WORDS[e.index()]), pick(&mut rng, &EMOTION_WORDS[e.index()])];
            for _ in 0..rng.gen_range(1..=2) {
                words.push(pick(&mut rng, &NEUTRAL));
            }
            words.shuffle(&mut rng);
            EmotionDocument {
                text: words.concat(),
                emotion: e,
            }
        })
        .collect();

    let tweet_id = "4427528300000001".to_string();
    let comments = demo_comments(&mut rng, 240, 0.2, &tweet_id);
    DemoCorpora {
        segmentation,
        sentiment,
        emotion,
        comments,
        tweet_id,
        original: "公司今天发布新款手机价格".into(),
    }
}

/// Comments under one tweet. Trolls have thin, follow-heavy profiles, write
/// strongly polarized text and sometimes comment several times.
fn demo_comments(rng: &mut ChaCha8Rng, n: usize, troll_fraction: f64, tweet_id: &str) -> Vec<CommentRecord> {
    let mut out = Vec::with_capacity(n);
    let mut troll_uid = 0usize;
    for i in 0..n {
        let troll = rng.gen_bool(troll_fraction);
        let (uid, followers, follow, statuses, text) = if troll {
            // Some trolls post twice in a row under the same account.
            if out.last().is_none_or(|r: &CommentRecord| r.label != Some(TrollLabel::Troll)) || rng.gen_bool(0.5) {
                troll_uid += 1;
            }
            let polarity = if rng.gen_bool(0.7) { Polarity::Negative } else { Polarity::Positive };
            (
                format!("t{troll_uid}"),
                log_uniform(rng, 2.0, 150.0),
                log_uniform(rng, 300.0, 2000.0),
                log_uniform(rng, 400.0, 6000.0),
                opinion(rng, polarity, 3).concat(),
            )
        } else {
            let polarity = if rng.gen_bool(0.5) { Polarity::Positive } else { Polarity::Negative };
            let mut words = vec![pick(rng, polar_words(polarity))];
            for _ in 0..rng.gen_range(2..=3) {
                words.push(pick(rng, &NEUTRAL));
            }
            words.shuffle(rng);
            (
                format!("u{i}"),
                log_uniform(rng, 30.0, 20000.0),
                log_uniform(rng, 20.0, 800.0),
                log_uniform(rng, 10.0, 3000.0),
                words.concat(),
            )
        };
        out.push(CommentRecord {
            screen_name: format!("用户{uid}"),
            uid,
            followers_count: followers,
            follow_count: follow,
            status_count: statuses,
            urank: rng.gen_range(if troll { 1..10 } else { 5..40 }),
            verified: !troll && rng.gen_bool(0.1),
            description: if troll || rng.gen_bool(0.4) { String::new() } else { "热爱生活".into() },
            like_count: rng.gen_range(if troll { 0..3 } else { 0..60 }),
            floor_number: i as u64 + 1,
            text,
            tweet_id: tweet_id.to_string(),
            label: Some(if troll { TrollLabel::Troll } else { TrollLabel::NonTroll }),
        });
    }
    out
}

/// Train every model of the pipeline on the demo corpora.
pub fn train_demo_pipeline(corpora: &DemoCorpora, seed: u64) -> Result<Pipeline, PipelineError> {
    let segmenter = train_segmenter(&corpora.segmentation).map_err(|e| PipelineError::Train {
        what: "segmenter",
        message: e.to_string(),
    })?;
    let embedding = EmbeddingConfig {
        dim: 16,
        window: 3,
        epochs: 3,
        negative: 3,
        min_count: 1,
        seed,
        ..Default::default()
    };
    let text = TextScorer::train(
        Tokenizer::new(segmenter, Preprocessor::default()),
        &corpora.sentiment,
        &corpora.emotion,
        1.0,
        Some(&embedding),
    )?;
    let matrix = build_feature_matrix(&corpora.comments, &text, &corpora.originals());
    let config = ClassifierConfig::Boosted(BoostConfig {
        rounds: 40,
        seed,
        ..Default::default()
    });
    let all: Vec<usize> = (0..FEATURE_COUNT).collect();
    let troll = train_troll_model(&matrix.vectors, &all, &config).map_err(|e| PipelineError::Train {
        what: "troll model",
        message: e.to_string(),
    })?;
    Ok(Pipeline::new(text, troll))
}

/// Write the demo corpora under `dir` along with a `pipeline.conf` that
/// points every input and output path into the same directory. Returns the
/// config path.
pub fn write_demo_files(corpora: &DemoCorpora, dir: &Path) -> std::io::Result<PathBuf> {
    let sighan: String = corpora.segmentation.iter().map(|s| s.words().join(" ") + "\n").collect();
    fs::write(dir.join("seg.txt"), sighan)?;
    let sentiment: String = corpora
        .sentiment
        .iter()
        .map(|d| {
            let label = match d.label {
                Polarity::Positive => "positive",
                Polarity::Negative => "negative",
            };
            format!("{label}\t{}\n", d.text)
        })
        .collect();
    fs::write(dir.join("sentiment.tsv"), sentiment)?;
    let emotion: String = corpora.emotion.iter().map(|d| format!("{}\t{}\n", d.emotion, d.text)).collect();
    fs::write(dir.join("emotion.tsv"), emotion)?;
    // The embedding sees both labeled corpora as plain text.
    let raw: String = corpora
        .sentiment
        .iter()
        .map(|d| &d.text)
        .chain(corpora.emotion.iter().map(|d| &d.text))
        .map(|t| format!("{t}\n"))
        .collect();
    fs::write(dir.join("w2v.txt"), raw)?;
    write_comment_csv(fs::File::create(dir.join("comments.csv"))?, &corpora.comments)
        .map_err(std::io::Error::other)?;
    fs::write(
        dir.join("originals.csv"),
        format!("tweet_id,text\n{},{}\n", corpora.tweet_id, corpora.original),
    )?;

    let d = |name: &str| dir.join(name).display().to_string();
    let config = format!(
        "# demo pipeline\n\
         seed = 7\n\
         seg.corpus = {}\nseg.model = {}\n\
         w2v.corpus = {}\nw2v.model = {}\nw2v.dim = 16\nw2v.epochs = 3\nw2v.min_count = 1\n\
         sentiment.corpus = {}\nsentiment.model = {}\n\
         emotion.corpus = {}\nemotion.model = {}\nemotion.table = {}\n\
         comments = {}\noriginals = {}\nfeatures.csv = {}\n\
         troll.model = {}\nreport = {}\nrfe.curve = {}\nhistogram = {}\n\
         boost.rounds = 40\n",
        d("seg.txt"),
        d("seg.json"),
        d("w2v.txt"),
        d("w2v.json"),
        d("sentiment.tsv"),
        d("sentiment.json"),
        d("emotion.tsv"),
        d("emotion.json"),
        d("emotion_table.csv"),
        d("comments.csv"),
        d("originals.csv"),
        d("features.csv"),
        d("troll.json"),
        d("report.csv"),
        d("rfe.csv"),
        d("histogram.csv"),
    );
    let path = dir.join("pipeline.conf");
    fs::write(&path, config)?;
    Ok(path)
}

/// A hotflow comment element carrying `record`.
pub fn packet_element(record: &CommentRecord, id: &str) -> Value {
    json!({
        "id": id,
        "rootid": record.tweet_id,
        "text": record.text,
        "like_count": record.like_count,
        "floor_number": record.floor_number,
        "user": {
            "id": record.uid,
            "screen_name": record.screen_name,
            "followers_count": record.followers_count,
            "follow_count": record.follow_count,
            "statuses_count": record.status_count,
            "urank": record.urank,
            "verified": record.verified,
            "description": record.description,
        }
    })
}

/// A ten-comment request: eight ordinary comments, one pure repost and one
/// digits-only comment.
pub fn demo_score_request(corpora: &DemoCorpora) -> ScoreRequest {
    let mut comments: Vec<Value> = corpora
        .comments
        .iter()
        .take(8)
        .enumerate()
        .map(|(i, r)| packet_element(r, &format!("c{i}")))
        .collect();
    let mut repost = corpora.comments[8].clone();
    repost.text = "转发微博".into();
    comments.push(packet_element(&repost, "c8"));
    let mut digits = corpora.comments[9].clone();
    digits.text = "12345 6789".into();
    comments.push(packet_element(&digits, "c9"));
    ScoreRequest {
        original: corpora.original.clone(),
        comments,
    }
}

fn polarized(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen_bool(0.5) {
        rng.gen_range(0.0..0.15)
    } else {
        rng.gen_range(0.85..=1.0)
    }
}

/// Labeled feature vectors with exactly `round(n * troll_fraction)` trolls.
/// Trolls get elevated following/follower and post/follower ratios and
/// polarized sentiment; regular users overlap them on every feature.
pub fn detection_dataset(n: usize, troll_fraction: f64, seed: u64) -> Vec<FeatureVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trolls = (n as f64 * troll_fraction).round() as usize;
    let mut labels: Vec<bool> = (0..n).map(|i| i < trolls).collect();
    labels.shuffle(&mut rng);
    labels
        .into_iter()
        .enumerate()
        .map(|(i, troll)| {
            let record = CommentRecord {
                uid: format!("u{i}"),
                screen_name: format!("u{i}"),
                followers_count: if troll { log_uniform(&mut rng, 5.0, 300.0) } else { log_uniform(&mut rng, 30.0, 20000.0) },
                follow_count: if troll { log_uniform(&mut rng, 300.0, 2000.0) } else { log_uniform(&mut rng, 30.0, 1000.0) },
                status_count: if troll { log_uniform(&mut rng, 300.0, 5000.0) } else { log_uniform(&mut rng, 30.0, 3000.0) },
                urank: rng.gen_range(1..40),
                verified: rng.gen_bool(0.05),
                description: String::new(),
                like_count: rng.gen_range(0..30),
                floor_number: i as u64 + 1,
                text: String::new(),
                tweet_id: "synthetic".into(),
                label: Some(if troll { TrollLabel::Troll } else { TrollLabel::NonTroll }),
            };
            let sentiment = if troll || rng.gen_bool(0.2) {
                polarized(&mut rng)
            } else {
                rng.gen_range(0.2..0.8)
            };
            let scores = CommentScores {
                sentiment,
                emotions: [0.0; 6],
                emotion: None,
            };
            feature_vector(&record, false, &scores, NEUTRAL_SENTIMENT)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMatrix {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<bool>,
    pub informative: Vec<usize>,
    pub constant: Vec<usize>,
}

/// Thirteen columns: three jointly informative, one constant, the rest
/// uniform noise. The label is a noisy threshold on the sum of the three.
pub fn rfe_dataset(n: usize, seed: u64) -> SyntheticMatrix {
    const WIDTH: usize = 13;
    let informative = vec![1, 6, 10];
    let constant = vec![4];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row: Vec<f64> = (0..WIDTH).map(|_| rng.gen::<f64>()).collect();
        for &c in &constant {
            row[c] = 1.0;
        }
        let signal: f64 = informative.iter().map(|&f| row[f]).sum();
        let noise = (rng.gen::<f64>() - 0.5) * 0.3;
        y.push(signal + noise > 1.5);
        x.push(row);
    }
    SyntheticMatrix {
        x,
        y,
        informative,
        constant,
    }
}

/// Comments under a single tweet whose original sentiment is neutral. F11 is
/// drawn on a 1/1024 grid so that F12 = F11 - 0.5 is exact and orders the
/// samples identically: F12 carries nothing once F11 is known.
pub fn shifted_sentiment_dataset(n: usize, seed: u64) -> Vec<FeatureVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let sentiment = rng.gen_range(0..=1024) as f64 / 1024.0;
            let followers = log_uniform(&mut rng, 10.0, 5000.0);
            let follow = log_uniform(&mut rng, 10.0, 2000.0);
            let polar = (sentiment - 0.5).abs() > 0.3;
            let heavy = follow as f64 / followers as f64 > 1.0;
            let troll = (polar && heavy) != rng.gen_bool(0.05);
            let record = CommentRecord {
                uid: format!("u{i}"),
                screen_name: format!("u{i}"),
                followers_count: followers,
                follow_count: follow,
                status_count: log_uniform(&mut rng, 10.0, 5000.0),
                urank: rng.gen_range(1..40),
                verified: false,
                description: String::new(),
                like_count: rng.gen_range(0..30),
                floor_number: i as u64 + 1,
                text: String::new(),
                tweet_id: "one-tweet".into(),
                label: Some(if troll { TrollLabel::Troll } else { TrollLabel::NonTroll }),
            };
            let scores = CommentScores {
                sentiment,
                emotions: [0.0; 6],
                emotion: None,
            };
            feature_vector(&record, false, &scores, NEUTRAL_SENTIMENT)
        })
        .collect()
}
