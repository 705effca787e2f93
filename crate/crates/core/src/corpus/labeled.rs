use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{decode_lines, read_file, CorpusError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl FromStr for Polarity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" | "pos" | "1" => Ok(Polarity::Positive),
            "negative" | "neg" | "0" => Ok(Polarity::Negative),
            other => Err(format!("unknown polarity `{other}`")),
        }
    }
}

/// The six basic emotions, in their canonical order. Classification ties are
/// broken towards the earlier variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Happiness,
    Surprise,
    Fear,
    Anger,
    Disgust,
    Sadness,
}

impl Emotion {
    pub const ALL: [Emotion; 6] = [
        Emotion::Happiness,
        Emotion::Surprise,
        Emotion::Fear,
        Emotion::Anger,
        Emotion::Disgust,
        Emotion::Sadness,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Happiness => "happiness",
            Emotion::Surprise => "surprise",
            Emotion::Fear => "fear",
            Emotion::Anger => "anger",
            Emotion::Disgust => "disgust",
            Emotion::Sadness => "sadness",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        Emotion::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .or(match s.as_str() {
                "happy" | "joy" => Some(Emotion::Happiness),
                "sad" => Some(Emotion::Sadness),
                _ => None,
            })
            .ok_or_else(|| format!("unknown emotion `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentimentDocument {
    pub text: String,
    pub label: Polarity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmotionDocument {
    pub text: String,
    pub emotion: Emotion,
}

pub fn parse_sentiment_corpus(
    path: impl AsRef<Path>,
) -> Result<Vec<SentimentDocument>, CorpusError> {
    let bytes = read_file(path.as_ref())?;
    parse_labeled(decode_lines(&bytes)?, |label, text| SentimentDocument {
        text,
        label,
    })
}

pub fn parse_sentiment_str(text: &str) -> Result<Vec<SentimentDocument>, CorpusError> {
    parse_labeled(text.lines(), |label, text| SentimentDocument { text, label })
}

pub fn parse_emotion_corpus(path: impl AsRef<Path>) -> Result<Vec<EmotionDocument>, CorpusError> {
    let bytes = read_file(path.as_ref())?;
    parse_labeled(decode_lines(&bytes)?, |emotion, text| EmotionDocument {
        text,
        emotion,
    })
}

pub fn parse_emotion_str(text: &str) -> Result<Vec<EmotionDocument>, CorpusError> {
    parse_labeled(text.lines(), |emotion, text| EmotionDocument { text, emotion })
}

/// `label<TAB>text` per line; blank lines and lines starting with `#` are
/// skipped.
fn parse_labeled<'a, L, D>(
    lines: impl IntoIterator<Item = &'a str>,
    build: impl Fn(L, String) -> D,
) -> Result<Vec<D>, CorpusError>
where
    L: FromStr<Err = String>,
{
    let mut docs = Vec::new();
    for (i, line) in lines.into_iter().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (label, text) = line.split_once('\t').ok_or_else(|| CorpusError::Line {
            line: i + 1,
            message: "expected `label<TAB>text`".into(),
        })?;
        let label = label.parse().map_err(|message| CorpusError::Line {
            line: i + 1,
            message,
        })?;
        let text = text.trim();
        if text.is_empty() {
            return Err(CorpusError::Line {
                line: i + 1,
                message: "empty text".into(),
            });
        }
        docs.push(build(label, text.to_string()));
    }
    if docs.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(docs)
}
