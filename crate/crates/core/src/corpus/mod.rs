//! Parsing, validation and normalization of every external input.
//!
//! Four formats come in from outside:
//!
//! * SIGHAN-style segmentation corpora: UTF-8, one sentence per line, words
//!   separated by whitespace ([`parse_sighan_corpus`]).
//! * Labeled sentiment and emotion corpora: one `label<TAB>text` document per
//!   line ([`parse_sentiment_corpus`], [`parse_emotion_corpus`]).
//! * Comment CSV files, one file per tweet ([`parse_comment_csv`]).
//! * Recorded hotflow JSON packets ([`parse_comment_packet`]).
//!
//! Raw comment text is cleaned by [`preprocess_text`] before segmentation.

mod comments;
mod labeled;
mod packet;
mod preprocess;
mod sighan;

use std::path::PathBuf;

use thiserror::Error;

pub use comments::{
    parse_comment_csv, read_comment_csv, write_comment_csv, CommentRecord, TrollLabel,
    COMMENT_FIELDS,
};
pub use labeled::{
    parse_emotion_corpus, parse_emotion_str, parse_sentiment_corpus, parse_sentiment_str,
    Emotion, EmotionDocument, Polarity, SentimentDocument,
};
pub use packet::{
    parse_comment_packet, parse_packet_element, PacketComment, ParsedPacket, SkippedElement,
};
pub use preprocess::{
    detect_language, preprocess_text, Language, Passthrough, Preprocessor, RejectReason,
    StopWords, TranslationError, Translator,
};
pub use sighan::{
    is_legal_sequence, parse_sighan_corpus, parse_sighan_str, tags_for_word, Tag, TaggedSentence,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: invalid UTF-8")]
    Decode { line: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("chars and tags differ in length ({chars} vs {tags})")]
    LengthMismatch { chars: usize, tags: usize },
    #[error("illegal BMES tag sequence")]
    IllegalTags,
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("row {row}, column `{column}`: {message}")]
    Row {
        row: usize,
        column: String,
        message: String,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("packet shape: {0}")]
    PacketShape(String),
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>, CorpusError> {
    std::fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Split raw bytes into decoded lines, reporting the 1-based line number of
/// the first line that is not valid UTF-8.
pub(crate) fn decode_lines(bytes: &[u8]) -> Result<Vec<&str>, CorpusError> {
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    let mut lines = Vec::new();
    for (i, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        let line = std::str::from_utf8(raw).map_err(|_| CorpusError::Decode { line: i + 1 })?;
        lines.push(line);
    }
    Ok(lines)
}
