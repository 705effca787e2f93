use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{decode_lines, read_file, CorpusError};

/// Position of a character inside its word.
///
/// The declaration order B < M < E < S is also the tie-break order used by
/// the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tag {
    B,
    M,
    E,
    S,
}

impl Tag {
    pub const ALL: [Tag; 4] = [Tag::B, Tag::M, Tag::E, Tag::S];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Tag> {
        Self::ALL.get(i).copied()
    }

    /// Whether a sentence may start with this tag.
    pub fn can_start(self) -> bool {
        matches!(self, Tag::B | Tag::S)
    }

    /// Whether a sentence may end with this tag.
    pub fn can_end(self) -> bool {
        matches!(self, Tag::E | Tag::S)
    }

    /// Whether `next` may directly follow `self`.
    pub fn can_precede(self, next: Tag) -> bool {
        match self {
            Tag::B | Tag::M => matches!(next, Tag::M | Tag::E),
            Tag::E | Tag::S => matches!(next, Tag::B | Tag::S),
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Tag::B => 'B',
            Tag::M => 'M',
            Tag::E => 'E',
            Tag::S => 'S',
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// True when the sequence starts with B/S, only uses legal bigrams and ends
/// with E/S. The empty sequence is legal.
pub fn is_legal_sequence(tags: &[Tag]) -> bool {
    let Some(first) = tags.first() else {
        return true;
    };
    first.can_start()
        && tags.windows(2).all(|w| w[0].can_precede(w[1]))
        && tags.last().is_some_and(|t| t.can_end())
}

/// Tags for a single word of `len` characters.
pub fn tags_for_word(len: usize) -> Vec<Tag> {
    match len {
        0 => Vec::new(),
        1 => vec![Tag::S],
        n => {
            let mut tags = Vec::with_capacity(n);
            tags.push(Tag::B);
            tags.extend(std::iter::repeat_n(Tag::M, n - 2));
            tags.push(Tag::E);
            tags
        }
    }
}

/// A sentence with one BMES tag per character.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    chars: Vec<char>,
    tags: Vec<Tag>,
}

impl TaggedSentence {
    pub fn new(chars: Vec<char>, tags: Vec<Tag>) -> Result<Self, CorpusError> {
        if chars.len() != tags.len() {
            return Err(CorpusError::LengthMismatch {
                chars: chars.len(),
                tags: tags.len(),
            });
        }
        if !is_legal_sequence(&tags) {
            return Err(CorpusError::IllegalTags);
        }
        Ok(Self { chars, tags })
    }

    /// Build a sentence from already segmented words. Empty words are ignored.
    pub fn from_words<S: AsRef<str>>(words: &[S]) -> Self {
        let mut chars = Vec::new();
        let mut tags = Vec::new();
        for word in words {
            let word = word.as_ref();
            let n = word.chars().count();
            chars.extend(word.chars());
            tags.extend(tags_for_word(n));
        }
        Self { chars, tags }
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn words(&self) -> Vec<String> {
        let mut words = Vec::new();
        let mut current = String::new();
        for (&c, &t) in self.chars.iter().zip(&self.tags) {
            current.push(c);
            if t.can_end() {
                words.push(std::mem::take(&mut current));
            }
        }
        words
    }

    /// Whitespace-separated line in corpus format.
    pub fn to_line(&self) -> String {
        self.words().join(" ")
    }
}

/// Parse a SIGHAN-format corpus file. Blank lines are skipped.
pub fn parse_sighan_corpus(path: impl AsRef<Path>) -> Result<Vec<TaggedSentence>, CorpusError> {
    let bytes = read_file(path.as_ref())?;
    let lines = decode_lines(&bytes)?;
    collect_sentences(lines)
}

pub fn parse_sighan_str(text: &str) -> Result<Vec<TaggedSentence>, CorpusError> {
    collect_sentences(text.lines())
}

fn collect_sentences<'a>(
    lines: impl IntoIterator<Item = &'a str>,
) -> Result<Vec<TaggedSentence>, CorpusError> {
    let sentences: Vec<TaggedSentence> = lines
        .into_iter()
        .map(|line| line.split_whitespace().collect::<Vec<_>>())
        .filter(|words| !words.is_empty())
        .map(|words| TaggedSentence::from_words(&words))
        .collect();
    if sentences.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(sentences)
}
