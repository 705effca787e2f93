//! Comment text cleaning.
//!
//! Cleaning runs in two layers. The structural layer removes markup and
//! platform noise: HTML tags, repost chains (`//@user: ...`), repost marker
//! phrases, `@mentions`, bracketed emoji codes such as `[哈哈]`, emoji
//! codepoints and digits. The lexical layer turns every remaining
//! non-alphanumeric character into a space, drops whole-token stop words and
//! collapses whitespace. Both layers are iterated to a fixed point, which is
//! what makes [`preprocess_text`] idempotent.
//!
//! Chinese stop words inside unsegmented runs can only be matched once the
//! text is segmented; [`StopWords::filter_tokens`] handles that step.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use thiserror::Error;

use super::{read_file, CorpusError};

const REPOST_PHRASES: [&str; 2] = ["转发微博", "轉發微博"];
const REPOST_TOKENS: [&str; 2] = ["repost", "retweet"];

/// Fraction of letters that must belong to one script for the text to count
/// as written in it.
const SCRIPT_THRESHOLD: f64 = 0.5;

const DEFAULT_STOP_WORDS: &str = include_str!("stopwords.txt");

#[derive(Debug, Error)]
#[error("translation failed: {0}")]
pub struct TranslationError(pub String);

/// Hook used to bring English comments into Chinese before cleaning.
pub trait Translator: Send + Sync {
    fn translate(&self, text: &str) -> Result<String, TranslationError>;
}

/// Returns its input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct Passthrough;

impl Translator for Passthrough {
    fn translate(&self, text: &str) -> Result<String, TranslationError> {
        Ok(text.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    Empty,
    PureRepost,
    SingleWord,
    UnsupportedLanguage,
    TranslationFailed,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::Empty => "empty",
            RejectReason::PureRepost => "pure-repost",
            RejectReason::SingleWord => "single-word",
            RejectReason::UnsupportedLanguage => "unsupported-language",
            RejectReason::TranslationFailed => "translation-failed",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Language {
    Chinese,
    English,
    Other,
    /// No letters at all.
    Undetermined,
}

fn is_han(c: char) -> bool {
    matches!(c as u32,
        0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x2FA1F)
}

fn is_latin_letter(c: char) -> bool {
    c.is_alphabetic() && (c.is_ascii() || matches!(c as u32, 0x00C0..=0x024F))
}

/// Script-ratio language guess over alphabetic characters.
pub fn detect_language(text: &str) -> Language {
    let (mut han, mut latin, mut total) = (0usize, 0usize, 0usize);
    for c in text.chars().filter(|c| c.is_alphabetic()) {
        total += 1;
        if is_han(c) {
            han += 1;
        } else if is_latin_letter(c) {
            latin += 1;
        }
    }
    if total == 0 {
        return Language::Undetermined;
    }
    let total = total as f64;
    if han as f64 / total >= SCRIPT_THRESHOLD {
        Language::Chinese
    } else if latin as f64 / total >= SCRIPT_THRESHOLD {
        Language::English
    } else {
        Language::Other
    }
}

/// Stop-word list. Entries are matched against whole whitespace tokens,
/// case-insensitively.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StopWords {
    words: HashSet<String>,
}

impl StopWords {
    /// One entry per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Self { words }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let bytes = read_file(path.as_ref())?;
        let text = String::from_utf8(bytes).map_err(|_| CorpusError::Decode { line: 0 })?;
        Ok(Self::parse(&text))
    }

    pub fn builtin() -> Self {
        Self::parse(DEFAULT_STOP_WORDS)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Drop stop words and tokens without any letter from segmented output.
    pub fn filter_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<String> {
        tokens
            .iter()
            .map(AsRef::as_ref)
            .filter(|t| t.chars().any(char::is_alphabetic) && !self.contains(t))
            .map(str::to_string)
            .collect()
    }
}

/// Text cleaner holding the stop-word list.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    stop_words: StopWords,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Self::new(StopWords::builtin())
    }
}

impl Preprocessor {
    pub fn new(stop_words: StopWords) -> Self {
        Self { stop_words }
    }

    pub fn stop_words(&self) -> &StopWords {
        &self.stop_words
    }

    /// Clean `text`, or say why it cannot be used. `None` for the translator
    /// behaves like [`Passthrough`].
    pub fn process(
        &self,
        text: &str,
        translator: Option<&dyn Translator>,
    ) -> Result<String, RejectReason> {
        if text.trim().is_empty() {
            return Err(RejectReason::Empty);
        }
        let structural = fixed_point(text, structural_pass);
        let cleaned = self.clean(&structural);
        if cleaned.is_empty() {
            return Err(if looks_like_repost(text) {
                RejectReason::PureRepost
            } else {
                RejectReason::Empty
            });
        }

        let cleaned = match detect_language(&cleaned) {
            Language::Chinese => cleaned,
            Language::English => {
                let translated = match translator {
                    Some(t) => t
                        .translate(&structural)
                        .map_err(|_| RejectReason::TranslationFailed)?,
                    None => structural,
                };
                let cleaned = self.clean(&translated);
                if cleaned.is_empty() {
                    return Err(RejectReason::Empty);
                }
                cleaned
            }
            Language::Other | Language::Undetermined => {
                return Err(RejectReason::UnsupportedLanguage)
            }
        };

        if distinct_units(&cleaned) < 2 {
            return Err(RejectReason::SingleWord);
        }
        Ok(cleaned)
    }

    fn clean(&self, text: &str) -> String {
        fixed_point(text, |s| self.lexical_pass(&structural_pass(s)))
    }

    fn lexical_pass(&self, text: &str) -> String {
        let spaced: String = text
            .chars()
            .map(|c| if c.is_alphanumeric() { c } else { ' ' })
            .collect();
        spaced
            .split_whitespace()
            .filter(|t| !self.stop_words.contains(t) && !is_repost_token(t))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Clean with the built-in stop-word list.
pub fn preprocess_text(
    text: &str,
    translator: Option<&dyn Translator>,
) -> Result<String, RejectReason> {
    static DEFAULT: OnceLock<Preprocessor> = OnceLock::new();
    DEFAULT.get_or_init(Preprocessor::default).process(text, translator)
}

fn fixed_point(text: &str, pass: impl Fn(&str) -> String) -> String {
    let mut current = text.to_string();
    // Every pass is non-increasing in length, so this settles quickly.
    for _ in 0..16 {
        let next = pass(&current);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

fn structural_pass(text: &str) -> String {
    let text = strip_html(text);
    let text = cut_repost_chain(&text);
    let text = REPOST_PHRASES
        .iter()
        .fold(text.to_string(), |acc, p| acc.replace(p, " "));
    let text = remove_mentions(&text);
    let text = remove_bracket_codes(&text);
    text.chars()
        .filter(|&c| !is_emoji(c) && !c.is_numeric())
        .collect()
}

fn looks_like_repost(text: &str) -> bool {
    let lower = text.to_lowercase();
    lower.contains("//@")
        || REPOST_PHRASES.iter().any(|p| text.contains(p))
        || lower.split_whitespace().any(is_repost_token)
}

fn is_repost_token(token: &str) -> bool {
    REPOST_TOKENS.iter().any(|t| token.eq_ignore_ascii_case(t))
}

fn strip_html(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find('<') {
        match rest[start..].find('>') {
            Some(len) => {
                out.push_str(&rest[..start]);
                out.push(' ');
                rest = &rest[start + len + 1..];
            }
            None => break,
        }
    }
    out.push_str(rest);
    out
}

/// Keep only the commenter's own words in front of a `//@user:` chain.
fn cut_repost_chain(text: &str) -> &str {
    match text.find("//@") {
        Some(i) => &text[..i],
        None => text,
    }
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-'
}

fn remove_mentions(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < chars.len() {
        if chars[i] == '@' && chars.get(i + 1).is_some_and(|&c| is_name_char(c)) {
            // "回复@name:" is a reply prefix; drop the 回复 as well.
            let kept = out.trim_end().len();
            if out[..kept].ends_with("回复") {
                out.truncate(kept - "回复".len());
            }
            i += 1;
            while i < chars.len() && is_name_char(chars[i]) {
                i += 1;
            }
            if i < chars.len() && matches!(chars[i], ':' | '：') {
                i += 1;
            }
            out.push(' ');
        } else {
            out.push(chars[i]);
            i += 1;
        }
    }
    out
}

/// Removes `[xx]` emoji codes of up to eight non-space characters.
fn remove_bracket_codes(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < chars.len() {
        if chars[i] == '[' {
            let close = chars[i + 1..]
                .iter()
                .take(9)
                .position(|&c| c == ']' || c == '[' || c.is_whitespace());
            if let Some(len @ 1..=8) = close {
                if chars[i + 1 + len] == ']' {
                    i += len + 2;
                    continue;
                }
            }
        }
        out.push(chars[i]);
        i += 1;
    }
    out
}

fn is_emoji(c: char) -> bool {
    matches!(c as u32,
        0x1F000..=0x1FAFF
        | 0x2300..=0x23FF
        | 0x2600..=0x27BF
        | 0x2B00..=0x2BFF
        | 0xE000..=0xF8FF
        | 0xFE00..=0xFE0F
        | 0x200D
        | 0x20E3)
}

/// Distinct Han characters plus distinct Latin/alphanumeric words.
fn distinct_units(text: &str) -> usize {
    let mut units = BTreeSet::new();
    for token in text.split_whitespace() {
        let mut latin = String::new();
        for c in token.chars() {
            if is_han(c) {
                if !latin.is_empty() {
                    units.insert(std::mem::take(&mut latin));
                }
                units.insert(c.to_string());
            } else {
                latin.extend(c.to_lowercase());
            }
        }
        if !latin.is_empty() {
            units.insert(latin);
        }
    }
    units.len()
}
