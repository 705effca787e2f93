use serde::Serialize;
use serde_json::Value;

use super::{CommentRecord, CorpusError};

/// A comment extracted from a hotflow packet element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketComment {
    /// Element `id` (or `mid`), falling back to the element position.
    pub comment_id: String,
    pub record: CommentRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedElement {
    pub index: usize,
    pub comment_id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedPacket {
    pub comments: Vec<PacketComment>,
    pub skipped: Vec<SkippedElement>,
}

impl ParsedPacket {
    pub fn records(&self) -> Vec<CommentRecord> {
        self.comments.iter().map(|c| c.record.clone()).collect()
    }

    pub fn warnings(&self) -> usize {
        self.skipped.len()
    }
}

/// Parse a recorded hotflow response (`{"data": {"data": [...]}}`).
///
/// Elements that do not match the element schema are skipped and reported in
/// [`ParsedPacket::skipped`]; a missing `data.data` array fails the whole
/// packet.
pub fn parse_comment_packet(bytes: &[u8]) -> Result<ParsedPacket, CorpusError> {
    let root: Value = serde_json::from_slice(bytes)
        .map_err(|e| CorpusError::PacketShape(format!("invalid JSON: {e}")))?;
    let elements = root
        .get("data")
        .and_then(|d| d.get("data"))
        .and_then(Value::as_array)
        .ok_or_else(|| CorpusError::PacketShape("missing `data.data` array".into()))?;

    let mut parsed = ParsedPacket::default();
    for (index, element) in elements.iter().enumerate() {
        match parse_packet_element(element, index) {
            Ok(comment) => parsed.comments.push(comment),
            Err(reason) => {
                log::warn!("skipping packet element {index}: {reason}");
                parsed.skipped.push(SkippedElement {
                    index,
                    comment_id: element_id(element),
                    reason,
                });
            }
        }
    }
    Ok(parsed)
}

/// Map one packet element onto a [`CommentRecord`]; the error is a short
/// human-readable reason.
pub fn parse_packet_element(element: &Value, index: usize) -> Result<PacketComment, String> {
    let obj = element
        .as_object()
        .ok_or_else(|| "element is not an object".to_string())?;
    let user = obj
        .get("user")
        .and_then(Value::as_object)
        .ok_or_else(|| "missing `user` object".to_string())?;

    let text = obj
        .get("text")
        .and_then(Value::as_str)
        .ok_or_else(|| "missing `text`".to_string())?
        .to_string();
    let like_count = count(obj.get("like_count"), "like_count")?;
    let floor_number = count(obj.get("floor_number"), "floor_number")?;
    if floor_number == 0 {
        return Err("`floor_number` must be at least 1".into());
    }

    let uid = scalar_string(user.get("id")).ok_or_else(|| "missing `user.id`".to_string())?;
    let screen_name = user
        .get("screen_name")
        .and_then(Value::as_str)
        .ok_or_else(|| "missing `user.screen_name`".to_string())?
        .to_string();
    let verified = match user.get("verified") {
        Some(Value::Bool(b)) => *b,
        Some(Value::Number(n)) => n.as_u64().is_some_and(|v| v != 0),
        _ => return Err("missing `user.verified`".into()),
    };
    let description = user
        .get("description")
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_string();

    let record = CommentRecord {
        uid,
        screen_name,
        followers_count: count(user.get("followers_count"), "user.followers_count")?,
        follow_count: count(user.get("follow_count"), "user.follow_count")?,
        status_count: count(user.get("statuses_count"), "user.statuses_count")?,
        urank: count(user.get("urank"), "user.urank")?,
        verified,
        description,
        like_count,
        floor_number,
        text,
        tweet_id: scalar_string(obj.get("rootid")).unwrap_or_default(),
        label: None,
    };
    Ok(PacketComment {
        comment_id: element_id(element).unwrap_or_else(|| index.to_string()),
        record,
    })
}

fn element_id(element: &Value) -> Option<String> {
    scalar_string(element.get("id")).or_else(|| scalar_string(element.get("mid")))
}

fn scalar_string(v: Option<&Value>) -> Option<String> {
    match v? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Counts arrive as integers or as display strings such as `"1.2万"`.
fn count(v: Option<&Value>, name: &str) -> Result<u64, String> {
    let bad = || format!("`{name}` is not a nonnegative count");
    match v {
        None | Some(Value::Null) => Err(format!("missing `{name}`")),
        Some(Value::Number(n)) => n
            .as_u64()
            .or_else(|| {
                n.as_f64()
                    .filter(|f| *f >= 0.0 && f.fract() == 0.0)
                    .map(|f| f as u64)
            })
            .ok_or_else(bad),
        Some(Value::String(s)) => parse_display_count(s).ok_or_else(bad),
        Some(_) => Err(bad()),
    }
}

fn parse_display_count(s: &str) -> Option<u64> {
    let s = s.trim();
    let (number, scale) = if let Some(n) = s.strip_suffix('万') {
        (n, 1e4)
    } else if let Some(n) = s.strip_suffix('亿') {
        (n, 1e8)
    } else {
        return s.parse().ok();
    };
    let value: f64 = number.trim().parse().ok()?;
    (value >= 0.0 && value.is_finite()).then(|| (value * scale).round() as u64)
}
