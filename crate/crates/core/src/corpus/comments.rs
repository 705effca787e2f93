use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Column names of a comment CSV, in file order. `tweet_id` and `label` may
/// follow as optional extra columns.
pub const COMMENT_FIELDS: [&str; 11] = [
    "uid",
    "screen_name",
    "followers_count",
    "follow_count",
    "status_count",
    "urank",
    "verified",
    "description",
    "like_count",
    "floor_number",
    "text",
];

const TWEET_ID: &str = "tweet_id";
const LABEL: &str = "label";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrollLabel {
    Troll,
    NonTroll,
}

impl TrollLabel {
    pub fn is_troll(self) -> bool {
        self == TrollLabel::Troll
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrollLabel::Troll => "troll",
            TrollLabel::NonTroll => "non-troll",
        }
    }
}

impl FromStr for TrollLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "troll" | "1" | "true" => Ok(TrollLabel::Troll),
            "non-troll" | "nontroll" | "normal" | "0" | "false" => Ok(TrollLabel::NonTroll),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

/// One comment together with its author's profile fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub uid: String,
    pub screen_name: String,
    pub followers_count: u64,
    pub follow_count: u64,
    pub status_count: u64,
    pub urank: u64,
    pub verified: bool,
    pub description: String,
    pub like_count: u64,
    pub floor_number: u64,
    pub text: String,
    pub tweet_id: String,
    pub label: Option<TrollLabel>,
}

/// Parse one comment CSV. Without a `tweet_id` column the file stem is used
/// as the tweet id of every record.
pub fn parse_comment_csv(path: impl AsRef<Path>) -> Result<Vec<CommentRecord>, CorpusError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_comment_csv(file, &stem)
}

pub fn read_comment_csv<R: Read>(
    reader: R,
    default_tweet_id: &str,
) -> Result<Vec<CommentRecord>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let columns = ColumnMap::from_headers(&headers)?;

    let mut records = Vec::new();
    for (row, result) in rdr.records().enumerate() {
        let rec = result?;
        records.push(columns.record(&rec, row, default_tweet_id)?);
    }
    Ok(records)
}

/// Write records with the full header, including `tweet_id` and `label`.
pub fn write_comment_csv<W: Write>(writer: W, records: &[CommentRecord]) -> Result<(), CorpusError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = COMMENT_FIELDS.to_vec();
    header.extend([TWEET_ID, LABEL]);
    wtr.write_record(&header)?;
    for r in records {
        wtr.write_record([
            r.uid.as_str(),
            r.screen_name.as_str(),
            &r.followers_count.to_string(),
            &r.follow_count.to_string(),
            &r.status_count.to_string(),
            &r.urank.to_string(),
            if r.verified { "true" } else { "false" },
            r.description.as_str(),
            &r.like_count.to_string(),
            &r.floor_number.to_string(),
            r.text.as_str(),
            r.tweet_id.as_str(),
            r.label.map(TrollLabel::as_str).unwrap_or(""),
        ])?;
    }
    wtr.flush().map_err(|e| CorpusError::Csv(e.into()))?;
    Ok(())
}

struct ColumnMap {
    fields: [usize; 11],
    tweet_id: Option<usize>,
    label: Option<usize>,
}

impl ColumnMap {
    fn from_headers(headers: &csv::StringRecord) -> Result<Self, CorpusError> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let mut fields = [0; 11];
        for (slot, name) in fields.iter_mut().zip(COMMENT_FIELDS) {
            *slot = find(name)
                .ok_or_else(|| CorpusError::Schema(format!("missing column `{name}`")))?;
        }
        if let Some(extra) = headers
            .iter()
            .map(str::trim)
            .find(|h| !COMMENT_FIELDS.contains(h) && *h != TWEET_ID && *h != LABEL)
        {
            return Err(CorpusError::Schema(format!("unexpected column `{extra}`")));
        }
        Ok(Self {
            fields,
            tweet_id: find(TWEET_ID),
            label: find(LABEL),
        })
    }

    fn record(
        &self,
        rec: &csv::StringRecord,
        row: usize,
        default_tweet_id: &str,
    ) -> Result<CommentRecord, CorpusError> {
        let get = |i: usize| rec.get(self.fields[i]).unwrap_or("");
        let count = |i: usize| -> Result<u64, CorpusError> {
            get(i).trim().parse::<u64>().map_err(|_| CorpusError::Row {
                row,
                column: COMMENT_FIELDS[i].to_string(),
                message: format!("expected a nonnegative integer, found `{}`", get(i)),
            })
        };
        let verified = match get(6).trim().to_ascii_lowercase().as_str() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(CorpusError::Row {
                    row,
                    column: "verified".into(),
                    message: format!("expected one of 0/1/true/false, found `{other}`"),
                })
            }
        };
        let floor_number = count(9)?;
        if floor_number == 0 {
            return Err(CorpusError::Row {
                row,
                column: "floor_number".into(),
                message: "floor_number must be at least 1".into(),
            });
        }
        let label = match self.label.and_then(|i| rec.get(i)).map(str::trim) {
            None | Some("") => None,
            Some(s) => Some(s.parse().map_err(|message| CorpusError::Row {
                row,
                column: LABEL.into(),
                message,
            })?),
        };
        let tweet_id = self
            .tweet_id
            .and_then(|i| rec.get(i))
            .filter(|s| !s.is_empty())
            .unwrap_or(default_tweet_id)
            .to_string();

        Ok(CommentRecord {
            uid: get(0).to_string(),
            screen_name: get(1).to_string(),
            followers_count: count(2)?,
            follow_count: count(3)?,
            status_count: count(4)?,
            urank: count(5)?,
            verified,
            description: get(7).to_string(),
            like_count: count(8)?,
            floor_number,
            text: get(10).to_string(),
            tweet_id,
            label,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str =
        "uid,screen_name,followers_count,follow_count,status_count,urank,verified,description,like_count,floor_number,text";

    #[test]
    fn header_only_gives_no_records() {
        let recs = read_comment_csv(format!("{HEADER}\n").as_bytes(), "t").unwrap();
        assert!(recs.is_empty());
    }

    #[test]
    fn parses_rows_with_quoted_commas() {
        let data = format!(
            "{HEADER},label\n42,小明,10,200,30,5,0,,3,1,\"好,很好\",troll\n7,bob,1,2,3,4,true,hi,0,2,ok,\n"
        );
        let recs = read_comment_csv(data.as_bytes(), "44275283").unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].text, "好,很好");
        assert_eq!(recs[0].label, Some(TrollLabel::Troll));
        assert_eq!(recs[0].tweet_id, "44275283");
        assert!(recs[1].verified);
        assert_eq!(recs[1].label, None);
    }

    #[test]
    fn missing_column_named() {
        let data = "uid,screen_name\n1,a\n";
        match read_comment_csv(data.as_bytes(), "t") {
            Err(CorpusError::Schema(msg)) => assert!(msg.contains("followers_count"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_count_reports_row() {
        let data = format!("{HEADER}\n1,a,1,1,1,1,0,,0,1,x\n2,b,abc,1,1,1,0,,0,2,y\n");
        match read_comment_csv(data.as_bytes(), "t") {
            Err(CorpusError::Row { row, column, .. }) => {
                assert_eq!(row, 1);
                assert_eq!(column, "followers_count");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_floor_rejected() {
        let data = format!("{HEADER}\n1,a,1,1,1,1,0,,0,0,x\n");
        assert!(matches!(
            read_comment_csv(data.as_bytes(), "t"),
            Err(CorpusError::Row { .. })
        ));
    }

    fn record_strategy() -> impl Strategy<Value = CommentRecord> {
        (
            ("[0-9]{1,10}", "\\PC{0,8}"),
            (any::<u32>(), any::<u32>(), any::<u32>(), 0u64..50, any::<bool>()),
            ("\\PC{0,12}", any::<u32>(), 1u64..100_000, "\\PC{0,30}", "[0-9]{1,9}"),
            prop::option::of(prop_oneof![Just(TrollLabel::Troll), Just(TrollLabel::NonTroll)]),
        )
            .prop_map(
                |((uid, name), (fo, fg, st, urank, verified), (desc, likes, floor, text, tid), label)| {
                    CommentRecord {
                        uid,
                        screen_name: name,
                        followers_count: fo as u64,
                        follow_count: fg as u64,
                        status_count: st as u64,
                        urank,
                        verified,
                        description: desc,
                        like_count: likes as u64,
                        floor_number: floor,
                        text,
                        tweet_id: tid,
                        label,
                    }
                },
            )
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(records in prop::collection::vec(record_strategy(), 0..8)) {
            let mut buf = Vec::new();
            write_comment_csv(&mut buf, &records).unwrap();
            let parsed = read_comment_csv(buf.as_slice(), "unused").unwrap();
            prop_assert_eq!(parsed, records);
        }
    }
}
