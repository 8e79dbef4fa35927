//! Narration ingestion, noun/verb tagging, clip pairing and the temporal
//! adjacency index used to draw scene negatives.

mod adjacency;
mod pairing;
mod taxonomy;

pub use adjacency::{AdjacentClip, SceneAdjacencyIndex, DEFAULT_MAX_GAP_SEC};
pub use pairing::{
    frame_schedule, pair_clip, ClipSpan, ClipTextPair, DEFAULT_FEATURE_FPS,
    DEFAULT_FRAMES_PER_SAMPLE, DEFAULT_FRAME_STRIDE, DEFAULT_WINDOW_SEC,
};
pub use taxonomy::{tag_narration, tokenize, ActionTags, TaggedNarration, Taxonomy};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::io::{BufRead, BufReader};
use std::path::Path;

/// A timestamped free-text narration of the camera wearer's activity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrationRecord {
    pub video_id: String,
    pub timestamp_sec: f64,
    pub text: String,
}

impl NarrationRecord {
    pub fn new(
        video_id: impl Into<String>,
        timestamp_sec: f64,
        text: impl Into<String>,
    ) -> Result<Self> {
        let record = Self {
            video_id: video_id.into(),
            timestamp_sec,
            text: text.into(),
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.timestamp_sec.is_finite() && self.timestamp_sec >= 0.0) {
            return Err(Error::Validation(format!(
                "timestamp_sec must be a non-negative number, got {}",
                self.timestamp_sec
            )));
        }
        if self.text.trim().is_empty() {
            return Err(Error::Validation("narration text is empty".into()));
        }
        Ok(())
    }
}

/// Reads one JSON object per line. Blank lines are skipped but still counted
/// so that error line numbers match the file.
pub fn load_narrations(path: impl AsRef<Path>) -> Result<Vec<NarrationRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_narrations(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_narrations(reader: impl BufRead) -> Result<Vec<NarrationRecord>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io("<narrations>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let object = parse_object(&line, line_no)?;
        out.push(narration_from_object(&object, line_no)?);
    }
    Ok(out)
}

pub(crate) fn parse_object(line: &str, line_no: usize) -> Result<Map<String, Value>> {
    match serde_json::from_str::<Value>(line) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(other) => Err(Error::Parse {
            line: line_no,
            message: format!("expected a JSON object, found {}", json_kind(&other)),
        }),
        Err(e) => Err(Error::Parse {
            line: line_no,
            message: e.to_string(),
        }),
    }
}

fn json_kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

pub(crate) fn required_str<'a>(
    obj: &'a Map<String, Value>,
    field: &str,
    line: usize,
) -> Result<&'a str> {
    match obj.get(field) {
        Some(Value::String(s)) => Ok(s),
        Some(other) => Err(Error::Schema {
            line,
            message: format!("field \"{field}\" must be a string, found {}", json_kind(other)),
        }),
        None => Err(Error::Schema {
            line,
            message: format!("missing field \"{field}\""),
        }),
    }
}

pub(crate) fn required_f64(obj: &Map<String, Value>, field: &str, line: usize) -> Result<f64> {
    match obj.get(field) {
        Some(Value::Number(n)) => n.as_f64().ok_or_else(|| Error::Schema {
            line,
            message: format!("field \"{field}\" is not representable as f64"),
        }),
        Some(other) => Err(Error::Schema {
            line,
            message: format!("field \"{field}\" must be a number, found {}", json_kind(other)),
        }),
        None => Err(Error::Schema {
            line,
            message: format!("missing field \"{field}\""),
        }),
    }
}

pub(crate) fn string_array(
    obj: &Map<String, Value>,
    field: &str,
    line: usize,
) -> Result<Option<Vec<String>>> {
    match obj.get(field) {
        None => Ok(None),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.clone()),
                other => Err(Error::Schema {
                    line,
                    message: format!(
                        "field \"{field}\" must hold strings, found {}",
                        json_kind(other)
                    ),
                }),
            })
            .collect::<Result<Vec<_>>>()
            .map(Some),
        Some(other) => Err(Error::Schema {
            line,
            message: format!("field \"{field}\" must be an array, found {}", json_kind(other)),
        }),
    }
}

fn narration_from_object(obj: &Map<String, Value>, line: usize) -> Result<NarrationRecord> {
    let record = NarrationRecord {
        video_id: required_str(obj, "video_id", line)?.to_owned(),
        timestamp_sec: required_f64(obj, "timestamp_sec", line)?,
        text: required_str(obj, "text", line)?.to_owned(),
    };
    record.validate().map_err(|e| Error::Schema {
        line,
        message: match e {
            Error::Validation(m) => m,
            other => other.to_string(),
        },
    })?;
    Ok(record)
}

/// Reads tagged narrations (narration fields plus `nouns`/`verbs` arrays).
pub fn read_tagged(reader: impl BufRead) -> Result<Vec<TaggedNarration>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io("<tagged narrations>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let obj = parse_object(&line, line_no)?;
        let record = narration_from_object(&obj, line_no)?;
        let nouns = string_array(&obj, "nouns", line_no)?.ok_or_else(|| Error::Schema {
            line: line_no,
            message: "missing field \"nouns\"".into(),
        })?;
        let verbs = string_array(&obj, "verbs", line_no)?.ok_or_else(|| Error::Schema {
            line: line_no,
            message: "missing field \"verbs\"".into(),
        })?;
        out.push(TaggedNarration {
            record,
            tags: ActionTags::new(nouns, verbs),
        });
    }
    Ok(out)
}

pub fn load_tagged(path: impl AsRef<Path>) -> Result<Vec<TaggedNarration>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_tagged(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(s: &str) -> Result<Vec<NarrationRecord>> {
        read_narrations(s.as_bytes())
    }

    #[test]
    fn three_lines_in_order() {
        let input = r#"{"video_id":"v1","timestamp_sec":1.5,"text":"C opens the door"}
{"video_id":"v1","timestamp_sec":0.5,"text":"C picks up a cup"}
{"video_id":"v2","timestamp_sec":3,"text":"C cuts the tomato"}
"#;
        let recs = read(input).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].text, "C opens the door");
        assert_eq!(recs[1].timestamp_sec, 0.5);
        assert_eq!(recs[2].video_id, "v2");
    }

    #[test]
    fn empty_input() {
        assert!(read("").unwrap().is_empty());
    }

    #[test]
    fn missing_text_is_schema_error_with_line() {
        let input = "{\"video_id\":\"v\",\"timestamp_sec\":1,\"text\":\"x\"}\n\n{\"video_id\":\"v\",\"timestamp_sec\":2}\n";
        match read(input) {
            Err(Error::Schema { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("text"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_is_parse_error() {
        match read("{\"video_id\": \n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(read("[1,2]\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn invalid_values_rejected() {
        let neg = r#"{"video_id":"v","timestamp_sec":-1,"text":"x"}"#;
        assert!(matches!(read(neg), Err(Error::Schema { line: 1, .. })));
        let blank = r#"{"video_id":"v","timestamp_sec":1,"text":"   "}"#;
        assert!(matches!(read(blank), Err(Error::Schema { line: 1, .. })));
        let wrong_type = r#"{"video_id":"v","timestamp_sec":"1","text":"x"}"#;
        assert!(matches!(read(wrong_type), Err(Error::Schema { line: 1, .. })));
    }

    #[test]
    fn tagged_round_trip() {
        let tagged = TaggedNarration {
            record: NarrationRecord::new("v", 2.0, "C cuts the tomato").unwrap(),
            tags: ActionTags::new(["tomato"], ["cut"]),
        };
        let line = tagged.to_json_line();
        let back = read_tagged(line.as_bytes()).unwrap();
        assert_eq!(back, vec![tagged]);
    }
}
