use super::{
    parse_object, required_f64, required_str, string_array, ActionTags, NarrationRecord,
    TaggedNarration,
};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::BufRead;

pub const DEFAULT_WINDOW_SEC: f64 = 2.0;
pub const DEFAULT_FEATURE_FPS: f64 = 1.87;
pub const DEFAULT_FRAMES_PER_SAMPLE: usize = 4;
pub const DEFAULT_FRAME_STRIDE: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipSpan {
    pub video_id: String,
    pub start_sec: f64,
    pub end_sec: f64,
}

impl ClipSpan {
    pub fn new(video_id: impl Into<String>, start_sec: f64, end_sec: f64) -> Result<Self> {
        let span = Self {
            video_id: video_id.into(),
            start_sec,
            end_sec,
        };
        span.validate()?;
        Ok(span)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start_sec.is_finite() && self.end_sec.is_finite())
            || self.start_sec < 0.0
            || self.start_sec >= self.end_sec
        {
            return Err(Error::Validation(format!(
                "clip span [{}, {}] must satisfy 0 <= start < end",
                self.start_sec, self.end_sec
            )));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.end_sec - self.start_sec
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start_sec <= t && t <= self.end_sec
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipTextPair {
    pub pair_id: String,
    pub clip: ClipSpan,
    pub narration: TaggedNarration,
}

#[derive(Serialize)]
struct PairLine<'a> {
    pair_id: &'a str,
    video_id: &'a str,
    start_sec: f64,
    end_sec: f64,
    timestamp_sec: f64,
    text: &'a str,
    nouns: &'a BTreeSet<String>,
    verbs: &'a BTreeSet<String>,
}

impl ClipTextPair {
    pub fn timestamp(&self) -> f64 {
        self.narration.record.timestamp_sec
    }

    pub fn video_id(&self) -> &str {
        &self.clip.video_id
    }

    pub fn tags(&self) -> &ActionTags {
        &self.narration.tags
    }

    pub fn validate(&self) -> Result<()> {
        self.clip.validate()?;
        if self.clip.video_id != self.narration.record.video_id {
            return Err(Error::Validation(format!(
                "pair {}: clip video {:?} differs from narration video {:?}",
                self.pair_id, self.clip.video_id, self.narration.record.video_id
            )));
        }
        if !self.clip.contains(self.timestamp()) {
            return Err(Error::Validation(format!(
                "pair {}: narration timestamp {} outside clip [{}, {}]",
                self.pair_id,
                self.timestamp(),
                self.clip.start_sec,
                self.clip.end_sec
            )));
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&PairLine {
            pair_id: &self.pair_id,
            video_id: &self.clip.video_id,
            start_sec: self.clip.start_sec,
            end_sec: self.clip.end_sec,
            timestamp_sec: self.timestamp(),
            text: &self.narration.record.text,
            nouns: &self.narration.tags.nouns,
            verbs: &self.narration.tags.verbs,
        })
        .expect("pair serialises")
    }

    pub fn read_lines(reader: impl BufRead) -> Result<Vec<ClipTextPair>> {
        let mut out = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| Error::io("<pairs>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let obj = parse_object(&line, line_no)?;
            let schema = |message: String| Error::Schema {
                line: line_no,
                message,
            };
            let video_id = required_str(&obj, "video_id", line_no)?;
            let record = NarrationRecord::new(
                video_id,
                required_f64(&obj, "timestamp_sec", line_no)?,
                required_str(&obj, "text", line_no)?,
            )
            .map_err(|e| schema(e.to_string()))?;
            let nouns = string_array(&obj, "nouns", line_no)?.unwrap_or_default();
            let verbs = string_array(&obj, "verbs", line_no)?.unwrap_or_default();
            let pair = ClipTextPair {
                pair_id: required_str(&obj, "pair_id", line_no)?.to_owned(),
                clip: ClipSpan {
                    video_id: video_id.to_owned(),
                    start_sec: required_f64(&obj, "start_sec", line_no)?,
                    end_sec: required_f64(&obj, "end_sec", line_no)?,
                },
                narration: TaggedNarration {
                    record,
                    tags: ActionTags::new(nouns, verbs),
                },
            };
            pair.validate().map_err(|e| schema(e.to_string()))?;
            out.push(pair);
        }
        Ok(out)
    }
}

/// Centres a window of `window_sec` on the narration timestamp, clamped to
/// `[0, video_duration_sec]`.
pub fn pair_clip(
    narration: &TaggedNarration,
    pair_id: impl Into<String>,
    window_sec: f64,
    video_duration_sec: f64,
) -> Result<ClipTextPair> {
    if !(window_sec.is_finite() && window_sec > 0.0) {
        return Err(Error::InvalidInput(format!(
            "window_sec must be positive, got {window_sec}"
        )));
    }
    if !(video_duration_sec.is_finite() && video_duration_sec > 0.0) {
        return Err(Error::InvalidInput(format!(
            "video_duration_sec must be positive, got {video_duration_sec}"
        )));
    }
    let t = narration.record.timestamp_sec;
    if !(0.0..=video_duration_sec).contains(&t) {
        return Err(Error::InvalidInput(format!(
            "timestamp {t} lies outside the video [0, {video_duration_sec}]"
        )));
    }
    let half = window_sec / 2.0;
    let clip = ClipSpan::new(
        narration.record.video_id.clone(),
        (t - half).max(0.0),
        (t + half).min(video_duration_sec),
    )?;
    let pair = ClipTextPair {
        pair_id: pair_id.into(),
        clip,
        narration: narration.clone(),
    };
    pair.validate()?;
    Ok(pair)
}

/// Feature sampling times for a clip. Anchor `k` sits at
/// `start + k / feature_fps` for every anchor inside the span, and each anchor
/// expands into `frames_per_sample` times spaced `stride / feature_fps` apart,
/// clamped to `end_sec`.
pub fn frame_schedule(
    span: &ClipSpan,
    feature_fps: f64,
    frames_per_sample: usize,
    stride: usize,
) -> Result<Vec<Vec<f64>>> {
    span.validate()?;
    if !(feature_fps.is_finite() && feature_fps > 0.0) {
        return Err(Error::InvalidInput(format!(
            "feature_fps must be positive, got {feature_fps}"
        )));
    }
    if frames_per_sample == 0 || stride == 0 {
        return Err(Error::InvalidInput(
            "frames_per_sample and stride must be positive".into(),
        ));
    }
    let step = stride as f64 / feature_fps;
    let mut samples = Vec::new();
    for k in 0usize.. {
        let anchor = span.start_sec + k as f64 / feature_fps;
        if anchor > span.end_sec {
            break;
        }
        samples.push(
            (0..frames_per_sample)
                .map(|m| (anchor + m as f64 * step).min(span.end_sec))
                .collect(),
        );
    }
    Ok(samples)
}
