//! Temporal localisation metrics: IoU, recall@k at IoU, and mAP@IoU.

use crate::corpus::{parse_object, required_str};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::io::BufRead;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub start: f64,
    pub end: f64,
}

impl Span {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        let s = Self { start, end };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.start.is_finite() && self.end.is_finite() && self.start <= self.end {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "span [{}, {}] must be finite with start <= end",
                self.start, self.end
            )))
        }
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

/// Intersection over union of two spans; 0 when the union has zero length.
pub fn temporal_iou(a: Span, b: Span) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    Ok(iou_unchecked(a, b))
}

fn iou_unchecked(a: Span, b: Span) -> f64 {
    let inter = (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
    let union = a.length() + b.length() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredSpan {
    pub span: Span,
    pub score: f64,
}

/// Ranked candidate spans for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalPrediction {
    pub query_id: String,
    pub spans: Vec<ScoredSpan>,
    pub label: Option<String>,
}

impl TemporalPrediction {
    pub fn new(
        query_id: impl Into<String>,
        spans: Vec<ScoredSpan>,
        label: Option<String>,
    ) -> Result<Self> {
        let p = Self {
            query_id: query_id.into(),
            spans,
            label,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.spans {
            s.span.validate()?;
            if s.score.is_nan() {
                return Err(Error::Validation(format!(
                    "query {}: NaN score",
                    self.query_id
                )));
            }
        }
        if self.spans.windows(2).any(|w| w[0].score < w[1].score) {
            return Err(Error::Validation(format!(
                "query {}: spans are not ranked by non-increasing score",
                self.query_id
            )));
        }
        Ok(())
    }

    pub fn read_lines(reader: impl BufRead) -> Result<Vec<TemporalPrediction>> {
        read_jsonl(reader, "predictions", |obj, line| {
            let schema = |message: String| Error::Schema { line, message };
            let spans = match obj.get("spans") {
                Some(Value::Array(items)) => items
                    .iter()
                    .map(|item| {
                        let triple: Vec<f64> = serde_json::from_value(item.clone())
                            .map_err(|e| schema(format!("spans: {e}")))?;
                        match triple[..] {
                            [start, end, score] => Ok(ScoredSpan {
                                span: Span { start, end },
                                score,
                            }),
                            _ => Err(schema("spans must be [start, end, score] triples".into())),
                        }
                    })
                    .collect::<Result<Vec<_>>>()?,
                Some(_) => return Err(schema("field \"spans\" must be an array".into())),
                None => return Err(schema("missing field \"spans\"".into())),
            };
            TemporalPrediction::new(
                required_str(obj, "query_id", line)?,
                spans,
                optional_label(obj, line)?,
            )
            .map_err(|e| schema(e.to_string()))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthSegment {
    pub query_id: String,
    pub span: Span,
    pub label: Option<String>,
}

impl GroundTruthSegment {
    pub fn new(query_id: impl Into<String>, span: Span, label: Option<String>) -> Result<Self> {
        span.validate()?;
        Ok(Self {
            query_id: query_id.into(),
            span,
            label,
        })
    }

    pub fn read_lines(reader: impl BufRead) -> Result<Vec<GroundTruthSegment>> {
        read_jsonl(reader, "ground truth", |obj, line| {
            let schema = |message: String| Error::Schema { line, message };
            let pair: Vec<f64> = match obj.get("span") {
                Some(v) => serde_json::from_value(v.clone())
                    .map_err(|e| schema(format!("span: {e}")))?,
                None => return Err(schema("missing field \"span\"".into())),
            };
            let [start, end] = pair[..] else {
                return Err(schema("span must be [start, end]".into()));
            };
            GroundTruthSegment::new(
                required_str(obj, "query_id", line)?,
                Span { start, end },
                optional_label(obj, line)?,
            )
            .map_err(|e| schema(e.to_string()))
        })
    }
}

fn optional_label(obj: &serde_json::Map<String, Value>, line: usize) -> Result<Option<String>> {
    match obj.get("label") {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(Error::Schema {
            line,
            message: "field \"label\" must be a string".into(),
        }),
    }
}

pub(crate) fn read_jsonl<T>(
    reader: impl BufRead,
    what: &str,
    mut parse: impl FnMut(&serde_json::Map<String, Value>, usize) -> Result<T>,
) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(format!("<{what}>"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let obj = parse_object(&line, line_no)?;
        out.push(parse(&obj, line_no)?);
    }
    Ok(out)
}

/// Spans of every prediction line for `query_id`, stably re-ranked by score.
fn ranked_for<'a>(preds: &'a [TemporalPrediction], query_id: &str) -> Option<Vec<&'a ScoredSpan>> {
    let mut found = false;
    let mut spans: Vec<&ScoredSpan> = Vec::new();
    for p in preds.iter().filter(|p| p.query_id == query_id) {
        found = true;
        spans.extend(p.spans.iter());
    }
    spans.sort_by(|a, b| b.score.total_cmp(&a.score));
    found.then_some(spans)
}

/// Fraction of ground-truth queries with at least one of the top `k` spans at
/// `IoU >= iou_thr` against any of that query's segments.
pub fn recall_at_k_iou(
    preds: &[TemporalPrediction],
    gts: &[GroundTruthSegment],
    k: usize,
    iou_thr: f64,
) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let mut queries: BTreeMap<&str, Vec<Span>> = BTreeMap::new();
    for g in gts {
        queries.entry(&g.query_id).or_default().push(g.span);
    }
    if queries.is_empty() {
        return Err(Error::UndefinedMetric("recall over zero ground-truth queries".into()));
    }
    let mut hits = 0usize;
    for (query, segments) in &queries {
        let ranked = ranked_for(preds, query).ok_or_else(|| {
            Error::Validation(format!("no prediction entry for query {query:?}"))
        })?;
        let hit = ranked
            .iter()
            .take(k)
            .any(|p| segments.iter().any(|&g| iou_unchecked(p.span, g) >= iou_thr));
        hits += usize::from(hit);
    }
    Ok(hits as f64 / queries.len() as f64)
}

/// Per-threshold mAP plus their mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapReport {
    pub thresholds: Vec<f64>,
    pub map: Vec<f64>,
    pub average: f64,
    /// AP per class, aligned with `thresholds`.
    pub per_class: BTreeMap<String, Vec<f64>>,
}

struct Detection<'a> {
    query_id: &'a str,
    span: Span,
    score: f64,
}

/// All-point interpolated AP for one class at one threshold.
fn average_precision(dets: &[Detection], gts: &[&GroundTruthSegment], thr: f64) -> f64 {
    let total = gts.len();
    if total == 0 {
        return 0.0;
    }
    let mut matched = vec![false; total];
    let mut precisions = Vec::with_capacity(dets.len());
    let mut is_tp = Vec::with_capacity(dets.len());
    let mut tp = 0usize;
    for (rank, d) in dets.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if matched[gi] || g.query_id != d.query_id {
                continue;
            }
            let iou = iou_unchecked(d.span, g.span);
            if iou >= thr && best.is_none_or(|(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        if let Some((gi, _)) = best {
            matched[gi] = true;
            tp += 1;
        }
        is_tp.push(best.is_some());
        precisions.push(tp as f64 / (rank + 1) as f64);
    }
    // precision envelope, right to left
    for i in (0..precisions.len().saturating_sub(1)).rev() {
        precisions[i] = precisions[i].max(precisions[i + 1]);
    }
    // recall steps by 1/total exactly at true positives
    let area: f64 = precisions
        .iter()
        .zip(&is_tp)
        .filter(|(_, &t)| t)
        .map(|(p, _)| p)
        .sum();
    area / total as f64
}

/// mAP at each IoU threshold over classes with at least one ground truth.
/// Detections are ranked by score (ties keep input order) and greedily matched
/// to the unmatched same-query, same-class segment of highest IoU.
pub fn mean_average_precision_iou(
    preds: &[TemporalPrediction],
    gts: &[GroundTruthSegment],
    iou_thresholds: &[f64],
) -> Result<MapReport> {
    if gts.is_empty() {
        return Err(Error::UndefinedMetric("mAP with no ground-truth segments".into()));
    }
    if iou_thresholds.is_empty() {
        return Err(Error::InvalidInput("at least one IoU threshold is required".into()));
    }
    let mut by_class: BTreeMap<&str, Vec<&GroundTruthSegment>> = BTreeMap::new();
    for g in gts {
        let label = g.label.as_deref().ok_or_else(|| {
            Error::Validation(format!("ground truth for {:?} has no class label", g.query_id))
        })?;
        by_class.entry(label).or_default().push(g);
    }
    let mut dets: BTreeMap<&str, Vec<Detection>> = BTreeMap::new();
    for p in preds {
        let label = p.label.as_deref().ok_or_else(|| {
            Error::Validation(format!("prediction for {:?} has no class label", p.query_id))
        })?;
        let entry = dets.entry(label).or_default();
        entry.extend(p.spans.iter().map(|s| Detection {
            query_id: &p.query_id,
            span: s.span,
            score: s.score,
        }));
    }
    for list in dets.values_mut() {
        list.sort_by(|a, b| b.score.total_cmp(&a.score));
    }

    let mut per_class = BTreeMap::new();
    for (class, class_gts) in &by_class {
        let class_dets = dets.get(class).map(Vec::as_slice).unwrap_or(&[]);
        let aps = iou_thresholds
            .iter()
            .map(|&thr| average_precision(class_dets, class_gts, thr))
            .collect::<Vec<_>>();
        per_class.insert(class.to_string(), aps);
    }
    let map: Vec<f64> = (0..iou_thresholds.len())
        .map(|t| per_class.values().map(|aps| aps[t]).sum::<f64>() / per_class.len() as f64)
        .collect();
    let average = map.iter().sum::<f64>() / map.len() as f64;
    Ok(MapReport {
        thresholds: iou_thresholds.to_vec(),
        map,
        average,
        per_class,
    })
}
