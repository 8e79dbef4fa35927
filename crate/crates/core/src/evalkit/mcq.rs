use super::temporal::read_jsonl;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use serde::{Deserialize, Serialize};
use std::io::BufRead;

pub const DEFAULT_MCQ_OPTIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McqKind {
    /// Distractors come from other videos.
    InterVideo,
    /// Distractors come from the same video as the answer.
    IntraVideo,
}

/// A text query with candidate clips, exactly one of which is its match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McqQuestion {
    pub query: Vec<f64>,
    pub candidates: Vec<Vec<f64>>,
    pub answer_index: usize,
    pub kind: McqKind,
}

impl McqQuestion {
    pub fn new(
        query: Vec<f64>,
        candidates: Vec<Vec<f64>>,
        answer_index: usize,
        kind: McqKind,
    ) -> Result<Self> {
        let q = Self {
            query,
            candidates,
            answer_index,
            kind,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.candidates.len() < 2 {
            return Err(Error::Validation("a question needs at least two candidates".into()));
        }
        if self.answer_index >= self.candidates.len() {
            return Err(Error::Validation(format!(
                "answer_index {} out of range for {} candidates",
                self.answer_index,
                self.candidates.len()
            )));
        }
        let d = self.query.len();
        for v in std::iter::once(&self.query).chain(&self.candidates) {
            if v.len() != d {
                return Err(Error::Shape(format!("vector of length {} in a {d}-d question", v.len())));
            }
            let n = norm(v);
            if (n - 1.0).abs() > 1e-6 {
                return Err(Error::Validation(format!("vector norm {n} is not 1")));
            }
        }
        Ok(())
    }

    pub fn scores(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| dot(&self.query, c)).collect()
    }

    pub fn predict(&self) -> usize {
        argmax_first(&self.scores())
    }

    pub fn read_lines(reader: impl BufRead) -> Result<Vec<McqQuestion>> {
        read_jsonl(reader, "questions", |obj, line| {
            let q: McqQuestion = serde_json::from_value(serde_json::Value::Object(obj.clone()))
                .map_err(|e| Error::Schema {
                    line,
                    message: e.to_string(),
                })?;
            q.validate().map_err(|e| Error::Schema {
                line,
                message: e.to_string(),
            })?;
            Ok(q)
        })
    }
}

/// Index of the largest score; the lowest index wins ties.
pub fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McqAccuracy {
    pub inter: Option<f64>,
    pub intra: Option<f64>,
    pub inter_count: usize,
    pub intra_count: usize,
}

pub fn mcq_accuracy(questions: &[McqQuestion]) -> McqAccuracy {
    let mut correct = [0usize; 2];
    let mut count = [0usize; 2];
    for q in questions {
        let k = match q.kind {
            McqKind::InterVideo => 0,
            McqKind::IntraVideo => 1,
        };
        count[k] += 1;
        correct[k] += usize::from(q.predict() == q.answer_index);
    }
    let acc = |k: usize| (count[k] > 0).then(|| correct[k] as f64 / count[k] as f64);
    McqAccuracy {
        inter: acc(0),
        intra: acc(1),
        inter_count: count[0],
        intra_count: count[1],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e(d: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    }

    #[test]
    fn self_similarity_wins() {
        let q = McqQuestion::new(e(5, 2), (0..5).map(|i| e(5, i)).collect(), 2, McqKind::IntraVideo).unwrap();
        let acc = mcq_accuracy(&[q]);
        assert_eq!(acc.intra, Some(1.0));
        assert_eq!(acc.inter, None);
    }

    #[test]
    fn identical_candidates_pick_first() {
        let qs: Vec<_> = (0..4)
            .map(|ans| McqQuestion::new(e(3, 0), vec![e(3, 1); 4], ans, McqKind::InterVideo).unwrap())
            .collect();
        assert!(qs.iter().all(|q| q.predict() == 0));
        assert_eq!(mcq_accuracy(&qs).inter, Some(0.25));
    }

    #[test]
    fn validation() {
        assert!(McqQuestion::new(e(2, 0), vec![e(2, 0)], 0, McqKind::InterVideo).is_err());
        assert!(McqQuestion::new(e(2, 0), vec![e(2, 0), e(2, 1)], 2, McqKind::InterVideo).is_err());
        assert!(McqQuestion::new(vec![2.0, 0.0], vec![e(2, 0), e(2, 1)], 0, McqKind::InterVideo).is_err());
        assert!(McqQuestion::new(e(2, 0), vec![e(3, 0), e(2, 1)], 0, McqKind::InterVideo).is_err());
    }

    #[test]
    fn parse_lines() {
        let line = r#"{"query":[1,0],"candidates":[[0,1],[1,0]],"answer_index":1,"kind":"intra_video"}"#;
        let qs = McqQuestion::read_lines(line.as_bytes()).unwrap();
        assert_eq!(qs[0].predict(), 1);
        let bad = r#"{"query":[1,0],"candidates":[[0,1],[1,0]],"answer_index":1,"kind":"sideways"}"#;
        assert!(matches!(McqQuestion::read_lines(bad.as_bytes()), Err(Error::Schema { line: 1, .. })));
    }

    proptest! {
        #[test]
        fn argmax_invariant_under_positive_scaling(
            scores in prop::collection::vec(-1.0f64..1.0, 2..8),
            scale in prop_oneof![Just(7.3f64), 1e-3f64..1e3],
        ) {
            let scaled: Vec<f64> = scores.iter().map(|s| s * scale).collect();
            prop_assert_eq!(argmax_first(&scores), argmax_first(&scaled));
        }
    }
}
