//! Reference implementations shared by the integration and acceptance tests.
#![allow(dead_code)]

use egonce_core::evalkit::{GroundTruthSegment, ScoredSpan, Span, TemporalPrediction};
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::BTreeSet;

pub fn overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    let inter = if hi > lo { hi - lo } else { 0.0 };
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Detection as (query, start, end, score).
type Det = (String, f64, f64, f64);
/// Ground truth as (query, start, end).
type Gt = (String, f64, f64);

/// Number of true positives when only the first `n` ranked detections exist,
/// matching each one in turn to its best still-free segment.
fn prefix_true_positives(ranked: &[&Det], gts: &[Gt], n: usize, thr: f64) -> usize {
    let mut taken = BTreeSet::new();
    let mut tp = 0;
    for d in &ranked[..n] {
        let mut best = None;
        let mut best_iou = -1.0;
        for (gi, g) in gts.iter().enumerate() {
            if taken.contains(&gi) || g.0 != d.0 {
                continue;
            }
            let iou = overlap((d.1, d.2), (g.1, g.2));
            if iou >= thr && iou > best_iou {
                best = Some(gi);
                best_iou = iou;
            }
        }
        if let Some(gi) = best {
            taken.insert(gi);
            tp += 1;
        }
    }
    tp
}

/// AP from the definition: at every recall level j/G, the best precision
/// reached by any ranking prefix whose recall is at least that level.
pub fn brute_force_ap(dets: &[Det], gts: &[Gt], thr: f64) -> f64 {
    if gts.is_empty() {
        return 0.0;
    }
    let mut ranked: Vec<&Det> = dets.iter().collect();
    ranked.sort_by(|a, b| b.3.partial_cmp(&a.3).unwrap());
    let points: Vec<(usize, f64)> = (1..=ranked.len())
        .map(|n| {
            let tp = prefix_true_positives(&ranked, gts, n, thr);
            (tp, tp as f64 / n as f64)
        })
        .collect();
    let g = gts.len();
    let mut area = 0.0;
    for level in 1..=g {
        let best = points
            .iter()
            .filter(|(tp, _)| *tp >= level)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        area += best;
    }
    area / g as f64
}

/// Mean of brute-force APs over classes that have ground truth.
pub fn brute_force_map(preds: &[TemporalPrediction], gts: &[GroundTruthSegment], thr: f64) -> f64 {
    let classes: BTreeSet<&str> = gts.iter().map(|g| g.label.as_deref().unwrap()).collect();
    let mut sum = 0.0;
    for class in &classes {
        let dets: Vec<Det> = preds
            .iter()
            .filter(|p| p.label.as_deref() == Some(class))
            .flat_map(|p| {
                p.spans
                    .iter()
                    .map(|s| (p.query_id.clone(), s.span.start, s.span.end, s.score))
            })
            .collect();
        let class_gts: Vec<Gt> = gts
            .iter()
            .filter(|g| g.label.as_deref() == Some(class))
            .map(|g| (g.query_id.clone(), g.span.start, g.span.end))
            .collect();
        sum += brute_force_ap(&dets, &class_gts, thr);
    }
    sum / classes.len() as f64
}

pub fn random_span(rng: &mut impl Rng) -> Span {
    let a = rng.random_range(0..40) as f64 * 0.5;
    let len = rng.random_range(0..12) as f64 * 0.5;
    Span::new(a, a + len).unwrap()
}

/// A small localisation case: up to 3 classes, each with at most 5 ground
/// truths and 10 detections, over up to 3 queries. Scores are distinct.
pub fn random_localisation_case(
    rng: &mut impl Rng,
) -> (Vec<TemporalPrediction>, Vec<GroundTruthSegment>) {
    let classes = rng.random_range(1..=3);
    let queries = rng.random_range(1..=3);
    let mut gts = Vec::new();
    let mut preds = Vec::new();
    let mut scores: Vec<usize> = (0..classes * 10).collect();
    scores.shuffle(rng);
    let mut next_score = scores.into_iter();
    for c in 0..classes {
        let label = format!("c{c}");
        let n_gt = rng.random_range(1..=5);
        let mut truth = Vec::new();
        for _ in 0..n_gt {
            let q = format!("q{}", rng.random_range(0..queries));
            let span = random_span(rng);
            truth.push((q.clone(), span));
            gts.push(GroundTruthSegment::new(q, span, Some(label.clone())).unwrap());
        }
        let n_det = rng.random_range(0..=10);
        let mut per_query: Vec<Vec<ScoredSpan>> = vec![Vec::new(); queries];
        for _ in 0..n_det {
            let score = next_score.next().unwrap() as f64 / 100.0;
            let (q, span) = if rng.random_bool(0.5) {
                // near a ground truth so matches actually occur
                let (q, s) = truth[rng.random_range(0..truth.len())].clone();
                let shift = rng.random_range(-4i32..=4) as f64 * 0.5;
                let start = (s.start + shift).max(0.0);
                (q, Span::new(start, start + s.length().max(0.5)).unwrap())
            } else {
                (format!("q{}", rng.random_range(0..queries)), random_span(rng))
            };
            let qi: usize = q[1..].parse().unwrap();
            per_query[qi].push(ScoredSpan { span, score });
        }
        for (qi, mut spans) in per_query.into_iter().enumerate() {
            spans.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
            if spans.is_empty() && rng.random_bool(0.5) {
                continue;
            }
            preds.push(TemporalPrediction::new(format!("q{qi}"), spans, Some(label.clone())).unwrap());
        }
    }
    preds.shuffle(rng);
    (preds, gts)
}
