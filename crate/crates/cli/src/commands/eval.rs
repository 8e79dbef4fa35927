use crate::error::{in_file, CliError, CliResult};
use crate::output::{input_record, read_bytes, Output};
use egonce_core::evalkit::{
    accuracy, binary_accuracy, mcq_accuracy, mean_average_precision_iou, pnr_error, recall_at_k_iou,
    summarize_pnr, GroundTruthSegment, McqQuestion, TemporalPrediction,
};
use egonce_core::Error;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Map, Value};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub fn mcq(questions: &Path, out: &Output) -> CliResult<()> {
    let bytes = read_bytes(questions)?;
    let qs = in_file(questions, McqQuestion::read_lines(bytes.as_slice()))?;
    let acc = mcq_accuracy(&qs);
    if acc.inter.is_none() && acc.intra.is_none() {
        return Err(Error::UndefinedMetric("MCQ accuracy over zero questions".into()).into());
    }
    let report = json!({
        "metric": "mcq_accuracy",
        "input": {"questions": input_record(questions)?},
        "inter_video": acc.inter,
        "intra_video": acc.intra,
        "inter_video_questions": acc.inter_count,
        "intra_video_questions": acc.intra_count,
    });
    out.report("eval_mcq.json", &report)?;
    Ok(())
}

pub struct LocArgs {
    pub predictions: PathBuf,
    pub ground_truth: PathBuf,
    pub ks: Vec<usize>,
    pub iou: Vec<f64>,
    pub map_iou: Vec<f64>,
}

fn threshold_key(t: f64) -> String {
    format!("{t}")
}

pub fn loc(args: &LocArgs, out: &Output) -> CliResult<()> {
    let pb = read_bytes(&args.predictions)?;
    let preds = in_file(&args.predictions, TemporalPrediction::read_lines(pb.as_slice()))?;
    let gb = read_bytes(&args.ground_truth)?;
    let gts = in_file(&args.ground_truth, GroundTruthSegment::read_lines(gb.as_slice()))?;

    let mut recall = Map::new();
    for &thr in &args.iou {
        let mut row = Map::new();
        for &k in &args.ks {
            row.insert(format!("R@{k}"), json!(recall_at_k_iou(&preds, &gts, k, thr)?));
        }
        recall.insert(threshold_key(thr), Value::Object(row));
    }
    let labelled = !gts.is_empty() && gts.iter().all(|g| g.label.is_some());
    let map = if labelled {
        let r = mean_average_precision_iou(&preds, &gts, &args.map_iou)?;
        let per_threshold: Map<String, Value> = r
            .thresholds
            .iter()
            .zip(&r.map)
            .map(|(t, m)| (threshold_key(*t), json!(m)))
            .collect();
        json!({"per_threshold": per_threshold, "average": r.average, "per_class": r.per_class})
    } else {
        Value::Null
    };
    let report = json!({
        "metric": "temporal_localization",
        "input": {
            "predictions": input_record(&args.predictions)?,
            "ground_truth": input_record(&args.ground_truth)?,
        },
        "config": {"ks": args.ks, "recall_iou": args.iou, "map_iou": args.map_iou},
        "queries": gts.iter().map(|g| g.query_id.as_str()).collect::<std::collections::BTreeSet<_>>().len(),
        "recall": recall,
        "map": map,
        "map_note": if labelled { Value::Null } else { json!("skipped: ground truth lacks class labels") },
    });
    out.report("eval_loc.json", &report)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ClsTask {
    Oscc,
    Pnr,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OsccRow {
    clip_id: String,
    state_change: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PnrRow {
    clip_id: String,
    frame: usize,
}

fn read_rows<T: DeserializeOwned>(path: &Path, id: impl Fn(&T) -> &str) -> CliResult<BTreeMap<String, T>> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::InFile(path.display().to_string(), Error::Format("not UTF-8".into())))?;
    let mut rows = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: T = serde_json::from_str(line).map_err(|e| {
            CliError::InFile(path.display().to_string(), Error::Schema { line: i + 1, message: e.to_string() })
        })?;
        let key = id(&row).to_string();
        if rows.insert(key.clone(), row).is_some() {
            return Err(CliError::InFile(
                path.display().to_string(),
                Error::Validation(format!("duplicate clip_id {key:?}")),
            ));
        }
    }
    Ok(rows)
}

/// Pairs predictions with ground truth by clip id; every ground-truth clip
/// needs a prediction.
fn align<'a, T>(preds: &'a BTreeMap<String, T>, gts: &'a BTreeMap<String, T>) -> CliResult<Vec<(&'a T, &'a T)>> {
    gts.iter()
        .map(|(id, g)| {
            preds
                .get(id)
                .map(|p| (p, g))
                .ok_or_else(|| Error::Validation(format!("no prediction for clip {id:?}")).into())
        })
        .collect()
}

pub struct ClsArgs {
    pub task: ClsTask,
    pub predictions: PathBuf,
    pub ground_truth: PathBuf,
    pub fps: f64,
}

pub fn cls(args: &ClsArgs, out: &Output) -> CliResult<()> {
    let input = json!({
        "predictions": input_record(&args.predictions)?,
        "ground_truth": input_record(&args.ground_truth)?,
    });
    let report = match args.task {
        ClsTask::Oscc => {
            let p = read_rows::<OsccRow>(&args.predictions, |r| &r.clip_id)?;
            let g = read_rows::<OsccRow>(&args.ground_truth, |r| &r.clip_id)?;
            let pairs = align(&p, &g)?;
            let pred: Vec<bool> = pairs.iter().map(|(p, _)| p.state_change).collect();
            let gt: Vec<bool> = pairs.iter().map(|(_, g)| g.state_change).collect();
            json!({
                "metric": "oscc_accuracy",
                "input": input,
                "clips": gt.len(),
                "accuracy": binary_accuracy(&pred, &gt)?,
            })
        }
        ClsTask::Pnr => {
            let p = read_rows::<PnrRow>(&args.predictions, |r| &r.clip_id)?;
            let g = read_rows::<PnrRow>(&args.ground_truth, |r| &r.clip_id)?;
            let pairs = align(&p, &g)?;
            let errors = pairs
                .iter()
                .map(|(p, g)| pnr_error(p.frame, g.frame, args.fps))
                .collect::<egonce_core::Result<Vec<_>>>()?;
            let pred: Vec<usize> = pairs.iter().map(|(p, _)| p.frame).collect();
            let gt: Vec<usize> = pairs.iter().map(|(_, g)| g.frame).collect();
            let summary = summarize_pnr(&errors)?;
            json!({
                "metric": "pnr_localization_error_sec",
                "input": input,
                "config": {"fps": args.fps},
                "clips": summary.count,
                "mean": summary.mean,
                "median": summary.median,
                "exact_frame_accuracy": accuracy(&pred, &gt)?,
            })
        }
    };
    out.report(match args.task {
        ClsTask::Oscc => "eval_oscc.json",
        ClsTask::Pnr => "eval_pnr.json",
    }, &report)?;
    Ok(())
}
