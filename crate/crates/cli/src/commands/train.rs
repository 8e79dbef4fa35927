use crate::config::RunConfig;
use crate::error::{in_file, CliError, CliResult};
use crate::output::{input_record, read_bytes, sha256_hex, to_pretty, write_file, Output};
use egonce_core::corpus::ClipTextPair;
use egonce_core::trainer::io::{load_features, write_checkpoint, write_features, FeatureFile};
use egonce_core::trainer::{generate_synthetic_corpus, train, FeatureCorpus};
use serde_json::{json, Value};
use std::path::PathBuf;

#[derive(Default)]
pub struct TrainArgs {
    pub pairs: Option<PathBuf>,
    pub video_features: Option<PathBuf>,
    pub text_features: Option<PathBuf>,
    /// Write the synthetic corpus as pairs plus feature files.
    pub export_corpus: bool,
}

fn load_corpus(args: &TrainArgs, cfg: &RunConfig, out: &Output) -> CliResult<(FeatureCorpus, Value)> {
    match (&args.pairs, &args.video_features, &args.text_features) {
        (None, None, None) => {
            let synthetic = generate_synthetic_corpus(&cfg.corpus)?;
            if args.export_corpus {
                export(&synthetic.corpus, out)?;
            }
            Ok((synthetic.corpus, json!({"synthetic": cfg.corpus})))
        }
        (Some(pairs), Some(video), Some(text)) => {
            if args.export_corpus {
                return Err(CliError::Usage("--export-corpus applies only to the synthetic corpus".into()));
            }
            let bytes = read_bytes(pairs)?;
            let pair_rows = in_file(pairs, ClipTextPair::read_lines(bytes.as_slice()))?;
            let v = in_file(video, load_features(video))?;
            let t = in_file(text, load_features(text))?;
            let corpus = FeatureCorpus::from_keyed(pair_rows, (&v.pair_ids, &v.values), (&t.pair_ids, &t.values))?;
            let provenance = json!({
                "pairs": input_record(pairs)?,
                "video_features": input_record(video)?,
                "text_features": input_record(text)?,
            });
            Ok((corpus, provenance))
        }
        _ => Err(CliError::Usage(
            "--pairs, --video-features and --text-features must be given together".into(),
        )),
    }
}

fn export(corpus: &FeatureCorpus, out: &Output) -> CliResult<()> {
    let mut pairs = String::new();
    for p in corpus.pairs() {
        pairs.push_str(&p.to_json_line());
        pairs.push('\n');
    }
    write_file(&out.path("corpus/pairs.jsonl"), pairs)?;
    for (name, m) in [("video", corpus.video_features()), ("text", corpus.text_features())] {
        let file = FeatureFile::new(corpus.pair_ids(), m.clone())?;
        let mut buf = Vec::new();
        write_features(&mut buf, &file)?;
        write_file(&out.path(&format!("corpus/{name}.egof")), buf)?;
    }
    Ok(())
}

pub fn run(args: &TrainArgs, cfg: &RunConfig, out: &Output) -> CliResult<()> {
    cfg.train.validate()?;
    let resolved = toml::to_string(cfg).map_err(|e| CliError::Usage(format!("cannot serialize config: {e}")))?;
    write_file(&out.path("resolved_config.toml"), &resolved)?;
    out.say(format!("# resolved config\n{resolved}"));

    let (corpus, provenance) = load_corpus(args, cfg, out)?;
    let outcome = train(&cfg.train, &corpus, provenance.clone())?;
    write_file(&out.path("metrics.jsonl"), outcome.log_text())?;

    let mut files = serde_json::Map::new();
    for c in &outcome.checkpoints {
        for (side, head) in [("video", &c.heads.video), ("text", &c.heads.text)] {
            let name = format!("checkpoints/epoch_{:03}.{side}.egoc", c.epoch);
            let mut buf = Vec::new();
            write_checkpoint(&mut buf, head)?;
            files.insert(name.clone(), Value::String(sha256_hex(&buf)));
            write_file(&out.path(&name), buf)?;
        }
    }
    let epochs: Vec<Value> = outcome
        .checkpoints
        .iter()
        .map(|c| json!({"epoch": c.epoch, "mean_loss": c.mean_loss, "mcq": c.mcq}))
        .collect();
    let summary = json!({
        "seed": cfg.seed,
        "objective": cfg.train.objective,
        "input": provenance,
        "epochs": epochs,
        "best_epoch": outcome.best_epoch,
        "best_mcq": outcome.best().mcq,
        "steps": outcome.step_losses.len(),
        "checkpoints": files,
        "metrics_sha256": sha256_hex(outcome.log_text().as_bytes()),
    });
    write_file(&out.path("train_summary.json"), to_pretty(&summary))?;
    let best = outcome.best().mcq;
    out.say(format!(
        "trained {} epochs; best epoch {} (intra {}, inter {}); outputs in {}",
        cfg.train.epochs,
        outcome.best_epoch,
        fmt_acc(best.intra),
        fmt_acc(best.inter),
        out.dir.display()
    ));
    Ok(())
}

fn fmt_acc(a: Option<f64>) -> String {
    a.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}
