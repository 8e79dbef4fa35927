use crate::config::RunConfig;
use crate::error::{in_file, CliError, CliResult};
use crate::output::{read_bytes, write_file, Output};
use egonce_core::corpus::{pair_clip, read_narrations, read_tagged, tag_narration, Taxonomy};
use egonce_core::Error;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub struct TagArgs {
    pub narrations: PathBuf,
    pub taxonomy: PathBuf,
    pub output: Option<PathBuf>,
}

pub fn tag(args: &TagArgs, out: &Output) -> CliResult<()> {
    let tax_bytes = read_bytes(&args.taxonomy)?;
    let tax_text = String::from_utf8(tax_bytes)
        .map_err(|_| CliError::InFile(args.taxonomy.display().to_string(), Error::Format("not UTF-8".into())))?;
    let taxonomy = in_file(&args.taxonomy, Taxonomy::from_json(&tax_text))?;
    let bytes = read_bytes(&args.narrations)?;
    let records = in_file(&args.narrations, read_narrations(bytes.as_slice()))?;

    let mut text = String::new();
    let (mut no_noun, mut no_verb) = (0usize, 0usize);
    for r in &records {
        let t = tag_narration(r, &taxonomy);
        no_noun += usize::from(t.tags.nouns.is_empty());
        no_verb += usize::from(t.tags.verbs.is_empty());
        text.push_str(&t.to_json_line());
        text.push('\n');
    }
    let path = args.output.clone().unwrap_or_else(|| out.path("tagged.jsonl"));
    write_file(&path, text)?;
    out.say(format!(
        "tagged {} narrations -> {}; {no_noun} without a noun, {no_verb} without a verb",
        records.len(),
        path.display()
    ));
    Ok(())
}

pub struct PairArgs {
    pub tagged: PathBuf,
    pub durations: Option<PathBuf>,
    pub window_sec: Option<f64>,
    pub output: Option<PathBuf>,
}

fn load_durations(path: &Path) -> CliResult<BTreeMap<String, f64>> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| {
        CliError::InFile(
            path.display().to_string(),
            Error::Schema { line: e.line(), message: format!("expected {{video_id: seconds}}: {e}") },
        )
    })
}

/// Pair ids are `<video_id>#<n>` with `n` counting that video's narrations in
/// input order. Videos without a listed duration end half a window after
/// their last narration.
pub fn pair(args: &PairArgs, cfg: &RunConfig, out: &Output) -> CliResult<()> {
    let window = args.window_sec.unwrap_or(cfg.window_sec);
    let bytes = read_bytes(&args.tagged)?;
    let tagged = in_file(&args.tagged, read_tagged(bytes.as_slice()))?;
    let durations = match &args.durations {
        Some(p) => load_durations(p)?,
        None => BTreeMap::new(),
    };
    let mut last: BTreeMap<&str, f64> = BTreeMap::new();
    for t in &tagged {
        let e = last.entry(t.record.video_id.as_str()).or_insert(0.0);
        *e = e.max(t.record.timestamp_sec);
    }
    let mut counters: BTreeMap<&str, usize> = BTreeMap::new();
    let mut text = String::new();
    for t in &tagged {
        let video = t.record.video_id.as_str();
        let duration = durations
            .get(video)
            .copied()
            .unwrap_or_else(|| last[video] + window / 2.0);
        let n = counters.entry(video).or_insert(0);
        let p = pair_clip(t, format!("{video}#{n}"), window, duration)?;
        *n += 1;
        text.push_str(&p.to_json_line());
        text.push('\n');
    }
    let path = args.output.clone().unwrap_or_else(|| out.path("pairs.jsonl"));
    write_file(&path, text)?;
    out.say(format!("paired {} clips -> {}", tagged.len(), path.display()));
    Ok(())
}

