use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{transcribe, TranscribeOptions, WindowModel};
use crate::decode::DEFAULT_TEMPERATURES;
use crate::eval::{evaluate, Aggregate, EvalError, EvalManifest, EvalOptions, ManifestEntry};

/// One row of the cumulative heuristic stack.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationStage {
    pub name: &'static str,
    pub options: TranscribeOptions,
}

/// The cumulative stack: greedy decoding, then beam search, temperature
/// fallback, voice activity detection, previous-text conditioning and the
/// initial timestamp constraint, each stage adding one heuristic. Seeds,
/// task and thresholds come from `base`.
pub fn ablation_stages(base: &TranscribeOptions) -> Vec<AblationStage> {
    let mut o = base.clone();
    o.decode.beam_size = 1;
    o.decode.temperatures = vec![0.0];
    o.decode.temperature = 0.0;
    o.decode.initial_timestamp_max = None;
    o.vad_enabled = false;
    o.condition_on_previous_text = false;

    let mut stages = vec![AblationStage {
        name: "greedy",
        options: o.clone(),
    }];
    let mut push = |name, o: &TranscribeOptions| {
        stages.push(AblationStage {
            name,
            options: o.clone(),
        })
    };
    o.decode.beam_size = base.decode.beam_size.max(2);
    push("+beam search", &o);
    o.decode.temperatures = if base.decode.temperatures.len() > 1 {
        base.decode.temperatures.clone()
    } else {
        DEFAULT_TEMPERATURES.to_vec()
    };
    push("+temperature fallback", &o);
    o.vad_enabled = true;
    push("+voice activity detection", &o);
    o.condition_on_previous_text = true;
    push("+previous text conditioning", &o);
    o.decode.initial_timestamp_max = Some(base.decode.initial_timestamp_max.unwrap_or(1.0));
    push("+initial timestamp constraint", &o);
    stages
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub stage: String,
    pub overall: Aggregate,
    pub by_tag: BTreeMap<String, Aggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    /// Dataset tags; every row has exactly these keys.
    pub tags: Vec<String>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Tab-separated WER table: one row per stage, one column per tag plus
    /// the pooled total.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("stage");
        for t in &self.tags {
            out.push('\t');
            out.push_str(t);
        }
        out.push_str("\toverall\n");
        for r in &self.rows {
            out.push_str(&r.stage);
            for t in &self.tags {
                out.push_str(&format!("\t{:.4}", r.by_tag[t].wer));
            }
            out.push_str(&format!("\t{:.4}\n", r.overall.wer));
        }
        out
    }
}

/// Options for one manifest item: an item language pins decoding to it.
fn item_options(stage: &TranscribeOptions, entry: &ManifestEntry) -> TranscribeOptions {
    let mut o = stage.clone();
    if let Some(l) = &entry.language {
        o.decode.task.language = Some(l.clone());
    }
    o
}

/// Evaluates the manifest once per stage of [`ablation_stages`].
pub fn ablation_matrix<M>(
    manifest: &EvalManifest,
    model: &M,
    base: &TranscribeOptions,
    eval: &EvalOptions,
) -> Result<AblationTable, EvalError>
where
    M: WindowModel + Sync,
{
    let mut rows = Vec::new();
    for stage in ablation_stages(base) {
        let pipeline = |entry: &ManifestEntry, audio: &crate::audio::AudioBuffer| {
            transcribe(audio, model, &item_options(&stage.options, entry))
                .map(|t| t.text())
                .map_err(|e| e.to_string())
        };
        let report = evaluate(manifest, &pipeline, eval)?;
        rows.push(AblationRow {
            stage: stage.name.to_string(),
            overall: report.overall,
            by_tag: report.by_tag,
        });
    }
    let tags = rows
        .first()
        .map(|r| r.by_tag.keys().cloned().collect())
        .unwrap_or_default();
    Ok(AblationTable { tags, rows })
}
