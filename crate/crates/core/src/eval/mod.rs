//! Word error rate, evaluation manifests, pooled reports and noise sweeps.

mod manifest;
mod wer;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{add_noise, load_audio, AudioBuffer, AudioError, NoiseKind, NoiseSpec};
use crate::decode::derive_seed;
use crate::normalize::{Normalizer, NormalizerConfig};

pub use manifest::{EvalManifest, ManifestEntry};
pub use wer::{align, edit_distance, relative_error_reduction, word_error_rate, EditCounts, WerResult};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0}")]
    Domain(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("reading {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid options: {0}")]
    Options(String),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Something that turns one manifest item's audio into hypothesis text.
pub trait Pipeline: Sync {
    fn transcribe(&self, entry: &ManifestEntry, audio: &AudioBuffer) -> Result<String, String>;
}

impl<F> Pipeline for F
where
    F: Fn(&ManifestEntry, &AudioBuffer) -> Result<String, String> + Sync,
{
    fn transcribe(&self, entry: &ManifestEntry, audio: &AudioBuffer) -> Result<String, String> {
        self(entry, audio)
    }
}

/// How references and hypotheses are standardised before scoring.
#[derive(Debug, Clone, Default)]
pub enum TextNormalization {
    /// English rules for `en` or untagged items, basic rules otherwise.
    #[default]
    ByLanguage,
    Fixed(Normalizer),
    /// Score raw text.
    None,
}

impl TextNormalization {
    pub fn apply(&self, text: &str, language: Option<&str>) -> String {
        match self {
            Self::ByLanguage => Normalizer::new(NormalizerConfig::for_language(language)).normalize(text),
            Self::Fixed(n) => n.normalize(text),
            Self::None => text.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub normalization: TextNormalization,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub index: usize,
    pub audio_path: String,
    pub tag: Option<String>,
    pub language: Option<String>,
    pub reference: String,
    pub hypothesis: String,
    pub ref_words: usize,
    pub edits: EditCounts,
    /// `None` when the item failed.
    pub wer: Option<f64>,
    pub error: Option<String>,
}

/// Pooled statistics over a group of items. Failed items are counted but
/// contribute no words or edits.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub items: usize,
    pub failed: usize,
    pub ref_words: usize,
    pub edits: EditCounts,
    /// Total edits over total reference words (edits alone when there are
    /// no reference words).
    pub wer: f64,
}

impl Aggregate {
    pub fn from_items<'a>(items: impl IntoIterator<Item = &'a ItemResult>) -> Self {
        let mut a = Aggregate::default();
        for it in items {
            a.items += 1;
            if it.error.is_some() {
                a.failed += 1;
                continue;
            }
            a.ref_words += it.ref_words;
            a.edits.add(&it.edits);
        }
        a.wer = a.edits.total() as f64 / a.ref_words.max(1) as f64;
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quartiles {
    /// Linear-interpolated quantiles; `None` for an empty slice.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(Self {
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisePoint {
    pub snr_db: f64,
    pub wer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub items: Vec<ItemResult>,
    pub by_tag: BTreeMap<String, Aggregate>,
    pub overall: Aggregate,
    pub noise_curve: Option<Vec<NoisePoint>>,
}

/// Machine-readable summary: everything but the per-item rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub overall: Aggregate,
    pub by_tag: BTreeMap<String, Aggregate>,
    pub item_wer: Option<Quartiles>,
    pub noise_curve: Option<Vec<NoisePoint>>,
}

const UNTAGGED: &str = "untagged";

impl EvalReport {
    pub fn from_items(mut items: Vec<ItemResult>) -> Self {
        items.sort_by_key(|i| i.index);
        let mut groups: BTreeMap<String, Vec<&ItemResult>> = BTreeMap::new();
        for it in &items {
            let tag = it.tag.clone().unwrap_or_else(|| UNTAGGED.to_string());
            groups.entry(tag).or_default().push(it);
        }
        let by_tag = groups
            .into_iter()
            .map(|(k, v)| (k, Aggregate::from_items(v)))
            .collect();
        let overall = Aggregate::from_items(&items);
        Self {
            items,
            by_tag,
            overall,
            noise_curve: None,
        }
    }

    pub fn summary(&self) -> EvalSummary {
        let wers: Vec<f64> = self.items.iter().filter_map(|i| i.wer).collect();
        EvalSummary {
            overall: self.overall.clone(),
            by_tag: self.by_tag.clone(),
            item_wer: Quartiles::of(&wers),
            noise_curve: self.noise_curve.clone(),
        }
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary()).expect("summary serialises")
    }

    /// One row per item in manifest order.
    pub fn to_tsv(&self) -> String {
        let clean = |s: &str| s.replace(['\t', '\n', '\r'], " ");
        let mut out = String::from(
            "index\taudio_path\ttag\tlanguage\tref_words\tsubstitutions\tinsertions\tdeletions\twer\treference\thypothesis\terror\n",
        );
        for it in &self.items {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                it.index,
                clean(&it.audio_path),
                it.tag.as_deref().unwrap_or(""),
                it.language.as_deref().unwrap_or(""),
                it.ref_words,
                it.edits.substitutions,
                it.edits.insertions,
                it.edits.deletions,
                it.wer.map(|w| format!("{w:.6}")).unwrap_or_default(),
                clean(&it.reference),
                clean(&it.hypothesis),
                it.error.as_deref().map(clean).unwrap_or_default(),
            ));
        }
        out
    }
}

/// Scores one item given its hypothesis (or failure).
pub fn score_item(
    index: usize,
    entry: &ManifestEntry,
    hypothesis: Result<String, String>,
    normalization: &TextNormalization,
) -> ItemResult {
    let lang = entry.language.as_deref();
    let reference = normalization.apply(&entry.reference, lang);
    let mut item = ItemResult {
        index,
        audio_path: entry.audio_path.display().to_string(),
        tag: entry.tag.clone(),
        language: entry.language.clone(),
        ref_words: reference.split_whitespace().count(),
        reference,
        hypothesis: String::new(),
        edits: EditCounts::default(),
        wer: None,
        error: None,
    };
    match hypothesis {
        Ok(h) => {
            item.hypothesis = normalization.apply(&h, lang);
            let r = word_error_rate(&item.reference, &item.hypothesis);
            item.edits = r.edits;
            item.wer = Some(r.wer);
        }
        Err(e) => item.error = Some(e),
    }
    item
}

fn run_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, EvalError> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(EvalError::Options("jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|p| p.install(f))
            .map_err(|e| EvalError::Pool(e.to_string())),
    }
}

/// Evaluates every item, transforming its audio first. Item failures
/// (unreadable audio, pipeline errors) are recorded, not raised.
pub fn evaluate_with<P, T>(
    manifest: &EvalManifest,
    pipeline: &P,
    options: &EvalOptions,
    transform: T,
) -> Result<EvalReport, EvalError>
where
    P: Pipeline + ?Sized,
    T: Fn(usize, AudioBuffer) -> Result<AudioBuffer, AudioError> + Sync,
{
    let items = run_pool(options.jobs, || {
        manifest
            .entries()
            .par_iter()
            .enumerate()
            .map(|(i, entry)| {
                let hyp = load_audio(&entry.audio_path)
                    .and_then(|a| transform(i, a))
                    .map_err(|e| format!("audio: {e}"))
                    .and_then(|a| pipeline.transcribe(entry, &a));
                score_item(i, entry, hyp, &options.normalization)
            })
            .collect::<Vec<_>>()
    })?;
    Ok(EvalReport::from_items(items))
}

pub fn evaluate<P: Pipeline + ?Sized>(
    manifest: &EvalManifest,
    pipeline: &P,
    options: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    evaluate_with(manifest, pipeline, options, |_, a| Ok(a))
}

/// One evaluation per SNR with noise injected into every item. Item `i`
/// draws its noise from the same seed at every SNR, so the curve varies
/// only in level.
pub fn noise_sweep<P: Pipeline + ?Sized>(
    manifest: &EvalManifest,
    pipeline: &P,
    snrs: &[f64],
    kind: &NoiseKind,
    seed: u64,
    options: &EvalOptions,
) -> Result<(Vec<NoisePoint>, Vec<EvalReport>), EvalError> {
    if snrs.is_empty() {
        return Err(EvalError::Options("snr list is empty".into()));
    }
    if let Some(bad) = snrs.iter().find(|s| !s.is_finite()) {
        return Err(EvalError::Options(format!("snr {bad} is not finite")));
    }
    let mut curve = Vec::with_capacity(snrs.len());
    let mut reports = Vec::with_capacity(snrs.len());
    for &snr_db in snrs {
        let spec = NoiseSpec {
            kind: kind.clone(),
            snr_db,
        };
        let report = evaluate_with(manifest, pipeline, options, |i, a| {
            add_noise(&a, &spec, derive_seed(seed, i as u64))
        })?;
        curve.push(NoisePoint {
            snr_db,
            wer: report.overall.wer,
        });
        reports.push(report);
    }
    Ok((curve, reports))
}
