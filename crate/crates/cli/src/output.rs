//! Transcript renderers and atomic file output.

use std::io::Write;
use std::path::Path;

use anyhow::Context;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use wisp_core::longform::{Segment, Transcript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Txt,
    Json,
    Srt,
    Vtt,
    Tsv,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Txt => "txt",
            Self::Json => "json",
            Self::Srt => "srt",
            Self::Vtt => "vtt",
            Self::Tsv => "tsv",
        }
    }

    pub fn render(self, t: &Transcript) -> String {
        match self {
            Self::Txt => txt(t),
            Self::Json => json(t),
            Self::Srt => srt(t),
            Self::Vtt => vtt(t),
            Self::Tsv => tsv(t),
        }
    }
}

/// The JSON transcript document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptDoc {
    pub language: Option<String>,
    pub duration: f64,
    pub text: String,
    pub segments: Vec<Segment>,
}

fn millis(seconds: f64) -> u64 {
    (seconds.max(0.0) * 1000.0).round() as u64
}

/// `HH:MM:SS` followed by `sep` and milliseconds.
fn clock(seconds: f64, sep: char) -> String {
    let ms = millis(seconds);
    format!(
        "{:02}:{:02}:{:02}{sep}{:03}",
        ms / 3_600_000,
        ms / 60_000 % 60,
        ms / 1000 % 60,
        ms % 1000
    )
}

fn txt(t: &Transcript) -> String {
    let mut out = String::new();
    for s in &t.segments {
        out.push_str(s.text.trim());
        out.push('\n');
    }
    out
}

fn json(t: &Transcript) -> String {
    let doc = TranscriptDoc {
        language: t.language.clone(),
        duration: t.duration,
        text: t.text(),
        segments: t.segments.clone(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("transcript serialises");
    s.push('\n');
    s
}

fn srt(t: &Transcript) -> String {
    let mut out = String::new();
    for (i, s) in t.segments.iter().enumerate() {
        out.push_str(&format!(
            "{}\n{} --> {}\n{}\n\n",
            i + 1,
            clock(s.start, ','),
            clock(s.end, ','),
            s.text.trim()
        ));
    }
    out
}

fn vtt(t: &Transcript) -> String {
    let mut out = String::from("WEBVTT\n\n");
    for s in &t.segments {
        out.push_str(&format!(
            "{} --> {}\n{}\n\n",
            clock(s.start, '.'),
            clock(s.end, '.'),
            s.text.trim()
        ));
    }
    out
}

fn tsv(t: &Transcript) -> String {
    let mut out = String::from("start\tend\ttext\n");
    for s in &t.segments {
        let text = s.text.trim().replace(['\t', '\n', '\r'], " ");
        out.push_str(&format!("{}\t{}\t{}\n", millis(s.start), millis(s.end), text));
    }
    out
}

/// Writes through a temporary file in the same directory, then renames, so
/// readers never see a partial file.
pub fn write_atomic(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(contents.as_ref())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
