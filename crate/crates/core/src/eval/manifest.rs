use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub audio_path: PathBuf,
    /// May be empty.
    pub reference: String,
    pub tag: Option<String>,
    pub language: Option<String>,
}

/// Evaluation items in file order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalManifest {
    entries: Vec<ManifestEntry>,
}

impl EvalManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self, EvalError> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.audio_path.clone()) {
                return Err(EvalError::Manifest(format!(
                    "duplicate audio path {}",
                    e.audio_path.display()
                )));
            }
        }
        Ok(Self { entries })
    }

    /// Parses TSV rows `audio_path, reference[, tag[, language]]`. Lines
    /// starting with `#` are comments; an optional header row whose first
    /// field is `audio_path` is skipped. Relative paths are joined to
    /// `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, EvalError> {
        let mut entries = Vec::new();
        let mut first = true;
        for (i, line) in text.lines().enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if std::mem::take(&mut first) && fields[0] == "audio_path" {
                continue;
            }
            if fields.len() < 2 || fields.len() > 4 {
                return Err(EvalError::Manifest(format!(
                    "line {}: expected 2 to 4 tab-separated fields, found {}",
                    i + 1,
                    fields.len()
                )));
            }
            if fields[0].is_empty() {
                return Err(EvalError::Manifest(format!("line {}: empty audio path", i + 1)));
            }
            let opt = |k: usize| {
                fields
                    .get(k)
                    .map(|s| s.trim())
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
            };
            entries.push(ManifestEntry {
                audio_path: base_dir.join(fields[0]),
                reference: fields[1].to_string(),
                tag: opt(2),
                language: opt(3),
            });
        }
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// TSV text that parses back to the same entries (paths written as
    /// given).
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# audio_path\treference\ttag\tlanguage\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.audio_path.display(),
                e.reference,
                e.tag.as_deref().unwrap_or(""),
                e.language.as_deref().unwrap_or("")
            ));
        }
        out
    }
}
