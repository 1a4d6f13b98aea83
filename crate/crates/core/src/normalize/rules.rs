use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

use thiserror::Error;

const CONTRACTIONS_TSV: &str = include_str!("../../data/contractions.tsv");
const SPELLING_TSV: &str = include_str!("../../data/spelling.tsv");

pub const FILLERS: [&str; 6] = ["hmm", "mm", "mhm", "mmm", "uh", "um"];

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("reading {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Word-level rewrite tables used by the English normaliser.
#[derive(Debug, Clone)]
pub struct RuleTable {
    words: HashMap<String, String>,
    /// Suffix rules, longest first.
    suffixes: Vec<(String, String)>,
    spelling: HashMap<String, String>,
}

impl RuleTable {
    /// Builds tables from TSV text. Contraction keys beginning with `-`
    /// are suffixes.
    pub fn from_tsv(contractions: &str, spelling: &str) -> Result<Self, RuleError> {
        let mut words = HashMap::new();
        let mut suffixes = Vec::new();
        for (line, key, value) in parse_pairs("contractions", contractions)? {
            match key.strip_prefix('-') {
                Some(suffix) if !suffix.is_empty() => suffixes.push((suffix.to_string(), value)),
                Some(_) => return Err(parse_err("contractions", line, "empty suffix")),
                None => {
                    words.insert(key, value);
                }
            }
        }
        suffixes.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));
        let spelling: HashMap<String, String> = parse_pairs("spelling", spelling)?
            .into_iter()
            .map(|(_, k, v)| (k, v))
            .collect();
        for v in spelling.values() {
            if spelling.contains_key(v) {
                return Err(RuleError::Parse {
                    file: "spelling".into(),
                    line: 0,
                    msg: format!("value '{v}' is also a key"),
                });
            }
        }
        Ok(Self {
            words,
            suffixes,
            spelling,
        })
    }

    pub fn load(contractions: &Path, spelling: &Path) -> Result<Self, RuleError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|source| RuleError::Io {
                path: p.display().to_string(),
                source,
            })
        };
        Self::from_tsv(&read(contractions)?, &read(spelling)?)
    }

    pub fn builtin() -> &'static RuleTable {
        static TABLE: OnceLock<RuleTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            RuleTable::from_tsv(CONTRACTIONS_TSV, SPELLING_TSV).expect("built-in rule tables parse")
        })
    }

    /// Expansion for a lowercase word (apostrophes included), if any.
    pub fn expand_contraction(&self, word: &str) -> Option<String> {
        if let Some(v) = self.words.get(word) {
            return Some(v.clone());
        }
        // Stacked forms such as "y'all'd've" peel one suffix at a time.
        self.suffixes.iter().find_map(|(suffix, value)| {
            word.strip_suffix(suffix.as_str()).filter(|_| word.contains('\'')).map(|stem| {
                let stem = self.expand_contraction(stem).unwrap_or_else(|| stem.to_string());
                format!("{stem} {value}")
            })
        })
    }

    pub fn american_spelling(&self, word: &str) -> Option<&str> {
        self.spelling.get(word).map(String::as_str)
    }

    /// Whole-word contraction entries, for closure tests.
    pub fn contraction_words(&self) -> impl Iterator<Item = (&str, &str)> {
        self.words.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn contraction_suffixes(&self) -> impl Iterator<Item = (&str, &str)> {
        self.suffixes.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn spelling_pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.spelling.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

impl Default for RuleTable {
    fn default() -> Self {
        Self::builtin().clone()
    }
}

fn parse_err(file: &str, line: usize, msg: &str) -> RuleError {
    RuleError::Parse {
        file: file.into(),
        line,
        msg: msg.into(),
    }
}

fn parse_pairs(file: &str, text: &str) -> Result<Vec<(usize, String, String)>, RuleError> {
    let mut out = Vec::new();
    let mut seen = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let (k, v) = raw
            .split_once('\t')
            .ok_or_else(|| parse_err(file, line, "expected key<TAB>value"))?;
        let (k, v) = (k.trim().to_lowercase(), v.trim().to_lowercase());
        if k.is_empty() || v.is_empty() {
            return Err(parse_err(file, line, "empty key or value"));
        }
        if k == v {
            return Err(parse_err(file, line, "key maps to itself"));
        }
        if seen.insert(k.clone(), line).is_some() {
            return Err(parse_err(file, line, &format!("duplicate key '{k}'")));
        }
        out.push((line, k, v));
    }
    Ok(out)
}
